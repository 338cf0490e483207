"""Кеш оценок релевантности.

Ключ — (оценщик, sha256 текста запроса, doc_id), где оценщик —
BaseGateway.identity. Оценки разных моделей в одном файле
не смешиваются. Кеш дописывается на диск по мере оценки,
поэтому прерванная стадия продолжает работу без повторных
запросов к сервису.
"""

import logging

from tqdm import tqdm

from inpars_hub.core.utils import text_hash
from inpars_hub.gateway.clients import BaseGateway
from inpars_hub.infra.storage import JsonlAppender, read_jsonl

_logger = logging.getLogger("inpars_hub.gateway")

DEFAULT_CHUNK = 256

_Key = tuple[str, str, str]


class ScoreCache:
    """Кеш оценок в памяти с необязательной JSONL-копией."""

    def __init__(self, path=None):
        """Инициализировать кеш.

        Args:
            path: JSONL-файл кеша (None — только память).
        """
        self._path = path
        self._scores: dict[_Key, float] = {}
        if path is not None:
            for rec in read_jsonl(path):
                key = (rec.get("scorer", ""), rec["q"], rec["doc_id"])
                self._scores[key] = float(rec["score"])
            if self._scores:
                _logger.info(
                    "Loaded %d cached scores from %s", len(self._scores), path
                )

    def get(self, scorer: str, query: str, doc_id: str) -> float | None:
        return self._scores.get((scorer, text_hash(query), doc_id))

    def put_many(self, scorer: str, items: list[tuple[str, str, float]]) -> None:
        """Добавить оценки (query, doc_id, score) оценщика scorer."""
        records = []
        for query, doc_id, score in items:
            key = (scorer, text_hash(query), doc_id)
            self._scores[key] = score
            records.append(
                {"scorer": scorer, "q": key[1], "doc_id": doc_id, "score": score}
            )
        if self._path is not None and records:
            with JsonlAppender(self._path) as out:
                for rec in records:
                    out.append(rec)

    def count(self, scorer: str) -> int:
        """Число оценок одного оценщика."""
        return sum(1 for key in self._scores if key[0] == scorer)

    def __len__(self) -> int:
        return len(self._scores)


def score_with_cache(
    gateway: BaseGateway,
    items: list[tuple[str, str, str]],
    cache: ScoreCache | None = None,
    chunk_size: int = DEFAULT_CHUNK,
    progress: bool = False,
    desc: str = "scoring",
) -> list[float]:
    """Оценить пары (query, doc_id, doc_text) через шлюз и кеш.

    Из кеша берутся только оценки того же оценщика
    (gateway.identity). Пары без оценки отправляются
    порциями по chunk_size; каждая порция сохраняется сразу
    после получения. При сбое шлюза исключение
    пробрасывается, а уже полученные оценки остаются в кеше.

    Returns:
        Оценки в порядке items.
    """
    cache = cache if cache is not None else ScoreCache()
    scorer = gateway.identity
    pending = []
    seen = set()
    for query, doc_id, doc_text in items:
        key = (query, doc_id)
        if cache.get(scorer, query, doc_id) is None and key not in seen:
            seen.add(key)
            pending.append((query, doc_id, doc_text))

    if pending:
        _logger.info(
            "Scoring %d pairs with %s (%d cached)",
            len(pending),
            scorer,
            len(items) - len(pending),
        )
    bar = tqdm(
        total=len(pending), desc=desc, disable=not progress, leave=False
    )
    try:
        for start in range(0, len(pending), chunk_size):
            chunk = pending[start : start + chunk_size]
            scores = gateway.score_many([(q, text) for q, _, text in chunk])
            cache.put_many(
                scorer,
                [(q, doc_id, s) for (q, doc_id, _), s in zip(chunk, scores)],
            )
            bar.update(len(chunk))
    finally:
        bar.close()
    return [cache.get(scorer, q, doc_id) for q, doc_id, _ in items]
