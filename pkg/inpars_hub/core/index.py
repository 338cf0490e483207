"""Неизменяемый инвертированный индекс и поиск BM25 top-k.

Индекс «плоский»: title и text документа склеены
в одно поле (Document.flat_text).

Формула (Robertson, сглаженный idf Lucene):
    idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5))
    w(t, d) = idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * dl / avgdl))
"""

import heapq
import json
import logging
import math
from bisect import bisect_left
from collections import Counter
from collections.abc import Iterable
from pathlib import Path

from inpars_hub.core.analyzer import Analyzer, analyze
from inpars_hub.core.exceptions import DuplicateIdError, IndexFormatError
from inpars_hub.core.models import Document, ranking_key
from inpars_hub.infra.storage import atomic_write_text

_logger = logging.getLogger("inpars_hub.index")

INDEX_FORMAT_VERSION = 1
DEFAULT_K1 = 0.9
DEFAULT_B = 0.4


def _check_param(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value) or value < 0:
        raise ValueError(
            f"Параметр {name} должен быть конечным и >= 0: {value}"
        )
    return value


class InvertedIndex:
    """Инвертированный индекс с длинами документов.

    После построения не изменяется: все коллекции
    отдаются только через свойства и кортежи, поэтому
    индекс можно делить между потоками без блокировок.
    """

    def __init__(
        self,
        postings: dict[str, tuple[tuple[int, int], ...]],
        doc_ids: list[str],
        doc_lengths: list[int],
        analyzer: Analyzer,
        k1: float = DEFAULT_K1,
        b: float = DEFAULT_B,
    ):
        """Инициализировать индекс из готовых структур.

        Args:
            postings: терм -> ((ordinal, tf), ...) по возрастанию ordinal.
            doc_ids: ordinal -> doc_id.
            doc_lengths: ordinal -> число термов.
            analyzer: Анализатор, которым строился индекс.
            k1: Параметр насыщения tf.
            b: Параметр нормализации длины.
        """
        if len(doc_ids) != len(doc_lengths):
            raise ValueError("doc_ids и doc_lengths разной длины")
        self._postings = postings
        self._doc_ids = tuple(doc_ids)
        self._doc_lengths = tuple(doc_lengths)
        self._ordinals = {d: i for i, d in enumerate(self._doc_ids)}
        self._analyzer = analyzer
        self._k1 = _check_param("k1", k1)
        self._b = _check_param("b", b)
        n = len(self._doc_ids)
        self._avgdl = sum(self._doc_lengths) / n if n else 0.0

    # ── Свойства ──────────────────────────────────────

    @property
    def doc_count(self) -> int:
        """Число документов N."""
        return len(self._doc_ids)

    @property
    def doc_ids(self) -> tuple[str, ...]:
        return self._doc_ids

    @property
    def doc_lengths(self) -> tuple[int, ...]:
        return self._doc_lengths

    @property
    def avg_doc_length(self) -> float:
        return self._avgdl

    @property
    def k1(self) -> float:
        return self._k1

    @property
    def b(self) -> float:
        return self._b

    @property
    def analyzer(self) -> Analyzer:
        return self._analyzer

    @property
    def vocabulary_size(self) -> int:
        return len(self._postings)

    def postings(self, term: str) -> tuple[tuple[int, int], ...]:
        """Список (ordinal, tf) терма (пустой, если терма нет)."""
        return self._postings.get(term, ())

    def terms(self) -> list[str]:
        return sorted(self._postings)

    def document_frequency(self, term: str) -> int:
        return len(self._postings.get(term, ()))

    def term_frequency(self, term: str, ordinal: int) -> int:
        """tf терма в документе (двоичный поиск по postings)."""
        plist = self._postings.get(term, ())
        pos = bisect_left(plist, ordinal, key=lambda p: p[0])
        if pos < len(plist) and plist[pos][0] == ordinal:
            return plist[pos][1]
        return 0

    def ordinal(self, doc_id: str) -> int | None:
        return self._ordinals.get(doc_id)

    # ── BM25 ──────────────────────────────────────────

    def idf(self, term: str) -> float:
        """Сглаженный idf; 0 для термов вне корпуса."""
        df = self.document_frequency(term)
        if df == 0:
            return 0.0
        n = self.doc_count
        return math.log(1 + (n - df + 0.5) / (df + 0.5))

    def term_weight(self, idf: float, tf: int, dl: int) -> float:
        """Вклад одного вхождения терма запроса."""
        k1, b = self._k1, self._b
        return idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * dl / self._avgdl))

    def __repr__(self) -> str:
        return (
            f"InvertedIndex(N={self.doc_count}, "
            f"terms={self.vocabulary_size}, k1={self._k1}, b={self._b})"
        )


# ── Построение ───────────────────────────────────────────


def build_index(
    docs: Iterable[Document],
    analyzer: Analyzer | None = None,
    k1: float = DEFAULT_K1,
    b: float = DEFAULT_B,
) -> InvertedIndex:
    """Построить индекс по корпусу.

    Args:
        docs: Поток документов (id уникальны).
        analyzer: Анализатор (по умолчанию Analyzer.default()).
        k1: Параметр BM25.
        b: Параметр BM25.

    Returns:
        Неизменяемый InvertedIndex.

    Raises:
        DuplicateIdError: Повтор doc_id.
    """
    analyzer = analyzer or Analyzer.default()
    postings: dict[str, list[tuple[int, int]]] = {}
    doc_ids: list[str] = []
    doc_lengths: list[int] = []
    seen: set[str] = set()

    for doc in docs:
        if doc.id in seen:
            raise DuplicateIdError("документ", doc.id)
        seen.add(doc.id)
        ordinal = len(doc_ids)
        terms = analyze(analyzer, doc.flat_text)
        doc_ids.append(doc.id)
        doc_lengths.append(len(terms))
        for term, tf in Counter(terms).items():
            postings.setdefault(term, []).append((ordinal, tf))

    frozen = {t: tuple(plist) for t, plist in postings.items()}
    index = InvertedIndex(frozen, doc_ids, doc_lengths, analyzer, k1, b)
    _logger.info("Built %r", index)
    return index


# ── Оценка и поиск ───────────────────────────────────────


def bm25_score(
    index: InvertedIndex, query_terms: list[str], ordinal: int
) -> float:
    """BM25-счёт документа для уже проанализированного запроса.

    Повторяющиеся термы запроса учитываются по разу
    на каждое вхождение.

    Raises:
        IndexError: ordinal вне [0, N).
    """
    if not 0 <= ordinal < index.doc_count:
        raise IndexError(
            f"ordinal {ordinal} вне диапазона [0, {index.doc_count})"
        )
    dl = index.doc_lengths[ordinal]
    score = 0.0
    for term in query_terms:
        tf = index.term_frequency(term, ordinal)
        if tf:
            score += index.term_weight(index.idf(term), tf, dl)
    return score


def score_terms(
    index: InvertedIndex, query_terms: list[str]
) -> dict[int, float]:
    """Счета всех документов, содержащих хотя бы один терм.

    Накопление идёт в порядке термов запроса — так же,
    как в bm25_score, поэтому значения совпадают побитно.
    """
    idfs: dict[str, float] = {}
    acc: dict[int, float] = {}
    lengths = index.doc_lengths
    for term in query_terms:
        plist = index.postings(term)
        if not plist:
            continue
        if term not in idfs:
            idfs[term] = index.idf(term)
        idf = idfs[term]
        for ordinal, tf in plist:
            acc[ordinal] = acc.get(ordinal, 0.0) + index.term_weight(
                idf, tf, lengths[ordinal]
            )
    return acc


def search_terms(
    index: InvertedIndex, query_terms: list[str], k: int
) -> list[tuple[str, float]]:
    """Top-k по проанализированным термам (см. search_topk)."""
    if k < 1:
        raise ValueError(f"k должно быть >= 1: {k}")
    acc = score_terms(index, query_terms)
    doc_ids = index.doc_ids
    candidates = (
        (doc_ids[o], s) for o, s in acc.items() if s > 0
    )
    return heapq.nsmallest(k, candidates, key=lambda p: ranking_key(*p))


def search_topk(
    index: InvertedIndex, query_text: str, k: int
) -> list[tuple[str, float]]:
    """Найти k лучших документов по BM25.

    Args:
        index: Индекс.
        query_text: Текст запроса (анализируется анализатором индекса).
        k: Глубина (>= 1), в пайплайне 1000.

    Returns:
        [(doc_id, score)] со счётом > 0, по убыванию счёта,
        при равенстве — по doc_id.
    """
    return search_terms(index, analyze(index.analyzer, query_text), k)


# ── Сериализация ─────────────────────────────────────────


def save_index(index: InvertedIndex, path) -> None:
    """Сохранить индекс в JSON с версией формата."""
    data = {
        "format_version": INDEX_FORMAT_VERSION,
        "k1": index.k1,
        "b": index.b,
        "analyzer": index.analyzer.to_dict(),
        "doc_ids": list(index.doc_ids),
        "doc_lengths": list(index.doc_lengths),
        "postings": {
            t: [list(p) for p in index.postings(t)] for t in index.terms()
        },
    }
    atomic_write_text(path, json.dumps(data, ensure_ascii=False) + "\n")
    _logger.info("Saved index to %s", path)


def load_index(path) -> InvertedIndex:
    """Загрузить индекс.

    Raises:
        IndexFormatError: Другая версия формата или битый файл.
    """
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise IndexFormatError(f"{path}: {exc}") from exc
    version = data.get("format_version") if isinstance(data, dict) else None
    if version != INDEX_FORMAT_VERSION:
        raise IndexFormatError(
            f"версия {version!r}, ожидается {INDEX_FORMAT_VERSION}"
        )
    try:
        postings = {
            t: tuple((int(o), int(tf)) for o, tf in plist)
            for t, plist in data["postings"].items()
        }
        return InvertedIndex(
            postings,
            data["doc_ids"],
            data["doc_lengths"],
            Analyzer.from_dict(data["analyzer"]),
            data["k1"],
            data["b"],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise IndexFormatError(f"{path}: {exc}") from exc
