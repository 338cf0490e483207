"""Генеративная часть пайплайна.

Выборка документов -> генерация одного запроса на документ ->
фильтрация пар (v1 по лог-вероятностям, v2 по внешней оценке) ->
негативы из BM25 -> обучающий набор -> батчи.

Все случайные решения берутся из именованных подпотоков
корневого seed (см. core.utils.derive_rng).
"""

import heapq
import json
import logging
from collections.abc import Iterable, Iterator, Mapping
from concurrent.futures import FIRST_EXCEPTION, ThreadPoolExecutor, wait
from dataclasses import asdict, dataclass, field

from tqdm import tqdm

from inpars_hub.core.exceptions import (
    DegenerateGenerationError,
    EmptyInputError,
    MissingLogprobError,
    UnknownDocumentError,
)
from inpars_hub.core.index import InvertedIndex, search_topk
from inpars_hub.core.models import (
    Document,
    FewShotExample,
    Label,
    SyntheticPair,
    TrainExample,
    ranking_key,
)
from inpars_hub.core.prompting import (
    DEFAULT_MAX_DOC_CHARS,
    PromptTemplate,
    parse_generation,
    render_prompt,
)
from inpars_hub.core.utils import derive_rng, text_hash
from inpars_hub.decorators import log_stage
from inpars_hub.gateway.cache import ScoreCache, score_with_cache
from inpars_hub.gateway.clients import BaseGateway
from inpars_hub.infra.storage import JsonlAppender, read_jsonl, write_jsonl

_logger = logging.getLogger("inpars_hub.synth")


# ── Выборка ──────────────────────────────────────────────


@log_stage
def sample_documents(
    corpus: Iterable[Document], n: int, seed: int
) -> list[Document]:
    """Равномерная выборка без возвращения за один проход.

    Резервуарная выборка (алгоритм R). Если в корпусе
    меньше n документов, возвращаются все.

    Args:
        corpus: Поток документов.
        n: Размер выборки (>= 1), в пайплайне 100k.
        seed: Корневой seed.

    Returns:
        Документы выборки в порядке корпуса.

    Raises:
        ValueError: n < 1.
        EmptyInputError: Пустой корпус.
    """
    if n < 1:
        raise ValueError(f"Размер выборки должен быть >= 1: {n}")
    rng = derive_rng(seed, "sample")
    reservoir: list[tuple[int, Document]] = []
    seen = 0
    for i, doc in enumerate(corpus):
        seen = i + 1
        if i < n:
            reservoir.append((i, doc))
            continue
        j = int(rng.integers(0, i + 1))
        if j < n:
            reservoir[j] = (i, doc)
    if not seen:
        raise EmptyInputError("корпус")
    _logger.info("Sampled %d of %d documents", len(reservoir), seen)
    return [doc for _, doc in sorted(reservoir, key=lambda p: p[0])]


# ── Генерация ────────────────────────────────────────────


@dataclass
class GenerationOutcome:
    """Итог генерации: пары и счётчики."""

    pairs: list[SyntheticPair]
    degenerate: int = 0
    reused: int = 0
    duplicate_queries: int = 0

    def __len__(self) -> int:
        return len(self.pairs)


def _aggregate_logprobs(logprobs: list[float] | None, mode: str) -> float | None:
    if not logprobs:
        return None
    total = sum(logprobs)
    return total if mode == "sum" else total / len(logprobs)


def _generate_one(
    doc: Document,
    template: PromptTemplate,
    examples: list[FewShotExample],
    gateway: BaseGateway,
    max_new_tokens: int,
    max_doc_chars: int,
    logprob_mode: str,
) -> dict:
    """Промпт -> генерация -> разбор; запись для контрольной точки."""
    prompt = render_prompt(template, examples, doc, max_doc_chars)
    result = gateway.generate(prompt, max_new_tokens, template.stop)
    try:
        query = parse_generation(result.text, template.stop)
    except DegenerateGenerationError:
        return {"doc_id": doc.id, "degenerate": True}
    record = {"doc_id": doc.id, "query": query, "degenerate": False}
    logprob = _aggregate_logprobs(result.token_logprobs, logprob_mode)
    if logprob is not None:
        record["mean_logprob"] = logprob
    return record


def generation_fingerprint(
    gateway: BaseGateway,
    template: PromptTemplate,
    examples: list[FewShotExample],
    max_new_tokens: int,
    max_doc_chars: int,
    logprob_mode: str,
) -> str:
    """Хеш всего, от чего зависит текст запроса в контрольной точке."""
    payload = {
        "gateway": gateway.identity,
        "template": asdict(template),
        "examples": [asdict(ex) for ex in examples],
        "max_new_tokens": max_new_tokens,
        "max_doc_chars": max_doc_chars,
        "logprob_mode": logprob_mode,
    }
    return text_hash(json.dumps(payload, ensure_ascii=False, sort_keys=True))


@log_stage(verbose=True)
def generate_queries(
    docs: list[Document],
    template: PromptTemplate,
    examples: list[FewShotExample],
    gateway: BaseGateway,
    max_new_tokens: int = 64,
    max_doc_chars: int = DEFAULT_MAX_DOC_CHARS,
    checkpoint_path=None,
    logprob_mode: str = "mean",
    progress: bool = False,
) -> GenerationOutcome:
    """Сгенерировать по одному запросу на документ.

    Запросы к шлюзу идут параллельно (до gateway.parallelism).
    Каждый завершённый документ сразу дописывается в
    контрольную точку; при повторном запуске такие документы
    не генерируются заново. Записи, сделанные другим шлюзом,
    шаблоном, примерами или лимитами, игнорируются. Итоговый порядок пар — порядок
    docs, независимо от порядка завершения.

    Args:
        docs: Документы выборки.
        template: Шаблон промпта.
        examples: Few-shot примеры.
        gateway: Генератор.
        max_new_tokens: Лимит токенов генерации.
        max_doc_chars: Лимит длины документа в промпте.
        checkpoint_path: JSONL контрольной точки (None — без неё).
        logprob_mode: "mean" или "sum" по токенам.
        progress: Показывать tqdm.

    Returns:
        GenerationOutcome; вырожденные генерации отброшены
        и посчитаны.

    Raises:
        ValueError: Неизвестный logprob_mode.
        GatewayTransportError, GatewayServiceError: Сбой шлюза;
            контрольная точка сохраняет сделанное.
    """
    if logprob_mode not in ("mean", "sum"):
        raise ValueError(f"logprob_mode: mean или sum, получено {logprob_mode!r}")
    fingerprint = generation_fingerprint(
        gateway, template, examples, max_new_tokens, max_doc_chars, logprob_mode
    )
    records: dict[str, dict] = {}
    stale = 0
    if checkpoint_path is not None:
        for rec in read_jsonl(checkpoint_path):
            if rec.get("fingerprint") != fingerprint:
                stale += 1
                continue
            records[rec["doc_id"]] = rec
    if stale:
        _logger.warning(
            "Ignoring %d checkpoint records from another generation setup", stale
        )
    wanted = {doc.id for doc in docs}
    reused = len(wanted & records.keys())
    todo = [doc for doc in docs if doc.id not in records]
    if reused:
        _logger.info("Resuming generation: %d done, %d left", reused, len(todo))

    appender = JsonlAppender(checkpoint_path) if checkpoint_path else None
    bar = tqdm(total=len(todo), desc="generate", disable=not progress, leave=False)
    try:
        with ThreadPoolExecutor(max_workers=max(1, gateway.parallelism)) as pool:
            futures = {
                pool.submit(
                    _generate_one,
                    doc,
                    template,
                    examples,
                    gateway,
                    max_new_tokens,
                    max_doc_chars,
                    logprob_mode,
                )
                for doc in todo
            }
            while futures:
                done, futures = wait(futures, return_when=FIRST_EXCEPTION)
                failure = None
                for future in done:
                    exc = future.exception()
                    if exc is not None:
                        failure = failure or exc
                        continue
                    rec = future.result()
                    rec["fingerprint"] = fingerprint
                    records[rec["doc_id"]] = rec
                    if appender:
                        appender.append(rec)
                    bar.update(1)
                if failure is not None:
                    for future in futures:
                        future.cancel()
                    _logger.error(
                        "Generation aborted, %d documents checkpointed",
                        len(records),
                    )
                    raise failure
    finally:
        bar.close()
        if appender:
            appender.close()

    outcome = GenerationOutcome(pairs=[], reused=reused)
    seen_queries: set[str] = set()
    for doc in docs:
        rec = records[doc.id]
        if rec.get("degenerate"):
            outcome.degenerate += 1
            continue
        if rec["query"] in seen_queries:
            outcome.duplicate_queries += 1
        seen_queries.add(rec["query"])
        outcome.pairs.append(
            SyntheticPair(
                doc_id=doc.id,
                query=rec["query"],
                mean_logprob=rec.get("mean_logprob"),
            )
        )
    _logger.info(
        "Generated %d pairs, %d degenerate, %d duplicate queries",
        len(outcome.pairs),
        outcome.degenerate,
        outcome.duplicate_queries,
    )
    return outcome


# ── Фильтрация ───────────────────────────────────────────


def _select_top(
    pairs: list[SyntheticPair], value, keep_top: int
) -> list[SyntheticPair]:
    """keep_top лучших по value(pair), при равенстве — по doc_id."""
    if keep_top < 1:
        raise ValueError(f"keep_top должно быть >= 1: {keep_top}")
    return heapq.nsmallest(
        keep_top, pairs, key=lambda p: ranking_key(p.doc_id, value(p))
    )


@log_stage(verbose=True)
def filter_v2(
    pairs: list[SyntheticPair],
    gateway: BaseGateway,
    keep_top: int,
    corpus: Mapping[str, Document],
    cache: ScoreCache | None = None,
    progress: bool = False,
) -> list[SyntheticPair]:
    """Фильтр по внешней оценке релевантности.

    Каждая пара оценивается gateway.score(query, flat_text);
    остаются keep_top пар с наибольшей оценкой (в пайплайне 10k).

    Args:
        pairs: Сгенерированные пары.
        gateway: Оценщик релевантности.
        keep_top: Сколько пар оставить.
        corpus: doc_id -> Document.
        cache: Кеш оценок (для продолжения после сбоя).
        progress: Показывать tqdm.

    Returns:
        Пары с заполненным score, по убыванию оценки.

    Raises:
        EmptyInputError: Нет пар.
        UnknownDocumentError: doc_id нет в корпусе.
    """
    if not pairs:
        raise EmptyInputError("пары для фильтрации")
    items = []
    for pair in pairs:
        doc = corpus.get(pair.doc_id)
        if doc is None:
            raise UnknownDocumentError(pair.doc_id)
        items.append((pair.query, pair.doc_id, doc.flat_text))
    scores = score_with_cache(
        gateway, items, cache, progress=progress, desc="filter"
    )
    scored = [
        SyntheticPair(p.doc_id, p.query, p.mean_logprob, s)
        for p, s in zip(pairs, scores)
    ]
    return _select_top(scored, lambda p: p.score, keep_top)


@log_stage
def filter_v1(
    pairs: list[SyntheticPair], keep_top: int
) -> list[SyntheticPair]:
    """Фильтр по лог-вероятности генерации.

    Raises:
        MissingLogprobError: У пары нет лог-вероятности.
    """
    for pair in pairs:
        if pair.mean_logprob is None:
            raise MissingLogprobError(pair.doc_id)
    return _select_top(pairs, lambda p: p.mean_logprob, keep_top)


# ── Негативы ─────────────────────────────────────────────


def mine_negative(
    pair: SyntheticPair,
    index: InvertedIndex,
    pool_depth: int,
    seed: int,
) -> str | None:
    """Случайный документ из top-pool_depth BM25 по запросу пары.

    Собственный документ пары из пула исключается.

    Returns:
        doc_id негатива или None, если пул пуст.
    """
    pool = search_topk(index, pair.query, pool_depth)
    candidates = [doc_id for doc_id, _ in pool if doc_id != pair.doc_id]
    if not candidates:
        return None
    rng = derive_rng(seed, "negative", pair.doc_id)
    return candidates[int(rng.integers(0, len(candidates)))]


@log_stage(verbose=True)
def mine_negatives(
    pairs: list[SyntheticPair],
    index: InvertedIndex,
    pool_depth: int,
    seed: int,
    progress: bool = False,
) -> dict[str, str | None]:
    """Негатив для каждой пары: doc_id пары -> doc_id негатива | None."""
    negatives = {}
    for pair in tqdm(pairs, desc="negatives", disable=not progress, leave=False):
        negatives[pair.doc_id] = mine_negative(pair, index, pool_depth, seed)
    missing = sum(1 for v in negatives.values() if v is None)
    if missing:
        _logger.warning("%d pairs have no negative candidate", missing)
    return negatives


# ── Обучающий набор ──────────────────────────────────────


@dataclass
class TrainsetOutcome:
    """Обучающий набор и число пар без негатива."""

    examples: list[TrainExample]
    no_negative: int = 0

    def __len__(self) -> int:
        return len(self.examples)


def _resolve(corpus: Mapping[str, Document], doc_id: str) -> Document:
    doc = corpus.get(doc_id)
    if doc is None:
        raise UnknownDocumentError(doc_id)
    return doc


@log_stage
def build_trainset(
    positives: list[SyntheticPair],
    negatives: Mapping[str, str | None],
    corpus: Mapping[str, Document],
) -> TrainsetOutcome:
    """Собрать позитивные и негативные примеры.

    Для каждой пары с негативом — один позитивный и один
    негативный пример (подряд). Пары без негатива пропускаются.

    Raises:
        KeyError: Для пары не запускался майнинг негативов.
        UnknownDocumentError: doc_id нет в корпусе.
    """
    outcome = TrainsetOutcome(examples=[])
    for pair in positives:
        if pair.doc_id not in negatives:
            raise KeyError(f"Нет результата майнинга для '{pair.doc_id}'")
        neg_id = negatives[pair.doc_id]
        if neg_id is None:
            outcome.no_negative += 1
            continue
        pos_doc = _resolve(corpus, pair.doc_id)
        neg_doc = _resolve(corpus, neg_id)
        outcome.examples.append(
            TrainExample(pair.query, pos_doc.flat_text, Label.POSITIVE, pos_doc.id)
        )
        outcome.examples.append(
            TrainExample(pair.query, neg_doc.flat_text, Label.NEGATIVE, neg_doc.id)
        )
    return outcome


# ── Батчи ────────────────────────────────────────────────


@dataclass(frozen=True)
class Batch:
    """Батч: индексы примеров обучающего набора."""

    index: int
    positive: list[int] = field(default_factory=list)
    negative: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "batch": self.index,
            "positive": self.positive,
            "negative": self.negative,
        }


def emit_batches(
    trainset: list[TrainExample],
    batch_pos: int = 64,
    batch_neg: int = 64,
    seed: int = 0,
) -> Iterator[Batch]:
    """Разбить эпоху на батчи batch_pos + batch_neg.

    Выборка без возвращения в пределах эпохи; неполный
    последний батч отбрасывается.

    Raises:
        EmptyInputError: Нет одной из меток или примеров
            меньше, чем на один батч (проверяется сразу).
    """
    positive = [i for i, ex in enumerate(trainset) if ex.label is Label.POSITIVE]
    negative = [i for i, ex in enumerate(trainset) if ex.label is Label.NEGATIVE]
    if not positive or not negative:
        raise EmptyInputError("в наборе нужны обе метки")
    count = min(len(positive) // batch_pos, len(negative) // batch_neg)
    if count == 0:
        raise EmptyInputError(
            f"меньше одного батча {batch_pos}+{batch_neg} "
            f"({len(positive)}+{len(negative)})"
        )
    rng = derive_rng(seed, "batches")
    pos_order = [int(i) for i in rng.permutation(positive)]
    neg_order = [int(i) for i in rng.permutation(negative)]
    _logger.info("Emitting %d batches of %d+%d", count, batch_pos, batch_neg)
    return _iter_batches(pos_order, neg_order, batch_pos, batch_neg, count)


def _iter_batches(
    pos_order: list[int],
    neg_order: list[int],
    batch_pos: int,
    batch_neg: int,
    count: int,
) -> Iterator[Batch]:
    for b in range(count):
        yield Batch(
            index=b,
            positive=pos_order[b * batch_pos : (b + 1) * batch_pos],
            negative=neg_order[b * batch_neg : (b + 1) * batch_neg],
        )


# ── Промежуточные файлы ──────────────────────────────────


def write_pairs(pairs: Iterable[SyntheticPair], path) -> int:
    """Записать пары в JSONL {doc_id, query, mean_logprob?, score?}."""
    return write_jsonl(path, (p.to_dict() for p in pairs))


def read_pairs(path) -> list[SyntheticPair]:
    """Прочитать пары из JSONL."""
    return [SyntheticPair.from_dict(rec) for rec in read_jsonl(path)]


def write_negatives(negatives: Mapping[str, str | None], path) -> int:
    """Записать результат майнинга: {doc_id, negative|null}."""
    return write_jsonl(
        path, ({"doc_id": k, "negative": v} for k, v in negatives.items())
    )


def read_negatives(path) -> dict[str, str | None]:
    return {rec["doc_id"]: rec["negative"] for rec in read_jsonl(path)}


def write_batches(batches: Iterable[Batch], path) -> int:
    """Записать батчи в JSONL со списками индексов примеров."""
    return write_jsonl(path, (b.to_dict() for b in batches))
