"""Оценочная часть пайплайна.

BM25 top-1000 по каждому тестовому запросу -> переранжирование
через шлюз -> оба прогона в TREC-формате -> nDCG@10.
"""

import logging
from collections.abc import Mapping
from pathlib import Path

from tqdm import tqdm

from inpars_hub.core.corpus_io import write_run
from inpars_hub.core.exceptions import UnknownDocumentError
from inpars_hub.core.index import InvertedIndex, search_topk
from inpars_hub.core.metrics import evaluate_run
from inpars_hub.core.models import (
    Document,
    EvalResult,
    Qrels,
    Query,
    RerankSpec,
    Run,
)
from inpars_hub.decorators import log_stage
from inpars_hub.gateway.cache import ScoreCache, score_with_cache
from inpars_hub.gateway.clients import BaseGateway
from inpars_hub.infra.storage import write_json

_logger = logging.getLogger("inpars_hub.eval")

BM25_RUN = "bm25.run"
RERANKED_RUN = "reranked.run"
METRICS_JSON = "metrics.json"
BM25_TAG = "bm25"
EVAL_DEPTH = 10


@log_stage(verbose=True)
def retrieve_all(
    index: InvertedIndex,
    queries: list[Query],
    depth: int = 1000,
    progress: bool = False,
) -> Run:
    """Первый этап: BM25 top-depth для каждого запроса.

    Запрос без совпадений получает пустой список.
    """
    rankings = {}
    for query in tqdm(queries, desc="retrieve", disable=not progress, leave=False):
        rankings[query.id] = search_topk(index, query.text, depth)
    return Run(rankings=rankings)


@log_stage(verbose=True)
def rerank(
    run: Run,
    queries: Mapping[str, str],
    corpus: Mapping[str, Document],
    gateway: BaseGateway | None,
    spec: RerankSpec = RerankSpec(),
    cache: ScoreCache | None = None,
    progress: bool = False,
) -> Run:
    """Переранжировать кандидатов прогона.

    Каждый из первых spec.depth кандидатов запроса оценивается
    gateway.score(текст запроса, flat_text документа), список
    сортируется по убыванию оценки, при равенстве — по doc_id.
    Множество кандидатов (в пределах глубины) не меняется.

    При spec.keep_bm25_scores (или gateway=None) оценкой
    служит счёт BM25 из прогона; результат совпадает
    со входом.

    Args:
        run: Прогон первого этапа.
        queries: query_id -> текст запроса.
        corpus: doc_id -> Document.
        gateway: Оценщик релевантности.
        spec: Параметры переранжирования.
        cache: Кеш оценок.
        progress: Показывать tqdm.

    Raises:
        UnknownDocumentError: doc_id нет в корпусе.
        KeyError: Нет текста для запроса прогона.
    """
    heads = {
        qid: ranked[: spec.depth] for qid, ranked in run.rankings.items()
    }
    if spec.keep_bm25_scores or gateway is None:
        return Run.from_scores(heads)

    items = []
    for qid, ranked in heads.items():
        text = queries[qid]
        for doc_id, _ in ranked:
            doc = corpus.get(doc_id)
            if doc is None:
                raise UnknownDocumentError(doc_id)
            items.append((text, doc_id, doc.flat_text))
    scores = iter(
        score_with_cache(gateway, items, cache, progress=progress, desc="rerank")
    )
    rescored = {
        qid: [(doc_id, next(scores)) for doc_id, _ in ranked]
        for qid, ranked in heads.items()
    }
    return Run.from_scores(rescored)


def metrics_record(
    dataset: str, bm25: EvalResult, reranked: EvalResult
) -> dict:
    """Запись metrics JSON по двум результатам."""
    return {
        "dataset": dataset,
        "bm25_ndcg10": bm25.mean,
        "reranked_ndcg10": reranked.mean,
        "per_query": {
            qid: {
                "bm25": bm25.per_query[qid],
                "reranked": reranked.per_query[qid],
            }
            for qid in sorted(bm25.per_query)
        },
    }


@log_stage(verbose=True)
def evaluate_pipeline(
    index: InvertedIndex,
    queries: list[Query],
    qrels: Qrels,
    gateway: BaseGateway | None,
    spec: RerankSpec,
    corpus: Mapping[str, Document],
    out_dir,
    dataset: str = "dataset",
    retrieval_depth: int = 1000,
    cache: ScoreCache | None = None,
    progress: bool = False,
) -> tuple[EvalResult, EvalResult]:
    """Полный оценочный цикл.

    retrieve_all -> bm25.run -> rerank -> reranked.run ->
    nDCG@10 обоих прогонов -> metrics.json в out_dir.

    Returns:
        (результат BM25, результат переранжирования).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    bm25_run = retrieve_all(index, queries, retrieval_depth, progress=progress)
    write_run(bm25_run, BM25_TAG, out / BM25_RUN)

    texts = {q.id: q.text for q in queries}
    reranked_run = rerank(
        bm25_run, texts, corpus, gateway, spec, cache, progress=progress
    )
    write_run(reranked_run, spec.scorer_tag, out / RERANKED_RUN)

    bm25_result = evaluate_run(bm25_run, qrels, EVAL_DEPTH)
    reranked_result = evaluate_run(reranked_run, qrels, EVAL_DEPTH)
    write_json(
        out / METRICS_JSON,
        metrics_record(dataset, bm25_result, reranked_result),
    )
    _logger.info(
        "Dataset %s: BM25 nDCG@10=%.4f, reranked nDCG@10=%.4f",
        dataset,
        bm25_result.mean,
        reranked_result.mean,
    )
    return bm25_result, reranked_result
