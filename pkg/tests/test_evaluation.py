import json

import pytest

from inpars_hub.core.corpus_io import (
    load_corpus_map,
    load_qrels,
    load_queries,
    load_run,
)
from inpars_hub.core.exceptions import UnknownDocumentError
from inpars_hub.core.index import build_index, search_topk
from inpars_hub.core.models import RerankSpec, Run
from inpars_hub.gateway.clients import (
    CallableGateway,
    QrelsOracleGateway,
    StubGateway,
)
from inpars_hub.pipeline.evaluation import (
    BM25_RUN,
    METRICS_JSON,
    RERANKED_RUN,
    evaluate_pipeline,
    rerank,
    retrieve_all,
)


@pytest.fixture
def tiny_index(tiny_corpus):
    return build_index(tiny_corpus.values())


@pytest.fixture
def fixture_data(fixtures_dir):
    corpus = load_corpus_map(fixtures_dir / "corpus.jsonl")
    queries = load_queries(fixtures_dir / "queries.jsonl")
    return corpus, queries, build_index(corpus.values())


# ── Первый этап ──────────────────────────────────────────


def test_retrieve_all_matches_search_topk(fixture_data):
    _, queries, index = fixture_data
    run = retrieve_all(index, queries, depth=50)
    assert set(run.rankings) == {q.id for q in queries}
    for query in queries:
        assert run.rankings[query.id] == search_topk(index, query.text, 50)
    run.validate()


def test_unmatched_query_gets_empty_ranking(tiny_index, tiny_queries):
    run = retrieve_all(tiny_index, tiny_queries)
    assert run.rankings["q3"] == []
    assert run.doc_ids("q1")


# ── Переранжирование ─────────────────────────────────────


def test_rerank_preserves_candidates(fixture_data):
    corpus, queries, index = fixture_data
    run = retrieve_all(index, queries)
    texts = {q.id: q.text for q in queries}
    reranked = rerank(run, texts, corpus, StubGateway())
    reranked.validate()
    for qid, ranked in run.rankings.items():
        assert set(reranked.doc_ids(qid)) == {d for d, _ in ranked}


def test_rerank_truncates_to_depth(fixture_data):
    corpus, queries, index = fixture_data
    run = retrieve_all(index, queries)
    texts = {q.id: q.text for q in queries}
    reranked = rerank(run, texts, corpus, StubGateway(), RerankSpec(depth=5))
    for qid in run.rankings:
        assert set(reranked.doc_ids(qid)) == set(run.doc_ids(qid)[:5])


def test_identity_scorer_returns_same_run(fixture_data):
    corpus, queries, index = fixture_data
    run = retrieve_all(index, queries)
    texts = {q.id: q.text for q in queries}
    kept = rerank(
        run, texts, corpus, StubGateway(), RerankSpec(keep_bm25_scores=True)
    )
    assert kept.rankings == run.rankings
    assert rerank(run, texts, corpus, None).rankings == run.rankings


def test_jaccard_stub_puts_most_overlapping_document_first(
    tiny_index, tiny_queries, tiny_corpus
):
    run = retrieve_all(tiny_index, tiny_queries)
    texts = {q.id: q.text for q in tiny_queries}
    reranked = rerank(run, texts, tiny_corpus, StubGateway())
    assert reranked.doc_ids("q2")[0] == "d3"


def test_rerank_sorts_by_score_then_doc_id(tiny_corpus):
    run = Run.from_scores({"q": {"d1": 3.0, "d2": 2.0, "d3": 1.0}})
    constant = CallableGateway(lambda q, d: 0.5)
    reranked = rerank(run, {"q": "text"}, tiny_corpus, constant)
    assert reranked.rankings["q"] == [("d1", 0.5), ("d2", 0.5), ("d3", 0.5)]


def test_rerank_unknown_document(tiny_corpus):
    run = Run.from_scores({"q": {"zz": 1.0}})
    with pytest.raises(UnknownDocumentError):
        rerank(run, {"q": "text"}, tiny_corpus, StubGateway())


# ── Полный цикл ──────────────────────────────────────────


def test_oracle_reaches_perfect_ndcg(
    tiny_index, tiny_queries, tiny_qrels, tiny_corpus, tmp_path
):
    oracle = QrelsOracleGateway(tiny_qrels, tiny_queries, tiny_corpus)
    _, reranked = evaluate_pipeline(
        tiny_index,
        tiny_queries,
        tiny_qrels,
        oracle,
        RerankSpec(scorer_tag="oracle"),
        tiny_corpus,
        tmp_path,
    )
    assert reranked.mean == 1.0
    assert set(reranked.per_query) == {"q1", "q2"}


def test_anti_oracle_is_not_better_than_bm25(
    tiny_index, tiny_queries, tiny_qrels, tiny_corpus, tmp_path
):
    anti = QrelsOracleGateway(tiny_qrels, tiny_queries, tiny_corpus, negate=True)
    bm25, reranked = evaluate_pipeline(
        tiny_index,
        tiny_queries,
        tiny_qrels,
        anti,
        RerankSpec(),
        tiny_corpus,
        tmp_path,
    )
    assert reranked.mean <= bm25.mean


def test_evaluate_pipeline_writes_runs_and_metrics(
    fixture_data, fixtures_dir, tmp_path
):
    corpus, queries, index = fixture_data
    qrels = load_qrels(fixtures_dir / "qrels.tsv")
    bm25, reranked = evaluate_pipeline(
        index,
        queries,
        qrels,
        StubGateway(),
        RerankSpec(depth=100),
        corpus,
        tmp_path / "eval",
        dataset="fixture",
    )
    out = tmp_path / "eval"
    assert (out / BM25_RUN).exists()
    assert (out / RERANKED_RUN).exists()
    metrics = json.loads((out / METRICS_JSON).read_text(encoding="utf-8"))
    assert metrics["dataset"] == "fixture"
    assert metrics["bm25_ndcg10"] == pytest.approx(bm25.mean)
    assert metrics["reranked_ndcg10"] == pytest.approx(reranked.mean)
    assert set(metrics["per_query"]) == set(bm25.per_query)
    assert 0.0 <= bm25.mean <= 1.0

    texts = {q.id: q.text for q in queries}
    stored = load_run(out / BM25_RUN)
    for qid in stored.rankings:
        expected = search_topk(index, texts[qid], 1000)
        assert stored.doc_ids(qid) == [d for d, _ in expected]
