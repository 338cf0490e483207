"""Координатор полного прогона (PipelineRunner).

Выполняет стадии по порядку и пропускает те, чьи выходы
уже есть в out_dir и совпадают с контрольными суммами
манифеста. После пересчёта любой стадии все следующие
пересчитываются тоже.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path

from inpars_hub import __version__
from inpars_hub.core.analyzer import Analyzer
from inpars_hub.core.corpus_io import (
    load_corpus,
    load_corpus_map,
    load_qrels,
    load_queries,
    load_run,
    load_trainset,
    write_corpus,
    write_run,
    write_trainset,
)
from inpars_hub.core.index import build_index, load_index, save_index
from inpars_hub.core.metrics import aggregate_report, evaluate_run, render_text
from inpars_hub.core.models import PipelineConfig, RerankSpec
from inpars_hub.core.prompting import load_few_shot, load_template
from inpars_hub.gateway.cache import ScoreCache
from inpars_hub.gateway.clients import BaseGateway
from inpars_hub.infra.storage import (
    atomic_write_text,
    file_checksum,
    load_manifest,
    read_json,
    record_stage,
    save_manifest,
    stage_is_current,
    write_json,
)
from inpars_hub.pipeline.evaluation import (
    BM25_RUN,
    BM25_TAG,
    EVAL_DEPTH,
    METRICS_JSON,
    RERANKED_RUN,
    metrics_record,
    rerank,
    retrieve_all,
)
from inpars_hub.pipeline.synth import (
    build_trainset,
    filter_v1,
    filter_v2,
    generate_queries,
    mine_negatives,
    read_negatives,
    read_pairs,
    sample_documents,
    write_negatives,
    write_pairs,
)

_logger = logging.getLogger("inpars_hub.runner")

INDEX_FILE = "index.json"
SAMPLE_FILE = "sample.jsonl"
PAIRS_FILE = "pairs.jsonl"
FILTERED_FILE = "filtered.jsonl"
NEGATIVES_FILE = "negatives.jsonl"
TRAINSET_FILE = "trainset.tsv"
REPORT_FILE = "report.txt"
CHECKPOINT_FILE = "generation.ckpt.jsonl"
SCORE_CACHE_FILE = "scores.cache.jsonl"

STAGES: list[tuple[str, list[str]]] = [
    ("index", [INDEX_FILE]),
    ("sample", [SAMPLE_FILE]),
    ("generate", [PAIRS_FILE]),
    ("filter", [FILTERED_FILE]),
    ("mine-negatives", [NEGATIVES_FILE]),
    ("build-trainset", [TRAINSET_FILE]),
    ("retrieve", [BM25_RUN]),
    ("rerank", [RERANKED_RUN]),
    ("evaluate", [METRICS_JSON]),
    ("report", [REPORT_FILE]),
]


@dataclass(frozen=True)
class RunInputs:
    """Входные файлы датасета."""

    corpus: Path
    queries: Path
    qrels: Path

    def checksums(self) -> dict[str, str]:
        return {
            "corpus": file_checksum(self.corpus),
            "queries": file_checksum(self.queries),
            "qrels": file_checksum(self.qrels),
        }


@dataclass
class RunSummary:
    """Итоги прогона."""

    stages: dict[str, str] = field(default_factory=dict)
    counters: dict[str, int] = field(default_factory=dict)
    bm25_ndcg10: float | None = None
    reranked_ndcg10: float | None = None


class PipelineRunner:
    """Точка входа для полного прогона run-all.

    Стадии: index -> sample -> generate -> filter ->
    mine-negatives -> build-trainset -> retrieve ->
    rerank -> evaluate -> report.
    """

    def __init__(
        self,
        settings,
        inputs: RunInputs,
        out_dir,
        gateway: BaseGateway,
        progress: bool = False,
    ):
        """Инициализировать координатор.

        Args:
            settings: Разрешённый SettingsLoader.
            inputs: Корпус, запросы и qrels.
            out_dir: Выходная директория (создаётся).
            gateway: Шлюз генерации и оценки.
            progress: Показывать tqdm.
        """
        self._settings = settings
        self._inputs = inputs
        self._out = Path(out_dir)
        self._gateway = gateway
        self._progress = progress
        self._config = PipelineConfig.from_settings(settings)
        self._dirty = False
        self._corpus = None
        self._manifest: dict = {}

    # ── Манифест ──────────────────────────────────────

    def _fresh_manifest(self) -> dict:
        return {
            "version": __version__,
            "config": self._settings.resolved(),
            "inputs": self._inputs.checksums(),
            "gateway": self._gateway.identity,
            "seeds": {
                "root": self._config.seed,
                "substreams": ["sample", "negative/<doc_id>", "batches"],
            },
            "counters": {},
            "stages": {},
        }

    def _prepare_manifest(self) -> None:
        fresh = self._fresh_manifest()
        old = load_manifest(self._out)
        same_run = all(
            old.get(key) == fresh[key]
            for key in ("version", "config", "inputs", "gateway")
        )
        if same_run:
            fresh["counters"] = old.get("counters", {})
            fresh["stages"] = old.get("stages", {})
        elif old:
            _logger.info("Manifest differs from current config, rerunning all")
        self._manifest = fresh

    def _stage(self, name: str, outputs: list[str], compute, load):
        """Выполнить стадию или загрузить её результат."""
        if not self._dirty and stage_is_current(
            self._manifest, name, self._out, outputs
        ):
            _logger.info("Stage %s is up to date, skipping", name)
            self._summary.stages[name] = "skipped"
            return load()
        self._dirty = True
        result = compute()
        record_stage(self._manifest, name, self._out, outputs)
        save_manifest(self._out, self._manifest)
        self._summary.stages[name] = "done"
        return result

    def _count(self, **counters: int) -> None:
        self._manifest["counters"].update(counters)

    def _path(self, name: str) -> Path:
        return self._out / name

    # ── Данные ────────────────────────────────────────

    @property
    def corpus(self) -> dict:
        if self._corpus is None:
            self._corpus = load_corpus_map(self._inputs.corpus)
        return self._corpus

    # ── Прогон ────────────────────────────────────────

    def run_all(self) -> RunSummary:
        """Выполнить все стадии.

        Returns:
            RunSummary со статусом стадий, счётчиками
            и nDCG@10 обоих прогонов.
        """
        self._out.mkdir(parents=True, exist_ok=True)
        self._summary = RunSummary()
        self._dirty = False
        self._prepare_manifest()

        s = self._settings
        cfg = self._config
        cache = ScoreCache(self._path(SCORE_CACHE_FILE))

        index = self._stage(
            "index",
            [INDEX_FILE],
            lambda: self._build_index(),
            lambda: load_index(self._path(INDEX_FILE)),
        )
        sample = self._stage(
            "sample",
            [SAMPLE_FILE],
            lambda: self._sample(),
            lambda: list(load_corpus(self._path(SAMPLE_FILE))),
        )
        pairs = self._stage(
            "generate",
            [PAIRS_FILE],
            lambda: self._generate(sample),
            lambda: read_pairs(self._path(PAIRS_FILE)),
        )

        def do_filter():
            if s.get("filter_mode") == "v1":
                kept = filter_v1(pairs, cfg.keep_top)
            else:
                kept = filter_v2(
                    pairs,
                    self._gateway,
                    cfg.keep_top,
                    self.corpus,
                    cache,
                    progress=self._progress,
                )
            write_pairs(kept, self._path(FILTERED_FILE))
            return kept

        kept = self._stage(
            "filter",
            [FILTERED_FILE],
            do_filter,
            lambda: read_pairs(self._path(FILTERED_FILE)),
        )

        def do_mine():
            negatives = mine_negatives(
                kept,
                index,
                cfg.negative_pool_depth,
                cfg.seed,
                progress=self._progress,
            )
            write_negatives(negatives, self._path(NEGATIVES_FILE))
            return negatives

        negatives = self._stage(
            "mine-negatives",
            [NEGATIVES_FILE],
            do_mine,
            lambda: read_negatives(self._path(NEGATIVES_FILE)),
        )

        def do_trainset():
            outcome = build_trainset(kept, negatives, self.corpus)
            write_trainset(outcome.examples, self._path(TRAINSET_FILE))
            self._count(no_negative=outcome.no_negative)
            return outcome.examples

        self._stage(
            "build-trainset",
            [TRAINSET_FILE],
            do_trainset,
            lambda: load_trainset(self._path(TRAINSET_FILE)),
        )

        queries = load_queries(self._inputs.queries)
        qrels = load_qrels(self._inputs.qrels)

        def do_retrieve():
            run = retrieve_all(
                index, queries, s.get("retrieval_depth"), progress=self._progress
            )
            write_run(run, BM25_TAG, self._path(BM25_RUN))
            return run

        bm25_run = self._stage(
            "retrieve",
            [BM25_RUN],
            do_retrieve,
            lambda: load_run(self._path(BM25_RUN)),
        )

        spec = RerankSpec(depth=s.get("rerank_depth"))

        def do_rerank():
            run = rerank(
                bm25_run,
                {q.id: q.text for q in queries},
                self.corpus,
                self._gateway,
                spec,
                cache,
                progress=self._progress,
            )
            write_run(run, spec.scorer_tag, self._path(RERANKED_RUN))
            return run

        reranked_run = self._stage(
            "rerank",
            [RERANKED_RUN],
            do_rerank,
            lambda: load_run(self._path(RERANKED_RUN)),
        )

        def do_evaluate():
            record = metrics_record(
                s.get("dataset"),
                evaluate_run(bm25_run, qrels, EVAL_DEPTH),
                evaluate_run(reranked_run, qrels, EVAL_DEPTH),
            )
            write_json(self._path(METRICS_JSON), record)
            return record

        metrics = self._stage(
            "evaluate",
            [METRICS_JSON],
            do_evaluate,
            lambda: read_json(self._path(METRICS_JSON)),
        )

        def do_report():
            table = aggregate_report(
                {
                    metrics["dataset"]: {
                        "BM25": metrics["bm25_ndcg10"],
                        "Reranked": metrics["reranked_ndcg10"],
                    }
                }
            )
            atomic_write_text(self._path(REPORT_FILE), render_text(table) + "\n")

        self._stage("report", [REPORT_FILE], do_report, lambda: None)

        self._summary.counters = dict(self._manifest["counters"])
        self._summary.bm25_ndcg10 = metrics["bm25_ndcg10"]
        self._summary.reranked_ndcg10 = metrics["reranked_ndcg10"]
        _logger.info(
            "run-all finished: %s",
            ", ".join(f"{k}={v}" for k, v in self._summary.stages.items()),
        )
        return self._summary

    # ── Стадии генерации ──────────────────────────────

    def _build_index(self):
        s = self._settings
        analyzer = Analyzer.from_flags(
            lowercase=s.get("lowercase"),
            stopwords=s.get("stopwords"),
            stem=s.get("stem"),
        )
        index = build_index(
            load_corpus(self._inputs.corpus),
            analyzer=analyzer,
            k1=s.get("k1"),
            b=s.get("b"),
        )
        save_index(index, self._path(INDEX_FILE))
        return index

    def _sample(self):
        sample = sample_documents(
            load_corpus(self._inputs.corpus),
            self._config.sample_size,
            self._config.seed,
        )
        write_corpus(sample, self._path(SAMPLE_FILE))
        return sample

    def _generate(self, sample):
        s = self._settings
        checkpoint = self._path(CHECKPOINT_FILE)
        examples = load_few_shot(s.get("few_shot_path"))
        outcome = generate_queries(
            sample,
            load_template(s.get("template")),
            examples[: self._config.few_shot_count],
            self._gateway,
            max_new_tokens=s.get("max_new_tokens"),
            max_doc_chars=s.get("max_doc_chars"),
            checkpoint_path=checkpoint,
            logprob_mode=self._config.logprob_mode,
            progress=self._progress,
        )
        write_pairs(outcome.pairs, self._path(PAIRS_FILE))
        # порядок строк чекпоинта зависит от порядка завершения
        checkpoint.unlink(missing_ok=True)
        self._count(
            degenerate=outcome.degenerate,
            duplicate_queries=outcome.duplicate_queries,
        )
        return outcome.pairs
