"""Командный интерфейс (CLI) InPars Hub.

Подкоманды связывают стадии пайплайна с файлами
и конфигурацией. Коды выхода:

    0 — успех;
    1 — ошибка использования (неизвестная команда/флаг);
    2 — ошибка выполнения.

Диагностика пишется в stderr, данные — в файлы под
--out или в stdout.
"""

import argparse
import sys
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
from inpars_hub.core.exceptions import (
    ConfigError,
    GatewayServiceError,
    GatewayTransportError,
    InParsError,
)
from inpars_hub.core.index import build_index, load_index, save_index
from inpars_hub.core.metrics import (
    PROMPTAGATOR_AVG_ROW,
    PROMPTAGATOR_SUBSET,
    SUBSET_AVG_ROW,
    aggregate_report,
    evaluate_run,
    load_published,
    render_csv,
    render_text,
)
from inpars_hub.core.models import RerankSpec
from inpars_hub.core.prompting import load_few_shot, load_template
from inpars_hub.core.utils import round_half_away
from inpars_hub.gateway.cache import ScoreCache
from inpars_hub.gateway.clients import make_gateway
from inpars_hub.gateway.config import GatewayConfig
from inpars_hub.infra.settings import DEFAULTS, SettingsLoader
from inpars_hub.infra.storage import read_json
from inpars_hub.logging_config import setup_logging
from inpars_hub.pipeline import runner
from inpars_hub.pipeline.evaluation import (
    BM25_RUN,
    BM25_TAG,
    RERANKED_RUN,
    rerank,
    retrieve_all,
)
from inpars_hub.pipeline.synth import (
    build_trainset,
    emit_batches,
    filter_v1,
    filter_v2,
    generate_queries,
    mine_negatives,
    read_negatives,
    read_pairs,
    sample_documents,
    write_batches,
    write_negatives,
    write_pairs,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2

BATCHES_FILE = "batches.jsonl"
THIS_RUN = "This run"


class _Parser(argparse.ArgumentParser):
    """ArgumentParser с кодом 1 для ошибок использования."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"Ошибка: {message}\n")


# ── Разбор аргументов ────────────────────────────────────


def _common_options() -> argparse.ArgumentParser:
    """Флаги, общие для всех подкоманд."""
    common = _Parser(add_help=False)
    common.add_argument("--config", help="YAML-файл конфигурации")
    common.add_argument(
        "--out", default="out", help="Выходная директория (по умолч. out)"
    )
    common.add_argument(
        "--quiet", action="store_true", help="Без прогресса и INFO в stderr"
    )
    common.add_argument("--seed", type=int, help="Корневой seed")
    common.add_argument(
        "--parallelism", type=int, help="Число параллельных запросов P"
    )
    common.add_argument(
        "--gateway", choices=["stub", "http"], help="Модельный шлюз"
    )
    return common


def _analyzer_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--k1", type=float, help="BM25 k1 (0.9)")
    parser.add_argument("--b", type=float, help="BM25 b (0.4)")
    for name, help_text in (
        ("lowercase", "Не приводить к нижнему регистру"),
        ("stopwords", "Не удалять стоп-слова"),
        ("stem", "Без стемминга"),
    ):
        parser.add_argument(
            f"--no-{name}",
            dest=name,
            action="store_const",
            const=False,
            default=None,
            help=help_text,
        )


def build_parser() -> argparse.ArgumentParser:
    """Собрать парсер со всеми подкомандами."""
    common = _common_options()
    parser = _Parser(
        prog="inpars",
        description="Синтетические обучающие данные для ранжирования "
        "и оценка BM25 + переранжирование.",
    )
    parser.add_argument(
        "--version", action="version", version=f"inpars-hub {__version__}"
    )
    sub = parser.add_subparsers(dest="command", metavar="<команда>")
    sub.required = True

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        return sub.add_parser(name, parents=[common], help=help_text)

    p = add("index", "Построить BM25-индекс -> <out>/index.json")
    p.add_argument("--corpus", required=True)
    _analyzer_options(p)

    p = add("sample", "Выборка документов -> <out>/sample.jsonl")
    p.add_argument("--corpus", required=True)
    p.add_argument("--sample-size", dest="sample_size", type=int)

    p = add("generate", "Сгенерировать запросы -> <out>/pairs.jsonl")
    p.add_argument("--sample", required=True, help="JSONL документов выборки")
    p.add_argument("--template", help="Имя шаблона или путь (gbq)")
    p.add_argument("--few-shot", dest="few_shot_path")
    p.add_argument("--few-shot-count", dest="few_shot_count", type=int)
    p.add_argument("--max-new-tokens", dest="max_new_tokens", type=int)
    p.add_argument("--logprob-mode", dest="logprob_mode", choices=["mean", "sum"])

    p = add("filter", "Фильтр пар -> <out>/filtered.jsonl")
    p.add_argument("--pairs", required=True)
    p.add_argument("--corpus", help="Корпус (нужен для v2)")
    p.add_argument("--mode", dest="filter_mode", choices=["v1", "v2"])
    p.add_argument("--keep-top", dest="keep_top", type=int)

    p = add("mine-negatives", "Негативы из BM25 -> <out>/negatives.jsonl")
    p.add_argument("--pairs", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--pool-depth", dest="negative_pool_depth", type=int)

    p = add("build-trainset", "Обучающий набор -> <out>/trainset.tsv")
    p.add_argument("--pairs", required=True)
    p.add_argument("--negatives", required=True)
    p.add_argument("--corpus", required=True)

    p = add("emit-batches", "Батчи эпохи -> <out>/batches.jsonl")
    p.add_argument("--trainset", required=True)
    p.add_argument("--batch-pos", dest="batch_pos", type=int)
    p.add_argument("--batch-neg", dest="batch_neg", type=int)

    p = add("retrieve", "BM25 top-k -> <out>/bm25.run")
    p.add_argument("--index", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--depth", dest="retrieval_depth", type=int)

    p = add("rerank", "Переранжирование -> <out>/reranked.run")
    p.add_argument("--run", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--depth", dest="rerank_depth", type=int)

    p = add("evaluate", "nDCG@k прогона (в stdout)")
    p.add_argument("--qrels", required=True)
    p.add_argument("--run", required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument(
        "--per-query", action="store_true", help="Печатать nDCG по запросам"
    )

    p = add("report", "Сводная таблица по metrics JSON (в stdout)")
    p.add_argument("metrics", nargs="+", help="Файлы metrics.json")
    p.add_argument(
        "--published", action="store_true", help="Добавить опубликованные столбцы"
    )
    p.add_argument("--csv", action="store_true", help="CSV вместо таблицы")
    p.add_argument("--subset", help="Датасеты второй строки среднего, через запятую")

    p = add("run-all", "Полный прогон со стадиями и манифестом")
    p.add_argument("--corpus", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--dataset", help="Имя датасета для отчёта")
    p.add_argument("--sample-size", dest="sample_size", type=int)
    p.add_argument("--keep-top", dest="keep_top", type=int)
    p.add_argument("--mode", dest="filter_mode", choices=["v1", "v2"])
    _analyzer_options(p)

    return parser


def _overrides(args: argparse.Namespace) -> dict:
    """Флаги, совпадающие с ключами конфигурации."""
    return {key: getattr(args, key) for key in DEFAULTS if hasattr(args, key)}


# ── Точка входа ──────────────────────────────────────────


def run_cli(argv: list[str] | None = None) -> int:
    """Разобрать argv и выполнить подкоманду.

    Returns:
        Код выхода (0, 1 или 2).
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE

    try:
        settings = SettingsLoader().load(args.config, _overrides(args))
    except ConfigError as exc:
        _error(exc)
        return EXIT_USAGE
    setup_logging(quiet=args.quiet, out_dir=args.out)

    handler = _HANDLERS[args.command]
    try:
        handler(args, settings)
    except (GatewayTransportError, GatewayServiceError) as exc:
        _error(exc)
        _error("Сервис модели недоступен; повторный запуск продолжит работу")
        return EXIT_RUNTIME
    except (InParsError, OSError, ValueError, KeyError) as exc:
        _error(exc)
        return EXIT_RUNTIME
    return EXIT_OK


def _error(message) -> None:
    if isinstance(message, BaseException):
        message = f"Ошибка: {message}"
    print(message, file=sys.stderr)


def _progress(args) -> bool:
    return not args.quiet and sys.stderr.isatty()


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _gateway(settings):
    kind = settings.get("gateway")
    template = load_template(settings.get("template")) if kind == "stub" else None
    return make_gateway(kind, GatewayConfig.from_settings(settings), template)


# ── Обработчики ──────────────────────────────────────────


def _handle_index(args, settings) -> None:
    analyzer = Analyzer.from_flags(
        lowercase=settings.get("lowercase"),
        stopwords=settings.get("stopwords"),
        stem=settings.get("stem"),
    )
    index = build_index(
        load_corpus(args.corpus),
        analyzer=analyzer,
        k1=settings.get("k1"),
        b=settings.get("b"),
    )
    path = _out(args) / runner.INDEX_FILE
    save_index(index, path)
    print(f"{path}\t{index.doc_count} документов\t{index.vocabulary_size} термов")


def _handle_sample(args, settings) -> None:
    sample = sample_documents(
        load_corpus(args.corpus),
        settings.get("sample_size"),
        settings.get("seed"),
    )
    path = _out(args) / runner.SAMPLE_FILE
    write_corpus(sample, path)
    print(f"{path}\t{len(sample)} документов")


def _handle_generate(args, settings) -> None:
    out = _out(args)
    examples = load_few_shot(settings.get("few_shot_path"))
    outcome = generate_queries(
        list(load_corpus(args.sample)),
        load_template(settings.get("template")),
        examples[: settings.get("few_shot_count")],
        _gateway(settings),
        max_new_tokens=settings.get("max_new_tokens"),
        max_doc_chars=settings.get("max_doc_chars"),
        checkpoint_path=out / runner.CHECKPOINT_FILE,
        logprob_mode=settings.get("logprob_mode"),
        progress=_progress(args),
    )
    path = out / runner.PAIRS_FILE
    write_pairs(outcome.pairs, path)
    (out / runner.CHECKPOINT_FILE).unlink(missing_ok=True)
    print(
        f"{path}\t{len(outcome.pairs)} пар\t"
        f"вырожденных: {outcome.degenerate}\t"
        f"повторов запросов: {outcome.duplicate_queries}"
    )


def _handle_filter(args, settings) -> None:
    pairs = read_pairs(args.pairs)
    keep_top = settings.get("keep_top")
    out = _out(args)
    if settings.get("filter_mode") == "v1":
        kept = filter_v1(pairs, keep_top)
    else:
        if not args.corpus:
            raise ValueError("для фильтра v2 нужен --corpus")
        kept = filter_v2(
            pairs,
            _gateway(settings),
            keep_top,
            load_corpus_map(args.corpus),
            ScoreCache(out / runner.SCORE_CACHE_FILE),
            progress=_progress(args),
        )
    path = out / runner.FILTERED_FILE
    write_pairs(kept, path)
    print(f"{path}\t{len(kept)} из {len(pairs)} пар")


def _handle_mine_negatives(args, settings) -> None:
    negatives = mine_negatives(
        read_pairs(args.pairs),
        load_index(args.index),
        settings.get("negative_pool_depth"),
        settings.get("seed"),
        progress=_progress(args),
    )
    path = _out(args) / runner.NEGATIVES_FILE
    write_negatives(negatives, path)
    missing = sum(1 for v in negatives.values() if v is None)
    print(f"{path}\t{len(negatives)} пар\tбез негатива: {missing}")


def _handle_build_trainset(args, settings) -> None:
    outcome = build_trainset(
        read_pairs(args.pairs),
        read_negatives(args.negatives),
        load_corpus_map(args.corpus),
    )
    path = _out(args) / runner.TRAINSET_FILE
    count = write_trainset(outcome.examples, path)
    print(f"{path}\t{count} примеров\tбез негатива: {outcome.no_negative}")


def _handle_emit_batches(args, settings) -> None:
    batches = emit_batches(
        load_trainset(args.trainset),
        settings.get("batch_pos"),
        settings.get("batch_neg"),
        settings.get("seed"),
    )
    path = _out(args) / BATCHES_FILE
    count = write_batches(batches, path)
    print(f"{path}\t{count} батчей")


def _handle_retrieve(args, settings) -> None:
    run = retrieve_all(
        load_index(args.index),
        load_queries(args.queries),
        settings.get("retrieval_depth"),
        progress=_progress(args),
    )
    path = _out(args) / BM25_RUN
    write_run(run, BM25_TAG, path)
    print(f"{path}\t{len(run)} запросов")


def _handle_rerank(args, settings) -> None:
    out = _out(args)
    spec = RerankSpec(depth=settings.get("rerank_depth"))
    run = rerank(
        load_run(args.run),
        {q.id: q.text for q in load_queries(args.queries)},
        load_corpus_map(args.corpus),
        _gateway(settings),
        spec,
        ScoreCache(out / runner.SCORE_CACHE_FILE),
        progress=_progress(args),
    )
    path = out / RERANKED_RUN
    write_run(run, spec.scorer_tag, path)
    print(f"{path}\t{len(run)} запросов")


def _handle_evaluate(args, settings) -> None:
    result = evaluate_run(load_run(args.run), load_qrels(args.qrels), args.k)
    if args.per_query:
        for qid in sorted(result.per_query):
            print(f"{qid}\t{round_half_away(result.per_query[qid], 4)}")
    print(
        f"nDCG@{args.k}\t{round_half_away(result.mean, 4)}\t"
        f"({result.judged_count} запросов)"
    )


def _handle_report(args, settings) -> None:
    results: dict[str, dict[str, float | None]] = {}
    subset = None
    subset_label = SUBSET_AVG_ROW
    if args.published:
        results = load_published()
        subset = PROMPTAGATOR_SUBSET
        subset_label = PROMPTAGATOR_AVG_ROW
    for path in args.metrics:
        record = read_json(path)
        if not isinstance(record, dict) or "dataset" not in record:
            raise ValueError(f"{path}: не похоже на metrics JSON")
        row = results.setdefault(record["dataset"], {})
        if args.published:
            row[THIS_RUN] = record["reranked_ndcg10"]
        else:
            row["BM25"] = record["bm25_ndcg10"]
            row["Reranked"] = record["reranked_ndcg10"]
    if args.subset:
        subset = [name.strip() for name in args.subset.split(",") if name.strip()]
        subset_label = SUBSET_AVG_ROW
    table = aggregate_report(
        results,
        subset=subset,
        strict=not args.published,
        subset_label=subset_label,
    )
    if args.csv:
        sys.stdout.write(render_csv(table))
    else:
        print(render_text(table))


def _handle_run_all(args, settings) -> None:
    summary = runner.PipelineRunner(
        settings,
        runner.RunInputs(
            corpus=Path(args.corpus),
            queries=Path(args.queries),
            qrels=Path(args.qrels),
        ),
        _out(args),
        _gateway(settings),
        progress=_progress(args),
    ).run_all()
    for stage, status in summary.stages.items():
        print(f"{stage}\t{status}")
    for name, value in sorted(summary.counters.items()):
        print(f"{name}\t{value}")
    print(f"bm25_ndcg10\t{round_half_away(summary.bm25_ndcg10, 4)}")
    print(f"reranked_ndcg10\t{round_half_away(summary.reranked_ndcg10, 4)}")


_HANDLERS = {
    "index": _handle_index,
    "sample": _handle_sample,
    "generate": _handle_generate,
    "filter": _handle_filter,
    "mine-negatives": _handle_mine_negatives,
    "build-trainset": _handle_build_trainset,
    "emit-batches": _handle_emit_batches,
    "retrieve": _handle_retrieve,
    "rerank": _handle_rerank,
    "evaluate": _handle_evaluate,
    "report": _handle_report,
    "run-all": _handle_run_all,
}
