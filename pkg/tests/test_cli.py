import json
import socket
from pathlib import Path

import pytest

from inpars_hub import __version__
from inpars_hub.cli.interface import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, run_cli
from inpars_hub.core.corpus_io import load_corpus
from inpars_hub.gateway.clients import CallableGateway, StubGateway
from inpars_hub.infra.settings import SettingsLoader
from inpars_hub.infra.storage import read_json
from inpars_hub.pipeline.runner import PipelineRunner, RunInputs
from main import main


@pytest.fixture(autouse=True)
def cli_env(isolated_logger, monkeypatch):
    monkeypatch.setenv("NO_PROXY", "127.0.0.1,localhost")
    return isolated_logger


@pytest.fixture
def data(fixtures_dir):
    return {
        "corpus": str(fixtures_dir / "corpus.jsonl"),
        "queries": str(fixtures_dir / "queries.jsonl"),
        "qrels": str(fixtures_dir / "qrels.tsv"),
    }


def _run_all(data, out, *extra):
    return run_cli(
        [
            "run-all",
            "--corpus", data["corpus"],
            "--queries", data["queries"],
            "--qrels", data["qrels"],
            "--dataset", "fixture",
            "--gateway", "stub",
            "--quiet",
            "--out", str(out),
            *extra,
        ]
    )  # fmt: skip


# ── Разбор аргументов ────────────────────────────────────


def test_version(capsys):
    assert main(["--version"]) == EXIT_OK
    assert capsys.readouterr().out.strip() == f"inpars-hub {__version__}"


@pytest.mark.parametrize(
    "argv",
    [[], ["fly"], ["index"], ["evaluate", "--qrels", "q", "--run", "r", "--bogus"]],
    ids=["no-command", "unknown-command", "missing-flag", "unknown-flag"],
)
def test_usage_errors_exit_1(argv, capsys):
    assert run_cli(argv) == EXIT_USAGE
    assert "Ошибка" in capsys.readouterr().err


def test_bad_config_exits_1(data, tmp_path, capsys):
    missing = str(tmp_path / "no.yaml")
    argv = ["index", "--corpus", data["corpus"], "--config", missing]
    assert run_cli(argv) == EXIT_USAGE
    assert "конфигурации" in capsys.readouterr().err


def test_missing_input_exits_2(tmp_path, capsys):
    argv = ["index", "--corpus", str(tmp_path / "absent.jsonl"), "--quiet"]
    assert run_cli(argv) == EXIT_RUNTIME
    assert "Ошибка" in capsys.readouterr().err


def test_unreachable_gateway_exits_2_with_hint(data, tmp_path, monkeypatch, capsys):
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        port = sock.getsockname()[1]
    monkeypatch.setenv("INPARS_GATEWAY_URL", f"http://127.0.0.1:{port}")
    monkeypatch.setenv("INPARS_MAX_ATTEMPTS", "1")
    sample = tmp_path / "sample.jsonl"
    sample.write_text(
        '{"_id": "d1", "title": "", "text": "rust"}\n', encoding="utf-8"
    )
    argv = ["generate", "--sample", str(sample), "--gateway", "http", "--quiet"]
    assert run_cli(argv) == EXIT_RUNTIME
    assert "повторный запуск" in capsys.readouterr().err


# ── Подкоманды ───────────────────────────────────────────


def test_index_retrieve_evaluate(data, tmp_path, capsys):
    out = str(tmp_path / "out")
    common = ["--quiet", "--out", out]
    assert run_cli(["index", "--corpus", data["corpus"], *common]) == EXIT_OK
    assert "500 документов" in capsys.readouterr().out
    index = f"{out}/index.json"
    argv = ["retrieve", "--index", index, "--queries", data["queries"], *common]
    assert run_cli(argv) == EXIT_OK
    capsys.readouterr()

    argv = ["evaluate", "--qrels", data["qrels"], "--run", f"{out}/bm25.run"]
    assert run_cli([*argv, "--per-query", *common]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    name, value, count = lines[-1].split("\t")
    assert name == "nDCG@10"
    assert 0.0 < float(value) <= 1.0
    assert len(value.split(".")[1]) == 4
    assert count == f"({len(lines) - 1} запросов)"


def test_generation_stages_by_hand(data, tmp_path, capsys):
    out = str(tmp_path / "out")
    common = ["--quiet", "--out", out, "--seed", "3"]
    steps = [
        ["index", "--corpus", data["corpus"]],
        ["sample", "--corpus", data["corpus"], "--sample-size", "100"],
        ["generate", "--sample", f"{out}/sample.jsonl"],
        ["filter", "--pairs", f"{out}/pairs.jsonl", "--corpus", data["corpus"],
         "--keep-top", "40"],
        ["mine-negatives", "--pairs", f"{out}/filtered.jsonl",
         "--index", f"{out}/index.json"],
        ["build-trainset", "--pairs", f"{out}/filtered.jsonl",
         "--negatives", f"{out}/negatives.jsonl", "--corpus", data["corpus"]],
        ["emit-batches", "--trainset", f"{out}/trainset.tsv",
         "--batch-pos", "8", "--batch-neg", "8"],
    ]  # fmt: skip
    for step in steps:
        assert run_cli([*step, *common]) == EXIT_OK, step
    stdout = capsys.readouterr().out
    assert "100 документов" in stdout
    assert "40 из" in stdout

    assert len(list(load_corpus(f"{out}/sample.jsonl"))) == 100
    filtered = (tmp_path / "out" / "filtered.jsonl").read_text(encoding="utf-8")
    assert len(filtered.splitlines()) == 40
    batches = (tmp_path / "out" / "batches.jsonl").read_text(encoding="utf-8")
    first = json.loads(batches.splitlines()[0])
    assert len(first["positive"]) == len(first["negative"]) == 8


def test_filter_v1_without_corpus(data, tmp_path, capsys):
    pairs = tmp_path / "pairs.jsonl"
    pairs.write_text(
        '{"doc_id": "a", "mean_logprob": -0.1, "query": "qa"}\n'
        '{"doc_id": "b", "mean_logprob": -0.5, "query": "qb"}\n',
        encoding="utf-8",
    )
    out = tmp_path / "out"
    argv = ["filter", "--pairs", str(pairs), "--mode", "v1", "--keep-top", "1"]
    assert run_cli([*argv, "--quiet", "--out", str(out)]) == EXIT_OK
    kept = (out / "filtered.jsonl").read_text(encoding="utf-8")
    assert json.loads(kept)["doc_id"] == "a"

    argv = ["filter", "--pairs", str(pairs), "--keep-top", "1"]
    assert run_cli([*argv, "--quiet", "--out", str(out)]) == EXIT_RUNTIME


# ── run-all ──────────────────────────────────────────────


def test_run_all_is_byte_identical(data, tmp_path, capsys):
    first, second = tmp_path / "a", tmp_path / "b"
    assert _run_all(data, first, "--seed", "7") == EXIT_OK
    assert _run_all(data, second, "--seed", "7") == EXIT_OK
    names = sorted(p.name for p in first.iterdir() if p.is_file())
    assert names == sorted(p.name for p in second.iterdir() if p.is_file())
    assert (first / "logs" / "pipeline.log").exists()
    assert "trainset.tsv" in names and "manifest.json" in names
    assert "generation.ckpt.jsonl" not in names
    for name in names:
        assert (first / name).read_bytes() == (second / name).read_bytes(), name

    stdout = capsys.readouterr().out
    assert "index\tdone" in stdout
    assert "degenerate\t1" in stdout
    assert "reranked_ndcg10\t" in stdout


def test_run_all_seed_changes_sample(data, tmp_path):
    small = ["--sample-size", "100", "--keep-top", "50"]
    assert _run_all(data, tmp_path / "a", "--seed", "7", *small) == EXIT_OK
    assert _run_all(data, tmp_path / "b", "--seed", "8", *small) == EXIT_OK
    sample_a = (tmp_path / "a" / "sample.jsonl").read_bytes()
    sample_b = (tmp_path / "b" / "sample.jsonl").read_bytes()
    assert sample_a != sample_b


def test_run_all_keep_top_over_sample_size_is_rejected(data, tmp_path):
    small = ["--sample-size", "10", "--keep-top", "50"]
    assert _run_all(data, tmp_path / "a", *small) == EXIT_RUNTIME


def test_run_all_skips_current_stages(data, tmp_path, capsys):
    out = tmp_path / "out"
    small = ["--sample-size", "100", "--keep-top", "50"]
    assert _run_all(data, out, *small) == EXIT_OK
    capsys.readouterr()
    before = (out / "manifest.json").read_bytes()

    assert _run_all(data, out, *small) == EXIT_OK
    stdout = capsys.readouterr().out
    assert "index\tskipped" in stdout
    assert "report\tskipped" in stdout
    assert "\tdone" not in stdout
    assert (out / "manifest.json").read_bytes() == before

    (out / "filtered.jsonl").write_text("", encoding="utf-8")
    assert _run_all(data, out, *small) == EXIT_OK
    stdout = capsys.readouterr().out
    assert "generate\tskipped" in stdout
    assert "filter\tdone" in stdout
    assert "report\tdone" in stdout


def test_run_all_rerun_with_other_config_recomputes(data, tmp_path, capsys):
    out = tmp_path / "out"
    small = ["--sample-size", "100", "--keep-top", "50"]
    assert _run_all(data, out, *small) == EXIT_OK
    capsys.readouterr()
    assert _run_all(data, out, "--sample-size", "100", "--keep-top", "40") == EXIT_OK
    assert "skipped" not in capsys.readouterr().out


def test_report_from_run_all(data, tmp_path, capsys):
    out = tmp_path / "out"
    assert _run_all(data, out, "--sample-size", "100", "--keep-top", "50") == EXIT_OK
    capsys.readouterr()
    metrics = str(out / "metrics.json")

    assert run_cli(["report", metrics, "--csv", "--quiet"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "dataset,BM25,Reranked"
    assert lines[1].startswith("fixture,")

    assert run_cli(["report", metrics, "--published", "--quiet"]) == EXIT_OK
    text = capsys.readouterr().out
    assert "This run" in text
    assert "Avg PrGator" in text
    assert "0.531" in text


def test_run_all_with_another_scorer_calls_it(data, tmp_path):
    out = tmp_path / "out"
    settings = SettingsLoader().load(
        overrides={"sample_size": 100, "keep_top": 50, "dataset": "fixture"},
        env={},
    )
    inputs = RunInputs(*(Path(data[key]) for key in ("corpus", "queries", "qrels")))
    PipelineRunner(settings, inputs, out, StubGateway()).run_all()
    before = (out / "reranked.run").read_bytes()

    calls = []
    other = CallableGateway(
        lambda q, d: calls.append(q) or -float(len(d)),
        generator=StubGateway(),
        name="other-model",
    )
    summary = PipelineRunner(settings, inputs, out, other).run_all()
    assert summary.stages["filter"] == "done"
    assert summary.stages["rerank"] == "done"
    assert calls
    assert (out / "reranked.run").read_bytes() != before
    assert read_json(out / "manifest.json")["gateway"] == "other-model"
