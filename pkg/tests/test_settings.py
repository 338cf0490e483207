import logging
from logging.handlers import RotatingFileHandler

import pytest

from inpars_hub.core.exceptions import ConfigError
from inpars_hub.decorators import log_stage
from inpars_hub.infra.settings import DEFAULTS, SettingsLoader
from inpars_hub.infra.storage import (
    JsonlAppender,
    load_manifest,
    read_json,
    read_jsonl,
    record_stage,
    save_manifest,
    stage_is_current,
    write_json,
)
from inpars_hub.logging_config import setup_logging


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text("seed: 5\nkeep_top: 50\nk1: 1.2\n", encoding="utf-8")
    return path


# ── SettingsLoader ───────────────────────────────────────


def test_singleton():
    assert SettingsLoader() is SettingsLoader()


def test_defaults():
    settings = SettingsLoader().load(env={})
    assert settings.get("keep_top") == 10_000
    assert settings.get("k1") == 0.9
    assert settings.source("seed") == "default"


def test_precedence_file_env_flag(config_file):
    env = {"INPARS_SEED": "6", "INPARS_KEEP_TOP": "60"}
    settings = SettingsLoader().load(config_file, overrides={"seed": 7}, env=env)
    assert settings.get("seed") == 7
    assert settings.source("seed") == "flag"
    assert settings.get("keep_top") == 60
    assert settings.source("keep_top") == "env"
    assert settings.get("k1") == 1.2
    assert settings.source("k1") == "file"
    assert settings.get("b") == 0.4


def test_none_override_keeps_lower_layer(config_file):
    settings = SettingsLoader().load(config_file, overrides={"seed": None}, env={})
    assert settings.get("seed") == 5


@pytest.mark.parametrize(
    "raw, expected", [("true", True), ("0", False), ("Off", False), ("yes", True)]
)
def test_boolean_coercion(raw, expected):
    settings = SettingsLoader().load(env={"INPARS_STEM": raw})
    assert settings.get("stem") is expected


def test_bad_values_raise_config_error(tmp_path):
    with pytest.raises(ConfigError):
        SettingsLoader().load(env={"INPARS_SEED": "many"})
    with pytest.raises(ConfigError):
        SettingsLoader().load(env={"INPARS_STEM": "maybe"})
    with pytest.raises(ConfigError):
        SettingsLoader().load(overrides={"no_such_key": 1}, env={})

    unknown = tmp_path / "unknown.yaml"
    unknown.write_text("colour: blue\n", encoding="utf-8")
    with pytest.raises(ConfigError) as err:
        SettingsLoader().load(unknown, env={})
    assert err.value.key == "colour"

    broken = tmp_path / "broken.yaml"
    broken.write_text("seed: [1\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        SettingsLoader().load(broken, env={})

    with pytest.raises(ConfigError):
        SettingsLoader().load(tmp_path / "missing.yaml", env={})


def test_resolved_masks_token():
    settings = SettingsLoader().load(env={"INPARS_GATEWAY_TOKEN": "secret"})
    resolved = settings.resolved()
    assert resolved["gateway_token"] == "***"
    assert settings.get("gateway_token") == "secret"
    assert list(resolved) == sorted(DEFAULTS)


def test_reload_restores_defaults():
    settings = SettingsLoader().load(overrides={"seed": 3}, env={})
    settings.reload()
    assert settings.get("seed") == 0


# ── Логирование ──────────────────────────────────────────


def test_setup_logging_is_idempotent(isolated_logger, tmp_path):
    setup_logging()
    setup_logging(quiet=True)
    assert len(isolated_logger.handlers) == 2
    assert (tmp_path / "logs").is_dir()
    stream = next(
        h for h in isolated_logger.handlers
        if not isinstance(h, RotatingFileHandler)
    )
    assert stream.level == logging.ERROR


def test_log_file_receives_records(isolated_logger, tmp_path):
    setup_logging(level="DEBUG")
    logging.getLogger("inpars_hub.synth").info("sampled 3 documents")
    for handler in isolated_logger.handlers:
        handler.flush()
    text = (tmp_path / "logs" / "pipeline.log").read_text(encoding="utf-8")
    assert "INFO" in text
    assert "sampled 3 documents" in text


def test_logs_follow_output_directory(isolated_logger, tmp_path):
    setup_logging(out_dir=tmp_path / "run1")
    setup_logging(out_dir=tmp_path / "run2")
    files = [
        h.baseFilename
        for h in isolated_logger.handlers
        if isinstance(h, RotatingFileHandler)
    ]
    assert files == [str(tmp_path / "run2" / "logs" / "pipeline.log")]
    assert len(isolated_logger.handlers) == 2

    SettingsLoader().load(env={"INPARS_LOG_DIR": str(tmp_path / "shared")})
    setup_logging(out_dir=tmp_path / "run3")
    assert (tmp_path / "shared" / "pipeline.log").exists()
    assert not (tmp_path / "run3").exists()


# ── @log_stage ───────────────────────────────────────────


def test_log_stage_reports_size_and_time(caplog):
    @log_stage(verbose=True)
    def make(n):
        return list(range(n))

    with caplog.at_level(logging.INFO, logger="inpars_hub.stages"):
        assert make(3) == [0, 1, 2]
    [message] = caplog.messages
    assert message.startswith("STAGE name=make result=OK size=3 elapsed=")


def test_log_stage_reraises(caplog):
    @log_stage
    def broken():
        raise ValueError("bad input")

    with caplog.at_level(logging.INFO, logger="inpars_hub.stages"):
        with pytest.raises(ValueError):
            broken()
    assert "result=ERROR error_type=ValueError error_message='bad input'" in (
        caplog.text
    )


# ── Хранилище ────────────────────────────────────────────


def test_json_is_written_atomically_and_sorted(tmp_path):
    path = tmp_path / "sub" / "data.json"
    write_json(path, {"b": 1, "a": "ё"})
    assert path.read_text(encoding="utf-8") == '{\n  "a": "ё",\n  "b": 1\n}\n'
    assert read_json(path) == {"a": "ё", "b": 1}
    assert read_json(tmp_path / "none.json", default={}) == {}
    assert [p.name for p in path.parent.iterdir()] == ["data.json"]


def test_truncated_jsonl_tail_is_skipped(tmp_path):
    path = tmp_path / "ckpt.jsonl"
    with JsonlAppender(path) as out:
        out.append({"doc_id": "d1"})
        out.append({"doc_id": "d2"})
    with open(path, "a", encoding="utf-8") as fh:
        fh.write('{"doc_id": "d3"')
    assert read_jsonl(path) == [{"doc_id": "d1"}, {"doc_id": "d2"}]


def test_stage_checksums(tmp_path):
    (tmp_path / "a.txt").write_text("one", encoding="utf-8")
    manifest = {}
    record_stage(manifest, "index", tmp_path, ["a.txt"])
    save_manifest(tmp_path, manifest)
    loaded = load_manifest(tmp_path)
    assert stage_is_current(loaded, "index", tmp_path, ["a.txt"])
    assert not stage_is_current(loaded, "sample", tmp_path, ["a.txt"])
    (tmp_path / "a.txt").write_text("two", encoding="utf-8")
    assert not stage_is_current(loaded, "index", tmp_path, ["a.txt"])
