"""Общие фикстуры тестов."""

import logging
import os
from pathlib import Path

import pytest

from inpars_hub.core.models import Document, Qrels, Query
from inpars_hub.infra.settings import ENV_PREFIX, SettingsLoader

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(autouse=True)
def clean_settings(monkeypatch, tmp_path):
    """Изолировать тест от окружения и .env разработчика."""
    for key in list(os.environ):
        if key.startswith(ENV_PREFIX):
            monkeypatch.delenv(key)
    monkeypatch.setattr(
        "inpars_hub.infra.settings.load_dotenv", lambda *a, **kw: False
    )
    SettingsLoader().reload()
    yield
    SettingsLoader().reload()


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def tiny_corpus() -> dict[str, Document]:
    """Пять документов с предсказуемыми пересечениями термов."""
    docs = [
        Document("d1", "Rust", "rust is fast"),
        Document("d2", "", "rust memory safety without garbage collection"),
        Document("d3", "Coffee", "coffee contains caffeine"),
        Document("d4", "Tea", "tea contains less caffeine than coffee"),
        Document("d5", "", "volcano eruption ash"),
    ]
    return {d.id: d for d in docs}


@pytest.fixture
def tiny_queries() -> list[Query]:
    return [
        Query("q1", "rust memory"),
        Query("q2", "caffeine coffee"),
        Query("q3", "quantum chromodynamics"),
    ]


@pytest.fixture
def tiny_qrels() -> Qrels:
    qrels = Qrels()
    qrels.add("q1", "d2", 2)
    qrels.add("q1", "d1", 1)
    qrels.add("q2", "d3", 1)
    qrels.add("q2", "d4", 0)
    return qrels


@pytest.fixture
def isolated_logger(tmp_path, monkeypatch):
    """Логгер inpars_hub без обработчиков; логи пишутся в tmp_path."""
    monkeypatch.chdir(tmp_path)
    logger = logging.getLogger("inpars_hub")
    saved = logger.handlers[:]
    logger.handlers.clear()
    yield logger
    for handler in logger.handlers:
        handler.close()
    logger.handlers[:] = saved
