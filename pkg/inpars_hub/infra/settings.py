"""Singleton SettingsLoader — единая точка конфигурации.

Порядок приоритета (от низшего к высшему):
значения по умолчанию -> YAML-файл -> переменные
окружения INPARS_* (с подгрузкой .env) -> флаги CLI.
"""

import os
from pathlib import Path

import yaml
from dotenv import load_dotenv

from inpars_hub.core.exceptions import ConfigError

ENV_PREFIX = "INPARS_"

_RESOURCES = Path(__file__).resolve().parents[1] / "resources"

DEFAULTS: dict = {
    # генерация и фильтрация
    "sample_size": 100_000,
    "keep_top": 10_000,
    "negative_pool_depth": 1000,
    "few_shot_count": 3,
    "seed": 0,
    "batch_pos": 64,
    "batch_neg": 64,
    "max_doc_chars": 1024,
    "max_new_tokens": 64,
    "logprob_mode": "mean",
    "filter_mode": "v2",
    "template": "gbq",
    "few_shot_path": str(_RESOURCES / "few_shot_msmarco.jsonl"),
    # поиск и оценка
    "retrieval_depth": 1000,
    "rerank_depth": 1000,
    "k1": 0.9,
    "b": 0.4,
    "lowercase": True,
    "stem": True,
    "stopwords": True,
    "dataset": "dataset",
    # модельный сервис
    "gateway": "stub",
    "gateway_url": "http://localhost:8000",
    "gateway_token": "",
    "parallelism": 4,
    "timeout": 120.0,
    "max_attempts": 4,
    "score_batch_size": 32,
    "backoff": 1.0,
    # логи
    "log_dir": "",
    "log_level": "INFO",
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _coerce(key: str, value, default):
    """Привести значение к типу значения по умолчанию."""
    if value is None:
        return None
    try:
        if isinstance(default, bool):
            if isinstance(value, bool):
                return value
            text = str(value).strip().lower()
            if text in _TRUE:
                return True
            if text in _FALSE:
                return False
            raise ValueError(f"не булево значение: {value!r}")
        if isinstance(default, int):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(f"не целое число: {value!r}")
            return int(value)
        if isinstance(default, float):
            return float(value)
        return str(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(key, str(exc)) from exc


class SettingsLoader:
    """Загрузка и кеширование конфигурации проекта.

    Реализован через __new__: один экземпляр
    при любых импортах. load() пересобирает слои.
    """

    _instance = None

    def __new__(cls) -> "SettingsLoader":
        """Создать или вернуть единственный экземпляр."""
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __init__(self) -> None:
        """Загрузить значения по умолчанию при первом создании."""
        if hasattr(self, "_initialized"):
            return
        self._initialized = True
        self._config: dict = dict(DEFAULTS)
        self._sources: dict[str, str] = {
            k: "default" for k in DEFAULTS
        }

    def load(
        self,
        config_path: str | os.PathLike | None = None,
        overrides: dict | None = None,
        env: dict | None = None,
    ) -> "SettingsLoader":
        """Собрать конфигурацию из всех слоёв.

        Args:
            config_path: YAML-файл (необязательно).
            overrides: Значения флагов CLI; None пропускаются.
            env: Окружение (по умолчанию os.environ
                после load_dotenv).

        Returns:
            self.

        Raises:
            ConfigError: Неизвестный ключ, битый файл
                или неприводимое значение.
        """
        config = dict(DEFAULTS)
        sources = {k: "default" for k in DEFAULTS}

        if config_path is not None:
            for key, value in self._read_file(config_path).items():
                config[key] = _coerce(key, value, DEFAULTS[key])
                sources[key] = "file"

        if env is None:
            load_dotenv(Path.cwd() / ".env")
            env = dict(os.environ)
        for key in DEFAULTS:
            raw = env.get(ENV_PREFIX + key.upper())
            if raw is not None:
                config[key] = _coerce(key, raw, DEFAULTS[key])
                sources[key] = "env"

        for key, value in (overrides or {}).items():
            if value is None:
                continue
            if key not in DEFAULTS:
                raise ConfigError(key, "неизвестный параметр")
            config[key] = _coerce(key, value, DEFAULTS[key])
            sources[key] = "flag"

        self._config = config
        self._sources = sources
        return self

    @staticmethod
    def _read_file(path) -> dict:
        """Прочитать YAML-файл конфигурации."""
        try:
            with open(path, encoding="utf-8") as fh:
                data = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise ConfigError("config", str(exc)) from exc
        except yaml.YAMLError as exc:
            raise ConfigError("config", f"битый YAML: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(
                "config", "ожидается отображение ключ: значение"
            )
        unknown = sorted(set(data) - set(DEFAULTS))
        if unknown:
            raise ConfigError(
                unknown[0], "неизвестный параметр в файле"
            )
        return data

    def get(self, key: str, default=None):
        """Получить значение параметра.

        Args:
            key: Ключ конфигурации.
            default: Значение по умолчанию.

        Returns:
            Значение параметра или default.
        """
        return self._config.get(key, default)

    def source(self, key: str) -> str:
        """Откуда взято значение: default/file/env/flag."""
        return self._sources.get(key, "default")

    def resolved(self) -> dict:
        """Полная разрешённая конфигурация (для манифеста).

        Токен доступа маскируется.
        """
        resolved = dict(sorted(self._config.items()))
        if resolved.get("gateway_token"):
            resolved["gateway_token"] = "***"
        return resolved

    def reload(self) -> None:
        """Сбросить к значениям по умолчанию."""
        self._config = dict(DEFAULTS)
        self._sources = {k: "default" for k in DEFAULTS}
