"""Настройка логирования: формат, уровень, ротация файлов.

Формат: строковый (человекочитаемый).
Ротация: по размеру файла (1 МБ, до 5 бэкапов).
Диагностика дублируется в stderr — stdout остаётся
только для данных.

Пример записи:
    INFO 2026-10-09T12:05:22 STAGE name=filter_v2 result=OK size=10000
"""

import logging
import os
import sys
from logging.handlers import RotatingFileHandler

from inpars_hub.infra.settings import SettingsLoader

_FORMAT = "%(levelname)s %(asctime)s %(message)s"
_DATEFMT = "%Y-%m-%dT%H:%M:%S"
LOG_FILE = "pipeline.log"


def setup_logging(
    level: str | None = None, quiet: bool = False, out_dir=None
) -> None:
    """Настроить логирование приложения.

    Создаёт директорию логов, файловый обработчик
    с ротацией и обработчик stderr. Повторный вызов
    не добавляет обработчики, но обновляет уровень;
    если сменилась директория логов, файловый
    обработчик пересоздаётся.

    Args:
        level: Уровень (по умолчанию из SettingsLoader).
        quiet: В stderr только ошибки.
        out_dir: Выходная директория; логи пишутся в
            <out_dir>/logs, если log_dir не задан явно.
    """
    settings = SettingsLoader()
    log_dir = settings.get("log_dir") or os.path.join(out_dir or ".", "logs")
    log_path = os.path.abspath(os.path.join(log_dir, LOG_FILE))
    log_level = level or settings.get("log_level", "INFO")
    numeric = getattr(logging, str(log_level).upper(), logging.INFO)

    logger = logging.getLogger("inpars_hub")
    logger.setLevel(logging.DEBUG)
    formatter = logging.Formatter(_FORMAT, datefmt=_DATEFMT)
    stderr_level = logging.ERROR if quiet else max(numeric, logging.INFO)

    file_handler = next(
        (h for h in logger.handlers if isinstance(h, RotatingFileHandler)), None
    )
    if file_handler is not None and file_handler.baseFilename != log_path:
        logger.removeHandler(file_handler)
        file_handler.close()
        file_handler = None
    if file_handler is None:
        os.makedirs(log_dir, exist_ok=True)
        file_handler = RotatingFileHandler(
            log_path,
            maxBytes=1_000_000,
            backupCount=5,
            encoding="utf-8",
        )
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)
    file_handler.setLevel(numeric)

    stream_handler = next(
        (h for h in logger.handlers if not isinstance(h, RotatingFileHandler)),
        None,
    )
    if stream_handler is None:
        stream_handler = logging.StreamHandler(sys.stderr)
        stream_handler.setFormatter(formatter)
        logger.addHandler(stream_handler)
    stream_handler.setLevel(stderr_level)
