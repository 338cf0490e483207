"""Декораторы: @log_stage для логирования стадий пайплайна.

Применяется к операциям pipeline.synth и pipeline.evaluation.
Не глотает исключения — пробрасывает, но фиксирует в лог.
"""

import functools
import logging
import time

_logger = logging.getLogger("inpars_hub.stages")


def log_stage(func=None, *, verbose=False):
    """Декоратор логирования стадий.

    Логирует на уровне INFO: имя стадии, результат
    и размер результата. При ошибке — ERROR с типом
    и текстом исключения.

    При verbose=True добавляет время выполнения.

    Использование::

        @log_stage
        def filter_v1(...): ...

        @log_stage(verbose=True)
        def filter_v2(...): ...
    """

    def decorator(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            started = time.perf_counter()
            try:
                result = fn(*args, **kwargs)
            except Exception as exc:
                parts = [
                    "STAGE",
                    f"name={fn.__name__}",
                    "result=ERROR",
                    f"error_type={type(exc).__name__}",
                    f"error_message='{exc}'",
                ]
                _logger.error(" ".join(parts))
                raise
            parts = [
                "STAGE",
                f"name={fn.__name__}",
                "result=OK",
            ]
            size = _result_size(result)
            if size is not None:
                parts.append(f"size={size}")
            if verbose:
                elapsed = time.perf_counter() - started
                parts.append(f"elapsed={elapsed:.3f}s")
            _logger.info(" ".join(parts))
            return result

        return wrapper

    if func is not None:
        return decorator(func)
    return decorator


def _result_size(result) -> int | None:
    """Размер результата для лога (если он измерим)."""
    if isinstance(result, tuple) and result:
        result = result[0]
    try:
        return len(result)
    except TypeError:
        return None
