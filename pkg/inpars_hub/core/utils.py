"""Вспомогательные функции: генераторы случайных чисел, хеши, округление."""

import hashlib
from decimal import ROUND_HALF_UP, Decimal

import numpy as np

# ── Случайные числа ──────────────────────────────────────


def _label_key(label) -> int:
    """Стабильный 32-битный ключ для метки подпотока."""
    digest = hashlib.sha256(str(label).encode("utf-8"))
    return int(digest.hexdigest()[:8], 16)


def derive_rng(seed: int, *labels) -> np.random.Generator:
    """Получить именованный подпоток PCG64 от корневого seed.

    Каждая стадия (документы, негативы, батчи) берёт свой
    подпоток, поэтому стадии воспроизводимы независимо.

    Args:
        seed: Корневой seed запуска (>= 0).
        labels: Назначение подпотока, например
            ("negatives", doc_id).

    Returns:
        Генератор numpy, детерминированный для (seed, labels).
    """
    spawn_key = tuple(_label_key(lb) for lb in labels)
    seq = np.random.SeedSequence(
        entropy=int(seed), spawn_key=spawn_key
    )
    return np.random.Generator(np.random.PCG64(seq))


# ── Хеши ─────────────────────────────────────────────────


def text_hash(text: str) -> str:
    """SHA-256 текста (ключ кеша оценок)."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


# ── Форматирование ───────────────────────────────────────


def round_half_away(value: float, places: int = 3) -> str:
    """Округлить «от нуля» и вернуть строку.

    Десятичное представление берётся из repr(value),
    чтобы 0.4245 округлялось до 0.425.

    Args:
        value: Число.
        places: Знаков после запятой.

    Returns:
        Строка вида '0.424'.
    """
    quantum = Decimal(1).scaleb(-places)
    rounded = Decimal(repr(float(value))).quantize(
        quantum, rounding=ROUND_HALF_UP
    )
    return f"{rounded:.{places}f}"
