"""Анализатор текста: токенизация, нижний регистр, стоп-слова, стемминг.

Токены — максимальные последовательности букв и цифр.
Порядок: токенизация -> lowercase -> стоп-слова -> Porter.
"""

import re
from dataclasses import dataclass
from functools import lru_cache

from nltk.stem.porter import PorterStemmer

# классический английский список стоп-слов Lucene
ENGLISH_STOPWORDS = frozenset(
    {
        "a", "an", "and", "are", "as", "at", "be", "but", "by",
        "for", "if", "in", "into", "is", "it", "no", "not", "of",
        "on", "or", "such", "that", "the", "their", "then", "there",
        "these", "they", "this", "to", "was", "will", "with",
    }
)

_TOKEN_RE = re.compile(r"[^\W_]+")
_stemmer = PorterStemmer()


@lru_cache(maxsize=200_000)
def _stem(token: str, lowercase: bool) -> str:
    return _stemmer.stem(token, to_lowercase=lowercase)


@dataclass(frozen=True)
class Analyzer:
    """Настройки анализа текста.

    Атрибуты:
        lowercase: приводить к нижнему регистру.
        stopwords: множество стоп-слов (пустое — без фильтра).
        stem: применять стеммер Портера.
    """

    lowercase: bool = True
    stopwords: frozenset = ENGLISH_STOPWORDS
    stem: bool = True

    @classmethod
    def default(cls) -> "Analyzer":
        """Анализатор по умолчанию (все три шага включены)."""
        return cls()

    @classmethod
    def plain(cls) -> "Analyzer":
        """Только нижний регистр: без стоп-слов и стемминга."""
        return cls(lowercase=True, stopwords=frozenset(), stem=False)

    @classmethod
    def from_flags(
        cls, lowercase: bool, stopwords: bool, stem: bool
    ) -> "Analyzer":
        """Собрать анализатор из булевых переключателей."""
        return cls(
            lowercase=lowercase,
            stopwords=ENGLISH_STOPWORDS if stopwords else frozenset(),
            stem=stem,
        )

    def to_dict(self) -> dict:
        return {
            "lowercase": self.lowercase,
            "stopwords": sorted(self.stopwords),
            "stem": self.stem,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Analyzer":
        return cls(
            lowercase=bool(data["lowercase"]),
            stopwords=frozenset(data["stopwords"]),
            stem=bool(data["stem"]),
        )

    def analyze(self, text: str) -> list[str]:
        """Разобрать текст в список термов."""
        return analyze(self, text)


def analyze(analyzer: Analyzer, text: str) -> list[str]:
    """Разобрать текст в список термов.

    Args:
        analyzer: Настройки анализа.
        text: Входной текст (пустой -> []).

    Returns:
        Термы в порядке появления.
    """
    tokens = _TOKEN_RE.findall(text)
    if analyzer.lowercase:
        tokens = [t.lower() for t in tokens]
    if analyzer.stopwords:
        tokens = [t for t in tokens if t not in analyzer.stopwords]
    if analyzer.stem:
        tokens = [_stem(t, analyzer.lowercase) for t in tokens]
    return tokens
