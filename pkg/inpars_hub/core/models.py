"""Модели данных: документы, запросы, qrels, прогоны, синтетические пары."""

import enum
import math
from dataclasses import asdict, dataclass, field

from inpars_hub.core.exceptions import ConfigError


def ranking_key(doc_id: str, score: float) -> tuple[float, str]:
    """Ключ сортировки: счёт по убыванию, затем doc_id по возрастанию."""
    return (-score, doc_id)


# ── Корпус и запросы ─────────────────────────────────────


@dataclass(frozen=True)
class Document:
    """Документ корпуса BEIR.

    Атрибуты:
        id: уникальный в пределах корпуса идентификатор.
        title: заголовок (может быть пустым).
        text: основной текст.
    """

    id: str
    title: str = ""
    text: str = ""

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("Идентификатор документа пуст")

    @property
    def flat_text(self) -> str:
        """Однополевое представление: title + " " + text."""
        if not self.title:
            return self.text
        return f"{self.title} {self.text}"


@dataclass(frozen=True)
class Query:
    """Тестовый запрос."""

    id: str
    text: str

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("Идентификатор запроса пуст")


@dataclass
class Qrels:
    """Оценки релевантности: query-id -> doc-id -> grade."""

    judgments: dict[str, dict[str, int]] = field(
        default_factory=dict
    )

    def add(self, query_id: str, doc_id: str, grade: int) -> None:
        """Добавить оценку. Дубликаты проверяет загрузчик."""
        if grade < 0:
            raise ValueError(
                f"Оценка не может быть отрицательной: {grade}"
            )
        self.judgments.setdefault(query_id, {})[doc_id] = grade

    def grades(self, query_id: str) -> dict[str, int]:
        """Оценки одного запроса (пустой словарь, если нет)."""
        return self.judgments.get(query_id, {})

    def has_positive(self, query_id: str) -> bool:
        """Есть ли у запроса хотя бы одна положительная оценка."""
        return any(g > 0 for g in self.grades(query_id).values())

    def __len__(self) -> int:
        return sum(len(d) for d in self.judgments.values())


@dataclass
class Run:
    """Ранжированные списки (doc_id, score) по запросам.

    Внутри запроса doc_id уникальны, список отсортирован
    по убыванию счёта, при равенстве — по doc_id.
    """

    rankings: dict[str, list[tuple[str, float]]] = field(
        default_factory=dict
    )

    @classmethod
    def from_scores(cls, scores: dict) -> "Run":
        """Построить прогон из {qid: {doc_id: score}} или пар.

        Args:
            scores: Для каждого запроса — словарь или
                итерируемое (doc_id, score).

        Returns:
            Прогон с детерминированной сортировкой.
        """
        rankings = {}
        for qid, items in scores.items():
            pairs = items.items() if isinstance(items, dict) else items
            ranked = sorted(
                ((d, float(s)) for d, s in pairs),
                key=lambda p: ranking_key(*p),
            )
            rankings[qid] = ranked
        return cls(rankings=rankings)

    def validate(self) -> None:
        """Проверить инварианты прогона.

        Raises:
            ValueError: Дубликат doc_id или нарушен порядок.
        """
        for qid, ranked in self.rankings.items():
            seen = set()
            for doc_id, _ in ranked:
                if doc_id in seen:
                    raise ValueError(
                        f"Запрос '{qid}': повторяющийся "
                        f"документ '{doc_id}'"
                    )
                seen.add(doc_id)
            keys = [ranking_key(d, s) for d, s in ranked]
            if keys != sorted(keys):
                raise ValueError(
                    f"Запрос '{qid}': список не отсортирован"
                )

    def doc_ids(self, query_id: str) -> list[str]:
        """Документы запроса в порядке ранжирования."""
        return [d for d, _ in self.rankings.get(query_id, [])]

    def __len__(self) -> int:
        return len(self.rankings)


# ── Генерация и обучающие данные ─────────────────────────


@dataclass(frozen=True)
class FewShotExample:
    """Пример для few-shot промпта."""

    document: str
    good_query: str
    bad_query: str | None = None

    def __post_init__(self) -> None:
        if not self.document or not self.good_query:
            raise ValueError(
                "В примере должны быть документ и запрос"
            )


@dataclass(frozen=True)
class GenerationResult:
    """Ответ генератора: текст и лог-вероятности токенов."""

    text: str
    token_logprobs: list[float] | None = None

    def __post_init__(self) -> None:
        for lp in self.token_logprobs or []:
            if not math.isfinite(lp) or lp > 0:
                raise ValueError(
                    f"Некорректная лог-вероятность: {lp}"
                )


@dataclass(frozen=True)
class SyntheticPair:
    """Пара (документ, сгенерированный запрос).

    Атрибуты:
        doc_id: документ-источник.
        query: текст запроса (не пустой).
        mean_logprob: лог-вероятность генерации
            (среднее или сумма, см. logprob_mode).
        score: внешняя оценка релевантности.
    """

    doc_id: str
    query: str
    mean_logprob: float | None = None
    score: float | None = None

    def __post_init__(self) -> None:
        if not self.query:
            raise ValueError(
                f"Пустой запрос для документа '{self.doc_id}'"
            )

    def to_dict(self) -> dict:
        """Сериализовать пару, опуская пустые поля."""
        data = {"doc_id": self.doc_id, "query": self.query}
        if self.mean_logprob is not None:
            data["mean_logprob"] = self.mean_logprob
        if self.score is not None:
            data["score"] = self.score
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "SyntheticPair":
        """Создать пару из словаря."""
        return cls(
            doc_id=data["doc_id"],
            query=data["query"],
            mean_logprob=data.get("mean_logprob"),
            score=data.get("score"),
        )


class Label(enum.Enum):
    """Метка обучающего примера (значение — токен в TSV)."""

    POSITIVE = "true"
    NEGATIVE = "false"


@dataclass(frozen=True)
class TrainExample:
    """Обучающий пример для реранкера.

    doc_id не попадает в TSV и после загрузки пуст.
    """

    query: str
    doc_text: str
    label: Label
    doc_id: str = ""


# ── Оценка ───────────────────────────────────────────────


@dataclass
class EvalResult:
    """Результат оценки прогона по nDCG@k."""

    per_query: dict[str, float]
    mean: float
    judged_count: int

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class RerankSpec:
    """Параметры переранжирования."""

    depth: int = 1000
    scorer_tag: str = "reranked"
    keep_bm25_scores: bool = False

    def __post_init__(self) -> None:
        if self.depth < 1:
            raise ValueError("Глубина переранжирования >= 1")


# ── Конфигурация пайплайна ───────────────────────────────


@dataclass(frozen=True)
class PipelineConfig:
    """Параметры генеративной части пайплайна.

    Значения по умолчанию: 100k документов, top-10k пар,
    пул негативов из 1000 документов BM25, 3 примера
    в промпте, батчи 64+64.
    """

    sample_size: int = 100_000
    keep_top: int = 10_000
    negative_pool_depth: int = 1000
    few_shot_count: int = 3
    seed: int = 0
    batch_pos: int = 64
    batch_neg: int = 64
    logprob_mode: str = "mean"

    def validate(self) -> "PipelineConfig":
        """Проверить значения.

        Raises:
            ConfigError: Неположительное значение,
                keep_top > sample_size или неизвестный режим.
        """
        for name in (
            "sample_size",
            "keep_top",
            "negative_pool_depth",
            "few_shot_count",
            "batch_pos",
            "batch_neg",
        ):
            if getattr(self, name) < 1:
                raise ConfigError(name, "должно быть >= 1")
        if self.keep_top > self.sample_size:
            raise ConfigError(
                "keep_top", "не может превышать sample_size"
            )
        if self.logprob_mode not in ("mean", "sum"):
            raise ConfigError(
                "logprob_mode", "допустимо: mean, sum"
            )
        return self

    @classmethod
    def from_settings(cls, settings) -> "PipelineConfig":
        """Собрать конфигурацию из SettingsLoader."""
        return cls(
            sample_size=settings.get("sample_size"),
            keep_top=settings.get("keep_top"),
            negative_pool_depth=settings.get("negative_pool_depth"),
            few_shot_count=settings.get("few_shot_count"),
            seed=settings.get("seed"),
            batch_pos=settings.get("batch_pos"),
            batch_neg=settings.get("batch_neg"),
            logprob_mode=settings.get("logprob_mode"),
        ).validate()
