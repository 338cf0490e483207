"""Метрики: nDCG@k на запрос, оценка прогона, сводные таблицы.

Усиление линейное (grade / log2(rank + 1)), как в
ndcg_cut trec_eval. Запросы без положительных оценок
в среднее не входят.
"""

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

from prettytable import PrettyTable

from inpars_hub.core.exceptions import EmptyInputError, MissingCellError
from inpars_hub.core.models import EvalResult, Qrels, Run
from inpars_hub.core.utils import round_half_away

_logger = logging.getLogger("inpars_hub.metrics")

AVG_ROW = "Avg"
SUBSET_AVG_ROW = "Avg subset"


def _dcg(gains: list[int]) -> float:
    return sum(g / math.log2(i + 2) for i, g in enumerate(gains))


def ndcg_at_k(
    ranking: list[str], grades: dict[str, int], k: int = 10
) -> float:
    """nDCG@k одного запроса.

    Args:
        ranking: doc_id в порядке ранжирования.
        grades: doc_id -> оценка (хотя бы одна > 0).
        k: Отсечение (>= 1).

    Returns:
        DCG / IDCG в [0, 1].

    Raises:
        ValueError: k < 1 или нет положительных оценок.
    """
    if k < 1:
        raise ValueError(f"k должно быть >= 1: {k}")
    ideal = sorted((g for g in grades.values() if g > 0), reverse=True)[:k]
    if not ideal:
        raise ValueError("У запроса нет положительных оценок")
    gains = [grades.get(doc_id, 0) for doc_id in ranking[:k]]
    value = _dcg(gains) / _dcg(ideal)
    return min(1.0, max(0.0, value))


def evaluate_run(run: Run, qrels: Qrels, k: int = 10) -> EvalResult:
    """Оценить прогон по nDCG@k.

    Оцениваются запросы из qrels с положительной оценкой;
    отсутствующие в прогоне получают 0, лишние запросы
    прогона игнорируются.

    Raises:
        EmptyInputError: Нечего оценивать.
    """
    per_query: dict[str, float] = {}
    for qid in qrels.judgments:
        if not qrels.has_positive(qid):
            continue
        per_query[qid] = ndcg_at_k(run.doc_ids(qid), qrels.grades(qid), k)
    if not per_query:
        raise EmptyInputError("нет запросов с положительными оценками")
    mean = math.fsum(per_query.values()) / len(per_query)
    _logger.info("nDCG@%d=%.4f over %d queries", k, mean, len(per_query))
    return EvalResult(
        per_query=per_query, mean=mean, judged_count=len(per_query)
    )


# ── Сводная таблица ──────────────────────────────────────


@dataclass
class ReportTable:
    """Таблица: строки датасетов и строки средних."""

    systems: list[str]
    rows: list[tuple[str, dict[str, float | None]]] = field(
        default_factory=list
    )
    average_rows: list[tuple[str, dict[str, float | None]]] = field(
        default_factory=list
    )

    def cell(self, row: str, system: str) -> float | None:
        for name, values in self.rows + self.average_rows:
            if name == row:
                return values.get(system)
        raise KeyError(row)


def _average(
    results: dict, datasets: list[str], system: str, strict: bool
) -> float | None:
    values = []
    for dataset in datasets:
        value = results.get(dataset, {}).get(system)
        if value is None:
            if strict:
                raise MissingCellError(dataset, system)
            return None
        values.append(value)
    return math.fsum(values) / len(values)


def aggregate_report(
    results: dict[str, dict[str, float | None]],
    subset: list[str] | None = None,
    strict: bool = True,
    subset_label: str = SUBSET_AVG_ROW,
) -> ReportTable:
    """Собрать таблицу по датасетам со строками средних.

    Args:
        results: датасет -> система -> значение.
        subset: Датасеты для второй строки среднего.
        strict: Отсутствующая ячейка -> ошибка; иначе
            среднее этой системы пустое.
        subset_label: Подпись второй строки среднего.

    Returns:
        ReportTable (средние в полной точности).

    Raises:
        EmptyInputError: Нет датасетов.
        MissingCellError: Пропуск в усредняемом наборе.
    """
    if not results:
        raise EmptyInputError("нет результатов для отчёта")
    systems: list[str] = []
    for per_system in results.values():
        for system in per_system:
            if system not in systems:
                systems.append(system)

    datasets = list(results)
    table = ReportTable(systems=systems)
    for dataset in datasets:
        table.rows.append(
            (dataset, {s: results[dataset].get(s) for s in systems})
        )
    table.average_rows.append(
        (AVG_ROW, {s: _average(results, datasets, s, strict) for s in systems})
    )
    if subset:
        for dataset in subset:
            if dataset not in results:
                raise MissingCellError(dataset, "*")
        table.average_rows.append(
            (
                subset_label,
                {s: _average(results, subset, s, strict) for s in systems},
            )
        )
    return table


def _fmt_cell(value: float | None) -> str:
    return "-" if value is None else round_half_away(value, 3)


def render_text(table: ReportTable) -> str:
    """Выровненная текстовая таблица (prettytable)."""
    pt = PrettyTable()
    pt.field_names = ["dataset", *table.systems]
    pt.align = "r"
    pt.align["dataset"] = "l"
    last = len(table.rows) - 1
    for i, (name, values) in enumerate(table.rows):
        pt.add_row(
            [name, *(_fmt_cell(values[s]) for s in table.systems)],
            divider=(i == last),
        )
    for name, values in table.average_rows:
        pt.add_row([name, *(_fmt_cell(values[s]) for s in table.systems)])
    return pt.get_string()


def render_csv(table: ReportTable) -> str:
    """CSV: dataset, затем по колонке на систему; средние в конце."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["dataset", *table.systems])
    for name, values in table.rows + table.average_rows:
        writer.writerow([name, *(_fmt_cell(values[s]) for s in table.systems)])
    return buffer.getvalue()


# ── Опубликованные результаты ────────────────────────────

PUBLISHED_CSV = (
    Path(__file__).resolve().parents[1] / "resources" / "published_ndcg10.csv"
)

PROMPTAGATOR_AVG_ROW = "Avg PrGator"

# датасеты, на которых отчитывается Promptagator
PROMPTAGATOR_SUBSET = [
    "TREC-Covid",
    "FiQA",
    "DBPedia",
    "SciDocs",
    "SciFact",
    "NFCorpus",
    "HotpotQA",
    "FEVER",
    "Climate-FEVER",
    "ArguAna",
    "Touche",
]


def load_published(path=PUBLISHED_CSV) -> dict[str, dict[str, float | None]]:
    """Загрузить опубликованные nDCG@10 ("-" -> None)."""
    results: dict[str, dict[str, float | None]] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            dataset = row.pop("dataset")
            results[dataset] = {
                system: None if value == "-" else float(value)
                for system, value in row.items()
            }
    return results
