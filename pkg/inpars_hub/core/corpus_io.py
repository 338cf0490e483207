"""Чтение и запись файлов BEIR, TREC run и обучающего набора.

Форматы:
    корпус   — JSONL {"_id", "title"?, "text"};
    запросы  — JSONL {"_id", "text"};
    qrels    — TSV query-id, corpus-id, score (заголовок необязателен);
    run      — TREC, 6 колонок: qid Q0 docid rank score tag;
    trainset — TSV query, doc-text, true|false.

Везде UTF-8; невалидный UTF-8 — ошибка с номером строки.
"""

import json
import logging
from collections.abc import Iterable, Iterator
from pathlib import Path

from inpars_hub.core.exceptions import DataFormatError, DuplicateIdError
from inpars_hub.core.models import (
    Document,
    Label,
    Qrels,
    Query,
    Run,
    TrainExample,
)

_logger = logging.getLogger("inpars_hub.io")

QRELS_HEADER = "query-id\tcorpus-id\tscore"

# табуляции и переводы строк ломают TSV
_TSV_UNSAFE = str.maketrans({"\t": " ", "\n": " ", "\r": " "})


def _iter_lines(path) -> Iterator[tuple[int, str]]:
    """Строки файла с номерами (с 1), строгий UTF-8."""
    with open(path, "rb") as fh:
        for lineno, raw in enumerate(fh, start=1):
            try:
                line = raw.decode("utf-8")
            except UnicodeDecodeError as exc:
                raise DataFormatError(
                    path, lineno, f"невалидный UTF-8 ({exc.reason})"
                ) from exc
            yield lineno, line.rstrip("\r\n")


def _parse_json_line(path, lineno: int, line: str) -> dict:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DataFormatError(
            path, lineno, f"некорректный JSON ({exc.msg})"
        ) from exc
    if not isinstance(record, dict):
        raise DataFormatError(path, lineno, "ожидается JSON-объект")
    return record


def _required_str(path, lineno: int, record: dict, key: str) -> str:
    value = record.get(key)
    if value is None or value == "":
        raise DataFormatError(path, lineno, f"нет поля '{key}'")
    return str(value)


def _write_lines(path, lines: Iterable[str]) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in lines:
            fh.write(line + "\n")


# ── Корпус ───────────────────────────────────────────────


def load_corpus(path) -> Iterator[Document]:
    """Потоково прочитать корпус BEIR.

    Args:
        path: JSONL-файл корпуса.

    Yields:
        Документы в порядке файла.

    Raises:
        DataFormatError: Битая строка (с номером).
        DuplicateIdError: Повтор _id.
    """
    seen: set[str] = set()
    for lineno, line in _iter_lines(path):
        if not line.strip():
            continue
        record = _parse_json_line(path, lineno, line)
        doc_id = _required_str(path, lineno, record, "_id")
        if doc_id in seen:
            raise DuplicateIdError("документ", doc_id, path)
        seen.add(doc_id)
        text = record.get("text")
        if not isinstance(text, str):
            raise DataFormatError(path, lineno, "нет строкового поля 'text'")
        yield Document(
            id=doc_id,
            title=str(record.get("title") or ""),
            text=text,
        )


def load_corpus_map(path) -> dict[str, Document]:
    """Корпус как словарь doc_id -> Document."""
    corpus = {doc.id: doc for doc in load_corpus(path)}
    _logger.info("Loaded %d documents from %s", len(corpus), path)
    return corpus


def write_corpus(docs: Iterable[Document], path) -> None:
    """Записать корпус в JSONL BEIR."""
    _write_lines(
        path,
        (
            json.dumps(
                {"_id": d.id, "title": d.title, "text": d.text},
                ensure_ascii=False,
            )
            for d in docs
        ),
    )


# ── Запросы ──────────────────────────────────────────────


def load_queries(path) -> list[Query]:
    """Прочитать запросы BEIR (JSONL {"_id", "text"}).

    Raises:
        DataFormatError: Битая строка.
        DuplicateIdError: Повтор _id.
    """
    queries: list[Query] = []
    seen: set[str] = set()
    for lineno, line in _iter_lines(path):
        if not line.strip():
            continue
        record = _parse_json_line(path, lineno, line)
        qid = _required_str(path, lineno, record, "_id")
        if qid in seen:
            raise DuplicateIdError("запрос", qid, path)
        seen.add(qid)
        queries.append(Query(id=qid, text=str(record.get("text") or "")))
    _logger.info("Loaded %d queries from %s", len(queries), path)
    return queries


def write_queries(queries: Iterable[Query], path) -> None:
    """Записать запросы в JSONL BEIR."""
    _write_lines(
        path,
        (
            json.dumps({"_id": q.id, "text": q.text}, ensure_ascii=False)
            for q in queries
        ),
    )


# ── Qrels ────────────────────────────────────────────────


def _is_int(text: str) -> bool:
    try:
        int(text)
    except ValueError:
        return False
    return True


def load_qrels(path) -> Qrels:
    """Прочитать qrels BEIR (TSV из трёх колонок).

    Первая строка с нечисловой третьей колонкой
    считается заголовком.

    Raises:
        DataFormatError: Не три колонки, нецелая
            или отрицательная оценка.
        DuplicateIdError: Повтор пары (query, doc).
    """
    qrels = Qrels()
    first = True
    for lineno, line in _iter_lines(path):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise DataFormatError(
                path, lineno, f"ожидается 3 колонки, получено {len(parts)}"
            )
        qid, doc_id, grade_text = (p.strip() for p in parts)
        if first:
            first = False
            if not _is_int(grade_text):
                continue
        if not _is_int(grade_text):
            raise DataFormatError(
                path, lineno, f"оценка не целое число: {grade_text!r}"
            )
        grade = int(grade_text)
        if grade < 0:
            raise DataFormatError(
                path, lineno, f"отрицательная оценка: {grade}"
            )
        if doc_id in qrels.grades(qid):
            raise DuplicateIdError("пара qrels", f"{qid}/{doc_id}", path)
        qrels.add(qid, doc_id, grade)
    return qrels


def write_qrels(qrels: Qrels, path) -> None:
    """Записать qrels в TSV с заголовком BEIR."""
    lines = [QRELS_HEADER]
    for qid, grades in qrels.judgments.items():
        for doc_id, grade in grades.items():
            lines.append(f"{qid}\t{doc_id}\t{grade}")
    _write_lines(path, lines)


# ── TREC run ─────────────────────────────────────────────


def write_run(run: Run, tag: str, path) -> None:
    """Записать прогон в формате TREC.

    Каждая строка: ``qid Q0 docid rank score tag``,
    ранги с 1. Счёт печатается через repr(float),
    поэтому чтение восстанавливает его точно.
    Запросы с пустым списком строк не дают.

    Raises:
        ValueError: Нарушены инварианты прогона.
        OSError: Путь недоступен для записи.
    """
    run.validate()
    lines = []
    for qid, ranked in run.rankings.items():
        for rank, (doc_id, score) in enumerate(ranked, start=1):
            lines.append(
                f"{qid} Q0 {doc_id} {rank} {float(score)!r} {tag}"
            )
    _write_lines(path, lines)


def load_run(path) -> Run:
    """Прочитать прогон TREC.

    Raises:
        DataFormatError: Не шесть колонок, нечисловой
            ранг или счёт, повтор документа в запросе.
    """
    by_query: dict[str, list[tuple[int, str, float]]] = {}
    for lineno, line in _iter_lines(path):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 6:
            raise DataFormatError(
                path, lineno, f"ожидается 6 колонок, получено {len(parts)}"
            )
        qid, _q0, doc_id, rank_text, score_text, _tag = parts
        try:
            rank = int(rank_text)
            score = float(score_text)
        except ValueError as exc:
            raise DataFormatError(
                path, lineno, "ранг или счёт не число"
            ) from exc
        entries = by_query.setdefault(qid, [])
        if any(d == doc_id for _, d, _ in entries):
            raise DataFormatError(
                path, lineno, f"повтор документа '{doc_id}'"
            )
        entries.append((rank, doc_id, score))

    rankings = {
        qid: [(d, s) for _, d, s in sorted(entries, key=lambda e: e[0])]
        for qid, entries in by_query.items()
    }
    return Run(rankings=rankings)


# ── Обучающий набор ──────────────────────────────────────


def tsv_safe(text: str) -> str:
    """Заменить табуляции и переводы строк пробелами."""
    return text.translate(_TSV_UNSAFE)


def write_trainset(examples: Iterable[TrainExample], path) -> int:
    """Записать обучающий набор: ``query \\t doc-text \\t label``.

    Returns:
        Количество строк.
    """
    lines = [
        f"{tsv_safe(ex.query)}\t{tsv_safe(ex.doc_text)}\t{ex.label.value}"
        for ex in examples
    ]
    _write_lines(path, lines)
    return len(lines)


def load_trainset(path) -> list[TrainExample]:
    """Прочитать обучающий набор TSV.

    Raises:
        DataFormatError: Не три колонки или метка
            не из {true, false}.
    """
    examples = []
    for lineno, line in _iter_lines(path):
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise DataFormatError(
                path, lineno, f"ожидается 3 колонки, получено {len(parts)}"
            )
        query, doc_text, label_text = parts
        try:
            label = Label(label_text)
        except ValueError as exc:
            raise DataFormatError(
                path, lineno, f"неизвестная метка {label_text!r}"
            ) from exc
        examples.append(
            TrainExample(query=query, doc_text=doc_text, label=label)
        )
    return examples
