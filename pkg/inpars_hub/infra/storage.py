"""Хранилище артефактов: JSON, JSONL, контрольные суммы, манифест.

Атомарная запись: временный файл -> rename.
"""

import hashlib
import json
import os
import tempfile
from pathlib import Path

MANIFEST_NAME = "manifest.json"


def dumps(data) -> str:
    """Детерминированная сериализация JSON."""
    return json.dumps(
        data, ensure_ascii=False, indent=2, sort_keys=True
    )


def atomic_write_text(path, text: str) -> None:
    """Атомарная запись текста: tmp -> rename.

    На Windows os.replace может не быть полностью
    атомарным, но это лучшее доступное решение.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(
        suffix=".tmp", dir=path.parent
    )
    try:
        with os.fdopen(
            fd, "w", encoding="utf-8", newline="\n"
        ) as tmp:
            tmp.write(text)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise


def write_json(path, data) -> None:
    """Записать JSON атомарно."""
    atomic_write_text(path, dumps(data) + "\n")


def read_json(path, default=None):
    """Прочитать JSON-файл (default, если файла нет)."""
    if not os.path.exists(path):
        return default
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


# ── JSONL ────────────────────────────────────────────────


def write_jsonl(path, records) -> int:
    """Переписать JSONL-файл целиком (атомарно).

    Returns:
        Количество записей.
    """
    lines = [
        json.dumps(r, ensure_ascii=False, sort_keys=True)
        for r in records
    ]
    text = "".join(line + "\n" for line in lines)
    atomic_write_text(path, text)
    return len(lines)


def read_jsonl(path) -> list[dict]:
    """Прочитать JSONL; пустой список, если файла нет.

    Обрезанная последняя строка (прерванная запись
    контрольной точки) пропускается.
    """
    if not os.path.exists(path):
        return []
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError:
                continue
    return records


class JsonlAppender:
    """Дозапись JSONL по одной записи с flush.

    Используется для контрольных точек генерации
    и кеша оценок.
    """

    def __init__(self, path):
        self._path = Path(path)
        self._path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self._path, "a", encoding="utf-8")

    def append(self, record: dict) -> None:
        """Дописать запись и сбросить буфер."""
        self._fh.write(
            json.dumps(record, ensure_ascii=False, sort_keys=True)
            + "\n"
        )
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> "JsonlAppender":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


# ── Контрольные суммы и манифест ─────────────────────────


def file_checksum(path) -> str:
    """SHA-256 содержимого файла."""
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def load_manifest(out_dir) -> dict:
    """Загрузить манифест запуска (пустой, если нет)."""
    data = read_json(Path(out_dir) / MANIFEST_NAME, default={})
    return data if isinstance(data, dict) else {}


def save_manifest(out_dir, manifest: dict) -> None:
    """Сохранить манифест запуска."""
    write_json(Path(out_dir) / MANIFEST_NAME, manifest)


def record_stage(
    manifest: dict, stage: str, out_dir, outputs: list[str]
) -> None:
    """Записать контрольные суммы выходов стадии.

    Args:
        manifest: Манифест (изменяется на месте).
        stage: Имя стадии.
        out_dir: Выходная директория.
        outputs: Имена файлов относительно out_dir.
    """
    manifest.setdefault("stages", {})[stage] = {
        name: file_checksum(Path(out_dir) / name)
        for name in outputs
    }


def stage_is_current(
    manifest: dict, stage: str, out_dir, outputs: list[str]
) -> bool:
    """Все выходы стадии существуют и совпадают с манифестом."""
    recorded = manifest.get("stages", {}).get(stage)
    if not recorded or set(recorded) != set(outputs):
        return False
    for name in outputs:
        path = Path(out_dir) / name
        if not path.exists():
            return False
        if file_checksum(path) != recorded[name]:
            return False
    return True
