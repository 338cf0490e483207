"""Few-shot промпты: шаблоны, рендеринг, разбор генерации.

Файл шаблона — UTF-8 текст из четырёх секций, разделённых
строками ``---``: заголовок / блок примера / целевой блок /
стоп-последовательность. Перевод строки перед разделителем
к секции не относится, поэтому завершающий ``\\n`` блока
задаётся пустой строкой.

Плейсхолдеры: {i}, {document}, {good_query}, {bad_query}
(в целевом блоке — только {i} и {document}).
"""

import json
import logging
import string
from dataclasses import dataclass
from pathlib import Path

from inpars_hub.core.exceptions import (
    DataFormatError,
    DegenerateGenerationError,
    TemplateError,
)
from inpars_hub.core.models import Document, FewShotExample

_logger = logging.getLogger("inpars_hub.prompting")

TEMPLATES_DIR = Path(__file__).resolve().parents[1] / "resources" / "templates"
DEFAULT_MAX_DOC_CHARS = 1024
DEFAULT_TEMPLATE = "gbq"
SEPARATOR = "---"

_EXAMPLE_FIELDS = {"i", "document", "good_query", "bad_query"}
_TARGET_FIELDS = {"i", "document"}


def _field_names(block: str) -> list[str]:
    try:
        return [
            name
            for _, name, _, _ in string.Formatter().parse(block)
            if name is not None
        ]
    except ValueError as exc:
        raise TemplateError(f"некорректные фигурные скобки: {exc}") from exc


@dataclass(frozen=True)
class PromptTemplate:
    """Шаблон few-shot промпта.

    Целевой блок обязан заканчиваться литералом
    (например "Good Question:") — с этого места модель
    продолжает текст запросом.
    """

    name: str
    header: str
    example_block: str
    target_block: str
    stop: str

    def __post_init__(self) -> None:
        if not self.stop:
            raise TemplateError("пустая стоп-последовательность")
        unknown = set(_field_names(self.example_block)) - _EXAMPLE_FIELDS
        if unknown:
            raise TemplateError(
                f"неизвестные плейсхолдеры в блоке примера: {sorted(unknown)}"
            )
        unknown = set(_field_names(self.target_block)) - _TARGET_FIELDS
        if unknown:
            raise TemplateError(
                f"неизвестные плейсхолдеры в целевом блоке: {sorted(unknown)}"
            )
        if _field_names(self.header):
            raise TemplateError("в заголовке не бывает плейсхолдеров")
        parsed = list(string.Formatter().parse(self.target_block))
        if not parsed or parsed[-1][1] is not None or not parsed[-1][0]:
            raise TemplateError(
                "целевой блок должен заканчиваться литералом"
            )

    @property
    def uses_bad_query(self) -> bool:
        return "bad_query" in _field_names(self.example_block)

    @property
    def cue(self) -> str:
        """Хвостовой литерал целевого блока."""
        return list(string.Formatter().parse(self.target_block))[-1][0]

    def document_prefix(self, block: str, i: int) -> str:
        """Текст блока до {document} с подставленным номером i."""
        prefix = []
        for literal, field, _, _ in string.Formatter().parse(block):
            prefix.append(literal)
            if field == "document":
                break
            if field == "i":
                prefix.append(str(i))
        return "".join(prefix)


def parse_template(text: str, name: str = "custom") -> PromptTemplate:
    """Разобрать текст шаблона на четыре секции.

    Raises:
        TemplateError: Число секций не равно четырём.
    """
    sections: list[str] = []
    current: list[str] = []
    for line in text.splitlines(keepends=True):
        if line.rstrip("\r\n") == SEPARATOR:
            sections.append("".join(current))
            current = []
        else:
            current.append(line)
    sections.append("".join(current))
    if len(sections) != 4:
        raise TemplateError(
            f"ожидается 4 секции через '{SEPARATOR}', получено {len(sections)}"
        )
    header, example, target, stop = (
        s[:-1] if s.endswith("\n") else s for s in sections
    )
    return PromptTemplate(
        name=name,
        header=header,
        example_block=example,
        target_block=target,
        stop=stop,
    )


def load_template(name_or_path: str) -> PromptTemplate:
    """Загрузить шаблон по имени из комплекта или по пути.

    Raises:
        TemplateError: Шаблон не найден или некорректен.
    """
    bundled = TEMPLATES_DIR / f"{name_or_path}.txt"
    path = bundled if bundled.exists() else Path(name_or_path)
    if not path.exists():
        available = ", ".join(available_templates())
        raise TemplateError(
            f"шаблон '{name_or_path}' не найден (доступны: {available})"
        )
    template = parse_template(path.read_text(encoding="utf-8"), path.stem)
    _logger.debug("Loaded template %s from %s", template.name, path)
    return template


def available_templates() -> list[str]:
    """Имена шаблонов, поставляемых с пакетом."""
    return sorted(p.stem for p in TEMPLATES_DIR.glob("*.txt"))


def load_few_shot(path) -> list[FewShotExample]:
    """Прочитать few-shot примеры (JSONL doc/good_query/bad_query?).

    Raises:
        DataFormatError: Битая строка или пустые поля.
    """
    examples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                examples.append(
                    FewShotExample(
                        document=record["doc"],
                        good_query=record["good_query"],
                        bad_query=record.get("bad_query"),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DataFormatError(path, lineno, str(exc)) from exc
    return examples


# ── Рендеринг ────────────────────────────────────────────


def truncate_text(text: str, max_chars: int) -> str:
    """Обрезать текст по границе слова.

    Текст не длиннее max_chars возвращается как есть.
    Длинный режется по последнему пробельному символу
    в пределах лимита, а при его отсутствии — жёстко.
    """
    if len(text) <= max_chars:
        return text
    cut = text[:max_chars]
    boundary = max(
        (i for i, ch in enumerate(cut) if ch.isspace()), default=0
    )
    if boundary > 0:
        return cut[:boundary].rstrip()
    return cut


def render_prompt(
    template: PromptTemplate,
    examples: list[FewShotExample],
    target: Document,
    max_doc_chars: int = DEFAULT_MAX_DOC_CHARS,
) -> str:
    """Собрать промпт: заголовок, примеры, целевой блок.

    Args:
        template: Шаблон.
        examples: Примеры (>= 1, в пайплайне 3).
        target: Документ, для которого нужен запрос.
        max_doc_chars: Лимит длины каждого документа.

    Returns:
        Промпт, заканчивающийся литералом целевого блока.

    Raises:
        ValueError: Нет примеров или max_doc_chars < 1.
        TemplateError: В шаблоне есть {bad_query}, а у
            примера его нет.
    """
    if not examples:
        raise ValueError("Нужен хотя бы один пример")
    if max_doc_chars < 1:
        raise ValueError(f"max_doc_chars должно быть >= 1: {max_doc_chars}")

    parts = [template.header]
    for i, example in enumerate(examples, start=1):
        if template.uses_bad_query and not example.bad_query:
            raise TemplateError(
                f"у примера {i} нет bad_query, а шаблон его требует"
            )
        parts.append(
            template.example_block.format(
                i=i,
                document=truncate_text(example.document, max_doc_chars),
                good_query=example.good_query,
                bad_query=example.bad_query or "",
            )
        )
    parts.append(
        template.target_block.format(
            i=len(examples) + 1,
            document=truncate_text(target.flat_text, max_doc_chars),
        )
    )
    return "".join(parts)


def parse_generation(raw: str, stop: str) -> str:
    """Выделить запрос из сырой генерации.

    Обрезает по первому вхождению стоп-последовательности
    или перевода строки (что раньше) и снимает пробелы.

    Raises:
        DegenerateGenerationError: Пустой результат.
    """
    end = len(raw)
    for marker in (stop, "\n"):
        if marker:
            pos = raw.find(marker)
            if pos != -1:
                end = min(end, pos)
    query = raw[:end].strip()
    if not query:
        raise DegenerateGenerationError(raw)
    return query
