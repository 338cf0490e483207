"""Пользовательские исключения InPars Hub."""


class InParsError(Exception):
    """Базовое исключение приложения."""


class DataFormatError(InParsError):
    """Некорректная строка во входном файле.

    Выбрасывается загрузчиками corpus_io (JSONL, TSV,
    TREC run) и при невалидном UTF-8.
    """

    def __init__(self, path, line: int, reason: str):
        self.path = str(path)
        self.line = line
        self.reason = reason
        super().__init__(
            f"{self.path}, строка {line}: {reason}"
        )


class DuplicateIdError(InParsError):
    """Повторяющийся идентификатор (документ, запрос, пара qrels)."""

    def __init__(self, kind: str, item_id: str, path=None):
        self.kind = kind
        self.item_id = item_id
        self.path = str(path) if path is not None else None
        where = f" в {self.path}" if self.path else ""
        super().__init__(
            f"Повторяющийся {kind} '{item_id}'{where}"
        )


class IndexFormatError(InParsError):
    """Файл индекса повреждён или имеет другую версию формата."""

    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(f"Ошибка формата индекса: {reason}")


class GatewayTransportError(InParsError):
    """Сетевая ошибка или таймаут после всех повторов.

    Выбрасывается HttpGateway, когда исчерпаны попытки.
    """

    def __init__(self, reason: str, attempts: int = 1):
        self.reason = reason
        self.attempts = attempts
        super().__init__(
            "Ошибка при обращении к модельному сервису "
            f"(попыток: {attempts}): {reason}"
        )


class GatewayServiceError(InParsError):
    """Сервис ответил неуспешным HTTP-статусом."""

    def __init__(self, status: int, body_excerpt: str):
        self.status = status
        self.body_excerpt = body_excerpt[:200]
        super().__init__(
            f"Модельный сервис вернул статус {status}: "
            f"{self.body_excerpt}"
        )


class DegenerateGenerationError(InParsError):
    """Генерация пуста после обрезки — пара отбрасывается."""

    def __init__(self, raw: str):
        self.raw = raw
        super().__init__(
            f"Вырожденная генерация: {raw[:50]!r}"
        )


class MissingLogprobError(InParsError):
    """У пары нет лог-вероятностей для фильтра v1."""

    def __init__(self, doc_id: str):
        self.doc_id = doc_id
        super().__init__(
            f"Пара для документа '{doc_id}' не содержит "
            "лог-вероятностей"
        )


class EmptyInputError(InParsError):
    """Пустой вход там, где нужен хотя бы один элемент."""

    def __init__(self, what: str):
        self.what = what
        super().__init__(f"Пустой вход: {what}")


class MissingCellError(InParsError):
    """В усредняемом наборе отсутствует значение."""

    def __init__(self, dataset: str, system: str):
        self.dataset = dataset
        self.system = system
        super().__init__(
            f"Нет значения для датасета '{dataset}' "
            f"и системы '{system}'"
        )


class UnknownDocumentError(InParsError):
    """Идентификатор документа не найден в корпусе."""

    def __init__(self, doc_id: str):
        self.doc_id = doc_id
        super().__init__(
            f"Документ '{doc_id}' не найден в корпусе"
        )


class TemplateError(InParsError):
    """Шаблон промпта некорректен или не заполнен."""

    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(f"Ошибка шаблона: {reason}")


class ConfigError(InParsError):
    """Некорректное значение конфигурации."""

    def __init__(self, key: str, reason: str):
        self.key = key
        self.reason = reason
        super().__init__(
            f"Ошибка конфигурации '{key}': {reason}"
        )
