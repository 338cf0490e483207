"""Клиенты модельного шлюза: HTTP-сервис и заглушки.

Абстрактный базовый класс BaseGateway с методами
generate() и score(). Реализации:

    HttpGateway        — JSON поверх HTTP с повторами;
    StubGateway        — детерминированная заглушка;
    QrelsOracleGateway — счёт = оценка из qrels (или минус она);
    CallableGateway    — счёт из произвольной функции.
"""

import logging
import math
import time
from abc import ABC, abstractmethod
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor

import requests

from inpars_hub.core.analyzer import Analyzer, analyze
from inpars_hub.core.exceptions import (
    GatewayServiceError,
    GatewayTransportError,
)
from inpars_hub.core.models import Document, GenerationResult, Qrels, Query
from inpars_hub.core.prompting import (
    DEFAULT_TEMPLATE,
    PromptTemplate,
    load_template,
)
from inpars_hub.gateway.config import GatewayConfig

_logger = logging.getLogger("inpars_hub.gateway")

STUB_MAX_TERMS = 8
STUB_LOGPROB = -0.1


class BaseGateway(ABC):
    """Единый интерфейс генерации и оценки релевантности."""

    parallelism: int = 1

    @property
    @abstractmethod
    def name(self) -> str:
        """Имя реализации (пишется в манифест)."""

    @property
    def identity(self) -> str:
        """Идентификатор модели: ключ кеша оценок и запись манифеста."""
        return self.name

    @abstractmethod
    def generate(
        self, prompt: str, max_new_tokens: int, stop: str
    ) -> GenerationResult:
        """Сгенерировать продолжение промпта (жадно).

        Raises:
            GatewayTransportError: Сеть/таймаут после повторов.
            GatewayServiceError: Неуспешный статус.
        """

    @abstractmethod
    def score(self, query: str, document: str) -> float:
        """Оценить релевантность пары (больше — релевантнее)."""

    def score_many(self, pairs: list[tuple[str, str]]) -> list[float]:
        """Оценить пары; порядок результата совпадает с входом."""
        if self.parallelism <= 1 or len(pairs) <= 1:
            return [self.score(q, d) for q, d in pairs]
        with ThreadPoolExecutor(max_workers=self.parallelism) as pool:
            return list(pool.map(lambda p: self.score(*p), pairs))


def _check_generate_args(prompt: str, max_new_tokens: int) -> None:
    if not prompt:
        raise ValueError("Пустой промпт")
    if max_new_tokens < 1:
        raise ValueError(f"max_new_tokens должно быть >= 1: {max_new_tokens}")


def _check_score_args(query: str, document: str) -> None:
    if not query or not document:
        raise ValueError("Запрос и документ не должны быть пустыми")


# ── HTTP ─────────────────────────────────────────────────


class HttpGateway(BaseGateway):
    """Клиент внешнего модельного сервиса.

    Контракт:
        POST /v1/generate {"prompt", "max_new_tokens", "stop", "greedy": true}
            -> {"text", "token_logprobs"?}
        POST /v1/score {"pairs": [{"query", "document"}, ...]}
            -> {"scores": [float, ...]}

    Сетевые ошибки, таймауты, 429 и 5xx повторяются
    до config.max_attempts раз с задержкой d * 2**i.
    Остальные неуспешные статусы — сразу GatewayServiceError.
    """

    def __init__(
        self,
        config: GatewayConfig,
        sleep: Callable[[float], None] = time.sleep,
    ):
        """Инициализировать клиент.

        Args:
            config: Настройки шлюза.
            sleep: Функция ожидания (подменяется в тестах).
        """
        self.config = config
        self.parallelism = config.parallelism
        self._sleep = sleep

    @property
    def name(self) -> str:
        return "http"

    @property
    def identity(self) -> str:
        return f"http:{self.config.base_url}"

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.config.token:
            headers["Authorization"] = f"Bearer {self.config.token}"
        return headers

    def _post(self, path: str, payload: dict) -> dict:
        """POST с повторами временных сбоев."""
        url = f"{self.config.base_url}{path}"
        attempts = self.config.max_attempts
        for attempt in range(attempts):
            last = attempt == attempts - 1
            try:
                resp = requests.post(
                    url,
                    json=payload,
                    headers=self._headers(),
                    timeout=self.config.timeout,
                )
            except (
                requests.exceptions.ConnectionError,
                requests.exceptions.Timeout,
            ) as exc:
                if last:
                    raise GatewayTransportError(
                        f"{url}: {exc}", attempts=attempts
                    ) from exc
                self._backoff(attempt, f"{type(exc).__name__}")
                continue
            except requests.exceptions.RequestException as exc:
                raise GatewayTransportError(f"{url}: {exc}", attempt + 1) from exc

            status = resp.status_code
            if status == 429 or status >= 500:
                if last:
                    raise GatewayServiceError(status, resp.text)
                self._backoff(attempt, f"status {status}")
                continue
            if not 200 <= status < 300:
                raise GatewayServiceError(status, resp.text)
            try:
                return resp.json()
            except ValueError as exc:
                raise GatewayServiceError(
                    status, f"ответ не JSON: {resp.text}"
                ) from exc
        raise GatewayTransportError(url, attempts)  # pragma: no cover

    def _backoff(self, attempt: int, reason: str) -> None:
        delay = self.config.backoff * (2**attempt)
        _logger.warning(
            "Gateway attempt %d failed (%s), retrying in %.2fs",
            attempt + 1,
            reason,
            delay,
        )
        self._sleep(delay)

    def generate(
        self, prompt: str, max_new_tokens: int, stop: str
    ) -> GenerationResult:
        _check_generate_args(prompt, max_new_tokens)
        data = self._post(
            GatewayConfig.GENERATE_PATH,
            {
                "prompt": prompt,
                "max_new_tokens": max_new_tokens,
                "stop": stop,
                "greedy": True,
            },
        )
        text = data.get("text") if isinstance(data, dict) else None
        if not isinstance(text, str):
            raise GatewayServiceError(200, f"нет поля 'text': {data!r}")
        logprobs = data.get("token_logprobs")
        try:
            return GenerationResult(
                text=text,
                token_logprobs=(
                    [float(x) for x in logprobs] if logprobs is not None else None
                ),
            )
        except (TypeError, ValueError) as exc:
            raise GatewayServiceError(
                200, f"некорректные token_logprobs: {exc}"
            ) from exc

    def _score_batch(self, batch: list[tuple[str, str]]) -> list[float]:
        data = self._post(
            GatewayConfig.SCORE_PATH,
            {"pairs": [{"query": q, "document": d} for q, d in batch]},
        )
        scores = data.get("scores") if isinstance(data, dict) else None
        if not isinstance(scores, list) or len(scores) != len(batch):
            raise GatewayServiceError(
                200, f"ожидалось {len(batch)} оценок: {data!r}"
            )
        result = [float(s) for s in scores]
        if not all(math.isfinite(s) for s in result):
            raise GatewayServiceError(200, "неконечная оценка")
        return result

    def score(self, query: str, document: str) -> float:
        _check_score_args(query, document)
        return self._score_batch([(query, document)])[0]

    def score_many(self, pairs: list[tuple[str, str]]) -> list[float]:
        """Оценить пары пакетами по score_batch_size, до P параллельно."""
        for q, d in pairs:
            _check_score_args(q, d)
        size = self.config.score_batch_size
        batches = [pairs[i : i + size] for i in range(0, len(pairs), size)]
        if self.parallelism <= 1 or len(batches) <= 1:
            chunks = [self._score_batch(b) for b in batches]
        else:
            with ThreadPoolExecutor(max_workers=self.parallelism) as pool:
                chunks = list(pool.map(self._score_batch, batches))
        return [s for chunk in chunks for s in chunk]


# ── Заглушки ─────────────────────────────────────────────


class StubGateway(BaseGateway):
    """Детерминированная заглушка без сети.

    generate: первые min(8, n) термов целевого документа
    (текст между заголовком целевого блока шаблона и его
    хвостовым литералом), лог-вероятность -0.1 на токен.
    Блоки ищутся по порядку номеров, поэтому маркеры внутри
    текста документа не сбивают разбор.
    score: коэффициент Жаккара по множествам термов.
    Анализ — только нижний регистр.
    """

    def __init__(
        self,
        template: PromptTemplate | None = None,
        analyzer: Analyzer | None = None,
        parallelism: int = 1,
    ):
        self.template = template or load_template(DEFAULT_TEMPLATE)
        self.analyzer = analyzer or Analyzer.plain()
        self.parallelism = parallelism

    @property
    def name(self) -> str:
        return "stub"

    def _target_document(self, prompt: str) -> str:
        tpl = self.template
        pos = len(tpl.header) if prompt.startswith(tpl.header) else 0
        start = None
        i = 1
        while True:
            head = tpl.document_prefix(tpl.target_block, i)
            found = prompt.find(head, pos)
            if found != -1:
                start = found + len(head)
            head = tpl.document_prefix(tpl.example_block, i)
            found = prompt.find(head, pos)
            if not head or found == -1:
                break
            pos = found + len(head)
            i += 1
        if start is None:
            return ""
        end = len(prompt)
        if prompt.endswith(tpl.cue):
            end -= len(tpl.cue)
        return prompt[start:end]

    def generate(
        self, prompt: str, max_new_tokens: int, stop: str
    ) -> GenerationResult:
        _check_generate_args(prompt, max_new_tokens)
        terms = analyze(self.analyzer, self._target_document(prompt))
        chosen = terms[:STUB_MAX_TERMS]
        return GenerationResult(
            text=" ".join(chosen),
            token_logprobs=[STUB_LOGPROB] * len(chosen),
        )

    def score(self, query: str, document: str) -> float:
        _check_score_args(query, document)
        q = set(analyze(self.analyzer, query))
        d = set(analyze(self.analyzer, document))
        union = q | d
        if not union:
            return 0.0
        return len(q & d) / len(union)


class QrelsOracleGateway(BaseGateway):
    """Оракул: счёт пары — оценка из qrels.

    Запрос и документ узнаются по тексту (текст запроса
    и flat_text документа). negate=True даёт анти-оракул.
    Неизвестные пары получают 0.
    """

    def __init__(
        self,
        qrels: Qrels,
        queries: list[Query],
        corpus: dict[str, Document],
        negate: bool = False,
    ):
        self._qrels = qrels
        self._qid_by_text = {q.text: q.id for q in queries}
        self._doc_by_text = {d.flat_text: d.id for d in corpus.values()}
        self._sign = -1.0 if negate else 1.0

    @property
    def name(self) -> str:
        return "anti-oracle" if self._sign < 0 else "oracle"

    def generate(
        self, prompt: str, max_new_tokens: int, stop: str
    ) -> GenerationResult:
        raise NotImplementedError("Оракул умеет только оценивать пары")

    def score(self, query: str, document: str) -> float:
        qid = self._qid_by_text.get(query)
        doc_id = self._doc_by_text.get(document)
        if qid is None or doc_id is None:
            return 0.0
        return self._sign * float(self._qrels.grades(qid).get(doc_id, 0))


class CallableGateway(BaseGateway):
    """Оценка пары произвольной функцией score_fn(query, document)."""

    def __init__(
        self,
        score_fn: Callable[[str, str], float],
        generator: BaseGateway | None = None,
        name: str = "callable",
    ):
        self._score_fn = score_fn
        self._generator = generator
        self._name = name

    @property
    def name(self) -> str:
        return self._name

    def generate(
        self, prompt: str, max_new_tokens: int, stop: str
    ) -> GenerationResult:
        if self._generator is None:
            raise NotImplementedError("Генератор не задан")
        return self._generator.generate(prompt, max_new_tokens, stop)

    def score(self, query: str, document: str) -> float:
        return float(self._score_fn(query, document))


def make_gateway(
    kind: str, config: GatewayConfig, template: PromptTemplate | None = None
) -> BaseGateway:
    """Фабрика шлюза по имени из конфигурации ("stub" | "http").

    template нужен только заглушке: по нему она находит
    целевой документ в промпте.
    """
    kind = kind.strip().lower()
    if kind == "stub":
        return StubGateway(template=template, parallelism=config.parallelism)
    if kind == "http":
        return HttpGateway(config)
    raise ValueError(f"Неизвестный шлюз '{kind}'. Допустимые: stub, http")
