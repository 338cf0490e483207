"""Конфигурация модельного шлюза.

Адрес сервиса, токен, параллелизм, таймаут и повторы.
Токен может прийти из переменной окружения
INPARS_GATEWAY_TOKEN (файл .env подгружает SettingsLoader).
"""

from dataclasses import dataclass

from inpars_hub.core.exceptions import ConfigError


@dataclass(frozen=True)
class GatewayConfig:
    """Настройки HTTP-шлюза.

    Attributes:
        base_url: Адрес сервиса без завершающего '/'.
        token: Bearer-токен (пустой — без заголовка).
        parallelism: Предел одновременных запросов P.
        timeout: Таймаут одного запроса (сек).
        max_attempts: Максимум попыток R на запрос.
        backoff: Базовая задержка d; перед повтором i
            (с нуля) ждём d * 2**i.
        score_batch_size: Пар в одном POST /v1/score.
    """

    base_url: str = "http://localhost:8000"
    token: str = ""
    parallelism: int = 4
    timeout: float = 120.0
    max_attempts: int = 4
    backoff: float = 1.0
    score_batch_size: int = 32

    GENERATE_PATH = "/v1/generate"
    SCORE_PATH = "/v1/score"

    def __post_init__(self) -> None:
        if self.parallelism < 1:
            raise ConfigError("parallelism", "должно быть >= 1")
        if self.max_attempts < 1:
            raise ConfigError("max_attempts", "должно быть >= 1")
        if self.timeout <= 0:
            raise ConfigError("timeout", "должно быть > 0")
        if self.backoff < 0:
            raise ConfigError("backoff", "должно быть >= 0")
        if self.score_batch_size < 1:
            raise ConfigError("score_batch_size", "должно быть >= 1")

    @classmethod
    def from_settings(cls, settings) -> "GatewayConfig":
        """Собрать конфигурацию из SettingsLoader."""
        return cls(
            base_url=str(settings.get("gateway_url")).rstrip("/"),
            token=settings.get("gateway_token") or "",
            parallelism=settings.get("parallelism"),
            timeout=settings.get("timeout"),
            max_attempts=settings.get("max_attempts"),
            backoff=settings.get("backoff"),
            score_batch_size=settings.get("score_batch_size"),
        )
