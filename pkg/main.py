"""Точка входа InPars Hub."""

import sys

from inpars_hub.cli.interface import run_cli


def main(argv: list[str] | None = None) -> int:
    """Запуск приложения: разбор аргументов + подкоманда.

    Логирование настраивается внутри run_cli, после
    загрузки конфигурации (каталог и уровень логов
    берутся из неё).
    """
    return run_cli(argv)


if __name__ == "__main__":
    sys.exit(main())
