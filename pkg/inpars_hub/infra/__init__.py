"""Инфраструктура: SettingsLoader и хранилище артефактов."""
