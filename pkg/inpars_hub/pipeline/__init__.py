"""Стадии пайплайна: генерация обучающих данных и оценка."""
