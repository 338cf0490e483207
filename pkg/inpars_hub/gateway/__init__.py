"""Модельный шлюз: генерация запросов и оценка релевантности.

HTTP-клиент внешнего сервиса и детерминированные заглушки.
"""
