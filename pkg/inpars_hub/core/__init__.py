"""Ядро: модели данных, ввод-вывод, анализатор, индекс, метрики, промпты."""
