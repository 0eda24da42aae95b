"""Exception hierarchy. Each family maps onto a stable CLI exit code."""

from __future__ import annotations


class AttributionError(Exception):
    exit_code = 2


class ConfigError(AttributionError):
    exit_code = 1


class DataError(AttributionError):
    exit_code = 2


class ServiceError(AttributionError):
    """A remote scorer, embedder or LLM failed or broke its wire contract."""

    exit_code = 3


class InvalidScoreError(ServiceError):
    pass


class BudgetExceededError(AttributionError):
    exit_code = 2
