from __future__ import annotations


class QReadError(Exception):
    """Base error. ``code`` is the machine-readable tag printed by the CLI."""

    code = "error"


class ParameterError(QReadError, ValueError):
    code = "parameter"


class ConfigError(QReadError, ValueError):
    code = "config"


class DegenerateChannels(QReadError, ValueError):
    code = "degenerate-channels"


class InvalidRegime(QReadError, ValueError):
    code = "invalid-regime"


class ModelEvaluationError(QReadError, ArithmeticError):
    code = "model-evaluation"


class RuntimeGuard(QReadError, RuntimeError):
    code = "runtime-guard"


class EmptyIdler(QReadError, ValueError):
    code = "empty-idler"


class DivisionDomain(QReadError, ArithmeticError):
    code = "division-domain"


class UnlabeledData(QReadError, ValueError):
    code = "unlabeled-data"
