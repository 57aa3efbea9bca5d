"""Exception types shared across the toolkit."""


class VCError(Exception):
    """Base class for all toolkit errors."""


class ShapeError(VCError, ValueError):
    pass


class NumericError(VCError, FloatingPointError):
    pass


class ConfigError(VCError, ValueError):
    pass


class LengthError(VCError, ValueError):
    pass


class ContractError(VCError, ValueError):
    pass


class StatsError(VCError, ValueError):
    pass


class EvaluationError(VCError, ValueError):
    pass


class FormatError(VCError, ValueError):
    """Malformed WAV, feature bundle, model file or manifest."""
