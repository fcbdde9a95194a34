"""Exception hierarchy shared by every stage of the solver."""


class SerialMonopolyError(Exception):
    """Base class; ``stage`` names the module that raised it."""

    stage = "core"


class NonFiniteInput(SerialMonopolyError, ValueError):
    stage = "model"


class MixedModularity(SerialMonopolyError):
    stage = "model"


class AssumptionA3Failed(SerialMonopolyError):
    """The second seller would sell nothing even in the observable benchmark."""

    stage = "model"


class DomainError(SerialMonopolyError):
    stage = "model"


class NoInteriorSolution(SerialMonopolyError):
    stage = "benchmark"


class OrderingViolation(SerialMonopolyError):
    stage = "benchmark"


class RootBracketFailure(SerialMonopolyError):
    stage = "roots"


class MonotonicityViolation(SerialMonopolyError):
    stage = "equilibrium"


class QuadratureDivergence(SerialMonopolyError):
    stage = "equilibrium"


class PriceFormMismatch(SerialMonopolyError):
    stage = "equilibrium"


class InvalidExtension(SerialMonopolyError):
    stage = "equilibrium"


class ComparisonViolation(SerialMonopolyError):
    stage = "welfare"


class NoDeviationFound(SerialMonopolyError):
    stage = "verify"


class EmpiricalICViolation(SerialMonopolyError):
    stage = "sim"


class ConfigError(SerialMonopolyError):
    stage = "cli"
