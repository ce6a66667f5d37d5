from __future__ import annotations


class Conformal235Error(Exception):
    """Base class for every error raised by the package."""


class ExpressionSyntaxError(Conformal235Error, ValueError):
    def __init__(self, message: str, offset: int, source: str = ""):
        self.offset = offset
        self.source = source
        super().__init__(f"{message} at offset {offset}")


class UnknownIdentifierError(ExpressionSyntaxError):
    pass


class EvaluationError(Conformal235Error, ArithmeticError):
    """Division by zero or a non-finite value somewhere in an expression DAG."""

    def __init__(self, message: str, subtree: str = ""):
        self.subtree = subtree
        super().__init__(f"{message}: {subtree}" if subtree else message)


class ChartPoleError(EvaluationError):
    pass


class DimensionMismatchError(Conformal235Error, ValueError):
    pass


class GrowthVectorError(Conformal235Error):
    def __init__(self, growth: tuple[int, int, int], point=None):
        self.growth = tuple(growth)
        self.point = point
        super().__init__(f"growth vector {self.growth} is not (2, 3, 5) at {point}")


class DegeneratePointError(Conformal235Error):
    def __init__(self, message: str, diagnostic=None):
        self.diagnostic = diagnostic
        super().__init__(message)


class RegularityError(Conformal235Error, ValueError):
    pass


class JetOrderError(Conformal235Error, ValueError):
    pass


class NormalizationError(Conformal235Error, ValueError):
    pass


class ConventionError(Conformal235Error):
    """An identity that must hold by construction failed; points at a sign or index slip."""


class ZeroFormError(Conformal235Error, ValueError):
    pass


class ModelFileError(Conformal235Error, ValueError):
    pass
