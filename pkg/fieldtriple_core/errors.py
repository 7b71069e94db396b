"""Exceptions raised by the field-theory toolkit."""

from __future__ import annotations


class TripleError(Exception):
    """Base class for every error raised by fieldtriple_core."""


class DimensionMismatch(TripleError, ValueError):
    """Shapes or ambient dimensions do not agree."""


class ParseError(TripleError, ValueError):
    """Malformed expression source.

    Attributes:
        offset: Byte offset into the UTF-8 encoded source
        source: The text being parsed
    """

    def __init__(self, message: str, offset: int, source: str = ""):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset
        self.source = source


class UnknownFunction(ParseError):
    """A call to a function outside sin, cos, exp, log, sqrt."""


class EvaluationDomainError(TripleError, ArithmeticError):
    """log of a non-positive number, division by zero and similar.

    Attributes:
        subexpression: Printed form of the offending subexpression
    """

    def __init__(self, message: str, subexpression: str):
        super().__init__(f"{message} in '{subexpression}'")
        self.subexpression = subexpression


class BaseMismatch(TripleError, ValueError):
    """Two points that must lie over the same base point do not."""


class NotOnSubmanifold(TripleError, ValueError):
    """A point fails the defining equations it was required to satisfy."""


class RankDeficiency(TripleError, ValueError):
    """Supplied generators are linearly dependent."""


class SingularJacobian(TripleError, ArithmeticError):
    """A chart change is not invertible at the requested point."""


class SingularHessian(TripleError, ArithmeticError):
    """The velocity Hessian of a Lagrangian is (numerically) singular."""


class NonConvergence(TripleError, RuntimeError):
    """An iteration ran out of budget."""


class ProblemError(TripleError, ValueError):
    """Invalid problem description or configuration."""
