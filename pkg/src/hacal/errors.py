"""Exception hierarchy shared by every module."""


class HacalError(Exception):
    """Base class for all package errors."""


class ValidationError(HacalError, ValueError):
    """Invalid configuration or inputs, detected before any computation."""


class DimensionError(ValidationError):
    """Operand shapes are inconsistent."""


class PilotLengthError(ValidationError):
    """A training schedule is shorter than the identifiability minimum."""


class SolverError(HacalError, RuntimeError):
    """A numerical solver could not produce an estimate."""


class RankDeficiencyError(SolverError):
    """A least-squares system lacks full column rank.

    Parameters
    ----------
    rank : int
        Numerical rank found by the factorization.
    cols : int
        Number of unknowns (columns).
    name : str
        Human-readable name of the offending matrix.
    """

    def __init__(self, rank, cols, name="matrix"):
        self.rank = int(rank)
        self.cols = int(cols)
        self.name = name
        super().__init__(
            f"{name} is rank deficient: numerical rank {self.rank} < {self.cols} columns"
        )
