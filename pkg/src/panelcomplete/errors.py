"""Exception hierarchy and warning categories.

Two error families matter to callers: :class:`DataError` (malformed or
degenerate input, CLI exit code 2) and :class:`NumericalError` (a computation
that cannot proceed on otherwise valid input, CLI exit code 3).
"""


class PanelCompleteError(Exception):
    """Base class for all package errors."""


class DataError(PanelCompleteError):
    """Invalid, malformed, or degenerate input data."""


class NumericalError(PanelCompleteError):
    """A numerical procedure failed on structurally valid input."""


class ShapeMismatch(DataError):
    def __init__(self, expected, got, what="array"):
        super().__init__(f"{what} has shape {got}, expected {expected}")
        self.expected = tuple(expected)
        self.got = tuple(got)


class EmptyRow(DataError):
    def __init__(self, row):
        super().__init__(f"unit {row} has no observed entries")
        self.row = row


class EmptyColumn(DataError):
    def __init__(self, col):
        super().__init__(f"period {col} has no observed entries")
        self.col = col


class DuplicateCell(DataError):
    def __init__(self, unit, time):
        super().__init__(f"duplicate cell for unit {unit!r} at time {time!r}")
        self.unit = unit
        self.time = time


class ParseError(DataError):
    def __init__(self, line, message):
        super().__init__(f"line {line}: {message}")
        self.line = line


class MixedTreatmentSchema(DataError):
    """Treatment column present but the outcome grid is not fully realized."""


class OutOfRange(DataError):
    def __init__(self, message):
        super().__init__(message)


class TooFewPeriods(DataError):
    def __init__(self, t, minimum):
        super().__init__(f"need at least {minimum} periods, got {t}")
        self.t = t


class NonFinite(NumericalError):
    def __init__(self, what="input"):
        super().__init__(f"{what} contains non-finite entries")


class SingularDesign(NumericalError):
    """A per-period or per-unit least-squares design is (near-)singular."""

    def __init__(self, axis, index, cond=None):
        detail = f" (condition number {cond:.3e})" if cond is not None else ""
        super().__init__(f"singular design for {axis} {index}{detail}")
        self.axis = axis
        self.index = index
        self.cond = cond


class RankDeficient(NumericalError):
    def __init__(self, k, numerical_rank):
        super().__init__(
            f"requested {k} factors but the estimate has numerical rank "
            f"{numerical_rank}"
        )
        self.k = k
        self.numerical_rank = numerical_rank


class ZeroMatrix(NumericalError):
    def __init__(self, message="matrix is identically zero"):
        super().__init__(message)


class AllCandidatesFailed(NumericalError):
    def __init__(self, candidates):
        super().__init__(f"every candidate dimension in {list(candidates)} failed to fit")
        self.candidates = list(candidates)


class McUnstable(NumericalError):
    def __init__(self, n_failed, reps):
        super().__init__(
            f"{n_failed} of {reps} Monte Carlo replications failed (>10%)"
        )
        self.n_failed = n_failed
        self.reps = reps


class ConvergenceWarning(UserWarning):
    """Solver stopped at max_iters; the returned iterate is still usable."""
