"""Exception hierarchy shared across the toolkit."""

from __future__ import annotations


class RevmixError(Exception):
    """Base class for all toolkit errors."""


class DomainError(RevmixError):
    """A state violates the domain of the vector field (e.g. R at/below the guard)."""


class SingularityGuard(RevmixError):
    """Integration drove R below the singularity guard radius."""


class EscapeError(RevmixError):
    """Integration drove R above the escape radius."""


class StepBudgetExceeded(RevmixError):
    """The integrator ran out of its step budget before finishing."""


class NoCrossingInTrajectory(RevmixError):
    """The trajectory never brackets the requested section crossing."""


class WrongDirection(RevmixError):
    """A located section crossing has non-positive angular speed."""


class DirectionError(RevmixError):
    """The return map was started or ended against the section's crossing direction."""


class NewtonDiverged(RevmixError):
    """Damped Newton failed to converge within its iteration/damping budget."""


class SingularJacobian(RevmixError):
    """Newton's linear system is singular (e.g. on a degenerate circle of periodic points)."""


class BranchLost(RevmixError):
    """Continuation lost its branch: Newton failed repeatedly after step halving."""


class BracketInvalid(RevmixError):
    """A bisection bracket has the same predicate value at both ends."""


class GridMismatch(RevmixError):
    """Two occupancy grids do not share window and resolution."""


class BudgetExceeded(RevmixError):
    """A point/arclength budget was exhausted (usually returned as a flag, not raised)."""


class ParseError(RevmixError):
    """A config file could not be parsed."""


class ValidationError(RevmixError):
    """A run configuration violates one or more invariants.

    ``problems`` lists every violated invariant, not just the first.
    """

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
