"""Exception and warning types shared across the package."""


class HemicurvError(Exception):
    """Base class for all package errors."""


class ParseError(HemicurvError):
    """Expression source does not conform to the grammar.

    Carries the 0-based character offset of the offending token.
    """

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (offset {position})")
        self.position = position


class PositivityError(HemicurvError):
    """Candidate curvature evaluates to a non-positive value on the domain."""


class PoleSingularity(HemicurvError):
    """Stereographic chart evaluated at (or too close to) the projection pole."""


class CoincidentPoints(HemicurvError):
    """Kernel evaluation requested on the diagonal."""


class BoundaryPointError(HemicurvError):
    """Regular-part evaluation at a boundary point, where it diverges."""


class RegimeError(HemicurvError):
    """Bubble parameters outside the concentration regime the expansions assume."""


class QuadratureBudgetExceeded(HemicurvError):
    """Adaptive refinement hit the evaluation cap before reaching tolerance."""

    def __init__(self, message: str, estimate: float, budget: int):
        super().__init__(message)
        self.estimate = estimate
        self.budget = budget


class InteractionDominated(HemicurvError):
    """Pairwise bubble interaction too large for the reduced model."""


class StepFailure(HemicurvError):
    """Adaptive integrator step size underflowed."""


class TooManyFlagged(HemicurvError):
    """Subset enumeration would exceed the configured maximum."""


class SearchIncomplete(HemicurvError):
    """Too many multistart iterations diverged; results may miss critical points."""


class NonMorseWarning(UserWarning):
    """A critical point failed the nondegeneracy threshold."""


class DegenerateHypothesisWarning(UserWarning):
    """An interaction matrix has an eigenvalue at numerical zero."""
