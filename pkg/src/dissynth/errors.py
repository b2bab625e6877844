"""Exception hierarchy.

Verdicts (infeasible, undecided) are returned as values; exceptions are reserved
for malformed input and for hypotheses that make a verdict meaningless.
"""


class DissynthError(Exception):
    """Root of all dissynth errors."""


class SymmetryError(DissynthError, ValueError):
    """A matrix expected to be symmetric is not, even within tolerance."""


class DimensionError(DissynthError, ValueError):
    """Matrix shapes are inconsistent with each other or with declared dimensions."""


class HypothesisError(DissynthError):
    """A hypothesis required by a synthesis or analysis step does not hold.

    ``hypothesis`` is a short machine tag (e.g. ``"rank"``, ``"supply-inertia"``)
    that the cli reports next to the human-readable message.
    """

    def __init__(self, hypothesis: str, message: str) -> None:
        super().__init__(message)
        self.hypothesis = hypothesis


class SolverError(DissynthError):
    """The conic backend failed in a way that is not a feasibility verdict."""
