"""Exception hierarchy shared across the package.

The split matters for the CLI exit-code contract: bad inputs and malformed
data map to exit code 2, numerical failures to exit code 3.
"""


class MixnetError(Exception):
    """Base class for all package-specific errors."""


class InvalidInputError(MixnetError, ValueError):
    """Arguments violate a documented precondition (bad shapes, ranges, kinds)."""


class InvalidSpecError(MixnetError, ValueError):
    """A model specification is unusable (wrong variable kinds, non-PD precision)."""


class IngestError(MixnetError, ValueError):
    """A data file failed validation; message carries row/column address."""


class RankDeficiencyError(MixnetError):
    """Design matrix is rank deficient (collinear neighbours or too few rows)."""


class ChainStuckError(MixnetError):
    """Every move out of the current neighbourhood state has zero rate."""

    def __init__(self, vertex: int, reason: str = "all jump rates vanished"):
        self.vertex = vertex
        super().__init__(f"chain for vertex {vertex} is stuck: {reason}")


class DivergentSpecError(MixnetError):
    """A Gibbs conditional mean blew past the overflow guard."""

    def __init__(self, vertex: int, eta: float):
        self.vertex = vertex
        super().__init__(
            f"count conditional for vertex {vertex} diverged (linear predictor {eta:.3g})"
        )
