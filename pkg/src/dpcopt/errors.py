"""Exception types shared across the package.

Everything raised on purpose derives from DpcoptError so callers can
catch library failures without swallowing genuine bugs.
"""

from __future__ import annotations

__all__ = [
    "DpcoptError",
    "ConfigInvalid",
    "InvalidEdge",
    "DisconnectedGraph",
    "DimensionMismatch",
    "SpecDimensionMismatch",
    "EigenSolverFailure",
    "NonFiniteState",
    "EmptyTrace",
    "ContractionValidationFailed",
]


class DpcoptError(Exception):
    """Base class for all library errors."""


class ConfigInvalid(DpcoptError):
    """A configuration document or parameter set violates its contract.

    The message names the offending field with a dotted path, e.g.
    ``gains.omega``.
    """


class InvalidEdge(DpcoptError):
    """An edge references a node outside ``range(n)``, repeats, or is a
    self-loop."""


class DisconnectedGraph(DpcoptError):
    """The edge set does not connect all nodes."""


class DimensionMismatch(DpcoptError):
    """Array shapes are inconsistent with the declared problem size."""


class SpecDimensionMismatch(DpcoptError):
    """A compressor spec cannot apply to the given vector dimension,
    e.g. top-k with k larger than d."""


class EigenSolverFailure(DpcoptError):
    """The dense symmetric eigensolver did not converge."""


class NonFiniteState(DpcoptError):
    """A solver state picked up a NaN or infinity.

    Carries the first failing round index in ``round_index``.
    """

    def __init__(self, round_index: int, detail: str = ""):
        self.round_index = int(round_index)
        msg = f"non-finite state at round {round_index}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class EmptyTrace(DpcoptError):
    """A metric was requested on a trace with no rows or no stored
    iterate history."""


class ContractionValidationFailed(DpcoptError):
    """The configured compressor failed its empirical contraction check,
    so the run refuses to start."""
