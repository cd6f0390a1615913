"""Exception hierarchy.

Every exception carries a ``category`` used by the command-line front end to
pick an exit code: ``"config"`` (2), ``"feasibility"`` (3) or ``"numerical"``
(4).
"""


class GeoDuioError(Exception):
    category = "numerical"


class ConfigError(GeoDuioError, ValueError):
    category = "config"


class InvalidMatrix(GeoDuioError, ValueError):
    """Raised for non-finite or malformed matrix input."""


class DimensionMismatch(GeoDuioError, ValueError):
    pass


class ContainmentViolated(GeoDuioError):
    pass


class NotConditionedInvariant(GeoDuioError):
    """No friend exists: the subspace is not (C, A)-invariant."""


class IllPosedSplit(GeoDuioError):
    """Good/bad eigenvalues could not be separated into invariant subspaces."""


class PlacementFailed(GeoDuioError):
    pass


class Undetectable(GeoDuioError):
    category = "feasibility"


class JointConditionViolated(GeoDuioError):
    category = "feasibility"


class Disconnected(GeoDuioError):
    category = "feasibility"


class GainTooSmall(GeoDuioError):
    category = "feasibility"


class NonFiniteState(GeoDuioError):
    pass


class RankDeficientChannel(GeoDuioError):
    category = "feasibility"


EXIT_CODES = {"config": 2, "feasibility": 3, "numerical": 4}
