"""Exception hierarchy shared by all modules."""


class FracObstacleError(Exception):
    """Base class; ``exit_code`` is what the CLI returns for it."""

    exit_code = 1


class InvalidParameter(FracObstacleError, ValueError):
    exit_code = 2


class ConfigInvalid(FracObstacleError, ValueError):
    exit_code = 2

    def __init__(self, key, reason):
        self.key = key
        self.reason = reason
        super().__init__(f"{key}: {reason}")


class WindowTooSmall(FracObstacleError, ValueError):
    exit_code = 2


class MismatchedRealization(FracObstacleError, ValueError):
    exit_code = 2


class TemplateOutOfBounds(FracObstacleError, ValueError):
    exit_code = 2


class ZeroArgument(FracObstacleError, ValueError):
    exit_code = 2


class EmptyNodeSet(FracObstacleError, ValueError):
    exit_code = 2


class OverlappingSets(FracObstacleError, ValueError):
    exit_code = 2


class NodeOutsideBall(FracObstacleError, ValueError):
    exit_code = 2


class InfeasibleGeometry(FracObstacleError, ValueError):
    exit_code = 2


class MomentInfinite(FracObstacleError, ValueError):
    exit_code = 2


class SolverDiverged(FracObstacleError, RuntimeError):
    exit_code = 3


class LadderNotMonotone(FracObstacleError, RuntimeError):
    exit_code = 3


class UnderResolvedObstacles(FracObstacleError, RuntimeError):
    exit_code = 3


class IoError(FracObstacleError, OSError):
    exit_code = 4
