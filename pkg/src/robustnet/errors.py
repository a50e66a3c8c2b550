"""Exception types shared across the toolkit."""


class RobustnetError(Exception):
    """Base class for all toolkit errors."""


class ParseError(RobustnetError):
    """Malformed input file; carries the offending line number when known."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


class TopologyError(RobustnetError):
    """Topology violates a structural invariant (self-loop, duplicate link, ...)."""


class InfeasibleError(RobustnetError):
    """Routing problem has no feasible solution, typically a disconnected demand."""


class SolverError(RobustnetError):
    """Numerical failure inside an LP solve."""


class UndefinedImpactError(RobustnetError):
    """Failure impact is undefined because the baseline MLU is zero."""


class PredictionError(RobustnetError):
    """Prediction file is malformed or does not cover a requested scenario."""


class UnprotectableError(RobustnetError):
    """No congestion-free protection routing exists for the critical failure set."""
