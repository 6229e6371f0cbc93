"""Exception hierarchy shared across the package.

Data problems (bad files, bad graph records, bad pair lists) derive from
DataError; the CLI maps them to exit code 2. Numerical failures during
training map to exit code 3.
"""


class AgcnError(Exception):
    """Base class for all package errors."""


class DataError(AgcnError):
    """Invalid input data (graph records, files, pair lists, configs)."""


class SelfLoop(DataError):
    pass


class DuplicateEdge(DataError):
    pass


class NodeIdOutOfRange(DataError):
    pass


class SchemaMismatch(DataError):
    pass


class ParseError(DataError):
    """File-level parse failure; carries the offending line number."""

    def __init__(self, path, line_no, message):
        self.path = path
        self.line_no = line_no
        super().__init__(f"{path}:{line_no}: {message}" if line_no is not None
                         else f"{path}: {message}")


class TargetsEqual(DataError):
    pass


class PositiveNotAnEdge(DataError):
    pass


class NegativeSamplingExhausted(DataError):
    pass


class ShapeMismatch(AgcnError):
    pass


class IncompleteTape(AgcnError):
    pass


class SingleClassDataset(DataError):
    pass


class SingleClassInput(DataError):
    pass


class InfeasibleConfig(DataError):
    pass


class CheckpointError(DataError):
    pass


class DivergedLoss(AgcnError):
    """Loss or parameters became non-finite; carries the epoch index."""

    def __init__(self, epoch, message="loss diverged"):
        self.epoch = epoch
        super().__init__(f"{message} at epoch {epoch}")
