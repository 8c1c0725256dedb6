"""Exception types shared across the package."""


class LatticePinnError(Exception):
    """Base class for all package errors."""


class RecordError(LatticePinnError):
    """Recording a non-finite value (or otherwise invalid node) on a tape."""


class GraphError(LatticePinnError):
    """Reference to a node id that is not on the tape."""


class SeedError(LatticePinnError):
    """More than one forward-mode input carries the unit tangent seed."""


class ConfigError(LatticePinnError):
    """Invalid configuration value (counts, fractions, ranges, flags)."""


class ShapeError(LatticePinnError):
    """Dimension or length mismatch."""


class FormatError(LatticePinnError):
    """Malformed input file (missing file, wrong header, wrong columns)."""


class ValidationError(LatticePinnError):
    """Well-formed input whose values violate the schema constraints."""


class RankError(LatticePinnError):
    """Feature matrix is numerically rank-deficient."""

    def __init__(self, rank: int, needed: int):
        self.rank = rank
        self.needed = needed
        super().__init__(f"feature matrix has numerical rank {rank}, need {needed}")


class DomainError(LatticePinnError):
    """Evaluation outside the mathematical domain (e.g. negative time)."""


class DivergenceError(LatticePinnError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, detail: str = ""):
        self.epoch = epoch
        msg = f"non-finite loss at epoch {epoch}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class IoError(LatticePinnError):
    """Failure writing an output file."""
