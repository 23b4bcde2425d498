"""Exceptions raised by madelung_lab."""

__all__ = [
    "MadelungError",
    "ConfigError",
    "NodeError",
    "WindingError",
    "DegenerateDensityError",
    "GridMismatchError",
    "SnapshotError",
]


class MadelungError(ValueError):
    """Base class for model and runtime errors."""


class ConfigError(MadelungError):
    """Invalid run configuration; the message names the offending field."""


class NodeError(MadelungError):
    """Density drops below the node floor inside its support."""

    def __init__(self, message: str, index: int = None):
        super().__init__(message)
        self.index = index


class WindingError(MadelungError):
    """Phase has a nonzero (or inconsistent) winding number."""


class DegenerateDensityError(MadelungError):
    """Density cannot be normalized (zero mass or negative entries)."""


class GridMismatchError(MadelungError):
    """Fields or snapshots live on different grids or time cadences."""


class SnapshotError(MadelungError):
    """Snapshot directory is missing, empty or inconsistent."""
