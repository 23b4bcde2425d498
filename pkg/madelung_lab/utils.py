"""Utilities read/write functions for madelung_lab snapshots and reports."""

import inspect
import json
import logging
import math
from os import makedirs
from os.path import basename, dirname, isdir, isfile, join, splitext
from typing import Dict, List, Tuple

import numpy as np
import pandas as pd
import xarray as xr
import yaml

from .errors import ConfigError, SnapshotError
from .spectral_utils import GridSpec

__all__ = [
    "SNAPSHOT_COLUMNS",
    "KG_COLUMNS",
    "FLOAT_FORMAT",
    "write_frame",
    "read_frame",
    "write_snapshots",
    "read_snapshots",
    "grid_from_frame",
    "frame_from_dataset",
    "write_json",
    "read_json",
    "write_yaml",
    "check_build_options",
]

logger = logging.getLogger(__name__)

SNAPSHOT_COLUMNS = ["x", "P", "S", "u", "Q", "re_psi", "im_psi"]
KG_COLUMNS = SNAPSHOT_COLUMNS + ["dSdt", "dPdt", "M_eff"]
#: 17 significant digits round-trip every float64
FLOAT_FORMAT = "%.17g"
INDEX_FN = "index.csv"


def _sanitize(obj):
    """Convert numpy scalars and arrays to plain python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_sanitize(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        return value if math.isfinite(value) else None
    return obj


def write_json(data: Dict, fn: str) -> str:
    """Write a report as JSON with shortest round-trip float formatting."""
    if dirname(fn):
        makedirs(dirname(fn), exist_ok=True)
    with open(fn, "w") as f:
        json.dump(_sanitize(data), f, indent=2)
        f.write("\n")
    return fn


def read_json(fn: str) -> Dict:
    """Read a JSON report."""
    with open(fn, "r") as f:
        return json.load(f)


def write_yaml(data: Dict, fn: str) -> str:
    """Write a configuration dictionary in block style, keys in insertion order."""
    if dirname(fn):
        makedirs(dirname(fn), exist_ok=True)
    with open(fn, "w") as f:
        yaml.safe_dump(_sanitize(data), f, default_flow_style=False, sort_keys=False)
    return fn


def write_frame(df: pd.DataFrame, fn: str) -> str:
    """Write a table as CSV or JSON depending on the file extension."""
    ext = splitext(fn)[1]
    if ext == ".csv":
        df.to_csv(fn, index=False, float_format=FLOAT_FORMAT, na_rep="nan")
    elif ext == ".json":
        write_json({col: df[col].to_numpy() for col in df.columns}, fn)
    else:
        raise ValueError(f"unsupported table format {ext!r}, use .csv or .json")
    return fn


def read_frame(fn: str) -> pd.DataFrame:
    """Read a table written by :py:func:`write_frame`."""
    ext = splitext(fn)[1]
    if ext == ".csv":
        return pd.read_csv(fn, float_precision="round_trip")
    elif ext == ".json":
        data = read_json(fn)
        return pd.DataFrame({k: np.array(v, dtype=float) for k, v in data.items()})
    raise SnapshotError(f"unsupported snapshot file {basename(fn)}")


def write_snapshots(
    frames: List[Tuple[int, float, pd.DataFrame]],
    savedir: str,
    fmt: str = "csv",
) -> str:
    """Write snapshot tables and their index to ``savedir``.

    Parameters
    ----------
    frames : list of (step, time, DataFrame)
        Snapshot tables with the columns of :py:data:`SNAPSHOT_COLUMNS` (or
        :py:data:`KG_COLUMNS`).
    savedir : str
        Output directory, created if missing.
    fmt : {'csv', 'json'}
        Table format.

    Returns
    -------
    str
        Path of the index file.
    """
    makedirs(savedir, exist_ok=True)
    records = []
    for step, time, df in frames:
        fn = f"snapshot_{step:05d}.{fmt}"
        write_frame(df, join(savedir, fn))
        records.append({"step": step, "time": time, "file": fn})
    index = pd.DataFrame.from_records(records, columns=["step", "time", "file"])
    index_fn = join(savedir, INDEX_FN)
    index.to_csv(index_fn, index=False, float_format=FLOAT_FORMAT)
    return index_fn


def read_snapshots(snapshot_dir: str) -> Tuple[pd.DataFrame, List[pd.DataFrame]]:
    """Read the snapshot index and tables of a snapshot directory.

    Raises
    ------
    SnapshotError
        If the directory or index is missing, empty, references missing files or
        the tables disagree in columns or coordinates.
    """
    if not isdir(snapshot_dir):
        raise SnapshotError(f"snapshot directory {snapshot_dir} not found")
    index_fn = join(snapshot_dir, INDEX_FN)
    if not isfile(index_fn):
        raise SnapshotError(f"no {INDEX_FN} in snapshot directory {snapshot_dir}")
    index = pd.read_csv(index_fn, float_precision="round_trip")
    if index.empty:
        raise SnapshotError(f"snapshot directory {snapshot_dir} is empty")
    missing = [c for c in ["step", "time", "file"] if c not in index.columns]
    if missing:
        raise SnapshotError(f"{index_fn} lacks columns {missing}")
    frames = []
    for fn in index["file"]:
        path = join(snapshot_dir, fn)
        if not isfile(path):
            raise SnapshotError(f"snapshot file {fn} listed in {INDEX_FN} is missing")
        frames.append(read_frame(path))
    columns = list(frames[0].columns)
    for required in SNAPSHOT_COLUMNS:
        if required not in columns:
            raise SnapshotError(f"snapshot {index['file'][0]} lacks column {required}")
    x0 = frames[0]["x"].to_numpy()
    for fn, df in zip(index["file"], frames):
        if list(df.columns) != columns:
            raise SnapshotError(f"snapshot {fn} has columns {list(df.columns)}")
        if len(df) != len(x0) or not np.array_equal(df["x"].to_numpy(), x0):
            raise SnapshotError(f"snapshot {fn} lives on another grid")
    logger.debug(f"Read {len(frames)} snapshots from {snapshot_dir}")
    return index, frames


def grid_from_frame(df: pd.DataFrame) -> GridSpec:
    """Recover the periodic grid from the x column of a snapshot table."""
    x = df["x"].to_numpy()
    n = len(x)
    dx = float(np.mean(np.diff(x)))
    grid = GridSpec(n_points=n, length=n * dx)
    if not np.allclose(grid.x, x, rtol=0, atol=1e-9 * grid.length):
        raise SnapshotError("snapshot x column is not a uniform cell [-L/2, L/2)")
    return grid


def frame_from_dataset(ds: xr.Dataset, index: int) -> pd.DataFrame:
    """Return snapshot ``index`` of a (time, x) Dataset as a snapshot table."""
    columns = {"x": ds["x"].values}
    columns.update({name: ds[name].values[index] for name in ds.data_vars})
    return pd.DataFrame(columns)


def check_build_options(model, opt: Dict, global_keys: List[str]) -> None:
    """Validate a build configuration against the model's setup methods.

    Every section other than ``global`` must name a public ``setup_*`` method of
    the model and every key must be one of that method's keyword arguments.

    Raises
    ------
    ConfigError
        Naming the offending ``<section>.<key>``.
    """
    if not isinstance(opt, dict):
        raise ConfigError(f"configuration must be a mapping, got {type(opt).__name__}")
    for section, kwargs in opt.items():
        if kwargs is None:
            kwargs = {}
        if not isinstance(kwargs, dict):
            raise ConfigError(f"{section}: section must be a mapping of options")
        if section == "global":
            allowed = global_keys
        elif section.startswith("setup_") and callable(getattr(model, section, None)):
            params = inspect.signature(getattr(model, section)).parameters
            allowed = [k for k in params if k not in ["self", "logger"]]
        else:
            raise ConfigError(f"{section}: unknown section")
        for key in kwargs:
            if key not in allowed:
                raise ConfigError(
                    f"{section}.{key}: unknown option, expected one of {allowed}"
                )
