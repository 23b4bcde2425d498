"""Periodic grid, spectral calculus and physical constants shared by all solvers."""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence, Union

import numpy as np
import numpy.typing as npt
from scipy import fft

from .errors import DegenerateDensityError, GridMismatchError, NodeError

__all__ = [
    "NODE_FLOOR",
    "ScalarField",
    "WaveField",
    "GridSpec",
    "PhysicalConstants",
    "check_finite",
    "differentiate",
    "integrate",
    "normalize",
    "normalize_wave",
    "node_floor",
    "floored",
    "check_node_free",
    "edge_ratio",
    "dealias",
    "fourier_interpolate",
    "refine",
    "wrap",
    "circular_mean",
    "centered_coordinates",
    "time_derivative",
    "uniform_spacing",
    "l2_norm",
    "weighted_l2_norm",
]

logger = logging.getLogger(__name__)

#: relative node floor, epsilon = NODE_FLOOR * max(P)
NODE_FLOOR = 1e-12

ScalarField = npt.NDArray[np.float64]
WaveField = npt.NDArray[np.complex128]


@dataclass(frozen=True)
class GridSpec:
    """Periodic one-dimensional grid on [-length/2, length/2).

    Parameters
    ----------
    n_points : int
        Number of grid points, a power of two.
    length : float
        Domain size L.
    dim : int, optional
        Spatial dimension of the configuration space. Only 1 is supported by the
        solvers; the value enters the zero-point bookkeeping. By default 1.
    """

    n_points: int
    length: float
    dim: int = 1

    def __post_init__(self):
        n = self.n_points
        if isinstance(n, bool) or not isinstance(n, (int, np.integer)) or n < 2:
            raise ValueError(f"n_points must be an integer >= 2, got {n!r}")
        if n & (n - 1) != 0:
            raise ValueError(f"n_points must be a power of two, got {n}")
        if not np.isfinite(self.length) or self.length <= 0:
            raise ValueError(f"length must be positive, got {self.length!r}")
        if self.dim != 1:
            raise ValueError(f"only dim=1 is supported, got {self.dim}")

    @property
    def spacing(self) -> float:
        """Grid spacing L / n_points."""
        return self.length / self.n_points

    @property
    def x_min(self) -> float:
        """Left edge of the periodic cell."""
        return -0.5 * self.length

    @cached_property
    def x(self) -> ScalarField:
        """Grid point coordinates."""
        return self.x_min + self.spacing * np.arange(self.n_points)

    @cached_property
    def k(self) -> ScalarField:
        """Angular wavenumbers in FFT order."""
        return 2 * np.pi * fft.fftfreq(self.n_points, d=self.spacing)

    @property
    def k_max(self) -> float:
        """Nyquist wavenumber."""
        return np.pi / self.spacing

    @property
    def origin_index(self) -> int:
        """Index of the grid point at x = 0."""
        return self.n_points // 2

    def check(self, values: np.ndarray, name: str = "field") -> np.ndarray:
        """Return values as array after checking its length against the grid."""
        values = np.asarray(values)
        if values.shape != (self.n_points,):
            raise GridMismatchError(
                f"{name} has shape {values.shape}, grid expects ({self.n_points},)"
            )
        return values


@dataclass(frozen=True)
class PhysicalConstants:
    """Physical constants in consistent units; defaults hbar = mass = c = 1."""

    hbar: float = 1.0
    mass: float = 1.0
    c: float = 1.0
    omega: float = 1.0

    def __post_init__(self):
        for name in ["hbar", "c"]:
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ValueError(f"{name} must be strictly positive, got {value!r}")
        for name in ["mass", "omega"]:
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be non-negative, got {value!r}")

    @property
    def inv_mass(self) -> float:
        """Return 1/m; the nonrelativistic equations need m > 0."""
        if self.mass == 0:
            raise ValueError("mass must be strictly positive for this operation")
        return 1.0 / self.mass

    @property
    def compton_wavenumber(self) -> float:
        """Return mc/hbar."""
        return self.mass * self.c / self.hbar


def check_finite(values: np.ndarray, name: str = "field") -> np.ndarray:
    """Raise ValueError if values contain NaN or Inf."""
    values = np.asarray(values)
    if not np.all(np.isfinite(values)):
        bad = int(np.flatnonzero(~np.isfinite(values))[0])
        raise ValueError(f"{name} has non-finite entries (first at index {bad})")
    return values


def differentiate(
    f: Union[ScalarField, WaveField], grid: GridSpec, order: int = 1
) -> Union[ScalarField, WaveField]:
    """Spectral derivative of a periodic field.

    Parameters
    ----------
    f : array
        Real or complex field sampled on ``grid``.
    grid : GridSpec
        Periodic grid.
    order : {1, 2}
        Derivative order.

    Returns
    -------
    array
        Derivative of the same kind (real in, real out). The Nyquist mode is
        dropped for odd orders.
    """
    if order not in (1, 2):
        raise ValueError(f"order must be 1 or 2, got {order}")
    f = check_finite(grid.check(f), "differentiated field")
    multiplier = (1j * grid.k) ** order
    if order % 2 == 1:
        multiplier[grid.n_points // 2] = 0.0
    df = fft.ifft(multiplier * fft.fft(f))
    if np.isrealobj(f):
        return df.real
    return df


def integrate(f: ScalarField, grid: GridSpec) -> float:
    """Riemann sum of f over the periodic cell."""
    f = check_finite(grid.check(f), "integrand")
    return float(np.sum(f) * grid.spacing)


def normalize(P: ScalarField, grid: GridSpec) -> ScalarField:
    """Return the density rescaled to unit mass.

    Raises
    ------
    DegenerateDensityError
        If P has negative entries or no mass.
    """
    P = check_finite(grid.check(P), "density")
    if np.any(P < 0):
        idx = int(np.argmin(P))
        raise DegenerateDensityError(
            f"density has negative entries (min {P[idx]:.3e} at index {idx})"
        )
    mass = np.sum(P) * grid.spacing
    if mass <= 0:
        raise DegenerateDensityError("density has zero mass and cannot be normalized")
    return P / mass


def normalize_wave(psi: WaveField, grid: GridSpec) -> WaveField:
    """Return psi scaled so that the integral of |psi|^2 is one."""
    psi = check_finite(grid.check(psi), "wave function")
    norm = np.sqrt(np.sum(np.abs(psi) ** 2) * grid.spacing)
    if norm == 0:
        raise DegenerateDensityError("wave function is identically zero")
    return psi / norm


def node_floor(P: ScalarField, rel: float = NODE_FLOOR) -> float:
    """Absolute node floor epsilon = rel * max(P)."""
    return rel * float(np.max(P))


def floored(P: ScalarField, rel: float = NODE_FLOOR) -> ScalarField:
    """Return max(P, epsilon), safe as a denominator."""
    return np.maximum(P, node_floor(P, rel))


def _arcs(mask: np.ndarray) -> list:
    """Return (start, length) of the cyclic runs of True in mask."""
    n = mask.size
    starts = np.flatnonzero(mask & ~np.roll(mask, 1))
    arcs = []
    for start in starts:
        length = 0
        while length < n and mask[(start + length) % n]:
            length += 1
        arcs.append((int(start), length))
    return arcs


def check_node_free(
    P: ScalarField, rel: float = NODE_FLOOR, name: str = "density"
) -> np.ndarray:
    """Check that the support {P >= epsilon} is a single periodic arc.

    The decayed tails of a localized state form one gap which is treated as
    vacuum. Any further gap is a node.

    Returns
    -------
    numpy.ndarray of bool
        The support mask.

    Raises
    ------
    NodeError
        Naming the grid index of the deepest point of the offending gap.
    """
    P = check_finite(P, name)
    if np.max(P) <= 0:
        raise DegenerateDensityError(f"{name} has no positive entries")
    mask = P >= node_floor(P, rel)
    if mask.all():
        return mask
    gaps = sorted(_arcs(~mask), key=lambda arc: (-arc[1], arc[0]))
    if len(gaps) > 1:
        start, length = gaps[1]
        idx = (start + np.arange(length)) % P.size
        node = int(idx[np.argmin(P[idx])])
        raise NodeError(
            f"{name} has a node at grid index {node} "
            f"(P = {P[node]:.3e} below floor {node_floor(P, rel):.3e})",
            index=node,
        )
    return mask


def edge_ratio(P: ScalarField, width: int = 1) -> float:
    """Largest density in the outer ``width`` points on each side over max(P)."""
    edges = np.concatenate([P[:width], P[-width:]])
    return float(np.max(edges) / np.max(P))


def dealias(f: ScalarField, grid: GridSpec, fraction: float = 2.0 / 3.0) -> ScalarField:
    """Zero all Fourier modes with |k| above ``fraction`` of the Nyquist wavenumber."""
    fk = fft.fft(f)
    fk[np.abs(grid.k) > fraction * grid.k_max] = 0.0
    out = fft.ifft(fk)
    return out.real if np.isrealobj(f) else out


def wrap(x: Union[float, np.ndarray], grid: GridSpec) -> Union[float, np.ndarray]:
    """Map positions into the periodic cell [x_min, x_min + L)."""
    return np.mod(np.asarray(x) - grid.x_min, grid.length) + grid.x_min


def fourier_interpolate(
    f: Union[ScalarField, WaveField],
    grid: GridSpec,
    x: Union[float, Sequence[float], np.ndarray],
    upsample: Optional[int] = None,
    chunk: int = 2048,
) -> Union[float, np.ndarray]:
    """Band-limited interpolation of a periodic field at arbitrary positions.

    Parameters
    ----------
    f : array
        Field sampled on ``grid``.
    grid : GridSpec
        Periodic grid.
    x : float or array
        Positions, wrapped into the cell.
    upsample : int, optional
        If given, the trigonometric interpolant is evaluated on a grid refined by
        this factor and then linearly interpolated, which is much cheaper for large
        particle ensembles. If None (default) the trigonometric sum is evaluated
        exactly.
    chunk : int
        Number of positions evaluated per block in exact mode.
    """
    f = grid.check(f)
    scalar = np.ndim(x) == 0
    xs = wrap(np.atleast_1d(np.asarray(x, dtype=float)), grid)
    n = grid.n_points
    fk = fft.fft(f)
    if upsample is None:
        coef = fk / n
        k = grid.k.copy()
        nyq = n // 2
        c_nyq = coef[nyq]
        coef[nyq] = 0.0
        out = np.empty(xs.size, dtype=complex)
        for i in range(0, xs.size, chunk):
            s = xs[i : i + chunk] - grid.x_min
            out[i : i + chunk] = np.exp(1j * np.outer(s, k)) @ coef + c_nyq * np.cos(
                grid.k_max * s
            )
    else:
        x_fine, fine = refine(f, grid, upsample)
        out = np.interp(xs, x_fine, fine.real, period=grid.length)
        if np.iscomplexobj(fine):
            out = out + 1j * np.interp(xs, x_fine, fine.imag, period=grid.length)
    if np.isrealobj(f):
        out = out.real
    return out[0] if scalar else out


def refine(f: Union[ScalarField, WaveField], grid: GridSpec, factor: int):
    """Evaluate the trigonometric interpolant of f on a grid ``factor`` times finer.

    Returns
    -------
    x_fine, f_fine : numpy.ndarray
        Fine coordinates and values; real input gives real values.
    """
    factor = int(factor)
    if factor < 1:
        raise ValueError(f"refinement factor must be >= 1, got {factor}")
    f = grid.check(f)
    n = grid.n_points
    m = factor * n
    fk = fft.fft(f)
    fk_fine = np.zeros(m, dtype=complex)
    half = n // 2
    fk_fine[:half] = fk[:half]
    fk_fine[-half + 1 :] = fk[-half + 1 :]
    if factor == 1:
        fk_fine[half] = fk[half]
    else:
        fk_fine[half] = 0.5 * fk[half]
        fk_fine[-half] = 0.5 * fk[half]
    fine = fft.ifft(fk_fine) * factor
    x_fine = grid.x_min + grid.length / m * np.arange(m)
    if np.isrealobj(f):
        fine = fine.real
    return x_fine, fine


def circular_mean(P: ScalarField, grid: GridSpec) -> float:
    """Center of mass of a density on the periodic cell (circular mean)."""
    theta = 2 * np.pi * (grid.x - grid.x_min) / grid.length
    z = np.sum(P * np.exp(1j * theta))
    if abs(z) == 0:
        return 0.0
    return float(wrap(grid.x_min + grid.length * np.angle(z) / (2 * np.pi), grid))


def centered_coordinates(P: ScalarField, grid: GridSpec) -> ScalarField:
    """Grid coordinates relative to the circular mean, in [-L/2, L/2)."""
    xc = circular_mean(P, grid)
    return np.mod(grid.x - xc + 0.5 * grid.length, grid.length) - 0.5 * grid.length


def time_derivative(values: np.ndarray, dt: float) -> np.ndarray:
    """Time derivative along axis 0 of a snapshot stack.

    Centered differences in the interior, one-sided second-order stencils at the
    first and last snapshot (first order when only two snapshots are given).
    """
    values = np.asarray(values)
    if values.shape[0] < 2:
        raise ValueError("at least two snapshots are needed for a time derivative")
    edge_order = 2 if values.shape[0] >= 3 else 1
    return np.gradient(values, dt, axis=0, edge_order=edge_order)


def uniform_spacing(times: Sequence[float], rtol: float = 1e-8) -> float:
    """Return the common spacing of ``times`` or raise GridMismatchError."""
    times = np.asarray(times, dtype=float)
    if times.size < 2:
        raise GridMismatchError("at least two snapshot times are required")
    steps = np.diff(times)
    dt = float(np.mean(steps))
    if dt <= 0 or np.any(np.abs(steps - dt) > rtol * abs(dt) + 1e-14):
        raise GridMismatchError(f"snapshot times are not uniformly spaced: {steps}")
    return dt


def l2_norm(r: ScalarField, grid: GridSpec) -> float:
    """Discrete L2 norm sqrt(sum r^2 dx)."""
    return float(np.sqrt(np.sum(np.abs(r) ** 2) * grid.spacing))


def weighted_l2_norm(
    r: ScalarField, P: ScalarField, grid: GridSpec, rel: float = 0.0
) -> float:
    """Probability-weighted L2 norm sqrt(sum P r^2 dx).

    Points with P below ``rel * max(P)`` are left out.
    """
    r = np.where(P >= rel * np.max(P), np.abs(r), 0.0)
    return float(np.sqrt(np.sum(P * r**2) * grid.spacing))
