"""Particle trajectories in the evolving (P, S) fields."""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from scipy import stats
from scipy.integrate import cumulative_trapezoid

from ..errors import NodeError
from ..spectral_utils import (
    NODE_FLOOR,
    GridSpec,
    PhysicalConstants,
    ScalarField,
    check_node_free,
    differentiate,
    fourier_interpolate,
    refine,
    wrap,
)
from .madelung import HydroState

__all__ = [
    "Trajectory",
    "EquivarianceResult",
    "bohm_velocity",
    "integrate_trajectory",
    "sample_path",
    "path_density_check",
    "sample_positions",
    "ensemble_equivariance",
    "trajectory_fan",
    "no_crossing",
]

logger = logging.getLogger(__name__)


@dataclass
class Trajectory:
    """Samples (t, x, v, P at x) along one particle path.

    Positions are wrapped into the periodic cell. ``truncated`` is set when the
    particle entered the vacuum region below the node floor; the samples then end
    at the last valid point.
    """

    x0: float
    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    P_at_x: np.ndarray
    truncated: bool = False

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {"t": self.t, "x": self.x, "v": self.v, "P_at_x": self.P_at_x}
        )

    def __len__(self):
        return len(self.t)


@dataclass
class EquivarianceResult:
    """Outcome of an ensemble run compared with the final density."""

    distance: float
    p_value: float
    n_particles: int
    n_excluded: int
    critical_distance: float
    passed: bool
    final_positions: np.ndarray = field(default_factory=lambda: np.empty(0), repr=False)

    def to_dict(self) -> Dict[str, object]:
        return {
            "distance": float(self.distance),
            "p_value": float(self.p_value),
            "n_particles": int(self.n_particles),
            "n_excluded": int(self.n_excluded),
            "critical_distance": float(self.critical_distance),
            "passed": bool(self.passed),
        }


class _FieldSeries:
    """Current, density and their gradients for a snapshot series.

    The current j = P grad S and the density are smooth through the vacuum tails,
    so both are interpolated band-limitedly and divided at the particle. Fields are
    linear in time between snapshots.
    """

    def __init__(
        self,
        snapshots: Sequence[HydroState],
        constants: PhysicalConstants,
        upsample: Optional[int] = None,
    ):
        snapshots = list(snapshots)
        if len(snapshots) == 0:
            raise ValueError("at least one snapshot is required")
        self.grid = snapshots[0].grid
        self.times = np.array([s.time for s in snapshots])
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("snapshot times must be strictly increasing")
        self.upsample = upsample
        self.inv_m = constants.inv_mass
        currents = [s.P * s.momentum() for s in snapshots]
        self.fields = {
            "j": currents,
            "P": [s.P for s in snapshots],
            "dj": [differentiate(j, self.grid) for j in currents],
            "dP": [differentiate(s.P, self.grid) for s in snapshots],
        }
        self.floors = np.array([NODE_FLOOR * np.max(s.P) for s in snapshots])
        self._fine = {}

    @property
    def t_start(self) -> float:
        return float(self.times[0])

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    def _spatial(self, name: str, i: int, x):
        if self.upsample is None:
            return fourier_interpolate(self.fields[name][i], self.grid, x)
        key = (name, i)
        if key not in self._fine:
            self._fine[key] = refine(self.fields[name][i], self.grid, self.upsample)
        x_fine, fine = self._fine[key]
        return np.interp(wrap(x, self.grid), x_fine, fine, period=self.grid.length)

    def _bracket(self, t: float):
        if len(self.times) == 1:
            return 0, 0, 0.0
        i = np.searchsorted(self.times, t, side="right") - 1
        i = int(np.clip(i, 0, len(self.times) - 2))
        w = (t - self.times[i]) / (self.times[i + 1] - self.times[i])
        return i, i + 1, float(np.clip(w, 0.0, 1.0))

    def sample(self, name: str, t: float, x):
        if name == "v":
            P = np.maximum(self.sample("P", t, x), self.floor(t))
            return self.sample("j", t, x) / P * self.inv_m
        if name == "div":
            P = np.maximum(self.sample("P", t, x), self.floor(t))
            j, dj, dP = (self.sample(key, t, x) for key in ("j", "dj", "dP"))
            return (dj * P - j * dP) / P**2 * self.inv_m
        i, j, w = self._bracket(t)
        out = self._spatial(name, i, x)
        if w > 0:
            out = (1 - w) * out + w * self._spatial(name, j, x)
        return out

    def floor(self, t: float) -> float:
        i, j, w = self._bracket(t)
        return (1 - w) * self.floors[i] + w * self.floors[j]


def bohm_velocity(
    state: HydroState,
    x: Union[float, np.ndarray],
    constants: PhysicalConstants = PhysicalConstants(),
) -> Union[float, np.ndarray]:
    """Particle velocity (1/m) dS/dx at x.

    The current P dS/dx and the density are interpolated band-limitedly and divided
    at x.

    Raises
    ------
    NodeError
        If the density at x is below the node floor.
    """
    check_node_free(state.P)
    P_at = fourier_interpolate(state.P, state.grid, x)
    floor = NODE_FLOOR * np.max(state.P)
    if np.any(np.asarray(P_at) < floor):
        raise NodeError(f"position {x} lies in the vacuum region below the node floor")
    current = fourier_interpolate(state.P * state.momentum(), state.grid, x)
    return current / P_at * constants.inv_mass


def _time_steps(t0: float, t1: float, dt: float) -> np.ndarray:
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    n = max(1, int(round((t1 - t0) / dt)))
    return np.linspace(t0, t1, n + 1)


def _rk4_positions(fields: _FieldSeries, x: np.ndarray, t: float, h: float):
    k1 = fields.sample("v", t, x)
    k2 = fields.sample("v", t + 0.5 * h, x + 0.5 * h * k1)
    k3 = fields.sample("v", t + 0.5 * h, x + 0.5 * h * k2)
    k4 = fields.sample("v", t + h, x + h * k3)
    return x + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0


def integrate_trajectory(
    snapshots: Sequence[HydroState],
    x0: float,
    dt: float,
    constants: PhysicalConstants = PhysicalConstants(),
    upsample: Optional[int] = None,
    logger: logging.Logger = logger,
) -> Trajectory:
    """Integrate dx/dt = v(x, t) with classical RK4 over the snapshot time span.

    Parameters
    ----------
    snapshots : sequence of HydroState
        Snapshot series with increasing times.
    x0 : float
        Start position at the first snapshot time.
    dt : float
        Integration step, rounded so that it divides the time span.
    constants : PhysicalConstants
        Physical constants.
    upsample : int, optional
        Refinement factor for cheaper interpolation; exact when None.

    Returns
    -------
    Trajectory
        Truncated (flag set) when the particle leaves the support.
    """
    fields = _FieldSeries(snapshots, constants, upsample)
    times = _time_steps(fields.t_start, fields.t_end, dt)
    x = float(x0)
    ts, xs, vs, ps = [], [], [], []
    truncated = False
    for n, t in enumerate(times):
        P_at = float(fields.sample("P", t, x))
        if P_at < fields.floor(t):
            truncated = True
            logger.warning(
                f"Trajectory from x0={x0} left the support at t={t:.6g}, truncated"
            )
            break
        ts.append(t)
        xs.append(float(wrap(x, fields.grid)))
        vs.append(float(fields.sample("v", t, x)))
        ps.append(P_at)
        if n + 1 < len(times):
            x = float(_rk4_positions(fields, np.array([x]), t, times[n + 1] - t)[0])
    return Trajectory(
        x0=float(x0),
        t=np.array(ts),
        x=np.array(xs),
        v=np.array(vs),
        P_at_x=np.array(ps),
        truncated=truncated,
    )


def sample_path(
    snapshots: Sequence[HydroState],
    times: Sequence[float],
    positions: Sequence[float],
    constants: PhysicalConstants = PhysicalConstants(),
) -> Trajectory:
    """Sample velocity and density along a prescribed path, Bohmian or not."""
    fields = _FieldSeries(snapshots, constants)
    times = np.asarray(times, dtype=float)
    positions = np.asarray(positions, dtype=float)
    if times.shape != positions.shape:
        raise ValueError("times and positions must have the same length")
    v = np.array([fields.sample("v", t, x) for t, x in zip(times, positions)])
    P = np.array([fields.sample("P", t, x) for t, x in zip(times, positions)])
    return Trajectory(
        x0=float(positions[0]), t=times, x=wrap(positions, fields.grid), v=v, P_at_x=P
    )


def path_density_check(
    trajectory: Trajectory,
    snapshots: Sequence[HydroState],
    constants: PhysicalConstants = PhysicalConstants(),
) -> np.ndarray:
    """Relative deviation of P along a path from P(x0, t0) exp(-int div v dt).

    The divergence of the velocity field is sampled at the path positions and
    integrated with the trapezoid rule. A truncated trajectory is checked up to its
    last valid sample.
    """
    if len(trajectory) == 0:
        return np.empty(0)
    fields = _FieldSeries(snapshots, constants)
    div = np.array(
        [fields.sample("div", t, x) for t, x in zip(trajectory.t, trajectory.x)]
    )
    integral = cumulative_trapezoid(div, trajectory.t, initial=0.0)
    predicted = trajectory.P_at_x[0] * np.exp(-integral)
    return np.abs(trajectory.P_at_x / predicted - 1.0)


def _cell_cdf(P: ScalarField, grid: GridSpec):
    """Cell edges and the CDF of the piecewise-constant density centered on the grid."""
    P = np.clip(P, 0.0, None)
    dx = grid.spacing
    edges = grid.x_min - 0.5 * dx + dx * np.arange(grid.n_points + 1)
    cdf = np.concatenate([[0.0], np.cumsum(P)])
    return edges, cdf / cdf[-1]


def sample_positions(
    P: ScalarField,
    grid: GridSpec,
    n: int,
    seed: Union[int, np.random.Generator, None] = None,
) -> np.ndarray:
    """Draw n positions from P by inverse-CDF sampling with a seeded generator."""
    if n < 0:
        raise ValueError(f"n must be non-negative, got {n}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    edges, cdf = _cell_cdf(grid.check(P), grid)
    u = rng.random(n)
    return wrap(np.interp(u, cdf, edges), grid)


def ensemble_equivariance(
    snapshots: Sequence[HydroState],
    n_particles: int,
    seed: Optional[int],
    dt: float,
    constants: PhysicalConstants = PhysicalConstants(),
    upsample: Optional[int] = 16,
    max_excluded: float = 0.01,
    logger: logging.Logger = logger,
) -> EquivarianceResult:
    """Transport an ensemble sampled from the first density to the last snapshot.

    Parameters
    ----------
    snapshots : sequence of HydroState
        Snapshot series.
    n_particles : int
        Ensemble size.
    seed : int
        Seed of the position sampler; equal seeds give identical ensembles.
    dt : float
        Integration step.
    constants : PhysicalConstants
        Physical constants.
    upsample : int, optional
        Refinement factor of the velocity interpolation, by default 16.
    max_excluded : float
        Largest fraction of particles that may leave the support.

    Returns
    -------
    EquivarianceResult
        The Kolmogorov-Smirnov distance between the final positions and the final
        density. ``passed`` is False when more than ``max_excluded`` of the
        particles were excluded.
    """
    snapshots = list(snapshots)
    if n_particles == 0:
        logger.warning("Empty ensemble requested, nothing to transport")
        return EquivarianceResult(0.0, 1.0, 0, 0, np.inf, True)
    fields = _FieldSeries(snapshots, constants, upsample)
    grid = fields.grid
    x = sample_positions(snapshots[0].P, grid, n_particles, seed)
    alive = np.ones(n_particles, dtype=bool)
    times = _time_steps(fields.t_start, fields.t_end, dt)
    for n, t in enumerate(times):
        alive &= fields.sample("P", t, x) >= fields.floor(t)
        if n + 1 < len(times):
            x = _rk4_positions(fields, x, t, times[n + 1] - t)
    n_excluded = int(n_particles - alive.sum())
    final = x[alive]
    edges, cdf = _cell_cdf(snapshots[-1].P, grid)
    shifted = np.mod(final - edges[0], grid.length) + edges[0]
    if final.size:
        result = stats.kstest(shifted, lambda y: np.interp(y, edges, cdf))
        distance, p_value = float(result.statistic), float(result.pvalue)
    else:
        distance, p_value = 1.0, 0.0
    passed = n_excluded <= max_excluded * n_particles
    if not passed:
        logger.error(
            f"{n_excluded} of {n_particles} particles left the support, "
            f"more than {max_excluded:.0%}"
        )
    elif n_excluded:
        logger.warning(f"{n_excluded} of {n_particles} particles excluded")
    logger.info(f"Ensemble of {n_particles} particles: KS distance {distance:.4f}")
    return EquivarianceResult(
        distance=distance,
        p_value=p_value,
        n_particles=n_particles,
        n_excluded=n_excluded,
        critical_distance=1.36 / np.sqrt(n_particles),
        passed=passed,
        final_positions=final,
    )


def trajectory_fan(
    snapshots: Sequence[HydroState],
    x0s: Sequence[float],
    dt: float,
    constants: PhysicalConstants = PhysicalConstants(),
    upsample: Optional[int] = None,
    logger: logging.Logger = logger,
) -> List[Trajectory]:
    """Trajectories from several start positions, ordered by start position."""
    return [
        integrate_trajectory(snapshots, x0, dt, constants, upsample, logger=logger)
        for x0 in sorted(x0s)
    ]


def no_crossing(trajectories: Sequence[Trajectory], grid: GridSpec) -> bool:
    """True if the positions keep the order of the start positions at every sample.

    Paths are unwrapped over the periodic cell, a particle passing the cell
    boundary keeps its place. The spread of the particles must stay below L.
    """
    trajectories = sorted(trajectories, key=lambda tr: tr.x0)
    if len(trajectories) < 2:
        return True
    n = min(len(tr) for tr in trajectories)
    if n == 0:
        return True
    L = grid.length
    stack = np.unwrap(np.stack([tr.x[:n] for tr in trajectories]), period=L, axis=1)
    x0 = np.array([tr.x0 for tr in trajectories])
    stack += L * np.round((x0 - stack[:, 0]) / L)[:, None]
    gaps = np.diff(stack, axis=0)
    return bool(np.all(gaps > 0) and np.all(stack[-1] - stack[0] < L))
