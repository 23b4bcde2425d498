"""Real-valued time integration of the continuity and Hamilton-Jacobi-Bohm equations."""

import logging
from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ..errors import GridMismatchError, NodeError
from ..spectral_utils import (
    GridSpec,
    PhysicalConstants,
    ScalarField,
    WaveField,
    check_node_free,
    dealias,
    differentiate,
    l2_norm,
    node_floor,
)
from .audit import DiagnosticsReport
from .madelung import HydroState, decompose, grad_S_from_psi
from .schrodinger import evolve

__all__ = [
    "TAIL_FLOOR",
    "HydroRun",
    "hydro_rhs",
    "hydro_step_rk4",
    "iter_hydro",
    "evolve_hydro",
    "compare_runs",
    "cross_validate",
]

logger = logging.getLogger(__name__)

TAIL_FLOOR = 1e-8
CORE_FLOOR = 1e-6


@dataclass
class HydroRun:
    """Snapshots of a hydrodynamic run with the mass drift removed at each snapshot."""

    states: List[HydroState] = field(default_factory=list)
    mass_drift: List[float] = field(default_factory=list)

    @property
    def max_mass_drift(self) -> float:
        return float(max(self.mass_drift, default=0.0))

    @property
    def times(self) -> np.ndarray:
        return np.array([s.time for s in self.states])


def hydro_rhs(
    state: HydroState,
    V: ScalarField,
    constants: PhysicalConstants = PhysicalConstants(),
    tail_floor: float = TAIL_FLOOR,
    dealias_fraction: float = 2.0 / 3.0,
) -> Tuple[ScalarField, ScalarField]:
    """Tendencies of P and S.

    dP/dt = -d/dx(P dS/dx / m) and dS/dt = -[(dS/dx)^2/2m + V + Q(P)].

    Parameters
    ----------
    state : HydroState
        Node-free state; S must not wind.
    V : ScalarField
        External potential.
    constants : PhysicalConstants
        Physical constants.
    tail_floor : float
        Relative density below which the action tendency is blended with its
        probability-weighted mean, weight P / (P + tail_floor * max(P)).
    dealias_fraction : float
        Fraction of the Nyquist wavenumber kept in the tendencies.

    Returns
    -------
    dP_dt, dS_dt : ScalarField

    Raises
    ------
    NodeError
        If P has a node.
    """
    grid = state.grid
    P = np.clip(state.P, 0.0, None)
    check_node_free(P, name="P")
    inv_m = constants.inv_mass
    grad_S = differentiate(state.S, grid)
    dP = -differentiate(P * grad_S * inv_m, grid)

    R = np.sqrt(P + node_floor(P))
    Q = -0.5 * constants.hbar**2 * inv_m * differentiate(R, grid, 2) / R
    bracket = 0.5 * inv_m * grad_S**2 + V + Q
    weight = P / (P + tail_floor * np.max(P))
    mean = np.sum(P * bracket) / np.sum(P)
    dS = -(weight * bracket + (1.0 - weight) * mean)
    if dealias_fraction < 1.0:
        dP = dealias(dP, grid, dealias_fraction)
        dS = dealias(dS, grid, dealias_fraction)
    return dP, dS


def _advance(state: HydroState, dP, dS, dt: float) -> HydroState:
    return HydroState(
        P=state.P + dt * dP, S=state.S + dt * dS, grid=state.grid, time=state.time + dt
    )


def _rk4(state, V, dt, constants, tail_floor) -> Tuple[HydroState, float]:
    k1 = hydro_rhs(state, V, constants, tail_floor)
    k2 = hydro_rhs(_advance(state, *k1, 0.5 * dt), V, constants, tail_floor)
    k3 = hydro_rhs(_advance(state, *k2, 0.5 * dt), V, constants, tail_floor)
    k4 = hydro_rhs(_advance(state, *k3, dt), V, constants, tail_floor)
    dP = (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]) / 6.0
    dS = (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]) / 6.0
    P = np.clip(state.P + dt * dP, 0.0, None)
    mass = np.sum(P) * state.grid.spacing
    drift = abs(mass - np.sum(state.P) * state.grid.spacing)
    new = HydroState(
        P=P / mass, S=state.S + dt * dS, grid=state.grid, time=state.time + dt
    )
    return new, float(drift)


def hydro_step_rk4(
    state: HydroState,
    V: ScalarField,
    dt: float,
    constants: PhysicalConstants = PhysicalConstants(),
    tail_floor: float = TAIL_FLOOR,
) -> HydroState:
    """One classical Runge-Kutta step of the hydrodynamic system.

    P is clipped at zero and renormalized to unit mass after the step.

    Raises
    ------
    NodeError
        If a node forms during the step.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    try:
        new, _ = _rk4(state, V, dt, constants, tail_floor)
        check_node_free(new.P, name="P")
    except NodeError as err:
        raise NodeError(
            f"node formed in hydrodynamic step at t={state.time + dt:.6g}: {err}; "
            "shorten the horizon or use the spectral solver",
            index=err.index,
        ) from err
    return new


def iter_hydro(
    state0: HydroState,
    V: ScalarField,
    dt: float,
    n_steps: int,
    snapshot_every: int = 1,
    constants: PhysicalConstants = PhysicalConstants(),
    tail_floor: float = TAIL_FLOOR,
) -> Iterator[Tuple[HydroState, float]]:
    """Yield (state, mass drift) at every snapshot, starting with the initial state.

    The drift is the largest per-step mass change removed by renormalization since
    the previous snapshot.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    if n_steps < 0 or snapshot_every < 1:
        raise ValueError(
            f"n_steps must be >= 0 and snapshot_every >= 1, "
            f"got {n_steps} and {snapshot_every}"
        )
    state = state0
    yield state, 0.0
    drift = 0.0
    for step in range(1, n_steps + 1):
        try:
            state, step_drift = _rk4(state, V, dt, constants, tail_floor)
            check_node_free(state.P, name="P")
        except NodeError as err:
            raise NodeError(
                f"node formed in hydrodynamic run at step {step} "
                f"(t={state0.time + step * dt:.6g}): {err}; "
                "shorten the horizon or use the spectral solver",
                index=err.index,
            ) from err
        drift = max(drift, step_drift)
        if step % snapshot_every == 0:
            yield state, drift
            drift = 0.0


def evolve_hydro(
    state0: HydroState,
    V: ScalarField,
    dt: float,
    n_steps: int,
    snapshot_every: int = 1,
    constants: PhysicalConstants = PhysicalConstants(),
    tail_floor: float = TAIL_FLOOR,
    logger: logging.Logger = logger,
) -> HydroRun:
    """Evolve a hydrodynamic state and collect snapshots.

    Parameters
    ----------
    state0 : HydroState
        Node-free, zero-winding initial state.
    V : ScalarField
        Time-independent potential.
    dt : float
        Time step.
    n_steps : int
        Number of steps.
    snapshot_every : int
        Snapshot cadence in steps.
    constants : PhysicalConstants
        Physical constants.
    tail_floor : float
        See :py:func:`hydro_rhs`.

    Returns
    -------
    HydroRun
    """
    if n_steps % snapshot_every != 0:
        logger.warning(
            f"n_steps={n_steps} is not a multiple of snapshot_every={snapshot_every}, "
            "the final state is not stored"
        )
    run = HydroRun()
    for state, drift in iter_hydro(
        state0, V, dt, n_steps, snapshot_every, constants, tail_floor
    ):
        run.states.append(state)
        run.mass_drift.append(drift)
    logger.debug(f"Hydrodynamic run finished, max mass drift {run.max_mass_drift:.2e}")
    return run


def compare_runs(
    spectral: Sequence[Tuple[float, WaveField]],
    hydro: Sequence[HydroState],
    grid: GridSpec,
    constants: PhysicalConstants = PhysicalConstants(),
    mass_drift: Optional[Sequence[float]] = None,
    t_failure: Optional[float] = None,
) -> DiagnosticsReport:
    """Compare spectral and hydrodynamic snapshots taken at the same times.

    The density deviation is the L2 norm over the grid. The momentum deviation is
    the maximum of |dS/dx| differences over the core where the spectral density
    exceeds 1e-6 of its maximum. Snapshots beyond the shorter run are ignored.
    """
    if mass_drift is None:
        mass_drift = [0.0] * len(hydro)
    records = []
    for (t, psi), state, drift in zip(spectral, hydro, mass_drift):
        if abs(t - state.time) > 1e-9 * max(1.0, abs(t)):
            raise GridMismatchError(
                f"spectral snapshot at t={t} paired with hydro snapshot at "
                f"t={state.time}"
            )
        P_ref = np.abs(psi) ** 2
        core = P_ref >= CORE_FLOOR * np.max(P_ref)
        dS_ref = grad_S_from_psi(psi, grid, constants)
        dS = differentiate(state.S, grid)
        records.append(
            {
                "time": t,
                "density_l2": l2_norm(state.P - P_ref, grid),
                "grad_s_linf": float(np.max(np.abs(dS - dS_ref)[core])),
                "mass_drift": drift,
            }
        )
    series = pd.DataFrame.from_records(
        records, columns=["time", "density_l2", "grad_s_linf", "mass_drift"]
    )
    empty = len(series) == 0
    scalars = {
        "completed": t_failure is None,
        "t_failure": t_failure,
        "max_density_l2": 0.0 if empty else float(series["density_l2"].max()),
        "max_grad_s_linf": 0.0 if empty else float(series["grad_s_linf"].max()),
        "max_mass_drift": 0.0 if empty else float(series["mass_drift"].max()),
    }
    return DiagnosticsReport(scalars=scalars, series=series)


def cross_validate(
    psi0: WaveField,
    V: ScalarField,
    dt: float,
    n_steps: int,
    grid: GridSpec,
    constants: PhysicalConstants = PhysicalConstants(),
    snapshot_every: int = 1,
    tail_floor: float = TAIL_FLOOR,
    logger: logging.Logger = logger,
) -> DiagnosticsReport:
    """Evolve psi0 with both solvers and compare them snapshot by snapshot.

    A node in the hydrodynamic run ends the comparison; the report then covers the
    snapshots up to the failure, ``completed`` is False and ``t_failure`` holds the
    first snapshot time that was not reached.

    See Also
    --------
    compare_runs
    """
    spectral = evolve(
        psi0, V, dt, n_steps, snapshot_every, grid, constants, logger=logger
    )
    state0 = decompose(psi0, grid, constants, logger=logger)
    states, drifts = [], []
    failure = None
    hydro = iter_hydro(state0, V, dt, n_steps, snapshot_every, constants, tail_floor)
    try:
        for state, drift in hydro:
            states.append(state)
            drifts.append(drift)
    except NodeError as err:
        logger.error(str(err))
        failure = spectral[len(states)][0]
    report = compare_runs(spectral, states, grid, constants, drifts, failure)
    logger.info(
        f"Cross-validation over {len(states)} snapshots: "
        f"max density L2 {report['max_density_l2']:.3e}, "
        f"max grad S Linf {report['max_grad_s_linf']:.3e}"
    )
    return report
