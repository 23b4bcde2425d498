"""Residuals, action functionals and fluctuation statistics of snapshot series."""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np
import pandas as pd
from scipy.integrate import trapezoid

from ..errors import GridMismatchError, WindingError
from ..spectral_utils import (
    NODE_FLOOR,
    GridSpec,
    PhysicalConstants,
    ScalarField,
    check_node_free,
    differentiate,
    l2_norm,
    time_derivative,
    uniform_spacing,
    weighted_l2_norm,
)
from .madelung import (
    HydroState,
    momentum_fluctuation,
    quantum_potential,
    winding_number,
)

__all__ = [
    "RESIDUAL_FLOOR",
    "DiagnosticsReport",
    "ActionReport",
    "continuity_residual",
    "hjb_residual",
    "classical_hj_residual",
    "fick_residual",
    "orthogonality_integral",
    "orthogonality_report",
    "rms_fluctuation",
    "mean_fluctuation",
    "action_functional",
    "energy_rate",
    "zero_point_action",
    "stationary_energy_rate",
    "audit_series",
]

logger = logging.getLogger(__name__)

#: relative density below which HJB-type residuals are not evaluated
RESIDUAL_FLOOR = 1e-8


def _plain(value):
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    return value


@dataclass
class DiagnosticsReport:
    """Named scalars plus an optional per-snapshot table."""

    scalars: Dict[str, object] = field(default_factory=dict)
    series: pd.DataFrame = field(default_factory=pd.DataFrame)

    def __getitem__(self, key):
        if key in self.scalars:
            return self.scalars[key]
        return self.series[key].to_numpy()

    def to_dict(self) -> dict:
        """Return a JSON-ready dictionary."""
        out = {k: _plain(v) for k, v in self.scalars.items()}
        if not self.series.empty:
            out["series"] = {
                col: [_plain(v) for v in self.series[col].tolist()]
                for col in self.series.columns
            }
        return out


@dataclass(frozen=True)
class ActionReport:
    """Space-time quadratures of the action integrand.

    Attributes
    ----------
    action_value : float
        Quadrature of P [dS/dt + (dS/dx)^2/2m + (m/2)u^2 + V].
    action_zpf_term : float
        Zero-point part (m/2) * quadrature of P u^2.
    action_reduced : float
        Quadrature of P [(m/2)u^2 - Q], equal to action_value on exact solutions.
    classical_part : float
        Quadrature of P [dS/dt + (dS/dx)^2/2m + V].
    fluctuation_part : float
        (1/2m) times the time integral of the squared rms fluctuation.
    integrand_deviation : float
        Largest pointwise difference between the two integrands.
    """

    action_value: float
    action_zpf_term: float
    action_reduced: float
    classical_part: float
    fluctuation_part: float
    integrand_deviation: float

    def to_dict(self) -> dict:
        return {k: float(v) for k, v in self.__dict__.items()}


@dataclass
class _Stack:
    grid: GridSpec
    times: np.ndarray
    dt: float
    P: np.ndarray
    S: np.ndarray
    grad_S: np.ndarray


def _stack(series: Sequence[HydroState], constants: PhysicalConstants) -> _Stack:
    """Stack a snapshot series, with S unwrapped along time at every grid point."""
    series = list(series)
    if len(series) < 2:
        raise ValueError(f"at least two snapshots are needed, got {len(series)}")
    grid = series[0].grid
    for state in series[1:]:
        if state.grid != grid:
            raise GridMismatchError(
                f"snapshot at t={state.time} lives on {state.grid}, expected {grid}"
            )
    times = np.array([s.time for s in series])
    dt = uniform_spacing(times)
    windings = set()
    for state in series:
        if np.all(state.P >= NODE_FLOOR * np.max(state.P)):
            windings.add(winding_number(state.S, constants.hbar))
    if len(windings) > 1:
        raise WindingError(
            f"winding number changes between snapshots: {sorted(windings)}"
        )
    hbar = constants.hbar
    S = hbar * np.unwrap(np.stack([s.S for s in series]) / hbar, axis=0)
    return _Stack(
        grid=grid,
        times=times,
        dt=dt,
        P=np.stack([s.P for s in series]),
        S=S,
        grad_S=np.stack([s.momentum() for s in series]),
    )


def continuity_residual(
    series: Sequence[HydroState], constants: PhysicalConstants = PhysicalConstants()
) -> np.ndarray:
    """L2 norm of dP/dt + d/dx(P dS/dx / m) at every snapshot."""
    st = _stack(series, constants)
    dPdt = time_derivative(st.P, st.dt)
    out = []
    for i in range(len(st.times)):
        flux = st.P[i] * st.grad_S[i] * constants.inv_mass
        out.append(l2_norm(dPdt[i] + differentiate(flux, st.grid), st.grid))
    return np.array(out)


def _hjb_terms(st: _Stack, V, constants, with_q: bool = True) -> List[ScalarField]:
    dSdt = time_derivative(st.S, st.dt)
    out = []
    for i in range(len(st.times)):
        r = dSdt[i] + 0.5 * constants.inv_mass * st.grad_S[i] ** 2 + V
        if with_q:
            r = r + quantum_potential(st.P[i], st.grid, constants)
        out.append(r)
    return out


def hjb_residual(
    series: Sequence[HydroState],
    V: ScalarField,
    constants: PhysicalConstants = PhysicalConstants(),
) -> np.ndarray:
    """Probability-weighted L2 norm of dS/dt + (dS/dx)^2/2m + V + Q per snapshot.

    The decayed tails below RESIDUAL_FLOOR * max(P) are left out; Q is not
    resolved there.

    Raises
    ------
    WindingError
        If the winding number differs between snapshots.
    """
    st = _stack(series, constants)
    terms = _hjb_terms(st, V, constants)
    return np.array(
        [
            weighted_l2_norm(r, P, st.grid, RESIDUAL_FLOOR)
            for r, P in zip(terms, st.P)
        ]
    )


def classical_hj_residual(
    series: Sequence[HydroState],
    V: ScalarField,
    constants: PhysicalConstants = PhysicalConstants(),
) -> np.ndarray:
    """As :py:func:`hjb_residual` without the quantum potential."""
    st = _stack(series, constants)
    terms = _hjb_terms(st, V, constants, with_q=False)
    return np.array(
        [
            weighted_l2_norm(r, P, st.grid, RESIDUAL_FLOOR)
            for r, P in zip(terms, st.P)
        ]
    )


def fick_residual(
    series: Sequence[HydroState], constants: PhysicalConstants = PhysicalConstants()
) -> np.ndarray:
    """L2 norm of dP/dt + (hbar/2m) d2P/dx2 per snapshot.

    The sign is kept as written in the diffusion-type relation; the residual is a
    diagnostic and does not vanish on stationary states.
    """
    st = _stack(series, constants)
    dPdt = time_derivative(st.P, st.dt)
    coef = 0.5 * constants.hbar * constants.inv_mass
    return np.array(
        [
            l2_norm(dPdt[i] + coef * differentiate(st.P[i], st.grid, 2), st.grid)
            for i in range(len(st.times))
        ]
    )


def orthogonality_integral(
    state: HydroState, constants: PhysicalConstants = PhysicalConstants()
) -> float:
    """Signed integral of P (dS/dx) f with f = (hbar/2) dP/dx / P."""
    check_node_free(state.P)
    grad_P = differentiate(state.P, state.grid)
    value = 0.5 * constants.hbar * np.sum(state.momentum() * grad_P)
    return float(value * state.grid.spacing)


def orthogonality_report(
    series: Sequence[HydroState], constants: PhysicalConstants = PhysicalConstants()
) -> Dict[str, object]:
    """Instantaneous orthogonality integrals and their time average."""
    series = list(series)
    values = np.array([orthogonality_integral(s, constants) for s in series])
    times = np.array([s.time for s in series])
    if len(series) > 1 and times[-1] > times[0]:
        average = trapezoid(values, times) / (times[-1] - times[0])
    else:
        average = float(np.mean(values))
    return {"times": times, "values": values, "time_average": float(average)}


def rms_fluctuation(
    state: HydroState, constants: PhysicalConstants = PhysicalConstants()
) -> float:
    """Root-mean-square momentum fluctuation sqrt(int P f^2 dx)."""
    f = momentum_fluctuation(state.P, state.grid, constants)
    return float(np.sqrt(np.sum(state.P * f**2) * state.grid.spacing))


def mean_fluctuation(
    state: HydroState, constants: PhysicalConstants = PhysicalConstants()
) -> float:
    """Mean momentum fluctuation int P f dx; zero for periodic densities."""
    f = momentum_fluctuation(state.P, state.grid, constants)
    return float(np.sum(state.P * f) * state.grid.spacing)


def action_functional(
    series: Sequence[HydroState],
    V: ScalarField,
    constants: PhysicalConstants = PhysicalConstants(),
) -> ActionReport:
    """Space-time quadrature of the action integrand over a snapshot series.

    The spatial integral is a Riemann sum, the time integral the trapezoid rule
    over the snapshot times.
    """
    st = _stack(series, constants)
    m, inv_m = constants.mass, constants.inv_mass
    dSdt = time_derivative(st.S, st.dt)
    full, zpf, reduced, classical, fluct = [], [], [], [], []
    deviation = 0.0
    for i in range(len(st.times)):
        P = st.P[i]
        f = momentum_fluctuation(P, st.grid, constants)
        u2 = (f * inv_m) ** 2
        Q = quantum_potential(P, st.grid, constants)
        cl = P * (dSdt[i] + 0.5 * inv_m * st.grad_S[i] ** 2 + V)
        zp = 0.5 * m * P * u2
        rd = P * (0.5 * m * u2 - Q)
        deviation = max(deviation, float(np.max(np.abs(cl + zp - rd))))
        dx = st.grid.spacing
        classical.append(np.sum(cl) * dx)
        zpf.append(np.sum(zp) * dx)
        full.append(np.sum(cl + zp) * dx)
        reduced.append(np.sum(rd) * dx)
        fluct.append(0.5 * inv_m * np.sum(P * f**2) * dx)
    t = st.times
    return ActionReport(
        action_value=float(trapezoid(full, t)),
        action_zpf_term=float(trapezoid(zpf, t)),
        action_reduced=float(trapezoid(reduced, t)),
        classical_part=float(trapezoid(classical, t)),
        fluctuation_part=float(trapezoid(fluct, t)),
        integrand_deviation=deviation,
    )


def energy_rate(
    series: Sequence[HydroState], constants: PhysicalConstants = PhysicalConstants()
) -> np.ndarray:
    """Probability-weighted average of dS/dt per snapshot; -E for eigenstates."""
    st = _stack(series, constants)
    dSdt = time_derivative(st.S, st.dt)
    dx = st.grid.spacing
    return np.array([np.sum(P * r) * dx for P, r in zip(st.P, dSdt)])


def zero_point_action(
    omega: float, t: float, dim: int = 1, hbar: float = 1.0
) -> float:
    """Zero-point contribution -dim * hbar * omega * t / 2 to the action."""
    return -0.5 * dim * hbar * omega * t


def stationary_energy_rate(
    omega: float, quanta: int = 0, dim: int = 1, hbar: float = 1.0
) -> float:
    """dS/dt of an oscillator eigenstate, -(quanta + dim/2) hbar omega."""
    return -(quanta * hbar * omega + 0.5 * dim * hbar * omega)


def audit_series(
    series: Sequence[HydroState],
    V: ScalarField,
    constants: PhysicalConstants = PhysicalConstants(),
    logger: logging.Logger = logger,
) -> DiagnosticsReport:
    """Evaluate all derivation checks on a snapshot series.

    Parameters
    ----------
    series : sequence of HydroState
        At least two node-free snapshots on one grid with uniform time spacing.
    V : ScalarField
        External potential the series was evolved in.
    constants : PhysicalConstants
        Physical constants.

    Returns
    -------
    DiagnosticsReport
        Per-snapshot residual norms and fluctuation statistics, plus maxima, the
        action quadratures and the time-averaged orthogonality integral.
    """
    series = list(series)
    logger.info(f"Auditing {len(series)} snapshots.")
    table = pd.DataFrame(
        {
            "time": [s.time for s in series],
            "continuity_residual_L2": continuity_residual(series, constants),
            "hjb_residual_L2": hjb_residual(series, V, constants),
            "classical_hj_residual_L2": classical_hj_residual(series, V, constants),
            "fick_residual_L2": fick_residual(series, constants),
            "orthogonality_integral": [
                orthogonality_integral(s, constants) for s in series
            ],
            "rms_fluctuation": [rms_fluctuation(s, constants) for s in series],
            "mean_fluctuation": [mean_fluctuation(s, constants) for s in series],
            "energy_rate": energy_rate(series, constants),
        }
    )
    action = action_functional(series, V, constants)
    ortho = orthogonality_report(series, constants)
    scalars = {
        "n_snapshots": len(series),
        "t_start": float(series[0].time),
        "t_end": float(series[-1].time),
        "continuity_residual_L2": float(table["continuity_residual_L2"].max()),
        "hjb_residual_L2": float(table["hjb_residual_L2"].max()),
        "classical_hj_residual_L2": float(table["classical_hj_residual_L2"].max()),
        "fick_residual_L2": float(table["fick_residual_L2"].max()),
        "orthogonality_time_average": ortho["time_average"],
        "rms_fluctuation_mean": float(table["rms_fluctuation"].mean()),
        "energy_rate_mean": float(table["energy_rate"].mean()),
    }
    scalars.update(action.to_dict())
    bad = [k for k, v in scalars.items() if isinstance(v, float) and not np.isfinite(v)]
    if bad:
        logger.warning(f"Non-finite diagnostics: {bad}")
    logger.debug(
        f"HJB residual max {scalars['hjb_residual_L2']:.3e}, "
        f"continuity residual max {scalars['continuity_residual_L2']:.3e}"
    )
    return DiagnosticsReport(scalars=scalars, series=table)
