"""Free Klein-Gordon evolution in 1+1 dimensions and the relativistic field checks.

Signature (+, -) with x0 = ct: for a scalar field the four-gradient square is
dS.dS = (dS/dt)^2 / c^2 - (dS/dx)^2 and the d'Alembertian is
box = (1/c^2) d2/dt2 - d2/dx2. Wave functions follow Psi = sqrt(P) exp(+iS/hbar),
so a positive-frequency mode exp(i(kx - wt)) has dS/dx = hbar k, dS/dt = -hbar w.
"""

import logging
from dataclasses import dataclass, replace
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy import fft
from scipy.integrate import trapezoid

from ..spectral_utils import (
    GridSpec,
    PhysicalConstants,
    ScalarField,
    WaveField,
    check_finite,
    check_node_free,
    differentiate,
    floored,
    l2_norm,
    time_derivative,
    uniform_spacing,
    weighted_l2_norm,
)
from .audit import RESIDUAL_FLOOR

__all__ = [
    "KG_KINDS",
    "KGState",
    "kg_frequency",
    "kg_state",
    "kg_step",
    "kg_evolve",
    "kg_decompose",
    "kg_state_from_fields",
    "kg_charge",
    "covariant_continuity_residual",
    "relativistic_hjb_residual",
    "relativistic_osmotic_velocity",
    "kg_lagrangian_quadrature",
]

logger = logging.getLogger(__name__)

KG_KINDS = ["mode", "rest", "packet"]


@dataclass(frozen=True, eq=False)
class KGState:
    """Field Psi and its time derivative at one time instant."""

    Psi: WaveField
    dPsi_dt: WaveField
    grid: GridSpec
    time: float = 0.0

    def __post_init__(self):
        check_finite(self.grid.check(self.Psi, "Psi"), "Psi")
        check_finite(self.grid.check(self.dPsi_dt, "dPsi_dt"), "dPsi_dt")

    @property
    def P(self) -> ScalarField:
        return np.abs(self.Psi) ** 2


def kg_frequency(
    k: np.ndarray, constants: PhysicalConstants = PhysicalConstants()
) -> np.ndarray:
    """Dispersion relation w(k) = c sqrt(k^2 + (mc/hbar)^2)."""
    return constants.c * np.sqrt(np.asarray(k) ** 2 + constants.compton_wavenumber**2)


def _positive_frequency_rate(Psi, grid, constants):
    """dPsi/dt of the positive-frequency solution through Psi."""
    return fft.ifft(-1j * kg_frequency(grid.k, constants) * fft.fft(Psi))


def kg_state(
    kind: str,
    grid: GridSpec,
    constants: PhysicalConstants = PhysicalConstants(),
    **params,
) -> KGState:
    """Positive-frequency initial state with unit integral of |Psi|^2.

    Parameters
    ----------
    kind : {'mode', 'rest', 'packet'}
        'mode' is the plane wave exp(ikx) with k commensurate with the cell, 'rest'
        the k = 0 mode and 'packet' a Gaussian envelope of density standard
        deviation ``sigma`` centered at ``x0`` with carrier wavenumber ``k0``.
    grid, constants
        Grid and physical constants.
    **params
        k (mode); sigma (1.0), x0 (0.0), k0 (0.0) (packet); t (0.0) for mode and
        rest.
    """
    x = grid.x
    if kind in ["mode", "rest"]:
        k = float(params.pop("k", 0.0)) if kind == "mode" else 0.0
        t = float(params.pop("t", 0.0))
        turns = k * grid.length / (2 * np.pi)
        if abs(turns - round(turns)) > 1e-9:
            raise ValueError(f"mode k={k} is not commensurate with the cell")
        w = float(kg_frequency(k, constants))
        Psi = np.exp(1j * (k * x - w * t)) / np.sqrt(grid.length)
        dPsi = -1j * w * Psi
    elif kind == "packet":
        sigma = float(params.pop("sigma", 1.0))
        x0 = float(params.pop("x0", 0.0))
        k0 = float(params.pop("k0", 0.0))
        if not sigma > 0:
            raise ValueError(f"sigma must be positive, got {sigma!r}")
        Psi = np.exp(-((x - x0) ** 2) / (4 * sigma**2) + 1j * k0 * x)
        Psi = Psi / np.sqrt(np.sum(np.abs(Psi) ** 2) * grid.spacing)
        dPsi = _positive_frequency_rate(Psi, grid, constants)
        t = 0.0
    else:
        raise ValueError(
            f"Klein-Gordon kind {kind!r} not understood, select from {KG_KINDS}"
        )
    if params:
        raise ValueError(f"unexpected parameters for {kind}: {sorted(params)}")
    return KGState(Psi=Psi, dPsi_dt=dPsi, grid=grid, time=t)


def kg_step(
    state: KGState, dt: float, constants: PhysicalConstants = PhysicalConstants()
) -> KGState:
    """Advance every Fourier mode exactly by dt."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    w = kg_frequency(state.grid.k, constants)
    cos, sin = np.cos(w * dt), np.sin(w * dt)
    # sin(w dt) / w, finite at w = 0
    sinc = dt * np.sinc(w * dt / np.pi)
    a, b = fft.fft(state.Psi), fft.fft(state.dPsi_dt)
    return replace(
        state,
        Psi=fft.ifft(a * cos + b * sinc),
        dPsi_dt=fft.ifft(-w * sin * a + b * cos),
        time=state.time + dt,
    )


def kg_evolve(
    state0: KGState,
    dt: float,
    n_steps: int,
    snapshot_every: int = 1,
    constants: PhysicalConstants = PhysicalConstants(),
    logger: logging.Logger = logger,
) -> List[KGState]:
    """Snapshots every ``snapshot_every`` steps of size dt, starting with state0."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    if n_steps < 0 or snapshot_every < 1:
        raise ValueError(
            f"n_steps must be >= 0 and snapshot_every >= 1, "
            f"got {n_steps} and {snapshot_every}"
        )
    if n_steps % snapshot_every != 0:
        logger.warning(
            f"n_steps={n_steps} is not a multiple of snapshot_every={snapshot_every}, "
            "the final state is not stored"
        )
    snapshots = [state0]
    for i in range(1, n_steps // snapshot_every + 1):
        state = kg_step(state0, i * snapshot_every * dt, constants)
        snapshots.append(state)
    charge0 = kg_charge(state0, constants)
    drift = abs(kg_charge(snapshots[-1], constants) - charge0)
    logger.debug(f"Klein-Gordon run finished, charge drift {drift:.2e}")
    return snapshots


def kg_decompose(
    state: KGState, constants: PhysicalConstants = PhysicalConstants()
) -> Tuple[ScalarField, ScalarField, ScalarField]:
    """Density and four-gradient of S from the current formulas.

    Returns
    -------
    P, dS_dt, dS_dx : ScalarField

    Raises
    ------
    NodeError
        If |Psi|^2 has a node.
    """
    P = state.P
    check_node_free(P, name="|Psi|^2")
    Pf = floored(P)
    conj = np.conj(state.Psi)
    dS_dt = constants.hbar * np.imag(conj * state.dPsi_dt) / Pf
    dS_dx = constants.hbar * np.imag(conj * differentiate(state.Psi, state.grid)) / Pf
    return P, dS_dt, dS_dx


def kg_state_from_fields(
    P: ScalarField,
    S: ScalarField,
    dS_dt: ScalarField,
    dP_dt: ScalarField,
    grid: GridSpec,
    time: float = 0.0,
    constants: PhysicalConstants = PhysicalConstants(),
) -> KGState:
    """Rebuild (Psi, dPsi/dt) from stored density and action fields."""
    Psi = np.sqrt(np.clip(P, 0.0, None)) * np.exp(1j * S / constants.hbar)
    dPsi = Psi * (0.5 * dP_dt / floored(P) + 1j * dS_dt / constants.hbar)
    return KGState(Psi=Psi, dPsi_dt=dPsi, grid=grid, time=time)


def kg_charge(
    state: KGState, constants: PhysicalConstants = PhysicalConstants()
) -> float:
    """Conserved charge (hbar / m c^2) int Im(Psi dPsi*/dt) dx.

    For m = 0 the integral is divided by c instead.
    """
    integral = np.sum(np.imag(state.Psi * np.conj(state.dPsi_dt))) * state.grid.spacing
    if constants.mass == 0:
        return float(integral / constants.c)
    return float(constants.hbar * integral / (constants.mass * constants.c**2))


@dataclass
class _KGStack:
    grid: GridSpec
    times: np.ndarray
    dt: float
    P: np.ndarray
    dS_dt: np.ndarray
    dS_dx: np.ndarray
    R: np.ndarray
    dR_dt: np.ndarray


def _kg_stack(series: Sequence[KGState], constants: PhysicalConstants) -> _KGStack:
    series = list(series)
    if len(series) < 2:
        raise ValueError(f"at least two snapshots are needed, got {len(series)}")
    times = np.array([s.time for s in series])
    dt = uniform_spacing(times)
    fields = [kg_decompose(s, constants) for s in series]
    P = np.stack([f[0] for f in fields])
    R = np.sqrt(P)
    Rf = np.sqrt(np.stack([floored(p) for p in P]))
    re = np.stack([np.real(np.conj(s.Psi) * s.dPsi_dt) for s in series])
    return _KGStack(
        grid=series[0].grid,
        times=times,
        dt=dt,
        P=P,
        dS_dt=np.stack([f[1] for f in fields]),
        dS_dx=np.stack([f[2] for f in fields]),
        R=R,
        dR_dt=re / Rf,
    )


def covariant_continuity_residual(
    series: Sequence[KGState], constants: PhysicalConstants = PhysicalConstants()
) -> np.ndarray:
    """L2 norm of (1/c^2) d/dt(P dS/dt) - d/dx(P dS/dx) per snapshot."""
    st = _kg_stack(series, constants)
    rate = time_derivative(st.P * st.dS_dt, st.dt) / constants.c**2
    return np.array(
        [
            l2_norm(rate[i] - differentiate(st.P[i] * st.dS_dx[i], st.grid), st.grid)
            for i in range(len(st.times))
        ]
    )


def _box_over_R(st: _KGStack, constants) -> np.ndarray:
    d2R_dt2 = time_derivative(st.dR_dt, st.dt)
    out = []
    for i in range(len(st.times)):
        box = d2R_dt2[i] / constants.c**2 - differentiate(st.R[i], st.grid, 2)
        out.append(box / np.sqrt(floored(st.P[i])))
    return np.stack(out)


def relativistic_hjb_residual(
    series: Sequence[KGState],
    constants: PhysicalConstants = PhysicalConstants(),
    logger: logging.Logger = logger,
) -> Tuple[np.ndarray, List[ScalarField]]:
    """Relativistic Hamilton-Jacobi-Bohm residual and effective mass field.

    Parameters
    ----------
    series : sequence of KGState
        At least two node-free snapshots with uniform time spacing.
    constants : PhysicalConstants
        Physical constants.

    Returns
    -------
    residual : numpy.ndarray
        Probability-weighted L2 norm of dS.dS - m^2 c^2 - hbar^2 box(sqrt P)/sqrt P
        per snapshot, over the core P >= RESIDUAL_FLOOR * max(P).
    M_eff : list of ScalarField
        sqrt(dS.dS) / c; NaN where dS.dS is not positive. Only core points count
        towards the undefined-mass warning.
    """
    st = _kg_stack(series, constants)
    c = constants.c
    box = _box_over_R(st, constants)
    residual, M_eff = [], []
    n_bad = 0
    for i in range(len(st.times)):
        square = st.dS_dt[i] ** 2 / c**2 - st.dS_dx[i] ** 2
        r = square - (constants.mass * c) ** 2 - constants.hbar**2 * box[i]
        residual.append(weighted_l2_norm(r, st.P[i], st.grid, RESIDUAL_FLOOR))
        positive = square > 0
        core = st.P[i] >= RESIDUAL_FLOOR * np.max(st.P[i])
        n_bad += int(np.sum(~positive & core))
        root = np.sqrt(np.where(positive, square, 0.0)) / c
        M_eff.append(np.where(positive, root, np.nan))
    if n_bad:
        logger.warning(f"Effective mass undefined at {n_bad} space-time points")
    return np.array(residual), M_eff


def relativistic_osmotic_velocity(
    series: Sequence[KGState], constants: PhysicalConstants = PhysicalConstants()
) -> Dict[str, np.ndarray]:
    """Osmotic four-velocity u_mu = (hbar/2m) d_mu P / P and the quantum term.

    Returns a dictionary with the covariant components ``u_time`` and ``u_space``,
    the term ``alternative`` = m^2 u.u + m hbar d_mu u^mu, the curvature form
    ``curvature`` = hbar^2 box(sqrt P)/sqrt P and their P-weighted L2 ``deviation``
    per snapshot.
    """
    st = _kg_stack(series, constants)
    m, hbar, c = constants.mass, constants.hbar, constants.c
    coef = 0.5 * hbar * constants.inv_mass
    Pf = np.stack([floored(p) for p in st.P])
    dP_dt = 2 * st.R * st.dR_dt
    u_time = coef * dP_dt / (c * Pf)
    u_space = np.stack([coef * differentiate(p, st.grid) for p in st.P]) / Pf
    du_time = time_derivative(u_time, st.dt) / c
    curvature = hbar**2 * _box_over_R(st, constants)
    alternative, deviation = [], []
    for i in range(len(st.times)):
        div = du_time[i] - differentiate(u_space[i], st.grid)
        term = m**2 * (u_time[i] ** 2 - u_space[i] ** 2) + m * hbar * div
        alternative.append(term)
        r = term - curvature[i]
        deviation.append(weighted_l2_norm(r, st.P[i], st.grid, RESIDUAL_FLOOR))
    return {
        "u_time": u_time,
        "u_space": u_space,
        "alternative": np.stack(alternative),
        "curvature": curvature,
        "deviation": np.array(deviation),
    }


def kg_lagrangian_quadrature(
    series: Sequence[KGState], constants: PhysicalConstants = PhysicalConstants()
) -> float:
    """Space-time quadrature of P [(1/m) dS.dS + m u.u + dS/dt]."""
    st = _kg_stack(series, constants)
    ou = relativistic_osmotic_velocity(series, constants)
    c = constants.c
    values = []
    for i in range(len(st.times)):
        square = st.dS_dt[i] ** 2 / c**2 - st.dS_dx[i] ** 2
        uu = ou["u_time"][i] ** 2 - ou["u_space"][i] ** 2
        lagrangian = square * constants.inv_mass + constants.mass * uu + st.dS_dt[i]
        values.append(np.sum(st.P[i] * lagrangian) * st.grid.spacing)
    return float(trapezoid(values, st.times))
