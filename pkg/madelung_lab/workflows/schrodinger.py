"""Split-step reference solver for the Schrödinger equation and closed-form states."""

import logging
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np
from scipy import fft

from ..spectral_utils import (
    GridSpec,
    PhysicalConstants,
    ScalarField,
    WaveField,
    check_finite,
    circular_mean,
    differentiate,
)

__all__ = [
    "POTENTIAL_KINDS",
    "ORACLE_KINDS",
    "PotentialSpec",
    "potential_field",
    "step_split",
    "evolve",
    "oracle_state",
    "energy",
    "expectation_position",
]

logger = logging.getLogger(__name__)

POTENTIAL_KINDS = ["none", "harmonic", "polynomial"]
ORACLE_KINDS = ["free_gaussian", "ho_ground", "ho_coherent", "plane_wave"]


@dataclass(frozen=True)
class PotentialSpec:
    """External potential description.

    ``harmonic`` evaluates V = m omega^2 (x - center)^2 / 2, ``polynomial``
    evaluates sum_i coefficients[i] * (x - center)^i.
    """

    kind: str = "none"
    omega: float = 1.0
    center: float = 0.0
    coefficients: Tuple[float, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.kind not in POTENTIAL_KINDS:
            raise ValueError(
                f"potential kind {self.kind!r} not understood, "
                f"select from {POTENTIAL_KINDS}"
            )
        if self.kind == "harmonic" and not self.omega > 0:
            raise ValueError(f"harmonic omega must be positive, got {self.omega!r}")
        if self.kind == "polynomial" and len(self.coefficients) == 0:
            raise ValueError("polynomial potential needs at least one coefficient")


def potential_field(
    spec: PotentialSpec, grid: GridSpec, constants: PhysicalConstants
) -> ScalarField:
    """Evaluate the potential on the grid."""
    xs = grid.x - spec.center
    if spec.kind == "none":
        V = np.zeros(grid.n_points)
    elif spec.kind == "harmonic":
        V = 0.5 * constants.mass * spec.omega**2 * xs**2
    else:
        V = np.polynomial.polynomial.polyval(xs, np.asarray(spec.coefficients))
    return check_finite(V, "potential")


def _kinetic_factor(grid: GridSpec, constants: PhysicalConstants, dt: float):
    return np.exp(-1j * constants.hbar * grid.k**2 * dt * 0.5 * constants.inv_mass)


def step_split(
    psi: WaveField,
    V: ScalarField,
    dt: float,
    grid: GridSpec,
    constants: PhysicalConstants = PhysicalConstants(),
) -> WaveField:
    """One Strang split step: half potential, full kinetic, half potential."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    psi = check_finite(grid.check(psi), "psi")
    half_v = np.exp(-0.5j * V * dt / constants.hbar)
    psi = half_v * psi
    psi = fft.ifft(_kinetic_factor(grid, constants, dt) * fft.fft(psi))
    return half_v * psi


def evolve(
    psi0: WaveField,
    V: ScalarField,
    dt: float,
    n_steps: int,
    snapshot_every: int,
    grid: GridSpec,
    constants: PhysicalConstants = PhysicalConstants(),
    t0: float = 0.0,
    logger: logging.Logger = logger,
) -> List[Tuple[float, WaveField]]:
    """Evolve psi0 with the split-step method and collect snapshots.

    Parameters
    ----------
    psi0 : WaveField
        Normalized initial state.
    V : ScalarField
        Time-independent potential.
    dt : float
        Time step.
    n_steps : int
        Number of steps; 0 returns only the initial snapshot.
    snapshot_every : int
        Snapshot cadence in steps. The initial state is always included; the final
        state only when ``n_steps`` is a multiple of the cadence.
    grid, constants
        Grid and physical constants.
    t0 : float, optional
        Initial time.

    Returns
    -------
    list of (float, WaveField)
    """
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
    psi = check_finite(grid.check(psi0), "psi0").astype(complex)
    half_v = np.exp(-0.5j * V * dt / constants.hbar)
    kinetic = _kinetic_factor(grid, constants, dt)
    snapshots = [(t0, psi.copy())]
    for step in range(1, n_steps + 1):
        psi = half_v * fft.ifft(kinetic * fft.fft(half_v * psi))
        if step % snapshot_every == 0:
            snapshots.append((t0 + step * dt, psi.copy()))
    norm0 = np.sum(np.abs(snapshots[0][1]) ** 2) * grid.spacing
    norm1 = np.sum(np.abs(psi) ** 2) * grid.spacing
    logger.debug(f"Split-step run finished, norm drift {abs(norm1 - norm0):.2e}")
    return snapshots


def oracle_state(
    kind: str,
    grid: GridSpec,
    constants: PhysicalConstants = PhysicalConstants(),
    **params,
) -> WaveField:
    """Closed-form state evaluated on the grid.

    Parameters
    ----------
    kind : {'free_gaussian', 'ho_ground', 'ho_coherent', 'plane_wave'}
        State family.
    grid, constants
        Grid and physical constants.
    **params
        * free_gaussian: sigma0 (1.0), x0 (0.0), k0 (0.0), t (0.0)
        * ho_ground: omega (constants.omega), t (0.0), center (0.0)
        * ho_coherent: omega (constants.omega), x0 (1.0), t (0.0), center (0.0)
        * plane_wave: k, commensurate with the cell
    """
    hbar, m = constants.hbar, constants.mass
    x = grid.x
    t = float(params.pop("t", 0.0))
    if kind == "free_gaussian":
        sigma0 = float(params.pop("sigma0", 1.0))
        x0 = float(params.pop("x0", 0.0))
        k0 = float(params.pop("k0", 0.0))
        alpha = 1 + 1j * hbar * t / (2 * m * sigma0**2)
        xs = x - x0 - hbar * k0 * t / m
        psi = (
            (2 * np.pi * sigma0**2) ** -0.25
            / np.sqrt(alpha)
            * np.exp(-(xs**2) / (4 * sigma0**2 * alpha))
            * np.exp(1j * (k0 * x - hbar * k0**2 * t / (2 * m)))
        )
    elif kind in ["ho_ground", "ho_coherent"]:
        omega = float(params.pop("omega", constants.omega))
        center = float(params.pop("center", 0.0))
        x0 = float(params.pop("x0", 1.0)) if kind == "ho_coherent" else 0.0
        xc = x0 * np.cos(omega * t)
        p = -m * omega * x0 * np.sin(omega * t)
        xs = x - center
        phase = p * xs / hbar - 0.5 * omega * t - 0.5 * xc * p / hbar
        psi = (m * omega / (np.pi * hbar)) ** 0.25 * np.exp(
            -m * omega * (xs - xc) ** 2 / (2 * hbar) + 1j * phase
        )
    elif kind == "plane_wave":
        k = float(params.pop("k"))
        turns = k * grid.length / (2 * np.pi)
        if abs(turns - round(turns)) > 1e-9:
            raise ValueError(f"plane wave k={k} is not commensurate with the cell")
        psi = np.exp(1j * k * x - 0.5j * hbar * k**2 * t / m) / np.sqrt(grid.length)
    else:
        raise ValueError(
            f"oracle kind {kind!r} not understood, select from {ORACLE_KINDS}"
        )
    if params:
        raise ValueError(f"unexpected parameters for {kind}: {sorted(params)}")
    return psi


def energy(
    psi: WaveField,
    V: ScalarField,
    grid: GridSpec,
    constants: PhysicalConstants = PhysicalConstants(),
) -> float:
    """Expectation value of the Hamiltonian."""
    dpsi = differentiate(psi, grid)
    kinetic = 0.5 * constants.hbar**2 * constants.inv_mass * np.abs(dpsi) ** 2
    return float(np.sum(kinetic + V * np.abs(psi) ** 2) * grid.spacing)


def expectation_position(psi: WaveField, grid: GridSpec) -> float:
    """Periodic-safe mean position of |psi|^2."""
    return circular_mean(np.abs(psi) ** 2, grid)
