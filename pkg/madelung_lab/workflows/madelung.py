"""Madelung transform between wave functions and (P, S) fields, zero-point fields."""

import logging
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from ..errors import DegenerateDensityError, WindingError
from ..spectral_utils import (
    NODE_FLOOR,
    GridSpec,
    PhysicalConstants,
    ScalarField,
    WaveField,
    check_finite,
    check_node_free,
    differentiate,
    floored,
    node_floor,
)

__all__ = [
    "HydroState",
    "decompose",
    "compose",
    "grad_S_from_psi",
    "s0_from_P",
    "osmotic_velocity",
    "momentum_fluctuation",
    "quantum_potential",
    "unwrap_phase",
    "winding_number",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class HydroState:
    """Probability density and action function at one time instant.

    Attributes
    ----------
    P : ScalarField
        Probability density, node-free, unit mass.
    S : ScalarField
        Action function in units of hbar, internal convention
        psi = sqrt(P) exp(+iS/hbar).
    grid : GridSpec
        Grid both fields live on.
    time : float
        Time of the snapshot.
    grad_S : ScalarField, optional
        Momentum field from the probability current. When None the spectral
        derivative of S is used.
    """

    P: ScalarField
    S: ScalarField
    grid: GridSpec
    time: float = 0.0
    grad_S: Optional[ScalarField] = None

    def __post_init__(self):
        self.grid.check(self.P, "P")
        self.grid.check(self.S, "S")
        check_finite(self.P, "P")
        check_finite(self.S, "S")

    def momentum(self) -> ScalarField:
        """Return the average momentum field grad S."""
        if self.grad_S is not None:
            return self.grad_S
        return differentiate(self.S, self.grid)

    def at_time(self, time: float) -> "HydroState":
        """Return a copy stamped with another time."""
        return replace(self, time=time)


def winding_number(phase_or_psi: np.ndarray, hbar: float = 1.0) -> int:
    """Net winding of a phase around the periodic cell.

    Accepts either a complex wave function or a real action field S (in units of
    hbar); steps are wrapped into (-pi, pi] before summing.
    """
    values = np.asarray(phase_or_psi)
    if np.iscomplexobj(values):
        steps = np.angle(np.roll(values, -1) * np.conj(values))
    else:
        steps = np.diff(values / hbar, append=values[0] / hbar)
        steps = (steps + np.pi) % (2 * np.pi) - np.pi
    return int(np.rint(np.sum(steps) / (2 * np.pi)))


def _gap_start(mask: np.ndarray):
    """First index and length of the single cyclic run of False in mask."""
    n = mask.size
    gap = np.flatnonzero(~mask)
    first = int(gap[np.flatnonzero(mask[(gap - 1) % n])[0]])
    return first, gap.size


def unwrap_phase(
    psi: WaveField, grid: GridSpec, mask: Optional[np.ndarray] = None
) -> ScalarField:
    """Phase of psi unwrapped outward from the grid origin x = 0.

    With a support ``mask`` that leaves a vacuum gap, the phase is unwrapped along
    the support arc only. The value at the origin (or at the density maximum when
    the origin lies in the gap) stays in (-pi, pi].
    """
    phase = np.angle(psi)
    n = grid.n_points
    a = grid.origin_index
    if mask is None or mask.all():
        out = np.empty_like(phase)
        out[a:] = np.unwrap(phase[a:])
        out[: a + 1] = np.unwrap(phase[a::-1])[::-1]
        return out
    first, length = _gap_start(mask)
    arc = ((first + length + np.arange(n)) % n)[: n - length]
    out = phase.copy()
    out[arc] = np.unwrap(phase[arc])
    anchor = a if mask[a] else int(np.argmax(np.abs(psi)))
    out[arc] -= 2 * np.pi * np.rint((out[anchor] - phase[anchor]) / (2 * np.pi))
    return out


def _close_gap(S: ScalarField, grad_S: ScalarField, mask: np.ndarray, grid: GridSpec):
    """Fill the vacuum gap of S with a cubic Hermite bridge across the wrap."""
    n = grid.n_points
    if mask.all():
        return S
    first, length = _gap_start(mask)
    left = (first - 1) % n
    right = (first + length) % n
    h = (length + 1) * grid.spacing
    s = np.arange(1, length + 1) / (length + 1)
    h00 = 2 * s**3 - 3 * s**2 + 1
    h10 = s**3 - 2 * s**2 + s
    h01 = -2 * s**3 + 3 * s**2
    h11 = s**3 - s**2
    bridge = (
        h00 * S[left]
        + h10 * h * grad_S[left]
        + h01 * S[right]
        + h11 * h * grad_S[right]
    )
    S = S.copy()
    S[(first + np.arange(length)) % n] = bridge
    return S


def _current_gradient(psi: WaveField, grid: GridSpec, hbar: float) -> ScalarField:
    P = np.abs(psi) ** 2
    return hbar * np.imag(np.conj(psi) * differentiate(psi, grid)) / floored(P)


def decompose(
    psi: WaveField,
    grid: GridSpec,
    constants: PhysicalConstants = PhysicalConstants(),
    time: float = 0.0,
    allow_winding: bool = False,
    logger: logging.Logger = logger,
) -> HydroState:
    """Split a wave function into density and action, psi = sqrt(P) exp(iS/hbar).

    Parameters
    ----------
    psi : WaveField
        Node-free wave function.
    grid : GridSpec
        Periodic grid.
    constants : PhysicalConstants
        Physical constants (hbar is used).
    time : float, optional
        Time stamp of the returned state.
    allow_winding : bool, optional
        Accept states whose phase winds around the cell (plane waves). S is then
        the unwrapped, non-periodic phase. By default False.

    Returns
    -------
    HydroState
        P = |psi|^2, S = hbar * unwrapped phase, grad_S from the probability
        current. Inside the decayed tails S is bridged smoothly so the field is
        periodic.

    Raises
    ------
    NodeError
        If |psi|^2 drops below the node floor inside its support.
    WindingError
        If the phase winds and ``allow_winding`` is False.
    """
    psi = check_finite(grid.check(psi), "psi")
    P = np.abs(psi) ** 2
    mask = check_node_free(P, name="|psi|^2")
    grad_S = _current_gradient(psi, grid, constants.hbar)
    S = constants.hbar * unwrap_phase(psi, grid, mask)
    if mask.all():
        winding = winding_number(psi)
        if winding != 0 and not allow_winding:
            raise WindingError(
                f"phase winds {winding} times around the periodic cell; "
                "pass allow_winding=True to keep the unwrapped phase"
            )
    else:
        logger.debug(f"Bridging action over {int((~mask).sum())} vacuum points.")
        S = _close_gap(S, grad_S, mask, grid)
    return HydroState(P=P, S=S, grid=grid, time=time, grad_S=grad_S)


def compose(
    state: HydroState,
    constants: PhysicalConstants = PhysicalConstants(),
    allow_winding: bool = False,
) -> WaveField:
    """Return the normalized wave function sqrt(P) exp(iS/hbar)."""
    P, S = state.P, state.S
    if np.any(P < 0):
        idx = int(np.argmin(P))
        raise DegenerateDensityError(f"negative density {P[idx]:.3e} at index {idx}")
    winding = winding_number(S, constants.hbar)
    if winding != 0 and not allow_winding:
        raise WindingError(
            f"action S winds {winding} times around the periodic cell, "
            "it must be single valued"
        )
    psi = np.sqrt(P) * np.exp(1j * S / constants.hbar)
    norm = np.sqrt(np.sum(P) * state.grid.spacing)
    if norm == 0:
        raise DegenerateDensityError("state has zero mass")
    return psi / norm


def grad_S_from_psi(
    psi: WaveField, grid: GridSpec, constants: PhysicalConstants = PhysicalConstants()
) -> ScalarField:
    """Momentum field grad S = hbar Im(psi* grad psi) / |psi|^2 from the current.

    Below the node floor the quotient uses the floor, so the field decays to zero
    in the tails instead of amplifying round-off.
    """
    psi = check_finite(grid.check(psi), "psi")
    check_node_free(np.abs(psi) ** 2, name="|psi|^2")
    return _current_gradient(psi, grid, constants.hbar)


def s0_from_P(
    P: ScalarField,
    grid: GridSpec,
    constants: PhysicalConstants = PhysicalConstants(),
    P_ref: Optional[float] = None,
) -> ScalarField:
    """Zero-point action S0 = (hbar/2) ln(P / P_ref); P_ref defaults to max(P)."""
    P = grid.check(P)
    check_node_free(P)
    if P_ref is None:
        P_ref = float(np.max(P))
    if P_ref <= 0:
        raise ValueError(f"P_ref must be positive, got {P_ref}")
    return 0.5 * constants.hbar * np.log(floored(P) / P_ref)


def momentum_fluctuation(
    P: ScalarField, grid: GridSpec, constants: PhysicalConstants = PhysicalConstants()
) -> ScalarField:
    """Momentum fluctuation field f = grad S0 = (hbar/2) grad P / P."""
    P = grid.check(P)
    check_node_free(P)
    return 0.5 * constants.hbar * differentiate(P, grid) / floored(P)


def osmotic_velocity(
    P: ScalarField, grid: GridSpec, constants: PhysicalConstants = PhysicalConstants()
) -> ScalarField:
    """Osmotic velocity u = (hbar/2m) grad P / P."""
    return momentum_fluctuation(P, grid, constants) * constants.inv_mass


def quantum_potential(
    P: ScalarField,
    grid: GridSpec,
    constants: PhysicalConstants = PhysicalConstants(),
    form: str = "bracket",
) -> ScalarField:
    """Quantum potential of a density.

    Parameters
    ----------
    P : ScalarField
        Node-free density.
    grid : GridSpec
        Periodic grid.
    constants : PhysicalConstants
        Physical constants.
    form : {'bracket', 'sqrt'}
        'bracket' evaluates (hbar^2/4m) [(grad P/P)^2 / 2 - lap P / P];
        'sqrt' evaluates -(hbar^2/2m) lap sqrt(P) / sqrt(P). Both are the same
        function; they share no intermediate results.
    """
    P = grid.check(P)
    check_node_free(P)
    hbar, inv_m = constants.hbar, constants.inv_mass
    if form == "bracket":
        Pf = floored(P)
        dlog = differentiate(P, grid) / Pf
        return 0.25 * hbar**2 * inv_m * (0.5 * dlog**2 - differentiate(P, grid, 2) / Pf)
    elif form == "sqrt":
        R = np.sqrt(P)
        Rf = np.maximum(R, np.sqrt(node_floor(P, NODE_FLOOR)))
        return -0.5 * hbar**2 * inv_m * differentiate(R, grid, 2) / Rf
    raise ValueError(f"form must be 'bracket' or 'sqrt', got {form!r}")
