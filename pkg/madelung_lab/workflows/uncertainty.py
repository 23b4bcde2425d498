"""Fisher information, exact uncertainty and Heisenberg checks."""

import logging

import numpy as np
from scipy import fft

from ..errors import DegenerateDensityError
from ..spectral_utils import (
    GridSpec,
    PhysicalConstants,
    ScalarField,
    WaveField,
    centered_coordinates,
    check_finite,
    check_node_free,
    differentiate,
    floored,
)
from .audit import DiagnosticsReport
from .madelung import grad_S_from_psi

__all__ = [
    "fisher_information",
    "fisher_length",
    "delta_p0",
    "exact_uncertainty_product",
    "position_std",
    "momentum_std",
    "grad_s_spread",
    "heisenberg_report",
]

logger = logging.getLogger(__name__)

#: Fisher information below this value times 1/L^2 counts as zero
FISHER_ZERO = 1e-20
#: fraction of the cell on each side checked for boundary mass
EDGE_FRACTION = 0.05


def fisher_information(P: ScalarField, grid: GridSpec) -> float:
    """Fisher information I = int P (dP/dx / P)^2 dx of a node-free density."""
    P = check_finite(grid.check(P), "P")
    check_node_free(P)
    score = differentiate(P, grid) / floored(P)
    return float(np.sum(P * score**2) * grid.spacing)


def fisher_length(P: ScalarField, grid: GridSpec) -> float:
    """Fisher length I^(-1/2).

    Raises
    ------
    DegenerateDensityError
        If the Fisher information vanishes (uniform density).
    """
    info = fisher_information(P, grid)
    if info * grid.length**2 <= FISHER_ZERO:
        raise DegenerateDensityError(
            f"Fisher information {info:.3e} vanishes, the Fisher length is unbounded"
        )
    return float(info**-0.5)


def delta_p0(
    P: ScalarField, grid: GridSpec, constants: PhysicalConstants = PhysicalConstants()
) -> float:
    """Momentum uncertainty (hbar/2) sqrt(I) carried by the density alone."""
    return 0.5 * constants.hbar * np.sqrt(fisher_information(P, grid))


def exact_uncertainty_product(
    P: ScalarField, grid: GridSpec, constants: PhysicalConstants = PhysicalConstants()
) -> float:
    """Fisher length times delta_p0, identically hbar/2."""
    return fisher_length(P, grid) * delta_p0(P, grid, constants)


def position_std(
    P: ScalarField, grid: GridSpec, logger: logging.Logger = logger
) -> float:
    """Standard deviation of position, centered on the circular mean.

    A warning is logged when more than 1e-8 of the mass lies in the outer 5% of the
    centered window on either side, where periodic images start to matter.
    """
    P = check_finite(grid.check(P), "P")
    xs = centered_coordinates(P, grid)
    mass = np.sum(P) * grid.spacing
    edge = np.abs(xs) >= (0.5 - EDGE_FRACTION) * grid.length
    edge_mass = np.sum(P[edge]) * grid.spacing / mass
    if edge_mass > 1e-8:
        logger.warning(
            f"{edge_mass:.2e} of the mass lies near the cell boundary, "
            "position moments are affected by periodic images"
        )
    mean = np.sum(P * xs) * grid.spacing / mass
    var = np.sum(P * xs**2) * grid.spacing / mass - mean**2
    return float(np.sqrt(max(var, 0.0)))


def momentum_std(
    psi: WaveField, grid: GridSpec, constants: PhysicalConstants = PhysicalConstants()
) -> float:
    """Standard deviation of momentum from the discrete Fourier distribution."""
    psi = check_finite(grid.check(psi), "psi")
    weights = np.abs(fft.fft(psi)) ** 2
    weights = weights / np.sum(weights)
    p = constants.hbar * grid.k
    mean = np.sum(weights * p)
    var = np.sum(weights * p**2) - mean**2
    return float(np.sqrt(max(var, 0.0)))


def _grad_s_variance(psi, grid, constants) -> float:
    P = np.abs(psi) ** 2
    P = P / (np.sum(P) * grid.spacing)
    grad_S = grad_S_from_psi(psi, grid, constants)
    mean = np.sum(P * grad_S) * grid.spacing
    return float(np.sum(P * grad_S**2) * grid.spacing - mean**2)


def grad_s_spread(
    psi: WaveField, grid: GridSpec, constants: PhysicalConstants = PhysicalConstants()
) -> float:
    """Spread of the average momentum field, sqrt of its P-weighted variance."""
    return float(np.sqrt(max(_grad_s_variance(psi, grid, constants), 0.0)))


def heisenberg_report(
    psi: WaveField,
    grid: GridSpec,
    constants: PhysicalConstants = PhysicalConstants(),
    rtol: float = 1e-8,
    logger: logging.Logger = logger,
) -> DiagnosticsReport:
    """Cramer-Rao, momentum and Heisenberg bounds for one wave function.

    Parameters
    ----------
    psi : WaveField
        Node-free wave function.
    grid : GridSpec
        Periodic grid.
    constants : PhysicalConstants
        Physical constants.
    rtol : float
        Relative tolerance of the verdicts, so saturated bounds pass.

    Returns
    -------
    DiagnosticsReport
        Keys dx_fisher, dp0, dx_std, dp_std, product_exact, product_heisenberg,
        decomposition_residual, verdicts, plus grad_s_spread and the linear-sum
        reading dp_linear_sum = grad_s_spread + dp0.
    """
    P = np.abs(psi) ** 2
    P = P / (np.sum(P) * grid.spacing)
    dx_fisher = fisher_length(P, grid)
    dp0 = delta_p0(P, grid, constants)
    dx_std = position_std(P, grid, logger=logger)
    dp_std = momentum_std(psi, grid, constants)
    var_grad_s = _grad_s_variance(psi, grid, constants)
    spread = float(np.sqrt(max(var_grad_s, 0.0)))
    bound = 0.5 * constants.hbar
    verdicts = {
        "cramer_rao": bool(dx_std >= dx_fisher * (1 - rtol)),
        "momentum": bool(dp_std >= dp0 * (1 - rtol)),
        "heisenberg": bool(dx_std * dp_std >= bound * (1 - rtol)),
    }
    if not all(verdicts.values()):
        failed = [k for k, v in verdicts.items() if not v]
        logger.warning(f"Uncertainty bounds violated: {failed}")
    scalars = {
        "dx_fisher": dx_fisher,
        "dp0": dp0,
        "dx_std": dx_std,
        "dp_std": dp_std,
        "product_exact": dx_fisher * dp0,
        "product_heisenberg": dx_std * dp_std,
        "decomposition_residual": float(dp_std**2 - var_grad_s - dp0**2),
        "verdicts": verdicts,
        "grad_s_spread": spread,
        "dp_linear_sum": spread + dp0,
    }
    return DiagnosticsReport(scalars=scalars)
