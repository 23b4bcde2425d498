"""Tests for Fisher information and the uncertainty relations."""

import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from madelung_lab.errors import DegenerateDensityError
from madelung_lab.spectral_utils import GridSpec, PhysicalConstants, normalize
from madelung_lab.workflows import schrodinger, uncertainty

GRID = GridSpec(n_points=512, length=40.0)
CONSTANTS = PhysicalConstants()


@pytest.mark.parametrize("sigma", [0.8, 1.0, 2.0])
def test_fisher_information_gaussian(sigma):
    P = normalize(np.exp(-(GRID.x**2) / (2 * sigma**2)), GRID)
    assert uncertainty.fisher_information(P, GRID) == pytest.approx(sigma**-2)
    assert uncertainty.fisher_length(P, GRID) == pytest.approx(sigma)
    assert uncertainty.position_std(P, GRID) == pytest.approx(sigma)


def test_gaussian_saturates_bounds():
    psi = schrodinger.oracle_state("free_gaussian", GRID, CONSTANTS, sigma0=1.0)
    report = uncertainty.heisenberg_report(psi, GRID, CONSTANTS)
    assert report["dx_std"] == pytest.approx(1.0, rel=1e-8)
    assert report["dp_std"] == pytest.approx(0.5, rel=1e-8)
    assert report["product_heisenberg"] == pytest.approx(0.5, rel=1e-8)
    assert report["product_exact"] == pytest.approx(0.5, abs=1e-10)
    assert all(report["verdicts"].values())


@pytest.mark.parametrize("t", [0.0, 1.0, 2.0])
def test_momentum_decomposition(t):
    # the spreading packet moves momentum variance from dp0 into grad S
    psi = schrodinger.oracle_state("free_gaussian", GRID, CONSTANTS, sigma0=1.0, t=t)
    report = uncertainty.heisenberg_report(psi, GRID, CONSTANTS)
    assert abs(report["decomposition_residual"]) < 1e-6
    sigma_t2 = 1 + t**2 / 4
    assert report["dp0"] == pytest.approx(0.5 / np.sqrt(sigma_t2), rel=1e-8)
    assert report["dp_std"] == pytest.approx(0.5, rel=1e-8)
    assert report["dp_linear_sum"] == pytest.approx(
        report["grad_s_spread"] + report["dp0"]
    )
    if t > 0:
        assert report["grad_s_spread"] > 0


@settings(max_examples=50, deadline=None)
@given(
    weight=st.floats(0.1, 0.9),
    centers=st.tuples(st.floats(-3.0, 3.0), st.floats(-3.0, 3.0)),
    widths=st.tuples(st.floats(0.7, 1.5), st.floats(0.7, 1.5)),
    k0=st.floats(-2.0, 2.0),
)
def test_gaussian_mixtures(weight, centers, widths, k0):
    gauss = [
        np.exp(-((GRID.x - c) ** 2) / (2 * s**2)) / s for c, s in zip(centers, widths)
    ]
    P = normalize(weight * gauss[0] + (1 - weight) * gauss[1], GRID)
    psi = np.sqrt(P) * np.exp(1j * k0 * GRID.x)
    report = uncertainty.heisenberg_report(psi, GRID, CONSTANTS)
    assert report["product_exact"] == pytest.approx(0.5, abs=1e-10)
    assert all(report["verdicts"].values())
    assert report["product_heisenberg"] >= 0.5 * (1 - 1e-8)
    assert abs(report["decomposition_residual"]) < 1e-6


def test_exact_product_identity():
    P = normalize(np.exp(-np.abs(GRID.x) ** 1.5 / 3), GRID)
    product = uncertainty.exact_uncertainty_product(
        P, GRID, PhysicalConstants(hbar=0.3)
    )
    assert product == pytest.approx(0.15, abs=1e-12)


def test_uniform_density():
    psi = np.ones(GRID.n_points, dtype=complex) / np.sqrt(GRID.length)
    P = np.abs(psi) ** 2
    assert uncertainty.fisher_information(P, GRID) == pytest.approx(0.0, abs=1e-20)
    with pytest.raises(DegenerateDensityError):
        uncertainty.fisher_length(P, GRID)
    with pytest.raises(DegenerateDensityError):
        uncertainty.heisenberg_report(psi, GRID, CONSTANTS)


def test_position_std_boundary_warning(caplog):
    P = normalize(np.exp(-(GRID.x**2) / (2 * 5.0**2)), GRID)
    with caplog.at_level(logging.WARNING):
        uncertainty.position_std(P, GRID)
    assert "periodic images" in caplog.text


def test_momentum_std_plane_wave():
    k = 2 * np.pi * 4 / GRID.length
    psi = np.exp(1j * k * GRID.x) / np.sqrt(GRID.length)
    assert uncertainty.momentum_std(psi, GRID, CONSTANTS) < 1e-10
    assert uncertainty.grad_s_spread(psi, GRID, CONSTANTS) < 1e-10
