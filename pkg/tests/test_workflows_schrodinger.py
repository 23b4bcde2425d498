"""Tests for the split-step reference solver and the closed-form states."""

import logging

import numpy as np
import pytest

from madelung_lab.spectral_utils import GridSpec, PhysicalConstants, l2_norm
from madelung_lab.workflows import schrodinger

GRID = GridSpec(n_points=512, length=40.0)
CONSTANTS = PhysicalConstants()


def test_potential_field():
    harmonic = schrodinger.PotentialSpec(kind="harmonic", omega=2.0, center=1.0)
    constants = PhysicalConstants(mass=3.0)
    V = schrodinger.potential_field(harmonic, GRID, constants)
    assert np.allclose(V, 0.5 * 3.0 * 4.0 * (GRID.x - 1.0) ** 2)
    poly = schrodinger.PotentialSpec(kind="polynomial", coefficients=(1.0, 0.0, 2.0))
    V = schrodinger.potential_field(poly, GRID, constants)
    assert np.allclose(V, 1.0 + 2.0 * GRID.x**2)
    V = schrodinger.potential_field(schrodinger.PotentialSpec(), GRID, constants)
    assert not V.any()


@pytest.mark.parametrize(
    "kwargs",
    [
        {"kind": "quartic"},
        {"kind": "harmonic", "omega": 0.0},
        {"kind": "polynomial", "coefficients": ()},
    ],
)
def test_potential_spec_invalid(kwargs):
    with pytest.raises(ValueError):
        schrodinger.PotentialSpec(**kwargs)


@pytest.mark.parametrize(
    ("kind", "params"),
    [
        ("free_gaussian", {"sigma0": 1.0, "k0": 1.0}),
        ("ho_ground", {}),
        ("ho_coherent", {"x0": 2.0}),
        ("plane_wave", {"k": 2 * np.pi / 40.0}),
    ],
)
def test_oracle_state_normalized(kind, params):
    psi = schrodinger.oracle_state(kind, GRID, CONSTANTS, t=0.7, **params)
    assert np.sum(np.abs(psi) ** 2) * GRID.spacing == pytest.approx(1.0, abs=1e-12)


def test_oracle_state_invalid():
    with pytest.raises(ValueError, match="commensurate"):
        schrodinger.oracle_state("plane_wave", GRID, CONSTANTS, k=0.3)
    with pytest.raises(ValueError, match="not understood"):
        schrodinger.oracle_state("square_well", GRID, CONSTANTS)
    with pytest.raises(ValueError, match="unexpected"):
        schrodinger.oracle_state("ho_ground", GRID, CONSTANTS, sigma0=1.0)


def test_free_gaussian_matches_oracle():
    # the kinetic propagator is exact without potential
    V = np.zeros(GRID.n_points)
    psi0 = schrodinger.oracle_state("free_gaussian", GRID, CONSTANTS, k0=0.5)
    snapshots = schrodinger.evolve(psi0, V, 1e-3, 1000, 250, GRID, CONSTANTS)
    assert len(snapshots) == 5
    assert np.allclose([t for t, _ in snapshots], [0, 0.25, 0.5, 0.75, 1])
    for t, psi in snapshots:
        exact = schrodinger.oracle_state("free_gaussian", GRID, CONSTANTS, k0=0.5, t=t)
        assert np.max(np.abs(psi - exact)) < 1e-10


def test_step_split():
    V = np.zeros(GRID.n_points)
    psi0 = schrodinger.oracle_state("free_gaussian", GRID, CONSTANTS)
    psi = schrodinger.step_split(psi0, V, 0.1, GRID, CONSTANTS)
    exact = schrodinger.oracle_state("free_gaussian", GRID, CONSTANTS, t=0.1)
    assert np.max(np.abs(psi - exact)) < 1e-10
    with pytest.raises(ValueError):
        schrodinger.step_split(psi0, V, 0.0, GRID, CONSTANTS)


def test_ho_ground_stationary():
    spec = schrodinger.PotentialSpec(kind="harmonic", omega=1.0)
    V = schrodinger.potential_field(spec, GRID, CONSTANTS)
    psi0 = schrodinger.oracle_state("ho_ground", GRID, CONSTANTS)
    assert schrodinger.energy(psi0, V, GRID, CONSTANTS) == pytest.approx(0.5, abs=1e-10)
    snapshots = schrodinger.evolve(psi0, V, 1e-3, 1000, 500, GRID, CONSTANTS)
    P0 = np.abs(psi0) ** 2
    for _, psi in snapshots:
        assert np.max(np.abs(np.abs(psi) ** 2 - P0)) < 1e-5
    e1 = schrodinger.energy(snapshots[-1][1], V, GRID, CONSTANTS)
    assert e1 == pytest.approx(0.5, abs=1e-6)


def test_ho_coherent_oscillates():
    spec = schrodinger.PotentialSpec(kind="harmonic", omega=1.0)
    V = schrodinger.potential_field(spec, GRID, CONSTANTS)
    psi0 = schrodinger.oracle_state("ho_coherent", GRID, CONSTANTS, x0=1.0)
    snapshots = schrodinger.evolve(psi0, V, 1e-3, 1000, 250, GRID, CONSTANTS)
    assert len(snapshots) == 5
    for t, psi in snapshots:
        x_mean = schrodinger.expectation_position(psi, GRID)
        assert x_mean == pytest.approx(np.cos(t), abs=1e-6)
        exact = schrodinger.oracle_state("ho_coherent", GRID, CONSTANTS, x0=1.0, t=t)
        assert np.max(np.abs(np.abs(psi) ** 2 - np.abs(exact) ** 2)) < 1e-6


def test_strang_second_order():
    spec = schrodinger.PotentialSpec(kind="harmonic", omega=1.0)
    V = schrodinger.potential_field(spec, GRID, CONSTANTS)
    psi0 = schrodinger.oracle_state("ho_coherent", GRID, CONSTANTS, x0=1.0)
    exact = np.abs(schrodinger.oracle_state("ho_coherent", GRID, CONSTANTS, t=1.0)) ** 2
    errors = []
    for dt, n_steps in [(0.05, 20), (0.025, 40)]:
        t, psi = schrodinger.evolve(psi0, V, dt, n_steps, n_steps, GRID, CONSTANTS)[-1]
        assert t == pytest.approx(1.0)
        errors.append(l2_norm(np.abs(psi) ** 2 - exact, GRID))
    assert 3.5 < errors[0] / errors[1] < 4.5


def test_free_gaussian_energy():
    psi0 = schrodinger.oracle_state("free_gaussian", GRID, CONSTANTS, k0=1.0)
    V = np.zeros(GRID.n_points)
    # hbar^2 / (8 m sigma0^2) + hbar^2 k0^2 / 2m
    assert schrodinger.energy(psi0, V, GRID, CONSTANTS) == pytest.approx(0.625)
    snapshots = schrodinger.evolve(psi0, V, 1e-2, 100, 100, GRID, CONSTANTS)
    e1 = schrodinger.energy(snapshots[-1][1], V, GRID, CONSTANTS)
    assert abs(e1 - 0.625) < 1e-10


def test_evolve_snapshots(caplog):
    V = np.zeros(GRID.n_points)
    psi0 = schrodinger.oracle_state("free_gaussian", GRID, CONSTANTS)
    snapshots = schrodinger.evolve(psi0, V, 1e-3, 0, 10, GRID, CONSTANTS)
    assert len(snapshots) == 1
    assert snapshots[0][0] == 0.0
    with caplog.at_level(logging.WARNING):
        snapshots = schrodinger.evolve(psi0, V, 1e-3, 15, 10, GRID, CONSTANTS, t0=2.0)
    assert "not a multiple" in caplog.text
    assert [t for t, _ in snapshots] == pytest.approx([2.0, 2.01])
    with pytest.raises(ValueError):
        schrodinger.evolve(psi0, V, 1e-3, 10, 0, GRID, CONSTANTS)
