"""Tests for the free Klein-Gordon evolution and the relativistic field checks."""

import logging

import numpy as np
import pytest

from madelung_lab.errors import NodeError
from madelung_lab.spectral_utils import GridSpec, PhysicalConstants, circular_mean
from madelung_lab.workflows import klein_gordon as kg

GRID = GridSpec(n_points=512, length=40.0)
CONSTANTS = PhysicalConstants()
K2 = 2 * np.pi * 2 / GRID.length


def test_kg_frequency():
    constants = PhysicalConstants(hbar=1.0, mass=1.5, c=2.0)
    assert kg.kg_frequency(0.0, constants) == pytest.approx(6.0)
    k = np.array([0.5, 1.0, 3.0])
    w = kg.kg_frequency(k, constants)
    assert np.allclose(w**2, 4.0 * (k**2 + 9.0), rtol=1e-14)
    massless = PhysicalConstants(mass=0.0, c=2.0)
    assert np.allclose(kg.kg_frequency(k, massless), 2.0 * k)


def test_mode_dispersion():
    state0 = kg.kg_state("mode", GRID, CONSTANTS, k=K2)
    series = kg.kg_evolve(state0, 0.05, 200, 50, CONSTANTS)
    assert len(series) == 5
    w = float(kg.kg_frequency(K2, CONSTANTS))
    for state in series:
        exact = kg.kg_state("mode", GRID, CONSTANTS, k=K2, t=state.time)
        assert np.max(np.abs(state.Psi - exact.Psi)) < 1e-8
        assert np.max(np.abs(state.dPsi_dt + 1j * w * state.Psi)) < 1e-8
    assert series[-1].time == pytest.approx(10.0)


def test_eigenmode_effective_mass():
    constants = PhysicalConstants(mass=1.5, c=2.0)
    state0 = kg.kg_state("mode", GRID, constants, k=K2)
    series = kg.kg_evolve(state0, 0.01, 10, 1, constants)
    residual, M_eff = kg.relativistic_hjb_residual(series, constants)
    assert residual.shape == (11,)
    assert np.max(residual) < 1e-10
    for field in M_eff:
        assert np.max(np.abs(field - 1.5)) < 1e-10
    assert np.max(kg.covariant_continuity_residual(series, constants)) < 1e-10


def test_rest_mode():
    constants = PhysicalConstants(mass=1.5, c=2.0)
    state = kg.kg_state("rest", GRID, constants, t=0.3)
    P, dS_dt, dS_dx = kg.kg_decompose(state, constants)
    assert np.allclose(P, 1 / GRID.length)
    assert np.max(np.abs(dS_dt + 1.5 * 2.0**2)) < 1e-10
    assert np.max(np.abs(dS_dx)) < 1e-10
    assert kg.kg_charge(state, constants) == pytest.approx(1.0, abs=1e-12)
    series = kg.kg_evolve(state, 0.01, 20, 2, constants)
    assert abs(kg.kg_lagrangian_quadrature(series, constants)) < 1e-10


@pytest.mark.timeout(300)
def test_packet_residuals():
    grid = GridSpec(n_points=1024, length=400.0)
    state0 = kg.kg_state("packet", grid, CONSTANTS, sigma=20.0, k0=1.0)
    series = kg.kg_evolve(state0, 0.1, 100, 10, CONSTANTS)
    assert np.max(kg.covariant_continuity_residual(series, CONSTANTS)) < 1e-3
    residual, M_eff = kg.relativistic_hjb_residual(series, CONSTANTS)
    assert np.max(residual) < 1e-3
    center = grid.origin_index
    # a quasi-monochromatic packet carries nearly the bare mass
    assert M_eff[0][center] == pytest.approx(1.0, abs=1e-2)
    osmotic = kg.relativistic_osmotic_velocity(series, CONSTANTS)
    assert np.max(osmotic["deviation"]) < 1e-3
    assert osmotic["u_space"].shape == (11, grid.n_points)


def test_charge_conservation():
    grid = GridSpec(n_points=1024, length=400.0)
    state0 = kg.kg_state("packet", grid, CONSTANTS, sigma=20.0, k0=1.0)
    q0 = kg.kg_charge(state0, CONSTANTS)
    # positive frequencies only: the charge exceeds the norm
    assert q0 > 1.0
    series = kg.kg_evolve(state0, 0.5, 400, 100, CONSTANTS)
    for state in series:
        assert kg.kg_charge(state, CONSTANTS) == pytest.approx(q0, rel=1e-12)


def test_massless_charge():
    constants = PhysicalConstants(mass=0.0)
    state = kg.kg_state("mode", GRID, constants, k=K2)
    assert kg.kg_charge(state, constants) == pytest.approx(K2, rel=1e-12)


def test_state_from_fields():
    state = kg.kg_state("mode", GRID, CONSTANTS, k=K2, t=0.4)
    w = float(kg.kg_frequency(K2, CONSTANTS))
    P = np.full(GRID.n_points, 1 / GRID.length)
    S = K2 * GRID.x - w * 0.4
    rebuilt = kg.kg_state_from_fields(
        P, S, np.full_like(P, -w), np.zeros_like(P), GRID, time=0.4
    )
    assert np.max(np.abs(rebuilt.Psi - state.Psi)) < 1e-12
    assert np.max(np.abs(rebuilt.dPsi_dt - state.dPsi_dt)) < 1e-12


def test_standing_wave_node():
    Psi = np.cos(K2 * GRID.x).astype(complex)
    state = kg.KGState(Psi=Psi, dPsi_dt=np.zeros_like(Psi), grid=GRID)
    with pytest.raises(NodeError):
        kg.kg_decompose(state, CONSTANTS)


@pytest.mark.parametrize(
    ("kind", "params"),
    [
        ("tachyon", {}),
        ("mode", {"k": 0.3}),
        ("packet", {"sigma": 0.0}),
        ("rest", {"k": 1.0}),
    ],
)
def test_kg_state_invalid(kind, params):
    with pytest.raises(ValueError):
        kg.kg_state(kind, GRID, CONSTANTS, **params)


def test_kg_evolve_invalid(caplog):
    state0 = kg.kg_state("rest", GRID, CONSTANTS)
    with pytest.raises(ValueError):
        kg.kg_evolve(state0, 0.0, 10)
    with pytest.raises(ValueError):
        kg.kg_step(state0, -1.0)
    with caplog.at_level(logging.WARNING):
        series = kg.kg_evolve(state0, 0.1, 15, 10)
    assert len(series) == 2
    assert "not a multiple" in caplog.text


@pytest.mark.timeout(300)
def test_packet_group_velocity():
    grid = GridSpec(n_points=1024, length=400.0)
    state0 = kg.kg_state("packet", grid, CONSTANTS, sigma=20.0, x0=-20.0, k0=1.0)
    series = kg.kg_evolve(state0, 10.0, 4, 1, CONSTANTS)
    centers = np.array([circular_mean(s.P, grid) for s in series])
    times = np.array([s.time for s in series])
    assert centers[0] == pytest.approx(-20.0, abs=1e-8)
    velocity = np.polyfit(times, centers, 1)[0]
    w0 = float(kg.kg_frequency(1.0, CONSTANTS))
    # c^2 k0 / w(k0) = 1/sqrt(2)
    assert velocity == pytest.approx(1.0 / w0, abs=1e-3)


def test_massless_mode_zero_mass():
    constants = PhysicalConstants(mass=0.0, c=2.0)
    state0 = kg.kg_state("mode", GRID, constants, k=K2)
    _, dS_dt, dS_dx = kg.kg_decompose(state0, constants)
    assert np.max(np.abs(dS_dt**2 / constants.c**2 - dS_dx**2)) < 1e-10
    series = kg.kg_evolve(state0, 0.01, 10, 1, constants)
    residual, M_eff = kg.relativistic_hjb_residual(series, constants)
    assert np.max(residual) < 1e-10
    for field in M_eff:
        assert np.max(np.nan_to_num(field, nan=0.0)) < 1e-6


def test_continuity_detects_perturbed_density():
    constants = PhysicalConstants(mass=1.5, c=2.0)
    state0 = kg.kg_state("mode", GRID, constants, k=K2)
    series = kg.kg_evolve(state0, 0.01, 10, 1, constants)
    baseline = kg.covariant_continuity_residual(series, constants)
    q = 2 * np.pi * 3 / GRID.length
    factor = np.sqrt(1 + 0.1 * np.cos(q * GRID.x))
    perturbed = [
        kg.KGState(
            Psi=s.Psi * factor, dPsi_dt=s.dPsi_dt * factor, grid=GRID, time=s.time
        )
        for s in series
    ]
    residual = kg.covariant_continuity_residual(perturbed, constants)
    assert np.max(baseline) < 1e-10
    assert np.min(residual) > 1e-4
    assert np.min(residual) > 1e5 * np.max(baseline)
