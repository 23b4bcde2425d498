"""Tests for the real-valued hydrodynamic solver and its cross-validation."""

import numpy as np
import pytest

from madelung_lab.errors import GridMismatchError, NodeError
from madelung_lab.spectral_utils import GridSpec, PhysicalConstants, l2_norm
from madelung_lab.workflows import hydro, madelung, schrodinger

GRID = GridSpec(n_points=512, length=40.0)
CONSTANTS = PhysicalConstants()


@pytest.fixture()
def ho_ground():
    spec = schrodinger.PotentialSpec(kind="harmonic", omega=1.0)
    V = schrodinger.potential_field(spec, GRID, CONSTANTS)
    psi0 = schrodinger.oracle_state("ho_ground", GRID, CONSTANTS)
    return madelung.decompose(psi0, GRID, CONSTANTS), V


def test_hydro_rhs_ho_ground(ho_ground):
    state, V = ho_ground
    dP, dS = hydro.hydro_rhs(state, V, CONSTANTS)
    core = state.P >= 1e-3 * state.P.max()
    assert np.max(np.abs(dP)) < 1e-10
    # the zero-point energy hbar omega / 2 is the action rate
    assert np.max(np.abs(dS[core] + 0.5)) < 1e-8


def test_hydro_rhs_node():
    grid = GridSpec(n_points=64, length=2 * np.pi)
    P = np.cos(grid.x) ** 2 / np.pi
    state = madelung.HydroState(P=P, S=np.zeros(grid.n_points), grid=grid)
    V = np.zeros(grid.n_points)
    with pytest.raises(NodeError):
        hydro.hydro_rhs(state, V, CONSTANTS)
    with pytest.raises(NodeError, match="spectral solver"):
        hydro.hydro_step_rk4(state, V, 1e-3, CONSTANTS)


def test_hydro_step_mass(ho_ground):
    state, V = ho_ground
    new = hydro.hydro_step_rk4(state, V, 1e-3, CONSTANTS)
    assert new.time == pytest.approx(1e-3)
    assert np.sum(new.P) * GRID.spacing == pytest.approx(1.0, abs=1e-14)
    with pytest.raises(ValueError):
        hydro.hydro_step_rk4(state, V, -1e-3, CONSTANTS)


@pytest.mark.timeout(300)
def test_ho_ground_stationary(ho_ground):
    state0, V = ho_ground
    run = hydro.evolve_hydro(state0, V, 1e-3, 1000, 100, CONSTANTS)
    assert len(run.states) == 11
    assert run.times[-1] == pytest.approx(1.0)
    for state in run.states:
        assert l2_norm(state.P - state0.P, GRID) < 1e-8
    assert run.max_mass_drift < 1e-10


@pytest.mark.timeout(300)
def test_cross_validate_free_gaussian():
    V = np.zeros(GRID.n_points)
    psi0 = schrodinger.oracle_state("free_gaussian", GRID, CONSTANTS, sigma0=1.0)
    report = hydro.cross_validate(
        psi0, V, 1e-3, 500, GRID, CONSTANTS, snapshot_every=100
    )
    assert report["completed"]
    assert report["t_failure"] is None
    assert len(report.series) == 6
    assert report["time"][-1] == pytest.approx(0.5)
    assert report["max_density_l2"] < 1e-4
    # the spreading packet and the oracle agree as well
    exact = schrodinger.oracle_state("free_gaussian", GRID, CONSTANTS, t=0.5)
    state0 = madelung.decompose(psi0, GRID, CONSTANTS)
    final = list(hydro.iter_hydro(state0, V, 1e-3, 500, 500, CONSTANTS))[-1][0]
    assert l2_norm(final.P - np.abs(exact) ** 2, GRID) < 1e-4


def test_compare_runs_partial():
    V = np.zeros(GRID.n_points)
    psi0 = schrodinger.oracle_state("free_gaussian", GRID, CONSTANTS)
    spectral = schrodinger.evolve(psi0, V, 1e-3, 20, 10, GRID, CONSTANTS)
    state0 = madelung.decompose(psi0, GRID, CONSTANTS)
    states = [s for s, _ in hydro.iter_hydro(state0, V, 1e-3, 10, 10, CONSTANTS)]
    report = hydro.compare_runs(spectral, states, GRID, CONSTANTS, t_failure=0.02)
    assert not report["completed"]
    assert report["t_failure"] == 0.02
    assert len(report.series) == 2
    assert report["max_mass_drift"] == 0.0
    out = report.to_dict()
    assert out["series"]["time"] == pytest.approx([0.0, 0.01])
    shifted = [state.at_time(state.time + 1.0) for state in states]
    with pytest.raises(GridMismatchError):
        hydro.compare_runs(spectral, shifted, GRID, CONSTANTS)


def test_iter_hydro_invalid(ho_ground):
    state, V = ho_ground
    with pytest.raises(ValueError):
        next(hydro.iter_hydro(state, V, 0.0, 10))
    with pytest.raises(ValueError):
        next(hydro.iter_hydro(state, V, 1e-3, -1))


@pytest.mark.parametrize(("dealias_fraction", "tol"), [(1.0, 1e-5), (2.0 / 3.0, 1e-4)])
def test_hydro_rhs_free_gaussian_at_rest(dealias_fraction, tol):
    psi0 = schrodinger.oracle_state("free_gaussian", GRID, CONSTANTS, sigma0=1.0)
    state = madelung.decompose(psi0, GRID, CONSTANTS)
    V = np.zeros(GRID.n_points)
    dP, dS = hydro.hydro_rhs(state, V, CONSTANTS, dealias_fraction=dealias_fraction)
    core = state.P >= 1e-2 * state.P.max()
    x = GRID.x[core]
    # no flow, the action only changes through Q = 1/4 - x^2/8
    assert np.max(np.abs(dP)) < 1e-12
    assert np.max(np.abs(dS[core] - (x**2 / 8 - 0.25))) < tol


@pytest.mark.timeout(300)
def test_rk4_fourth_order():
    grid = GridSpec(n_points=256, length=40.0)
    V = np.zeros(grid.n_points)
    psi0 = schrodinger.oracle_state("free_gaussian", grid, CONSTANTS, sigma0=0.5)
    state0 = madelung.decompose(psi0, grid, CONSTANTS)
    t_end = 0.4

    def final(dt):
        n_steps = int(round(t_end / dt))
        run = hydro.iter_hydro(state0, V, dt, n_steps, n_steps, CONSTANTS)
        return list(run)[-1][0]

    reference = final(0.00125)
    exact = schrodinger.oracle_state(
        "free_gaussian", grid, CONSTANTS, sigma0=0.5, t=t_end
    )
    assert l2_norm(reference.P - np.abs(exact) ** 2, grid) < 1e-5
    errors = [l2_norm(final(dt).P - reference.P, grid) for dt in [0.02, 0.01]]
    assert errors[1] < 1e-5
    # halving dt divides the error by about 16
    assert errors[0] / errors[1] > 12


@pytest.mark.timeout(300)
def test_cross_validate_ho_ground():
    spec = schrodinger.PotentialSpec(kind="harmonic", omega=1.0)
    V = schrodinger.potential_field(spec, GRID, CONSTANTS)
    psi0 = schrodinger.oracle_state("ho_ground", GRID, CONSTANTS)
    report = hydro.cross_validate(
        psi0, V, 1e-3, 100, GRID, CONSTANTS, snapshot_every=10
    )
    assert report["completed"]
    assert len(report.series) == 11
    assert report["max_density_l2"] < 1e-8
    assert report["max_grad_s_linf"] < 1e-5
    assert report["max_mass_drift"] < 1e-10


@pytest.mark.timeout(600)
def test_cross_validate_coherent_period():
    spec = schrodinger.PotentialSpec(kind="harmonic", omega=1.0)
    V = schrodinger.potential_field(spec, GRID, CONSTANTS)
    psi0 = schrodinger.oracle_state("ho_coherent", GRID, CONSTANTS, x0=0.5)
    # 6280 steps of 1e-3 cover one period 2 pi to within 3e-3
    report = hydro.cross_validate(
        psi0, V, 1e-3, 6280, GRID, CONSTANTS, snapshot_every=628
    )
    assert report["completed"]
    assert len(report.series) == 11
    assert report["time"][-1] == pytest.approx(6.28)
    assert report["max_density_l2"] < 1e-3
