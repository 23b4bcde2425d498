"""Tests for the madelung-lab command line interface."""

import filecmp
from os import listdir
from os.path import abspath, dirname, isfile, join

import pandas as pd
import pytest
import yaml
from click.testing import CliRunner

from madelung_lab import __version__
from madelung_lab.cli.main import main
from madelung_lab.utils import KG_COLUMNS, read_json

TESTDATADIR = join(dirname(abspath(__file__)), "data")


def _config(tmpdir, name, base="free_gaussian.yml", **sections):
    """Copy a test configuration with some sections replaced."""
    with open(join(TESTDATADIR, base)) as f:
        opt = yaml.safe_load(f)
    for section, kwargs in sections.items():
        opt[section] = {**opt.get(section, {}), **kwargs}
    fn = join(tmpdir, name)
    with open(fn, "w") as f:
        yaml.safe_dump(opt, f)
    return fn


def _invoke(args):
    return CliRunner().invoke(main, args, catch_exceptions=False)


def test_cli_version():
    r = _invoke(["--version"])
    assert r.exit_code == 0
    assert __version__ in r.output
    r = _invoke(["--help"])
    assert r.exit_code == 0
    for command in ["evolve", "kg", "audit", "uncertainty", "trajectories"]:
        assert command in r.output


@pytest.fixture(scope="module")
def free_out(tmp_path_factory):
    out = str(tmp_path_factory.mktemp("cli_free"))
    r = _invoke(["evolve", "-i", join(TESTDATADIR, "free_gaussian.yml"), "-o", out])
    assert r.exit_code == 0
    return out


def test_evolve(free_out):
    assert isfile(join(free_out, "madelung_run.yml"))
    assert isfile(join(free_out, "madelung_lab.log"))
    index = pd.read_csv(join(free_out, "snapshots", "spectral", "index.csv"))
    assert len(index) == 11
    assert list(index["step"]) == list(range(0, 101, 10))
    summary = read_json(join(free_out, "summary.json"))
    assert summary["solvers"]["spectral"]["norm_drift"] < 1e-12
    assert summary["config"]["global"]["seed"] == 7


def test_evolve_reproducible(free_out, tmpdir):
    out = join(tmpdir, "rerun")
    r = _invoke(["evolve", "-i", join(TESTDATADIR, "free_gaussian.yml"), "-o", out])
    assert r.exit_code == 0
    for sub in ["", join("snapshots", "spectral")]:
        files = [fn for fn in listdir(join(free_out, sub)) if "." in fn]
        files = [fn for fn in files if not fn.endswith(".log")]
        match, mismatch, errors = filecmp.cmpfiles(
            join(free_out, sub), join(out, sub), files, shallow=False
        )
        assert mismatch == [] and errors == []


def test_evolve_config_error(tmpdir):
    out = join(tmpdir, "bad")
    r = _invoke(["evolve", "-i", join(TESTDATADIR, "bad_potential.yml"), "-o", out])
    assert r.exit_code == 2
    with open(join(out, "madelung_lab.log")) as f:
        assert "setup_potential.kind" in f.read()


def test_evolve_missing_config(tmpdir):
    r = _invoke(["evolve", "-i", join(tmpdir, "missing.yml"), "-o", str(tmpdir)])
    assert r.exit_code == 2


def test_evolve_zero_steps(tmpdir):
    config = _config(tmpdir, "zero.yml", setup_solver={"n_steps": 0})
    out = join(tmpdir, "zero")
    r = _invoke(["evolve", "-i", config, "-o", out])
    assert r.exit_code == 0
    index = pd.read_csv(join(out, "snapshots", "spectral", "index.csv"))
    assert len(index) == 1
    assert index["time"][0] == 0.0


@pytest.mark.timeout(300)
def test_evolve_both(tmpdir):
    out = join(tmpdir, "both")
    r = _invoke(["evolve", "-i", join(TESTDATADIR, "ho_ground.yml"), "-o", out])
    assert r.exit_code == 0
    for solver in ["spectral", "hydro"]:
        files = listdir(join(out, "snapshots", solver))
        assert "index.csv" in files
        assert "snapshot_00100.json" in files
    summary = read_json(join(out, "summary.json"))
    assert summary["cross_validation"]["completed"]


@pytest.mark.timeout(300)
def test_kg(tmpdir):
    out = join(tmpdir, "kg")
    r = _invoke(["kg", "-i", join(TESTDATADIR, "kg_packet.yml"), "-o", out])
    assert r.exit_code == 0
    df = pd.read_csv(join(out, "snapshots", "kg", "snapshot_00000.csv"))
    assert list(df.columns) == KG_COLUMNS
    r = _invoke(["audit", join(out, "snapshots", "kg")])
    assert r.exit_code == 0
    report = read_json(join(out, "snapshots", "kg", "audit.json"))
    assert report["relativistic_hjb_residual_L2"] < 1e-2
    # a nonrelativistic initial state cannot be evolved with the kg solver
    r = _invoke(["kg", "-i", join(TESTDATADIR, "free_gaussian.yml"), "-o", out])
    assert r.exit_code == 2


@pytest.mark.timeout(300)
def test_audit_uncertainty(free_out, tmpdir):
    snapshot_dir = join(free_out, "snapshots", "spectral")
    out = join(tmpdir, "analysis")
    r = _invoke(["audit", snapshot_dir, "-o", out])
    assert r.exit_code == 0
    report = read_json(join(out, "audit.json"))
    assert report["n_snapshots"] == 11
    assert report["uncertainty"]["all_bounds_hold"]
    assert len(report["series"]["time"]) == 11
    r = _invoke(["uncertainty", snapshot_dir, "-o", out])
    assert r.exit_code == 0
    report = read_json(join(out, "uncertainty.json"))
    assert report["max_product_exact_deviation"] < 1e-10


def test_audit_empty_dir(tmpdir):
    empty = join(tmpdir, "empty")
    r = _invoke(["audit", empty])
    assert r.exit_code == 1
    assert not isfile(join(empty, "audit.json"))


@pytest.mark.timeout(300)
def test_trajectories(free_out, tmpdir):
    snapshot_dir = join(free_out, "snapshots", "spectral")
    config = join(TESTDATADIR, "free_gaussian.yml")
    out = join(tmpdir, "trajectories")
    r = _invoke(["trajectories", snapshot_dir, "-i", config, "-o", out, "-q"])
    assert r.exit_code == 0
    summary = read_json(join(out, "trajectories", "summary.json"))
    assert summary["no_crossing"]
    assert summary["ensemble"]["passed"]
    df = pd.read_csv(join(out, "trajectories", "trajectory_0.csv"))
    assert list(df.columns) == ["t", "x", "v", "P_at_x"]
    assert df["t"].iloc[-1] == pytest.approx(1.0)
