"""Implement the madelung_lab model class."""

import logging
import time
from os import makedirs
from os.path import dirname, isdir, isfile, join
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import pandas as pd
import xarray as xr
from hydromt.cli.cli_utils import parse_config

from . import utils, workflows
from .errors import ConfigError, DegenerateDensityError, NodeError, SnapshotError
from .spectral_utils import (
    NODE_FLOOR,
    GridSpec,
    PhysicalConstants,
    edge_ratio,
    normalize_wave,
)

__all__ = ["MadelungModel"]
logger = logging.getLogger(__name__)


class MadelungModel:
    """API for Madelung-lab runs.

    A run is configured in the build-file grammar: a ``global`` section with the
    physical constants and one section per ``setup_*`` method. All setup methods are
    called in a fixed order, sections left out use the method defaults.
    """

    _CONF = "madelung_run.yml"
    _GLOBALS = ["hbar", "mass", "c", "omega", "seed"]
    _SETUP_ORDER = [
        "setup_grid",
        "setup_potential",
        "setup_initial_state",
        "setup_solver",
        "setup_trajectories",
        "setup_output",
    ]
    _SOLVERS = ["spectral", "hydro", "kg", "both"]
    _FORMATS = ["csv", "json"]
    # parameters used per initial-state kind
    _INITIAL_PARAMS = {
        "free_gaussian": {"sigma0": 1.0, "x0": 0.0, "k0": 0.0},
        "ho_ground": {"omega": None, "center": None},
        "ho_coherent": {"omega": None, "x0": 1.0, "center": None},
        "plane_wave": {"k": 0.0},
        "kg_packet": {"sigma": 1.0, "x0": 0.0, "k0": 0.0},
        "kg_mode": {"k": 0.0},
        "kg_rest": {},
    }
    _LOCALIZED = ["free_gaussian", "ho_ground", "ho_coherent", "kg_packet"]

    def __init__(
        self,
        root: Union[str, Path] = None,
        mode: str = "w",
        config_fn: str = None,
        hbar: float = 1.0,
        mass: float = 1.0,
        c: float = 1.0,
        omega: float = 1.0,
        seed: Optional[int] = None,
        logger=logger,
    ):
        """Initialize the MadelungModel.

        Parameters
        ----------
        root : str or Path, optional
            The model root (output) location.
        mode : {'w', 'r', 'r+'}
            Write/read/append mode. Default is "w".
        config_fn : str, optional
            Name of the resolved run configuration file in root.
            Default is madelung_run.yml.
        hbar, mass, c, omega : float
            Physical constants, by default 1.
        seed : int, optional
            Seed of the ensemble sampler.
        logger
            The logger used to log messages.
        """
        if root is not None and not isinstance(root, (str, Path)):
            raise ValueError("The 'root' parameter should be a of str or Path.")
        if mode not in ["r", "r+", "w"]:
            raise ValueError(f"mode {mode!r} unknown, select from 'r', 'r+', 'w'")
        self.logger = logger
        self._root = None if root is None else str(root)
        self._mode = mode
        self._config_fn = self._CONF if config_fn is None else config_fn
        try:
            self.constants = PhysicalConstants(
                hbar=float(hbar), mass=float(mass), c=float(c), omega=float(omega)
            )
        except (TypeError, ValueError) as err:
            raise ConfigError(f"global: {err}") from err
        if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int)):
            raise ConfigError(f"global.seed: must be an integer, got {seed!r}")
        self.seed = seed
        self._config = {
            "global": {"hbar": hbar, "mass": mass, "c": c, "omega": omega, "seed": seed}
        }
        # model components
        self.grid: Optional[GridSpec] = None
        self.potential: Optional[workflows.PotentialSpec] = None
        self.V: Optional[np.ndarray] = None
        self.psi0: Optional[np.ndarray] = None
        self.kg0: Optional[workflows.KGState] = None
        self._states: Dict[str, list] = {}
        self._waves: Dict[str, list] = {}
        self._results: Dict[str, Any] = {}

    @classmethod
    def from_config(
        cls,
        config_fn: Union[str, Path],
        root: Union[str, Path] = None,
        mode: str = "w",
        overrides: Optional[Dict[str, Dict]] = None,
        logger=logger,
    ) -> "MadelungModel":
        """Create and build a model from a run configuration file.

        ``overrides`` maps section names to options that replace those read from
        the file.
        """
        try:
            opt = parse_config(str(config_fn))
        except (IOError, OSError) as err:
            raise ConfigError(f"cannot read configuration {config_fn}: {err}") from err
        except Exception as err:  # yaml scanner and parser errors
            raise ConfigError(f"cannot parse configuration {config_fn}: {err}") from err
        if not isinstance(opt, dict):
            raise ConfigError(f"configuration {config_fn} must be a mapping")
        for section, kwargs in (overrides or {}).items():
            opt[section] = {**(opt.get(section) or {}), **kwargs}
        global_sect = opt.pop("global", None) or {}
        utils.check_build_options(cls, {"global": global_sect}, cls._GLOBALS)
        model = cls(root=root, mode=mode, logger=logger, **global_sect)
        model.build(opt=opt)
        return model

    ## properties
    @property
    def root(self) -> Optional[str]:
        """Model root (output) directory."""
        return self._root

    @property
    def config(self) -> Dict[str, Dict]:
        """Resolved run configuration."""
        return self._config

    @property
    def states(self) -> Dict[str, list]:
        """Snapshot series per solver."""
        return self._states

    @property
    def results(self) -> Dict[str, Any]:
        """Run summaries and reports."""
        return self._results

    def get_config(self, key: str, fallback: Any = None) -> Any:
        """Get a config value with a dotted key, e.g. ``setup_solver.dt``."""
        branch = self._config
        for part in key.split("."):
            if not isinstance(branch, dict) or part not in branch:
                return fallback
            branch = branch[part]
        return branch

    def set_config(self, key: str, value: Any) -> None:
        """Set a config value with a dotted key, creating sections as needed."""
        parts = key.split(".")
        branch = self._config
        for part in parts[:-1]:
            branch = branch.setdefault(part, {})
        branch[parts[-1]] = value

    def _assert_write_mode(self) -> None:
        if self._mode not in ["w", "r+"]:
            raise IOError("Model opened in read-only mode")
        if self._root is None:
            raise IOError("Model root is not set")

    def _run_log_method(self, method: str, **kwargs) -> None:
        """Log the method arguments and call the method."""
        self.logger.info(f"{method}")
        for k, v in kwargs.items():
            self.logger.debug(f"{method}.{k}: {v}")
        getattr(self, method)(**kwargs)

    def build(self, opt: Optional[Dict] = None) -> None:
        """Run all setup methods with the options in opt.

        Parameters
        ----------
        opt : dict, optional
            Mapping of setup method name to keyword arguments. Unknown sections and
            options raise a ConfigError before any setup method runs.
        """
        opt = {} if opt is None else dict(opt)
        opt.pop("global", None)
        utils.check_build_options(self, opt, self._GLOBALS)
        for method in self._SETUP_ORDER:
            kwargs = opt.get(method) or {}
            self._run_log_method(method, **kwargs)

    ## setup methods
    def _require(self, component: str, method: str) -> None:
        if getattr(self, component) is None:
            raise ConfigError(f"{method}: run {self._needs[component]} first")

    _needs = {
        "grid": "setup_grid",
        "psi0": "setup_initial_state",
    }

    def setup_grid(self, n_points: int = 512, length: float = 40.0):
        """Set the periodic grid [-length/2, length/2).

        Parameters
        ----------
        n_points : int
            Number of grid points, a power of two. By default 512.
        length : float
            Cell length L. By default 40.
        """
        self.logger.info("Preparing periodic grid.")
        try:
            self.grid = GridSpec(n_points=n_points, length=float(length))
        except (TypeError, ValueError) as err:
            raise ConfigError(f"setup_grid: {err}") from err
        self._config["setup_grid"] = {"n_points": n_points, "length": float(length)}

    def setup_potential(
        self,
        kind: str = "none",
        omega: Optional[float] = None,
        center: float = 0.0,
        coefficients: Optional[List[float]] = None,
    ):
        """Set the time-independent external potential.

        Parameters
        ----------
        kind : {'none', 'harmonic', 'polynomial'}
            Potential family. By default 'none'.
        omega : float, optional
            Oscillator frequency of 'harmonic'; defaults to the global omega.
        center : float
            Center of the potential. By default 0.
        coefficients : list of float, optional
            Polynomial coefficients in increasing order, for 'polynomial'.
        """
        kind = "none" if kind is None else kind
        self.logger.info(f"Preparing {kind} potential.")
        self._require("grid", "setup_potential")
        if kind not in workflows.POTENTIAL_KINDS:
            raise ConfigError(
                f"setup_potential.kind: {kind!r} not understood, "
                f"select from {workflows.POTENTIAL_KINDS}"
            )
        omega = self.constants.omega if omega is None else omega
        try:
            self.potential = workflows.PotentialSpec(
                kind=kind,
                omega=float(omega),
                center=float(center),
                coefficients=tuple(float(c) for c in (coefficients or [])),
            )
        except (TypeError, ValueError) as err:
            raise ConfigError(f"setup_potential: {err}") from err
        if kind == "harmonic" and self.constants.mass == 0:
            raise ConfigError("setup_potential.kind: harmonic potential needs mass > 0")
        self.V = workflows.potential_field(self.potential, self.grid, self.constants)
        record = {"kind": kind, "omega": float(omega), "center": float(center)}
        if kind == "polynomial":
            record["coefficients"] = list(self.potential.coefficients)
        self._config["setup_potential"] = record

    def setup_initial_state(
        self,
        kind: str = "free_gaussian",
        sigma0: Optional[float] = None,
        sigma: Optional[float] = None,
        x0: Optional[float] = None,
        k0: Optional[float] = None,
        k: Optional[float] = None,
        omega: Optional[float] = None,
        center: Optional[float] = None,
    ):
        """Set the initial state from a closed-form family.

        Parameters
        ----------
        kind : str
            One of free_gaussian (sigma0, x0, k0), ho_ground (omega, center),
            ho_coherent (omega, x0, center), plane_wave (k), kg_packet
            (sigma, x0, k0), kg_mode (k) or kg_rest. Gaussian widths are density
            standard deviations.
        sigma0, sigma, x0, k0, k, omega, center : float, optional
            Parameters of the family; passing a parameter the kind does not use is
            an error. Oscillator states default to the potential's omega and center.
        """
        self.logger.info(f"Preparing {kind} initial state.")
        self._require("grid", "setup_initial_state")
        if kind not in self._INITIAL_PARAMS:
            raise ConfigError(
                f"setup_initial_state.kind: {kind!r} not understood, "
                f"select from {list(self._INITIAL_PARAMS)}"
            )
        given = {
            "sigma0": sigma0,
            "sigma": sigma,
            "x0": x0,
            "k0": k0,
            "k": k,
            "omega": omega,
            "center": center,
        }
        defaults = self._INITIAL_PARAMS[kind]
        for key, value in given.items():
            if value is not None and key not in defaults:
                raise ConfigError(
                    f"setup_initial_state.{key}: not used by kind {kind!r}, "
                    f"which takes {list(defaults)}"
                )
        params = {}
        for key, default in defaults.items():
            value = given[key] if given[key] is not None else default
            if value is None and key == "omega":
                pot = self.potential
                harmonic = pot is not None and pot.kind == "harmonic"
                value = pot.omega if harmonic else self.constants.omega
            elif value is None and key == "center":
                value = 0.0 if self.potential is None else self.potential.center
            params[key] = float(value)
        self.psi0, self.kg0 = None, None
        try:
            if kind.startswith("kg_"):
                kg_kind = kind[3:]
                self.kg0 = workflows.kg_state(
                    kg_kind, self.grid, self.constants, **params
                )
                P0 = self.kg0.P
            else:
                if self.constants.mass == 0:
                    raise ValueError("nonrelativistic states need mass > 0")
                psi = workflows.oracle_state(kind, self.grid, self.constants, **params)
                self.psi0 = normalize_wave(psi, self.grid)
                P0 = np.abs(self.psi0) ** 2
        except ValueError as err:
            raise ConfigError(f"setup_initial_state: {err}") from err
        if kind in self._LOCALIZED and edge_ratio(P0) > NODE_FLOOR:
            raise ConfigError(
                f"setup_initial_state: {kind} state has not decayed at the cell "
                f"boundary (edge ratio {edge_ratio(P0):.2e} > {NODE_FLOOR:.0e}), "
                "increase setup_grid.length"
            )
        self._config["setup_initial_state"] = {"kind": kind, **params}

    def setup_solver(
        self,
        solver: str = "spectral",
        dt: float = 1e-3,
        n_steps: int = 1000,
        snapshot_every: int = 10,
        tail_floor: float = workflows.TAIL_FLOOR,
    ):
        """Set the time integration.

        Parameters
        ----------
        solver : {'spectral', 'hydro', 'kg', 'both'}
            'spectral' is the split-step Schrödinger solver, 'hydro' the real-valued
            (P, S) solver, 'both' runs the two and compares them, 'kg' is the
            Klein-Gordon solver. By default 'spectral'.
        dt : float
            Time step. By default 1e-3.
        n_steps : int
            Number of steps; 0 writes the initial snapshot only. By default 1000.
        snapshot_every : int
            Snapshot cadence in steps. By default 10.
        tail_floor : float
            Relative density below which the hydrodynamic action tendency is blended
            with its mean. By default 1e-8.
        """
        self.logger.info(f"Preparing {solver} solver.")
        if solver not in self._SOLVERS:
            raise ConfigError(
                f"setup_solver.solver: {solver!r} not understood, "
                f"select from {self._SOLVERS}"
            )
        if not isinstance(dt, (int, float)) or isinstance(dt, bool) or not dt > 0:
            raise ConfigError(f"setup_solver.dt: must be positive, got {dt!r}")
        if isinstance(n_steps, bool) or not isinstance(n_steps, int) or n_steps < 0:
            raise ConfigError(f"setup_solver.n_steps: must be >= 0, got {n_steps!r}")
        if (
            isinstance(snapshot_every, bool)
            or not isinstance(snapshot_every, int)
            or snapshot_every < 1
        ):
            raise ConfigError(
                f"setup_solver.snapshot_every: must be >= 1, got {snapshot_every!r}"
            )
        if not tail_floor > 0:
            raise ConfigError(
                f"setup_solver.tail_floor: must be positive, got {tail_floor!r}"
            )
        kind = self.get_config("setup_initial_state.kind")
        if solver == "kg" and self.kg0 is None:
            raise ConfigError(
                f"setup_solver.solver: kg needs a kg_* initial state, got {kind!r}"
            )
        if solver != "kg" and self.psi0 is None:
            raise ConfigError(
                f"setup_solver.solver: {solver} needs a nonrelativistic initial state, "
                f"got {kind!r}"
            )
        if solver in ["hydro", "both"] and workflows.winding_number(self.psi0) != 0:
            raise ConfigError(
                f"setup_solver.solver: {solver} evolves S as a periodic field and "
                "needs a zero-winding initial state"
            )
        self._config["setup_solver"] = {
            "solver": solver,
            "dt": float(dt),
            "n_steps": n_steps,
            "snapshot_every": snapshot_every,
            "tail_floor": float(tail_floor),
        }

    def setup_trajectories(
        self,
        x0: Union[float, List[float], None] = None,
        n_particles: int = 0,
        dt: Optional[float] = None,
        upsample: int = 16,
    ):
        """Set the particle trajectories computed from a snapshot series.

        Parameters
        ----------
        x0 : float or list of float, optional
            Start positions of individual trajectories. By default none.
        n_particles : int
            Size of the ensemble sampled from the initial density; 0 skips the
            ensemble. By default 0.
        dt : float, optional
            Integration step; defaults to the solver time step.
        upsample : int
            Refinement factor of the ensemble velocity interpolation. By default 16.
        """
        self.logger.info("Preparing trajectories.")
        if x0 is None:
            x0 = []
        elif not isinstance(x0, (list, tuple)):
            x0 = [x0]
        try:
            x0 = [float(x) for x in x0]
        except (TypeError, ValueError) as err:
            raise ConfigError(f"setup_trajectories.x0: {err}") from err
        if isinstance(n_particles, bool) or not isinstance(n_particles, int):
            raise ConfigError(
                "setup_trajectories.n_particles: must be an integer, "
                f"got {n_particles!r}"
            )
        if n_particles < 0:
            raise ConfigError(
                f"setup_trajectories.n_particles: must be >= 0, got {n_particles}"
            )
        dt = self.get_config("setup_solver.dt", fallback=1e-3) if dt is None else dt
        if not dt > 0:
            raise ConfigError(f"setup_trajectories.dt: must be positive, got {dt!r}")
        if isinstance(upsample, bool) or not isinstance(upsample, int) or upsample < 1:
            raise ConfigError(
                f"setup_trajectories.upsample: must be >= 1, got {upsample!r}"
            )
        self._config["setup_trajectories"] = {
            "x0": x0,
            "n_particles": n_particles,
            "dt": float(dt),
            "upsample": upsample,
        }

    def setup_output(self, format: str = "csv"):
        """Set the snapshot table format, 'csv' (default) or 'json'."""
        self.logger.info(f"Preparing {format} output.")
        if format not in self._FORMATS:
            raise ConfigError(
                f"setup_output.format: {format!r} not understood, "
                f"select from {self._FORMATS}"
            )
        self._config["setup_output"] = {"format": format}

    ## run
    def run(self) -> Dict[str, Any]:
        """Run the configured solver(s) and return the run summary."""
        solver = self.get_config("setup_solver.solver")
        if solver is None:
            raise ConfigError("setup_solver: model is not built")
        dt = self.get_config("setup_solver.dt")
        n_steps = self.get_config("setup_solver.n_steps")
        every = self.get_config("setup_solver.snapshot_every")
        self.logger.info(f"Running {solver} solver: {n_steps} steps of {dt}.")
        start = time.perf_counter()
        summary = {"solvers": {}}
        if solver in ["spectral", "both"]:
            summary["solvers"]["spectral"] = self._run_spectral(dt, n_steps, every)
        if solver in ["hydro", "both"]:
            summary["solvers"]["hydro"] = self._run_hydro(
                dt, n_steps, every, raise_on_node=solver == "hydro"
            )
        if solver == "kg":
            summary["solvers"]["kg"] = self._run_kg(dt, n_steps, every)
        if solver == "both":
            hydro = summary["solvers"]["hydro"]
            report = workflows.compare_runs(
                self._waves["spectral"],
                self._states["hydro"],
                self.grid,
                self.constants,
                mass_drift=self._results.pop("_mass_drift"),
                t_failure=hydro["t_failure"],
            )
            self._results["cross_validation"] = report
            summary["cross_validation"] = report.to_dict()
        summary.update(
            {
                "t_start": 0.0,
                "t_end": float(n_steps // every * every * dt),
                "dt": float(dt),
                "n_steps": n_steps,
                "config": self.config,
            }
        )
        self._results["summary"] = summary
        self.logger.info(f"Run finished in {time.perf_counter() - start:.2f} s.")
        return summary

    def _run_spectral(self, dt, n_steps, every) -> Dict[str, Any]:
        waves = workflows.evolve(
            self.psi0, self.V, dt, n_steps, every, self.grid, self.constants,
            logger=self.logger,
        )
        allow = self.get_config("setup_initial_state.kind") == "plane_wave"
        states = [
            workflows.decompose(
                psi, self.grid, self.constants, time=t, allow_winding=allow,
                logger=self.logger,
            )
            for t, psi in waves
        ]
        self._waves["spectral"] = waves
        self._states["spectral"] = states
        norms = [np.sum(np.abs(psi) ** 2) * self.grid.spacing for _, psi in waves]
        e0 = workflows.energy(waves[0][1], self.V, self.grid, self.constants)
        e1 = workflows.energy(waves[-1][1], self.V, self.grid, self.constants)
        return {
            "n_snapshots": len(states),
            "t_end": float(waves[-1][0]),
            "norm_drift": float(np.max(np.abs(np.array(norms) - norms[0]))),
            "energy_initial": e0,
            "energy_final": e1,
            "energy_drift": abs(e1 - e0),
        }

    def _run_hydro(self, dt, n_steps, every, raise_on_node=True) -> Dict[str, Any]:
        tail_floor = self.get_config("setup_solver.tail_floor")
        state0 = workflows.decompose(self.psi0, self.grid, self.constants)
        states, drifts = [], []
        t_failure = None
        try:
            for state, drift in workflows.iter_hydro(
                state0, self.V, dt, n_steps, every, self.constants, tail_floor
            ):
                states.append(state)
                drifts.append(drift)
        except NodeError as err:
            if raise_on_node:
                raise
            t_failure = float(len(states) * every * dt)
            self.logger.error(f"Hydrodynamic run stopped: {err}")
        self._states["hydro"] = states
        self._waves["hydro"] = [
            (s.time, workflows.compose(s, self.constants)) for s in states
        ]
        self._results["_mass_drift"] = drifts
        return {
            "n_snapshots": len(states),
            "t_end": float(states[-1].time),
            "max_mass_drift": float(max(drifts)),
            "completed": t_failure is None,
            "t_failure": t_failure,
        }

    def _run_kg(self, dt, n_steps, every) -> Dict[str, Any]:
        states = workflows.kg_evolve(
            self.kg0, dt, n_steps, every, self.constants, logger=self.logger
        )
        self._states["kg"] = states
        charges = [workflows.kg_charge(s, self.constants) for s in states]
        return {
            "n_snapshots": len(states),
            "t_end": float(states[-1].time),
            "charge_initial": charges[0],
            "charge_final": charges[-1],
            "charge_drift": float(np.max(np.abs(np.array(charges) - charges[0]))),
        }

    ## snapshot tables
    def _wave_frame(self, state: workflows.HydroState, psi) -> pd.DataFrame:
        grid, constants = self.grid, self.constants
        return pd.DataFrame(
            {
                "x": grid.x,
                "P": state.P,
                "S": state.S,
                "u": workflows.osmotic_velocity(state.P, grid, constants),
                "Q": workflows.quantum_potential(state.P, grid, constants),
                "re_psi": np.real(psi),
                "im_psi": np.imag(psi),
            }
        )

    def _kg_frame(self, state: workflows.KGState) -> pd.DataFrame:
        grid, constants = self.grid, self.constants
        P, dS_dt, dS_dx = workflows.kg_decompose(state, constants)
        mask = P >= NODE_FLOOR * np.max(P)
        S = constants.hbar * workflows.unwrap_phase(state.Psi, grid, mask)
        square = dS_dt**2 / constants.c**2 - dS_dx**2
        M_eff = np.full(grid.n_points, np.nan)
        M_eff[square > 0] = np.sqrt(square[square > 0]) / constants.c
        if constants.mass > 0:
            u = workflows.osmotic_velocity(P, grid, constants)
            Q = workflows.quantum_potential(P, grid, constants)
        else:
            u = Q = np.full(grid.n_points, np.nan)
        return pd.DataFrame(
            {
                "x": grid.x,
                "P": P,
                "S": S,
                "u": u,
                "Q": Q,
                "re_psi": np.real(state.Psi),
                "im_psi": np.imag(state.Psi),
                "dSdt": dS_dt,
                "dPdt": 2.0 * np.real(np.conj(state.Psi) * state.dPsi_dt),
                "M_eff": M_eff,
            }
        )

    def _states_from_frames(
        self, index: pd.DataFrame, frames: List[pd.DataFrame]
    ) -> list:
        """Rebuild HydroState or KGState series from snapshot tables."""
        grid = utils.grid_from_frame(frames[0])
        if self.grid is not None:
            same = self.grid.n_points == grid.n_points and np.isclose(
                self.grid.length, grid.length, rtol=1e-9
            )
            if not same:
                raise SnapshotError(
                    f"snapshots live on {grid}, the run config on {self.grid}"
                )
            grid = self.grid
        self.grid = grid
        times = index["time"].to_numpy(dtype=float)
        if "dSdt" in frames[0].columns:
            return [
                workflows.kg_state_from_fields(
                    P=df["P"].to_numpy(),
                    S=df["S"].to_numpy(),
                    dS_dt=df["dSdt"].to_numpy(),
                    dP_dt=df["dPdt"].to_numpy(),
                    grid=grid,
                    time=float(times[i]),
                    constants=self.constants,
                )
                for i, df in enumerate(frames)
            ]
        states = []
        for t, df in zip(times, frames):
            psi = df["re_psi"].to_numpy() + 1j * df["im_psi"].to_numpy()
            states.append(
                workflows.HydroState(
                    P=df["P"].to_numpy(),
                    S=df["S"].to_numpy(),
                    grid=grid,
                    time=float(t),
                    grad_S=workflows.grad_S_from_psi(psi, grid, self.constants),
                )
            )
        return states

    def to_dataset(self, solver: str) -> xr.Dataset:
        """Return a snapshot series as a Dataset with dimensions (time, x).

        Variables are the snapshot table columns other than x. Spectral series
        keep the evolved wave function, hydro series use the composed one.
        """
        if solver not in self._states:
            raise SnapshotError(
                f"no {solver} snapshots, available: {list(self._states)}"
            )
        states = self._states[solver]
        if solver == "kg":
            frames = [self._kg_frame(s) for s in states]
        else:
            waves = self._waves.get(solver) or [
                (s.time, workflows.compose(s, self.constants, allow_winding=True))
                for s in states
            ]
            frames = [self._wave_frame(s, psi) for s, (_, psi) in zip(states, waves)]
        coords = {"time": [s.time for s in states], "x": self.grid.x}
        data_vars = {
            col: (("time", "x"), np.stack([df[col].to_numpy() for df in frames]))
            for col in frames[0].columns
            if col != "x"
        }
        ds = xr.Dataset(data_vars=data_vars, coords=coords)
        ds.attrs.update(
            {
                "solver": solver,
                "hbar": self.constants.hbar,
                "mass": self.constants.mass,
                "c": self.constants.c,
            }
        )
        return ds

    ## analysis of snapshot directories
    def read_snapshot_dir(self, snapshot_dir: str) -> list:
        """Read a snapshot directory into a HydroState or KGState series."""
        index, frames = utils.read_snapshots(snapshot_dir)
        return self._states_from_frames(index, frames)

    def _potential(self) -> np.ndarray:
        if self.V is None:
            self.logger.warning("No potential configured, assuming V = 0.")
            return np.zeros(self.grid.n_points)
        return self.V

    def audit(self, snapshot_dir: str) -> Dict[str, Any]:
        """Evaluate the derivation checks on a snapshot directory.

        Nonrelativistic series get the residual, action and fluctuation report plus
        the uncertainty block; Klein-Gordon series the relativistic checks.
        """
        self.logger.info(f"Auditing snapshots in {snapshot_dir}.")
        series = self.read_snapshot_dir(snapshot_dir)
        if len(series) < 2:
            raise SnapshotError(
                f"audit needs at least two snapshots, {snapshot_dir} has {len(series)}"
            )
        if isinstance(series[0], workflows.KGState):
            return self._audit_kg(series)
        report = workflows.audit_series(
            series, self._potential(), self.constants, logger=self.logger
        ).to_dict()
        report["uncertainty"] = self._uncertainty(series)
        return report

    def _audit_kg(self, series: List[workflows.KGState]) -> Dict[str, Any]:
        constants = self.constants
        continuity = workflows.covariant_continuity_residual(series, constants)
        hjb, M_eff = workflows.relativistic_hjb_residual(
            series, constants, logger=self.logger
        )
        osmotic = workflows.relativistic_osmotic_velocity(series, constants)
        charges = np.array([workflows.kg_charge(s, constants) for s in series])
        M = np.stack(M_eff)
        report = {
            "n_snapshots": len(series),
            "t_start": float(series[0].time),
            "t_end": float(series[-1].time),
            "covariant_continuity_residual_L2": float(continuity.max()),
            "relativistic_hjb_residual_L2": float(hjb.max()),
            "osmotic_term_deviation_L2": float(osmotic["deviation"].max()),
            "effective_mass_min": float(np.nanmin(M)) if np.isfinite(M).any() else None,
            "effective_mass_max": float(np.nanmax(M)) if np.isfinite(M).any() else None,
            "effective_mass_undefined": int(np.sum(~np.isfinite(M))),
            "charge_drift": float(np.max(np.abs(charges - charges[0]))),
        }
        if constants.mass > 0:
            report["lagrangian_quadrature"] = workflows.kg_lagrangian_quadrature(
                series, constants
            )
        report["series"] = {
            "time": [s.time for s in series],
            "covariant_continuity_residual_L2": continuity,
            "relativistic_hjb_residual_L2": hjb,
            "osmotic_term_deviation_L2": osmotic["deviation"],
            "charge": charges,
        }
        return report

    def uncertainty(self, snapshot_dir: str) -> Dict[str, Any]:
        """Uncertainty report of every snapshot in a nonrelativistic directory."""
        self.logger.info(f"Evaluating uncertainty relations in {snapshot_dir}.")
        series = self.read_snapshot_dir(snapshot_dir)
        if isinstance(series[0], workflows.KGState):
            raise SnapshotError("uncertainty relations need nonrelativistic snapshots")
        return self._uncertainty(series)

    def _uncertainty(self, series: List[workflows.HydroState]) -> Dict[str, Any]:
        rows = []
        for state in series:
            psi = workflows.compose(state, self.constants, allow_winding=True)
            try:
                report = workflows.heisenberg_report(
                    psi, state.grid, self.constants, logger=self.logger
                )
            except DegenerateDensityError as err:
                self.logger.warning(f"Snapshot at t={state.time} skipped: {err}")
                continue
            row = {"time": state.time}
            row.update({k: v for k, v in report.scalars.items() if k != "verdicts"})
            row.update(report["verdicts"])
            rows.append(row)
        table = pd.DataFrame(rows)
        if table.empty:
            return {"n_snapshots": 0}
        return {
            "n_snapshots": len(table),
            "all_bounds_hold": bool(
                table[["cramer_rao", "momentum", "heisenberg"]].all().all()
            ),
            "max_decomposition_residual": float(
                table["decomposition_residual"].abs().max()
            ),
            "max_product_exact_deviation": float(
                (table["product_exact"] - 0.5 * self.constants.hbar).abs().max()
            ),
            "series": {col: table[col].to_numpy() for col in table.columns},
        }

    def trajectories(self, snapshot_dir: str) -> Dict[str, Any]:
        """Integrate the configured trajectories and ensemble through a snapshot series.

        Returns the summary; the trajectories are kept in ``results['trajectories']``.
        """
        self.logger.info(f"Integrating trajectories through {snapshot_dir}.")
        series = self.read_snapshot_dir(snapshot_dir)
        if isinstance(series[0], workflows.KGState):
            raise SnapshotError("trajectories need nonrelativistic snapshots")
        opts = self.get_config("setup_trajectories", fallback={}) or {}
        x0s = opts.get("x0", [])
        dt = opts.get("dt", 1e-3)
        fan = workflows.trajectory_fan(
            series, x0s, dt, self.constants, logger=self.logger
        )
        records = []
        for tr in fan:
            deviation = workflows.path_density_check(tr, series, self.constants)
            records.append(
                {
                    "x0": tr.x0,
                    "n_samples": len(tr),
                    "truncated": tr.truncated,
                    "t_end": float(tr.t[-1]) if len(tr) else None,
                    "x_end": float(tr.x[-1]) if len(tr) else None,
                    "max_path_density_deviation": (
                        float(deviation.max()) if deviation.size else None
                    ),
                }
            )
        summary = {
            "trajectories": records,
            "no_crossing": workflows.no_crossing(fan, self.grid),
            "n_truncated": int(sum(tr.truncated for tr in fan)),
        }
        n_particles = opts.get("n_particles", 0)
        if n_particles > 0:
            ensemble = workflows.ensemble_equivariance(
                series,
                n_particles,
                self.seed,
                dt,
                self.constants,
                upsample=opts.get("upsample", 16),
                logger=self.logger,
            )
            summary["ensemble"] = ensemble.to_dict()
        else:
            summary["ensemble"] = {}
        summary["config"] = self.config
        self._results["trajectories"] = fan
        return summary

    ## I/O
    def read(self) -> None:
        """Read the run configuration and all snapshot series from root."""
        self.logger.info(f"Reading model data from {self.root}")
        self.read_config()
        self.read_states()

    def write(self) -> None:
        """Write configuration, snapshots and run summary to root."""
        self.logger.info(f"Writing model data to {self.root}")
        if self._mode == "r":
            self.logger.warning("Cannot write in read-only mode")
            return
        self.write_config()
        self.write_states()
        self.write_results()

    def read_config(self) -> None:
        """Read the resolved run configuration from root and rebuild the model."""
        config_fn = join(self.root, self._config_fn)
        if not isfile(config_fn):
            raise ConfigError(f"no run configuration {self._config_fn} in {self.root}")
        opt = parse_config(config_fn)
        global_sect = opt.pop("global", None) or {}
        utils.check_build_options(self, {"global": global_sect}, self._GLOBALS)
        self.__init__(
            root=self.root,
            mode=self._mode,
            config_fn=self._config_fn,
            logger=self.logger,
            **global_sect,
        )
        self.build(opt)

    def write_config(self) -> None:
        """Write the resolved run configuration to root."""
        self._assert_write_mode()
        fn = join(self.root, self._config_fn)
        self.logger.info(f"Writing run configuration to {fn}")
        utils.write_yaml(self.config, fn)

    def read_states(self) -> None:
        """Read every snapshot series under <root>/snapshots."""
        for solver in self._SOLVERS:
            snapshot_dir = join(self.root, "snapshots", solver)
            if isdir(snapshot_dir):
                self._states[solver] = self.read_snapshot_dir(snapshot_dir)

    def write_states(self) -> None:
        """Write every snapshot series to <root>/snapshots/<solver>."""
        self._assert_write_mode()
        fmt = self.get_config("setup_output.format", fallback="csv")
        every = self.get_config("setup_solver.snapshot_every", fallback=1)
        for solver in self._states:
            ds = self.to_dataset(solver)
            savedir = join(self.root, "snapshots", solver)
            n = ds.sizes["time"]
            self.logger.info(f"Writing {n} {solver} snapshots to {savedir}")
            records = [
                (i * every, float(t), utils.frame_from_dataset(ds, i))
                for i, t in enumerate(ds["time"].values)
            ]
            utils.write_snapshots(
                records,
                savedir,
                fmt=fmt,
            )

    def write_results(self) -> None:
        """Write the run summary to <root>/summary.json."""
        self._assert_write_mode()
        if "summary" not in self._results:
            self.logger.debug("No run summary to write.")
            return
        fn = join(self.root, "summary.json")
        self.logger.info(f"Writing run summary to {fn}")
        utils.write_json(self._results["summary"], fn)

    def write_trajectories(self, summary: Dict[str, Any], out_dir: str) -> None:
        """Write trajectory tables and their summary to <out_dir>/trajectories."""
        savedir = join(out_dir, "trajectories")
        makedirs(savedir, exist_ok=True)
        for i, tr in enumerate(self._results.get("trajectories", [])):
            utils.write_frame(tr.to_frame(), join(savedir, f"trajectory_{i}.csv"))
        utils.write_json(summary, join(savedir, "summary.json"))
        self.logger.info(f"Writing trajectories to {savedir}")

    @classmethod
    def for_snapshot_dir(cls, snapshot_dir: str, logger=logger) -> "MadelungModel":
        """Model for analysing a snapshot directory.

        The run configuration is looked up in the directory and its two parents
        (``<out>/snapshots/<solver>`` layout). Without one, default constants and
        V = 0 are assumed.
        """
        candidate = str(snapshot_dir)
        for _ in range(3):
            config_fn = join(candidate, cls._CONF)
            if isfile(config_fn):
                logger.info(f"Using run configuration {config_fn}")
                return cls.from_config(
                    config_fn, root=candidate, mode="r", logger=logger
                )
            candidate = dirname(candidate.rstrip("/\\")) or "."
        logger.warning(
            f"No {cls._CONF} found for {snapshot_dir}, "
            "using default constants and V = 0"
        )
        return cls(root=snapshot_dir, mode="r", logger=logger)
