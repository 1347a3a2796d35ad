"""Command line interface: JSON scenario configs in, CSV + manifest out.

Usage::

    optomech run --config fig4_bifurcation --out-dir out/
    optomech run --config my_scenario.json --out-dir out/ --fixed-step 0.05
    optomech validate --config my_scenario.json
    optomech scenarios

``--config`` accepts either a path or the name of a bundled scenario (see
``optomech scenarios``). Every run writes its tables as CSV (headers carry
the units: times are ``kappa_t``, energies ``hbar kappa``, positions
oscillator units) plus a ``run_manifest.json`` echoing the configuration,
solver diagnostics, and a SHA-256 digest of each output file. Floats are
written with ``repr`` so a rerun with ``--fixed-step`` is byte-identical.

Exit codes: 0 success, 2 invalid configuration, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__
from .analysis import (
    angular_momentum_operator,
    grid_schmidt_coefficients,
    mutual_information,
    partial_trace,
    position_distribution,
    von_neumann_entropy,
)
from .errors import NumericalError, ValidationError
from .groundstate import GridAxis, PositionGrid, fock_project, solve_ground_state
from .hilbert import (
    HilbertSpaceSpec,
    coherent_state,
    expectation,
    fock_state,
    product_state,
)
from .meanfield import (
    MeanFieldState,
    effective_potential,
    find_steady_states,
    integrate_meanfield,
    mechanical_energy,
    multistability_condition,
    quadratic_critical_pump_rates,
)
from .model import Coupling, SystemParams, build_generator
from .qdyn import default_observables, evolve, prepare_cat_state, steady_state

__all__ = ["main", "entry_point"]

log = logging.getLogger("optomech")

_TASKS: dict[str, Callable[["_Run"], None]] = {}


def _task(name: str):
    def register(fn):
        _TASKS[name] = fn
        return fn

    return register


# --------------------------------------------------------------------------
# Configuration parsing. Problems are collected, not raised one at a time,
# so a bad config reports everything wrong with it in one pass.


class _ConfigReader:
    def __init__(self, data: dict, context: str = "config"):
        if not isinstance(data, dict):
            raise ValidationError(f"{context} must be a JSON object")
        self.data = data
        self.context = context
        self.problems: list[str] = []
        self.seen: set[str] = set()

    def get(self, key: str, kind, required: bool = False, default=None):
        self.seen.add(key)
        if key not in self.data:
            if required:
                self.problems.append(f"{self.context}: missing required key '{key}'")
            return default
        value = self.data[key]
        try:
            return kind(value)
        except (TypeError, ValueError) as exc:
            self.problems.append(f"{self.context}.{key}: {exc}")
            return default

    def subsection(self, key: str) -> "_ConfigReader | None":
        self.seen.add(key)
        if key not in self.data:
            return None
        sub = self.data[key]
        if not isinstance(sub, dict):
            self.problems.append(f"{self.context}.{key}: must be a JSON object")
            return None
        return _ConfigReader(sub, f"{self.context}.{key}")

    def finish(self) -> None:
        for key in self.data:
            if key not in self.seen:
                self.problems.append(
                    f"{self.context}: unknown key '{key}'"
                )


def _float_list(value) -> list[float]:
    if not isinstance(value, (list, tuple)) or not value:
        raise ValueError("expected a non-empty list of numbers")
    return [float(v) for v in value]


def _int_list(value) -> list[int]:
    if not isinstance(value, (list, tuple)) or not value:
        raise ValueError("expected a non-empty list of integers")
    out = []
    for v in value:
        if not isinstance(v, int) or isinstance(v, bool):
            raise ValueError(f"expected integers, got {v!r}")
        out.append(v)
    return out


def _complex_from(value) -> complex:
    if isinstance(value, (int, float)):
        return complex(value)
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return complex(float(value[0]), float(value[1]))
    raise ValueError(f"expected a number or [re, im] pair, got {value!r}")


def _parse_params(reader: _ConfigReader) -> SystemParams | None:
    sub = reader.subsection("params")
    if sub is None:
        reader.problems.append(f"{reader.context}: missing required key 'params'")
        return None
    coupling = sub.get("coupling", str, required=True)
    omega_m = sub.get("omega_m", float, required=True)
    g = sub.get("g", _float_list, required=True)
    delta_c = sub.get("delta_c", float, required=True)
    eta = sub.get("eta", float, required=True)
    gamma = sub.get("gamma", _float_list, required=True)
    kappa = sub.get("kappa", float, default=1.0)
    sub.finish()
    reader.problems.extend(sub.problems)
    if sub.problems or None in (coupling, omega_m, g, delta_c, eta, gamma):
        return None
    try:
        return SystemParams(
            coupling=Coupling(coupling),
            omega_m=omega_m,
            g=tuple(g),
            delta_c=delta_c,
            eta=eta,
            gamma=tuple(gamma),
            kappa=kappa,
        )
    except (ValidationError, ValueError) as exc:
        reader.problems.append(f"{reader.context}.params: {exc}")
        return None


def _parse_grid(reader: _ConfigReader, key: str = "grid") -> PositionGrid | None:
    reader.seen.add(key)
    if key not in reader.data:
        return None
    axes_raw = reader.data[key]
    if not isinstance(axes_raw, list) or not axes_raw:
        reader.problems.append(
            f"{reader.context}.{key}: expected a list of axis objects"
        )
        return None
    axes = []
    for i, ax in enumerate(axes_raw):
        sub = _ConfigReader(ax, f"{reader.context}.{key}[{i}]")
        lo = sub.get("lo", float, required=True)
        hi = sub.get("hi", float, required=True)
        n = sub.get("n", int, required=True)
        sub.finish()
        reader.problems.extend(sub.problems)
        if sub.problems or None in (lo, hi, n):
            return None
        try:
            axes.append(GridAxis(lo, hi, n))
        except ValidationError as exc:
            reader.problems.append(f"{reader.context}.{key}[{i}]: {exc}")
            return None
    return PositionGrid(tuple(axes))


def _parse_times(reader: _ConfigReader) -> np.ndarray | None:
    sub = reader.subsection("times")
    if sub is None:
        reader.problems.append(f"{reader.context}: missing required key 'times'")
        return None
    explicit = sub.get("list", _float_list)
    t_final = sub.get("t_final", float)
    n_samples = sub.get("n_samples", int)
    sub.finish()
    reader.problems.extend(sub.problems)
    if explicit is not None:
        return np.asarray(explicit, dtype=float)
    if t_final is None or n_samples is None:
        reader.problems.append(
            f"{reader.context}.times: give either 'list' or both 't_final' "
            "and 'n_samples'"
        )
        return None
    if n_samples < 2 or t_final <= 0:
        reader.problems.append(
            f"{reader.context}.times: need t_final > 0 and n_samples >= 2"
        )
        return None
    return np.linspace(0.0, t_final, n_samples)


@dataclass
class _DeferredGroundState:
    """Initial state that still needs the (expensive) grid solve.

    Built lazily so ``validate`` can check the configuration without
    running the imaginary-time propagation.
    """

    params: SystemParams
    space: HilbertSpaceSpec
    grid: PositionGrid
    dtau0: float | None
    levels: int

    def build(self) -> np.ndarray:
        result = solve_ground_state(
            self.params, self.grid, dtau0=self.dtau0, levels=self.levels
        )
        coeffs, err = fock_project(result.psi, self.grid, self.space.dims[1:])
        log.info("ground-state Fock projection: reconstruction error %.2e", err)
        cavity = np.zeros(self.space.dims[0], dtype=complex)
        cavity[0] = 1.0
        return np.kron(cavity, coeffs.reshape(-1))


_DEFAULT_GROUND_AXES = {1: (-12.0, 12.0, 512), 2: (-8.0, 8.0, 256)}


def _parse_ground_initial_state(
    reader: _ConfigReader,
    sub: _ConfigReader,
    space: HilbertSpaceSpec,
    params: SystemParams | None,
) -> _DeferredGroundState | None:
    grid = _parse_grid(sub)
    dtau0 = sub.get("dtau0", float)
    levels = sub.get("levels", int, default=6)
    sub.finish()
    reader.problems.extend(sub.problems)
    where = f"{reader.context}.initial_state"
    if params is None:
        reader.problems.append(f"{where}: no system parameters in scope")
        return None
    n_mech = space.n_modes - 1
    if n_mech not in _DEFAULT_GROUND_AXES:
        reader.problems.append(
            f"{where}: the effective ground state is only available for one "
            f"or two mechanical modes, not {n_mech}"
        )
        return None
    if any(d < 2 for d in space.dims[1:]):
        reader.problems.append(
            f"{where}: every mechanical dimension must be >= 2 to hold the "
            "projected ground state"
        )
        return None
    if grid is None:
        lo, hi, n = _DEFAULT_GROUND_AXES[n_mech]
        grid = PositionGrid(tuple(GridAxis(lo, hi, n) for _ in range(n_mech)))
    elif grid.ndim != n_mech:
        reader.problems.append(
            f"{where}.grid: expected {n_mech} axes, got {grid.ndim}"
        )
        return None
    if reader.problems:
        return None
    return _DeferredGroundState(params, space, grid, dtau0, levels)


def _parse_initial_state(
    reader: _ConfigReader,
    space: HilbertSpaceSpec | None,
    params: SystemParams | None = None,
) -> np.ndarray | _DeferredGroundState | None:
    sub = reader.subsection("initial_state")
    if space is None:
        return None
    if sub is None:
        vec = np.zeros(space.size, dtype=complex)
        vec[0] = 1.0
        return vec
    kind = sub.data.get("type")
    if kind is not None:
        sub.seen.add("type")
        if kind != "effective-ground-state":
            reader.problems.append(
                f"{reader.context}.initial_state.type: unknown type {kind!r}; "
                "expected 'effective-ground-state' (or give a 'modes' list)"
            )
            return None
        return _parse_ground_initial_state(reader, sub, space, params)
    modes_raw = sub.data.get("modes")
    sub.seen.add("modes")
    sub.finish()
    reader.problems.extend(sub.problems)
    if not isinstance(modes_raw, list) or len(modes_raw) != space.n_modes:
        reader.problems.append(
            f"{reader.context}.initial_state.modes: expected a list of "
            f"{space.n_modes} single-mode states (cavity first)"
        )
        return None
    factors = []
    for k, mode_raw in enumerate(modes_raw):
        mr = _ConfigReader(mode_raw, f"{reader.context}.initial_state.modes[{k}]")
        kind = mr.get("type", str, required=True)
        dim = space.dims[k]
        try:
            if kind == "vacuum":
                factors.append(fock_state(dim, 0))
            elif kind == "fock":
                n = mr.get("n", int, required=True)
                if n is not None:
                    factors.append(fock_state(dim, n))
            elif kind == "coherent":
                beta = mr.get("beta", _complex_from, required=True)
                if beta is not None:
                    factors.append(coherent_state(dim, beta))
            elif kind == "cat":
                beta0 = mr.get("beta0", _complex_from, required=True)
                phi0 = mr.get("phi0", float, required=True)
                if beta0 is not None and phi0 is not None:
                    factors.append(prepare_cat_state(dim, beta0, phi0))
            elif kind is not None:
                mr.problems.append(
                    f"unknown state type {kind!r}; expected vacuum, fock, "
                    "coherent, or cat"
                )
        except (ValidationError, ValueError) as exc:
            mr.problems.append(str(exc))
        mr.finish()
        reader.problems.extend(mr.problems)
    if len(factors) != space.n_modes:
        return None
    return product_state(space, factors)


# --------------------------------------------------------------------------
# Output helpers.


def _cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


@dataclass
class _Run:
    """Execution context shared by the task functions.

    With ``parse_only`` set, tasks stop after validating their configuration
    (used by the ``validate`` subcommand).
    """

    config: dict
    out_dir: Path
    fixed_step: float | None
    threads: int
    parse_only: bool = False
    params: SystemParams | None = None
    outputs: dict[str, dict] | None = None
    extras: dict[str, Any] | None = None

    def write_csv(self, name: str, header: Sequence[str], rows) -> None:
        path = self.out_dir / name
        tmp = path.with_name(path.name + ".tmp")
        with open(tmp, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for row in rows:
                writer.writerow([_cell(v) for v in row])
        os.replace(tmp, path)
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        self.outputs[name] = {"sha256": digest, "bytes": path.stat().st_size}
        log.info("wrote %s (%d bytes)", path, self.outputs[name]["bytes"])

    def note(self, key: str, value) -> None:
        self.extras[key] = value


def _json_safe(value):
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return v if math.isfinite(v) else repr(v)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, np.ndarray):
        return [_json_safe(v) for v in value.tolist()]
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    return value


# --------------------------------------------------------------------------
# Tasks.


def _etas_for_curves(reader: _ConfigReader, params: SystemParams) -> list[float]:
    sub = reader.subsection("potential")
    if sub is None:
        return [params.eta]
    etas = sub.get("etas", _float_list, default=[params.eta])
    sub.finish()
    reader.problems.extend(sub.problems)
    return etas


@_task("potential")
def _run_potential(run: _Run) -> None:
    """Tabulate the effective potential on a grid, one curve per pump rate."""
    reader = _ConfigReader(run.config)
    params = _parse_params(reader)
    grid = _parse_grid(reader)
    etas = _etas_for_curves(reader, params) if params else [0.0]
    _finish(reader, {"task", "description"})
    if grid is None:
        raise ValidationError("config: the potential task needs a 'grid'")
    if grid.ndim != params.n_mech:
        raise ValidationError(
            f"config: grid has {grid.ndim} axes but params describe "
            f"{params.n_mech} mechanical modes"
        )
    run.params = params
    if run.parse_only:
        return
    pts = grid.points_array()
    coords = pts.reshape(-1, grid.ndim)
    header = ["eta"] + [f"x{k + 1}" for k in range(grid.ndim)] + ["u_eff_hbar_kappa"]

    def rows():
        for eta in etas:
            pe = SystemParams(
                coupling=params.coupling,
                omega_m=params.omega_m,
                g=params.g,
                delta_c=params.delta_c,
                eta=eta,
                gamma=params.gamma,
                kappa=params.kappa,
            )
            u = effective_potential(pe, pts).reshape(-1)
            for c, v in zip(coords, u):
                yield [eta, *c, v]

    run.write_csv("potential.csv", header, rows())
    run.note("etas", etas)


def _steady_state_rows(params: SystemParams, eta: float):
    pe = SystemParams(
        coupling=params.coupling,
        omega_m=params.omega_m,
        g=params.g,
        delta_c=params.delta_c,
        eta=eta,
        gamma=params.gamma,
        kappa=params.kappa,
    )
    for idx, pt in enumerate(find_steady_states(pe)):
        yield [
            eta,
            idx,
            *pt.x,
            pt.alpha.real,
            pt.alpha.imag,
            abs(pt.alpha) ** 2,
            pt.stability,
            pt.degenerate,
        ]


@_task("steady-states")
def _run_steady_states(run: _Run) -> None:
    """Enumerate classical fixed points with stability labels."""
    reader = _ConfigReader(run.config)
    params = _parse_params(reader)
    _finish(reader, {"task", "description"})
    run.params = params
    if run.parse_only:
        return
    header = (
        ["eta", "index"]
        + [f"x{k + 1}" for k in range(params.n_mech)]
        + ["alpha_re", "alpha_im", "n_photons", "stability", "degenerate"]
    )
    run.write_csv(
        "steady_states.csv", header, _steady_state_rows(params, params.eta)
    )
    if params.coupling is Coupling.QUADRATIC and min(params.g) < 0:
        eta_1, eta_2 = quadratic_critical_pump_rates(params)
        run.note("eta_1", eta_1)
        run.note("eta_2", eta_2)
    if params.coupling is Coupling.LINEAR:
        run.note(
            "multistability_possible",
            multistability_condition(params.delta_c, params.kappa),
        )


def _parse_scan_values(reader: _ConfigReader, key: str) -> list[float] | None:
    sub = reader.subsection(key)
    if sub is None:
        reader.problems.append(f"{reader.context}: missing required key '{key}'")
        return None
    values = sub.get("values", _float_list)
    start = sub.get("start", float)
    stop = sub.get("stop", float)
    step = sub.get("step", float)
    sub.finish()
    reader.problems.extend(sub.problems)
    if values is not None:
        return values
    if None in (start, stop, step) or step <= 0 or stop < start:
        reader.problems.append(
            f"{reader.context}.{key}: give 'values' or start <= stop with step > 0"
        )
        return None
    count = int(round((stop - start) / step)) + 1
    return [start + i * step for i in range(count)]


@_task("bifurcation-scan")
def _run_bifurcation_scan(run: _Run) -> None:
    """Classical fixed points as a function of the pump rate."""
    reader = _ConfigReader(run.config)
    params = _parse_params(reader)
    etas = _parse_scan_values(reader, "scan")
    _finish(reader, {"task", "description"})
    run.params = params
    if run.parse_only:
        return
    header = (
        ["eta", "index"]
        + [f"x{k + 1}" for k in range(params.n_mech)]
        + ["alpha_re", "alpha_im", "n_photons", "stability", "degenerate"]
    )

    def rows():
        for eta in etas:
            yield from _steady_state_rows(params, eta)

    run.write_csv("branches.csv", header, rows())
    if params.coupling is Coupling.QUADRATIC and min(params.g) < 0:
        eta_1, eta_2 = quadratic_critical_pump_rates(params)
        run.note("eta_1", eta_1)
        run.note("eta_2", eta_2)


@_task("meanfield")
def _run_meanfield(run: _Run) -> None:
    """Integrate the classical equations of motion."""
    reader = _ConfigReader(run.config)
    params = _parse_params(reader)
    times = _parse_times(reader)
    sub = reader.subsection("initial_meanfield")
    x0 = p0 = None
    alpha0 = 0.0
    adiabatic = False
    if sub is not None:
        x0 = sub.get("x", _float_list, required=True)
        p0 = sub.get("p", _float_list, required=True)
        alpha0 = sub.get("alpha", _complex_from, default=0.0)
        adiabatic = bool(sub.get("adiabatic", bool, default=False))
        sub.finish()
        reader.problems.extend(sub.problems)
    else:
        reader.problems.append("config: missing required key 'initial_meanfield'")
    tol = reader.subsection("tolerances")
    rtol, atol = 1e-9, 1e-12
    if tol is not None:
        rtol = tol.get("rtol", float, default=rtol)
        atol = tol.get("atol", float, default=atol)
        tol.finish()
        reader.problems.extend(tol.problems)
    _finish(reader, {"task", "description"})
    run.params = params
    if run.parse_only:
        return
    state0 = MeanFieldState(x=np.asarray(x0), p=np.asarray(p0), alpha=alpha0)
    traj = integrate_meanfield(
        params,
        state0,
        times,
        adiabatic=adiabatic,
        rtol=rtol,
        atol=atol,
        fixed_step=run.fixed_step,
    )
    energy = mechanical_energy(params, traj.x, traj.p)
    n = params.n_mech
    header = (
        ["kappa_t"]
        + [f"x{k + 1}" for k in range(n)]
        + [f"p{k + 1}" for k in range(n)]
        + ["alpha_re", "alpha_im", "energy_hbar_kappa"]
    )
    rows = (
        [t, *x, *p, a.real, a.imag, e]
        for t, x, p, a, e in zip(
            traj.times, traj.x, traj.p, traj.alpha, energy
        )
    )
    run.write_csv("trajectory.csv", header, rows)
    run.note("adiabatic", adiabatic)
    run.note("energy_drift", float(np.abs(energy - energy[0]).max()))


@_task("ground-state")
def _run_ground_state(run: _Run) -> None:
    """Relax the effective-potential ground state; optionally project to Fock."""
    reader = _ConfigReader(run.config)
    params = _parse_params(reader)
    grid = _parse_grid(reader)
    fock_dims = reader.get("fock_dims", _int_list)
    dtau0 = reader.get("dtau0", float)
    levels = reader.get("levels", int, default=6)
    _finish(reader, {"task", "description"})
    if grid is None:
        raise ValidationError("config: the ground-state task needs a 'grid'")
    run.params = params
    if run.parse_only:
        return
    result = solve_ground_state(
        params, grid, dtau0=dtau0, levels=levels
    )
    coords = grid.points_array().reshape(-1, grid.ndim)
    header = [f"x{k + 1}" for k in range(grid.ndim)] + ["psi"]
    rows = (
        [*c, v] for c, v in zip(coords, result.psi.reshape(-1))
    )
    run.write_csv("ground_state.csv", header, rows)
    run.note("energy_hbar_kappa", result.energy)
    run.note("edge_probability", result.edge_probability)
    run.note(
        "relaxation",
        [
            {"dtau": d, "steps": s, "energy": e}
            for d, s, e in result.energy_history
        ],
    )
    if grid.ndim == 2:
        lam = grid_schmidt_coefficients(result.psi, grid)
        run.write_csv(
            "schmidt.csv",
            ["index", "coefficient"],
            ([i, v] for i, v in enumerate(lam[:64])),
        )
        lam2 = lam[lam > 1e-12] ** 2
        run.note("entanglement_entropy_nats", float(-(lam2 * np.log(lam2)).sum()))
        run.note("schmidt_number_1e-3", int((lam > 1e-3).sum()))
    if fock_dims is not None:
        coeffs, err = fock_project(result.psi, grid, tuple(fock_dims))
        idx = np.indices(coeffs.shape).reshape(len(fock_dims), -1).T
        run.write_csv(
            "fock_coefficients.csv",
            [f"n{k + 1}" for k in range(len(fock_dims))] + ["coefficient"],
            ([*i, v] for i, v in zip(idx, coeffs.reshape(-1))),
        )
        run.note("fock_reconstruction_error", err)


def _distribution_config(
    reader: _ConfigReader,
) -> tuple[int, np.ndarray, int] | None:
    sub = reader.subsection("distribution")
    if sub is None:
        return None
    mode = sub.get("mode", int, default=1)
    stride = sub.get("stride", int, default=1)
    points = sub.get("points", _float_list)
    xr = sub.subsection("x")
    x = None
    if xr is not None:
        lo = xr.get("lo", float, required=True)
        hi = xr.get("hi", float, required=True)
        n = xr.get("n", int, required=True)
        xr.finish()
        sub.problems.extend(xr.problems)
        if not xr.problems:
            x = np.linspace(lo, hi, n)
    if points is not None:
        x = np.asarray(points, dtype=float)
    if x is None:
        sub.problems.append(
            f"{sub.context}: give 'points' or an 'x' range for the distribution"
        )
    sub.finish()
    reader.problems.extend(sub.problems)
    if reader.problems:
        return None
    return mode, x, max(1, stride)


def _quantum_setup(run: _Run, reader: _ConfigReader):
    params = _parse_params(reader)
    dims = reader.get("dims", _int_list, required=True)
    space = None
    if dims is not None and params is not None:
        if len(dims) != params.n_mech + 1:
            reader.problems.append(
                f"config.dims: expected {params.n_mech + 1} entries (cavity + "
                f"mechanical modes), got {len(dims)}"
            )
        else:
            space = HilbertSpaceSpec(tuple(dims))
    run.params = params
    return params, space


@_task("evolve")
def _run_evolve(run: _Run) -> None:
    """Propagate the master equation; stream observables, sample P(x, t)."""
    reader = _ConfigReader(run.config)
    params, space = _quantum_setup(run, reader)
    times = _parse_times(reader)
    psi0 = _parse_initial_state(reader, space, params)
    dist = _distribution_config(reader)
    names = reader.get("observables", list)
    tol = reader.subsection("tolerances")
    rtol, atol = 1e-8, 1e-10
    if tol is not None:
        rtol = tol.get("rtol", float, default=rtol)
        atol = tol.get("atol", float, default=atol)
        tol.finish()
        reader.problems.extend(tol.problems)
    _finish(reader, {"task", "description"})

    gen = build_generator(params, space)
    e_ops = default_observables(params, space)
    if names is not None:
        missing = [n for n in names if n not in e_ops]
        if missing:
            raise ValidationError(
                f"config.observables: unknown names {missing}; available: "
                f"{sorted(e_ops)}"
            )
        e_ops = {n: e_ops[n] for n in names}
    if run.parse_only:
        return
    if isinstance(psi0, _DeferredGroundState):
        psi0 = psi0.build()

    dist_rows: list[list[float]] = []

    def on_sample(index: int, t: float, rho: np.ndarray) -> None:
        if dist is None or index % dist[2] != 0:
            return
        mode, x, _ = dist
        reduced = partial_trace(rho, [mode], dims=space.dims)
        prob = position_distribution(reduced, x)
        dist_rows.extend([t, xi, pi] for xi, pi in zip(x, prob))

    traj = evolve(
        gen,
        psi0,
        times,
        e_ops=e_ops,
        store_states=False,
        on_sample=on_sample,
        rtol=rtol,
        atol=atol,
        fixed_step=run.fixed_step,
        progress=log.isEnabledFor(logging.INFO),
    )
    series = traj.observables
    header = ["kappa_t"] + list(series.values)
    max_imag = max(
        (float(np.abs(v.imag).max()) for v in series.values.values()),
        default=0.0,
    )
    rows = (
        [t, *(series.values[name][i].real for name in series.values)]
        for i, t in enumerate(series.times)
    )
    run.write_csv("observables.csv", header, rows)
    if dist is not None:
        run.write_csv(
            "distribution.csv", ["kappa_t", "x", "prob_density"], dist_rows
        )
    run.note("diagnostics", traj.diagnostics)
    run.note("max_imaginary_part", max_imag)


@_task("quantum-steady-state")
def _run_quantum_steady_state(run: _Run) -> None:
    """Solve the master-equation steady state and report expectations."""
    reader = _ConfigReader(run.config)
    params, space = _quantum_setup(run, reader)
    dist = _distribution_config(reader)
    sub = reader.subsection("steady_state")
    method, tol, max_time, linear_rtol = "auto", 1e-8, 1e6, 1e-10
    if sub is not None:
        method = sub.get("method", str, default=method)
        tol = sub.get("tol", float, default=tol)
        max_time = sub.get("max_time", float, default=max_time)
        linear_rtol = sub.get("linear_rtol", float, default=linear_rtol)
        sub.finish()
        reader.problems.extend(sub.problems)
    _finish(reader, {"task", "description"})

    if run.parse_only:
        return
    gen = build_generator(params, space)
    rho, info = steady_state(
        gen, method=method, tol=tol, max_time=max_time, linear_rtol=linear_rtol
    )
    obs = default_observables(params, space)
    rows = [[name, expectation(op, rho).real] for name, op in sorted(obs.items())]
    run.write_csv("expectations.csv", ["observable", "value"], rows)
    if dist is not None:
        mode, x, _ = dist
        reduced = partial_trace(rho, [mode], dims=space.dims)
        prob = position_distribution(reduced, x)
        run.write_csv(
            "distribution.csv",
            ["x", "prob_density"],
            ([xi, pi] for xi, pi in zip(x, prob)),
        )
    run.note("solver", info)
    run.note("purity", float(np.trace(rho @ rho).real))


@_task("analyze")
def _run_analyze(run: _Run) -> None:
    """Evolve and track entropies, mutual information, angular momentum."""
    reader = _ConfigReader(run.config)
    params, space = _quantum_setup(run, reader)
    times = _parse_times(reader)
    psi0 = _parse_initial_state(reader, space, params)
    tol = reader.subsection("tolerances")
    rtol, atol = 1e-8, 1e-10
    if tol is not None:
        rtol = tol.get("rtol", float, default=rtol)
        atol = tol.get("atol", float, default=atol)
        tol.finish()
        reader.problems.extend(tol.problems)
    _finish(reader, {"task", "description"})

    if run.parse_only:
        return
    if isinstance(psi0, _DeferredGroundState):
        psi0 = psi0.build()
    gen = build_generator(params, space)
    two_mech = params.n_mech >= 2 and all(d >= 2 for d in space.dims[1:3])
    l_op = angular_momentum_operator(space, 1, 2) if two_mech else None
    rows: list[list[float]] = []

    def on_sample(index: int, t: float, rho: np.ndarray) -> None:
        row = [t]
        row.append(von_neumann_entropy(partial_trace(rho, [0], dims=space.dims)))
        row.append(von_neumann_entropy(partial_trace(rho, [1], dims=space.dims)))
        if two_mech:
            row.append(
                von_neumann_entropy(partial_trace(rho, [2], dims=space.dims))
            )
            row.append(
                von_neumann_entropy(
                    partial_trace(rho, [1, 2], dims=space.dims)
                )
            )
            row.append(mutual_information(rho, [1], [2], dims=space.dims))
            row.append(expectation(l_op, rho).real)
        rows.append(row)

    traj = evolve(
        gen,
        psi0,
        times,
        store_states=False,
        on_sample=on_sample,
        rtol=rtol,
        atol=atol,
        fixed_step=run.fixed_step,
        progress=log.isEnabledFor(logging.INFO),
    )
    header = ["kappa_t", "s_cavity", "s_mech1"]
    if two_mech:
        header += ["s_mech2", "s_mech12", "mutual_info", "angular_momentum"]
    run.write_csv("entanglement.csv", header, rows)
    run.note("diagnostics", traj.diagnostics)


def _sweep_observable_rows(rho, obs):
    return [expectation(obs[name], rho).real for name in obs]


@_task("sweep")
def _run_sweep(run: _Run) -> None:
    """Steady states along a pump-rate ramp, swept up and down."""
    reader = _ConfigReader(run.config)
    params, space = _quantum_setup(run, reader)
    sub = reader.subsection("sweep")
    if sub is None:
        raise ValidationError("config: the sweep task needs a 'sweep' section")
    values = sub.get("values", _float_list)
    start = sub.get("start", float)
    stop = sub.get("stop", float)
    step = sub.get("step", float)
    directions = sub.get("directions", list, default=["up", "down"])
    method = sub.get("method", str, default="deflated")
    tol = sub.get("tol", float, default=1e-8)
    linear_rtol = sub.get("linear_rtol", float, default=1e-8)
    warm_start = bool(sub.get("warm_start", bool, default=True))
    sub.finish()
    reader.problems.extend(sub.problems)
    if values is None:
        if None in (start, stop, step) or step <= 0:
            reader.problems.append(
                "config.sweep: give 'values' or start/stop/step"
            )
        else:
            count = int(round((stop - start) / step)) + 1
            values = [start + i * step for i in range(count)]
    for d in directions or []:
        if d not in ("up", "down"):
            reader.problems.append(
                f"config.sweep.directions: expected 'up'/'down', got {d!r}"
            )
    _finish(reader, {"task", "description"})

    if run.parse_only:
        return
    obs = default_observables(params, space)
    header = (
        ["direction", "eta"]
        + list(obs)
        + ["residual", "solver_products", "wall_s"]
    )
    all_rows = []
    for direction in directions:
        etas = sorted(values) if direction == "up" else sorted(values, reverse=True)
        rho_prev = None
        for eta in etas:
            pe = SystemParams(
                coupling=params.coupling,
                omega_m=params.omega_m,
                g=params.g,
                delta_c=params.delta_c,
                eta=eta,
                gamma=params.gamma,
                kappa=params.kappa,
            )
            gen = build_generator(pe, space)
            tick = time.monotonic()
            rho, info = steady_state(
                gen,
                method=method,
                tol=tol,
                rho0=rho_prev if warm_start else None,
                linear_rtol=linear_rtol,
            )
            wall = time.monotonic() - tick
            if warm_start:
                rho_prev = rho
            all_rows.append(
                [
                    direction,
                    eta,
                    *_sweep_observable_rows(rho, obs),
                    info["residual"],
                    info.get("matvecs", 0),
                    wall,
                ]
            )
            log.info(
                "sweep %s eta=%.6g done in %.1fs (residual %.2g)",
                direction,
                eta,
                wall,
                info["residual"],
            )
    run.write_csv("sweep.csv", header, all_rows)
    run.note("method", method)
    run.note("points", len(all_rows))


def _finish(reader: _ConfigReader, extra_keys: set[str]) -> None:
    reader.seen.update(extra_keys)
    reader.finish()
    if reader.problems:
        raise ValidationError(
            "invalid configuration:\n  " + "\n  ".join(reader.problems)
        )


# --------------------------------------------------------------------------
# Entry points.


def _bundled_names() -> dict[str, Path]:
    root = resources.files("optomech") / "configs"
    return {p.name.removesuffix(".json"): p for p in sorted(root.iterdir())
            if p.name.endswith(".json")}


def _load_config(spec: str) -> tuple[dict, str]:
    path = Path(spec)
    if path.exists():
        text = path.read_text()
    else:
        bundled = _bundled_names()
        if spec in bundled:
            text = bundled[spec].read_text()
            path = Path(str(bundled[spec]))
        else:
            raise ValidationError(
                f"config {spec!r} is neither a file nor a bundled scenario "
                f"(available: {', '.join(sorted(bundled))})"
            )
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ValidationError(f"{path}: the top level must be a JSON object")
    return data, str(path)


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="optomech",
        description="Cavity optomechanics: classical bifurcations and "
        "Lindblad dynamics from JSON scenario configs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_run_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True, help="path or bundled name")
        p.add_argument("--out-dir", required=True, help="output directory")
        p.add_argument(
            "--fixed-step",
            type=float,
            default=None,
            help="integrate with this fixed step for bitwise-reproducible "
            "output",
        )
        p.add_argument(
            "--threads",
            type=int,
            default=1,
            help="reserved for parallel sweeps; this build runs serially",
        )
        p.add_argument("--verbose", action="store_true")

    run_p = sub.add_parser("run", help="execute a scenario (task from config)")
    add_run_flags(run_p)
    for task_name in sorted(_TASKS):
        task_p = sub.add_parser(
            task_name, help=f"run a scenario config of task '{task_name}'"
        )
        add_run_flags(task_p)

    val_p = sub.add_parser("validate", help="check a config without running")
    val_p.add_argument("--config", required=True)

    sub.add_parser("scenarios", help="list bundled scenario configs")

    args = parser.parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO
        if getattr(args, "verbose", False)
        else logging.WARNING,
        format="%(message)s",
    )

    try:
        if args.command == "scenarios":
            for name, path in _bundled_names().items():
                desc = json.loads(path.read_text()).get("description", "")
                print(f"{name:24s} {desc}")
            return 0
        config, origin = _load_config(args.config)
        task = config.get("task")
        if args.command in _TASKS:
            if task is None:
                config = dict(config)
                config["task"] = args.command
                task = args.command
            elif task != args.command:
                raise ValidationError(
                    f"{origin}: config task {task!r} does not match the "
                    f"{args.command!r} subcommand"
                )
        if task not in _TASKS:
            raise ValidationError(
                f"{origin}: unknown task {task!r}; expected one of "
                f"{', '.join(sorted(_TASKS))}"
            )
        if args.command == "validate":
            run = _Run(
                config=config,
                out_dir=Path("."),
                fixed_step=None,
                threads=1,
                parse_only=True,
                outputs={},
                extras={},
            )
            _TASKS[task](run)
            print(f"OK: {origin} ({task})")
            return 0

        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        run = _Run(
            config=config,
            out_dir=out_dir,
            fixed_step=args.fixed_step,
            threads=args.threads,
            outputs={},
            extras={},
        )
        started = time.monotonic()
        _TASKS[task](run)
        manifest = {
            "package": "optomech",
            "version": __version__,
            "task": task,
            "config_file": origin,
            "config": config,
            "fixed_step": args.fixed_step,
            "wall_time_s": round(time.monotonic() - started, 3),
            "outputs": run.outputs,
            "results": _json_safe(run.extras),
        }
        tmp = out_dir / "run_manifest.json.tmp"
        tmp.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        os.replace(tmp, out_dir / "run_manifest.json")
        for name in run.outputs:
            print(f"wrote {out_dir / name}")
        print(f"wrote {out_dir / 'run_manifest.json'}")
        return 0
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


def entry_point() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry_point()
