"""Shared fixtures.

The expensive physics runs (ground states, steady-state sweeps, long
Lindblad evolutions) are session-scoped so that the diagnostic tests and
the acceptance gate share one computation each. Every heavy fixture
returns a dict that includes ``wall`` (seconds spent building it) so
tests can check runtime budgets.
"""
from __future__ import annotations

import time

import numpy as np
import pytest

from optomech import (
    Coupling,
    GridAxis,
    HilbertSpaceSpec,
    PositionGrid,
    SystemParams,
    build_generator,
    coherent_state,
    fock_state,
    product_state,
)
from optomech.analysis import (
    angular_momentum_operator,
    grid_schmidt_coefficients,
    partial_trace,
    position_distribution,
)
from optomech.groundstate import fock_project, solve_ground_state
from optomech.hilbert import embed, expectation, position
from optomech.qdyn import evolve, prepare_cat_state, steady_state


def local_maxima(x: np.ndarray, y: np.ndarray, threshold: float) -> list[tuple[float, float]]:
    """Strict-left / non-strict-right local maxima of y(x) above threshold."""
    out = []
    for i in range(1, len(y) - 1):
        if y[i] > y[i - 1] and y[i] >= y[i + 1] and y[i] > threshold:
            out.append((float(x[i]), float(y[i])))
    return out


# --------------------------------------------------------------------------
# Bistable linear-coupling regime (one mechanical mode)
# --------------------------------------------------------------------------

def bistable_params(eta: float, omega_m: float = 0.01, gamma: float = 0.002) -> SystemParams:
    return SystemParams(
        coupling=Coupling.LINEAR,
        omega_m=omega_m,
        g=(0.3,),
        delta_c=-1.5,
        eta=eta,
        gamma=(gamma,),
    )


@pytest.fixture(scope="session")
def bimodal_steady_state():
    """Steady state deep in the washed-out bistable regime (omega_m = 0.006)."""
    t0 = time.time()
    params = bistable_params(0.18, omega_m=0.006)
    space = HilbertSpaceSpec((8, 40))
    gen = build_generator(params, space)
    rho, info = steady_state(gen, method="deflated", tol=1e-8, linear_rtol=1e-8)
    x = np.linspace(-2.0, 9.0, 1101)
    prob = position_distribution(partial_trace(rho, [1], dims=space.dims), x)
    return {
        "params": params,
        "space": space,
        "rho": rho,
        "info": info,
        "x": x,
        "prob": prob,
        "wall": time.time() - t0,
    }


@pytest.fixture(scope="session")
def hysteresis_sweep():
    """Steady-state <x> swept up and down through the classical bistable window."""
    t0 = time.time()
    etas = np.round(np.arange(0.05, 0.4001, 0.01), 10)
    space = HilbertSpaceSpec((8, 40))
    xop = embed(position(40), 1, space)
    branches: dict[str, np.ndarray] = {}
    residuals: dict[str, float] = {}
    for direction in ("up", "down"):
        order = etas if direction == "up" else etas[::-1]
        rho = None
        vals = []
        worst = 0.0
        for eta in order:
            gen = build_generator(bistable_params(float(eta)), space)
            rho, info = steady_state(
                gen, method="deflated", tol=1e-8, rho0=rho, linear_rtol=1e-8
            )
            vals.append(float(expectation(xop, rho).real))
            worst = max(worst, info["residual"])
        branches[direction] = np.array(vals if direction == "up" else vals[::-1])
        residuals[direction] = worst
    return {
        "etas": etas,
        "up": branches["up"],
        "down": branches["down"],
        "residuals": residuals,
        "space": space,
        "wall": time.time() - t0,
    }


@pytest.fixture(scope="session")
def truncation_doubling():
    """The eta = 0.25 steady state recomputed with both Fock dimensions doubled."""
    t0 = time.time()
    space = HilbertSpaceSpec((16, 80))
    gen = build_generator(bistable_params(0.25), space)
    rho, info = steady_state(
        gen, method="deflated", tol=1e-8, linear_rtol=1e-6, inner_m=15
    )
    xval = float(expectation(embed(position(80), 1, space), rho).real)
    return {"x": xval, "info": info, "wall": time.time() - t0}


# --------------------------------------------------------------------------
# Two-mode ground states of the effective potential
# --------------------------------------------------------------------------

@pytest.fixture(scope="session")
def entangled_ground_state():
    """Ground state of the two-mode linear-coupling double-well potential."""
    t0 = time.time()
    params = SystemParams(
        coupling=Coupling.LINEAR,
        omega_m=0.01,
        g=(0.3, 0.3),
        delta_c=-1.5,
        eta=0.16,
        gamma=(0.002, 0.002),
    )
    grid = PositionGrid((GridAxis(-5.0, 8.0, 256), GridAxis(-5.0, 8.0, 256)))
    result = solve_ground_state(params, grid)
    lam_grid = grid_schmidt_coefficients(result.psi, grid)
    coeffs, err = fock_project(result.psi, grid, (14, 14))
    s = np.linalg.svd(coeffs, compute_uv=False)
    lam_fock = s / np.linalg.norm(s)
    return {
        "params": params,
        "grid": grid,
        "result": result,
        "lam_grid": lam_grid,
        "coeffs": coeffs,
        "projection_error": err,
        "lam_fock": lam_fock,
        "wall": time.time() - t0,
    }


@pytest.fixture(scope="session")
def separable_ground_state():
    """Ground state with opposite-sign quadratic couplings (one mode decoupled)."""
    t0 = time.time()
    params = SystemParams(
        coupling=Coupling.QUADRATIC,
        omega_m=0.01,
        g=(0.2, -0.2),
        delta_c=-0.02,
        eta=0.22,
        gamma=(0.001, 0.001),
    )
    grid = PositionGrid((GridAxis(-5.0, 5.0, 256), GridAxis(-7.0, 7.0, 256)))
    result = solve_ground_state(params, grid)
    lam_grid = grid_schmidt_coefficients(result.psi, grid)
    return {
        "params": params,
        "grid": grid,
        "result": result,
        "lam_grid": lam_grid,
        "wall": time.time() - t0,
    }


# --------------------------------------------------------------------------
# Quadratic-coupling quantum dynamics
# --------------------------------------------------------------------------

def quadratic_params(eta: float, gamma: float, g: tuple[float, ...] = (-0.2,)) -> SystemParams:
    return SystemParams(
        coupling=Coupling.QUADRATIC,
        omega_m=0.01,
        g=g,
        delta_c=-0.02,
        eta=eta,
        gamma=tuple(gamma for _ in g),
    )


@pytest.fixture(scope="session")
def splitting_run():
    """Vacuum wave packet released on the barrier top of the quadratic double well.

    Returns the time-resolved mechanical position distribution P(x, t).
    """
    t0 = time.time()
    params = quadratic_params(0.20, 1e-3)
    space = HilbertSpaceSpec((6, 50))
    gen = build_generator(params, space)
    x = np.linspace(-8.0, 8.0, 321)
    t_eval = np.linspace(0.0, 500.0, 251)
    prob = np.zeros((len(t_eval), len(x)))

    def on_sample(i, t, rho):
        prob[i] = position_distribution(partial_trace(rho, [1], dims=space.dims), x)

    psi0 = product_state(space, [fock_state(6, 0), fock_state(50, 0)])
    evolve(gen, psi0, t_eval, store_states=False, on_sample=on_sample)
    return {
        "params": params,
        "space": space,
        "t": t_eval,
        "x": x,
        "prob": prob,
        "wall": time.time() - t0,
    }


def run_cat(gamma: float, phi0: float, horizon: float, n_samples: int):
    """Evolve a mechanical cat state and record P(x=0, t)."""
    params = quadratic_params(0.17, gamma)
    space = HilbertSpaceSpec((5, 32))
    gen = build_generator(params, space)
    psi0 = product_state(space, [fock_state(5, 0), prepare_cat_state(32, 1.5, phi0)])
    t_eval = np.linspace(0.0, horizon, n_samples)
    origin = np.array([0.0])
    p0 = np.zeros(n_samples)

    def on_sample(i, t, rho):
        p0[i] = position_distribution(
            partial_trace(rho, [1], dims=space.dims), origin
        )[0]

    evolve(gen, psi0, t_eval, store_states=False, on_sample=on_sample)
    return t_eval, p0


@pytest.fixture(scope="session")
def cat_reference_run():
    """phi0 = 0 cat at gamma = 1e-6, long horizon (recurrences + slow decay)."""
    t0 = time.time()
    t_eval, p0 = run_cat(1e-6, 0.0, 3000.0, 1501)
    return {"t": t_eval, "p0": p0, "wall": time.time() - t0}


@pytest.fixture(scope="session")
def cat_pi_run():
    """phi0 = pi cat at gamma = 1e-6, short horizon (destructive interference)."""
    t0 = time.time()
    t_eval, p0 = run_cat(1e-6, np.pi, 800.0, 401)
    return {"t": t_eval, "p0": p0, "wall": time.time() - t0}


@pytest.fixture(scope="session")
def cat_damped_run():
    """phi0 = 0 cat at gamma = 1e-3 (decohered recurrences)."""
    t0 = time.time()
    t_eval, p0 = run_cat(1e-3, 0.0, 800.0, 401)
    return {"t": t_eval, "p0": p0, "wall": time.time() - t0}


# --------------------------------------------------------------------------
# Angular-momentum conservation runs (two equal quadratic couplings)
# --------------------------------------------------------------------------

def run_angular_momentum(gamma: float, rtol: float, atol: float):
    space = HilbertSpaceSpec((3, 10, 10))
    psi0 = product_state(
        space, [fock_state(3, 0), coherent_state(10, 0.8), coherent_state(10, 0.3j)]
    )
    op = angular_momentum_operator(space, 1, 2)
    params = SystemParams(
        coupling=Coupling.QUADRATIC,
        omega_m=0.01,
        g=(-0.2, -0.2),
        delta_c=-0.02,
        eta=0.09,
        gamma=(gamma, gamma),
    )
    gen = build_generator(params, space)
    traj = evolve(
        gen,
        psi0,
        np.linspace(0.0, 500.0, 251),
        e_ops={"L": op},
        store_states=False,
        rtol=rtol,
        atol=atol,
    )
    return traj.observables.times, traj.observables.values["L"].real


@pytest.fixture(scope="session")
def angular_momentum_conserved():
    t0 = time.time()
    times, values = run_angular_momentum(0.0, 1e-9, 1e-12)
    return {"t": times, "L": values, "wall": time.time() - t0}


@pytest.fixture(scope="session")
def angular_momentum_damped():
    t0 = time.time()
    times, values = run_angular_momentum(2e-3, 1e-8, 1e-10)
    return {"t": times, "L": values, "gamma": 2e-3, "wall": time.time() - t0}


# --------------------------------------------------------------------------
# Well-orbit frequency run (mixed-sign quadratic couplings)
# --------------------------------------------------------------------------

@pytest.fixture(scope="session")
def well_orbit_run():
    """Coherent packet released at the outer turning point of one sombrero well."""
    from scipy.optimize import brentq

    from optomech.meanfield import effective_potential, sombrero_radius

    t0 = time.time()
    params = SystemParams(
        coupling=Coupling.QUADRATIC,
        omega_m=0.01,
        g=(0.2, -0.2),
        delta_c=-0.02,
        eta=0.22,
        gamma=(1e-3, 1e-3),
    )
    radius = sombrero_radius(params)

    def leveled(x2: float) -> float:
        pot = effective_potential(params, np.array([0.0, x2]))
        ref = effective_potential(params, np.array([0.0, 0.0]))
        return float(pot - ref)

    x_out = brentq(leveled, radius + 1e-6, 8.0)
    space = HilbertSpaceSpec((4, 5, 28))
    psi0 = product_state(
        space,
        [fock_state(4, 0), fock_state(5, 0), coherent_state(28, x_out / np.sqrt(2.0))],
    )
    gen = build_generator(params, space)
    xop = embed(position(28), 2, space)
    traj = evolve(
        gen,
        psi0,
        np.linspace(0.0, 1500.0, 751),
        e_ops={"x2": xop},
        store_states=False,
    )
    return {
        "params": params,
        "radius": radius,
        "x_out": x_out,
        "t": traj.observables.times,
        "x2": traj.observables.values["x2"].real,
        "wall": time.time() - t0,
    }
