"""Master-equation propagation and steady states.

Density matrices are propagated matrix-free: the Lindblad right-hand side
costs a handful of sparse-dense products (see
:class:`optomech.model._PreparedGenerator`), so memory stays at a few copies
of ``rho`` even for spaces of dimension ~10^3. Trace, Hermiticity, and
positivity are monitored at every requested sample and a violation raises
:class:`~optomech.errors.IntegrationFailure` rather than returning bad data.

Steady states are found three ways:

* ``direct``: sparse LU of the vectorized generator with one row replaced
  by the trace constraint; exact but limited to small spaces (the LU
  fill-in of a dimension-D superoperator grows like D^4 in memory).
* ``deflated``: matrix-free LGMRES on the preconditioned fixed-point
  equation ``rho + S^{-1} J(rho) + tr(rho) u = u``, where ``S(rho) =
  A rho + rho A^H`` is the drift part (solved exactly per iteration through
  a cached Schur factorization and a triangular Sylvester solve) and ``J``
  collects the jump terms. The rank-one trace term removes the generator's
  null direction, so plain Krylov iteration converges. This reaches spaces
  far beyond the direct gate at O(D^2) memory.
* ``march``: time integration over doubling horizons until the residual
  settles; slowest, but makes no assumption beyond the dynamics itself
  (useful when some damping rate vanishes and the drift is not invertible).

Every method must end with residual ``max-column-sum of L(rho)`` below the
requested tolerance or it raises instead of returning.
"""

from __future__ import annotations

import math
import sys
import time
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    ConvergenceFailure,
    DimensionError,
    IntegrationFailure,
    ValidationError,
)
from .hilbert import (
    HilbertSpaceSpec,
    QuantumState,
    annihilation,
    coherent_state,
    embed,
    momentum,
    number,
    position,
    vacuum_state,
)
from .model import LindbladGenerator, SystemParams
from .ode import integrate

__all__ = [
    "ObservableSeries",
    "Trajectory",
    "prepare_cat_state",
    "default_observables",
    "evolve",
    "liouvillian_residual",
    "steady_state",
]

#: Invariant thresholds enforced at sample times during evolution.
TRACE_TOL = 1e-6
HERMITICITY_TOL = 1e-8
POSITIVITY_TOL = -1e-8

#: Largest total dimension accepted by the direct (LU) steady-state method.
DIRECT_DIM_LIMIT = 200


@dataclass
class ObservableSeries:
    """Scalar expectation values streamed at every accepted integrator step."""

    times: np.ndarray
    values: dict[str, np.ndarray]


@dataclass
class Trajectory:
    """Result of :func:`evolve`: sampled states and/or streamed observables."""

    space: HilbertSpaceSpec
    times: np.ndarray
    states: list[np.ndarray] | None
    observables: ObservableSeries | None
    diagnostics: dict[str, float] = field(default_factory=dict)


def prepare_cat_state(dim: int, beta0: complex, phi0: float) -> np.ndarray:
    """Normalized superposition ``|beta0> + e^{i phi0} |-beta0>``.

    The squared norm before normalization is
    ``2 (1 + cos(phi0) e^{-2 |beta0|^2})``; parameter combinations that
    annihilate the state (``beta0 = 0`` with ``phi0 = pi``) are rejected.
    """
    vec = coherent_state(dim, beta0) + np.exp(1j * phi0) * coherent_state(
        dim, -beta0
    )
    norm = np.linalg.norm(vec)
    if norm < 1e-8:
        raise ValidationError(
            f"cat state with beta0 = {beta0}, phi0 = {phi0} vanishes"
        )
    return vec / norm


def default_observables(
    params: SystemParams, space: HilbertSpaceSpec
) -> dict[str, sp.csr_matrix]:
    """Cavity photon number plus quadratures and number of every mechanical
    mode, keyed ``n_cav, x1, p1, n1, x2, ...``."""
    obs: dict[str, sp.csr_matrix] = {}
    if space.dims[0] >= 2:
        obs["n_cav"] = embed(number(space.dims[0]), 0, space)
    for k in range(params.n_mech):
        d = space.dims[k + 1]
        if d < 2:
            continue
        obs[f"x{k + 1}"] = embed(position(d), k + 1, space)
        obs[f"p{k + 1}"] = embed(momentum(d), k + 1, space)
        obs[f"n{k + 1}"] = embed(number(d), k + 1, space)
    return obs


def _as_density_matrix(state, space: HilbertSpaceSpec) -> np.ndarray:
    if isinstance(state, QuantumState):
        if state.space != space:
            raise DimensionError(
                f"state lives on dims {state.space.dims}, generator on {space.dims}"
            )
        state = state.data
    arr = np.asarray(state, dtype=complex)
    n = space.size
    if arr.shape == (n,):
        return np.outer(arr, arr.conj())
    if arr.shape == (n, n):
        return arr.copy()
    raise DimensionError(
        f"initial state shape {arr.shape} incompatible with dimension {n}"
    )


def evolve(
    gen: LindbladGenerator,
    state0,
    t_eval: np.ndarray,
    e_ops: Mapping[str, sp.spmatrix] | None = None,
    store_states: bool = True,
    on_sample: Callable[[int, float, np.ndarray], None] | None = None,
    rtol: float = 1e-8,
    atol: float = 1e-10,
    fixed_step: float | None = None,
    max_step: float | None = None,
    check_invariants: bool = True,
    progress: bool = False,
) -> Trajectory:
    """Propagate a density matrix under the master equation.

    Parameters
    ----------
    gen:
        Generator from :func:`optomech.model.build_generator`.
    state0:
        :class:`QuantumState`, state vector, or density matrix on the
        generator's space.
    t_eval:
        Strictly increasing sample times starting at the initial time.
    e_ops:
        Named operators whose expectations are recorded at *every accepted
        step* (not just samples), giving densely resolved scalar series.
    store_states:
        Keep a copy of ``rho`` at each sample time. Disable for long runs
        on large spaces and use ``on_sample`` to extract what you need.
    on_sample:
        Callback ``on_sample(index, t, rho)`` at each sample; ``rho`` must
        not be mutated.
    max_step:
        Adaptive step-size cap. Defaults to ``2.5 / spectral_radius`` of
        the generator, which keeps the explicit integrator inside its
        linear stability region even where the solution is nearly flat
        (near a steady state the error estimate alone would let the step
        grow unstable and deposit amplified roundoff). Pass ``math.inf``
        to disable the cap.
    check_invariants:
        Verify trace preservation, Hermiticity, and positivity at samples;
        violations raise :class:`IntegrationFailure`. The observed extremes
        are reported in ``Trajectory.diagnostics`` either way.
    """
    rho0 = _as_density_matrix(state0, gen.space)
    prepared = gen.prepared()
    if max_step is None and fixed_step is None:
        max_step = 2.5 / prepared.spectral_radius()

    obs_items = list((e_ops or {}).items())
    n = gen.space.size
    for name, op in obs_items:
        if op.shape != (n, n):
            raise ValidationError(
                f"observable {name!r} has shape {op.shape}, expected {(n, n)}"
            )
    obs_times: list[float] = []
    obs_values: list[list[complex]] = [[] for _ in obs_items]
    states: list[np.ndarray] = []
    diag = {
        "max_trace_drift": 0.0,
        "max_hermiticity_defect": 0.0,
        "min_eigenvalue": math.inf,
    }
    clock = time.monotonic()

    def rhs(t: float, rho: np.ndarray) -> np.ndarray:
        return prepared.apply(rho)

    def on_step(t: float, rho: np.ndarray) -> None:
        if obs_items:
            obs_times.append(t)
            for slot, (_, op) in zip(obs_values, obs_items):
                slot.append(complex((op @ rho).trace()))
        if progress:
            nonlocal clock
            now = time.monotonic()
            if now - clock > 10.0:
                clock = now
                print(
                    f"  evolve: t = {t:.6g} / {t_eval[-1]:.6g}",
                    file=sys.stderr,
                    flush=True,
                )

    def handle_sample(index: int, t: float, rho: np.ndarray) -> None:
        drift = abs(np.trace(rho).real - 1.0) + abs(np.trace(rho).imag)
        defect = float(np.abs(rho - rho.conj().T).max())
        diag["max_trace_drift"] = max(diag["max_trace_drift"], drift)
        diag["max_hermiticity_defect"] = max(
            diag["max_hermiticity_defect"], defect
        )
        if check_invariants:
            if drift > TRACE_TOL:
                raise IntegrationFailure(
                    f"trace drift {drift:.3g} exceeds {TRACE_TOL} at t = {t:.6g}; "
                    "tighten tolerances or reduce the step"
                )
            if defect > HERMITICITY_TOL:
                raise IntegrationFailure(
                    f"Hermiticity defect {defect:.3g} exceeds {HERMITICITY_TOL} "
                    f"at t = {t:.6g}"
                )
            low = float(np.linalg.eigvalsh(rho)[0])
            diag["min_eigenvalue"] = min(diag["min_eigenvalue"], low)
            if low < POSITIVITY_TOL:
                raise IntegrationFailure(
                    f"negative population {low:.3g} below {POSITIVITY_TOL} at "
                    f"t = {t:.6g}; the truncation or tolerances are inadequate"
                )
        if store_states:
            states.append(rho.copy())
        if on_sample is not None:
            on_sample(index, t, rho)

    result = integrate(
        rhs,
        rho0,
        t_eval,
        rtol=rtol,
        atol=atol,
        fixed_step=fixed_step,
        max_step=max_step,
        on_step=on_step if (obs_items or progress) else None,
        on_sample=handle_sample,
        store=False,
    )

    diag["n_accepted"] = result.n_accepted
    diag["n_rejected"] = result.n_rejected
    if not check_invariants or diag["min_eigenvalue"] is math.inf:
        diag.pop("min_eigenvalue", None)

    observables = None
    if obs_items:
        observables = ObservableSeries(
            times=np.array(obs_times),
            values={
                name: np.array(vals)
                for (name, _), vals in zip(obs_items, obs_values)
            },
        )
    return Trajectory(
        space=gen.space,
        times=np.asarray(t_eval, dtype=float),
        states=states if store_states else None,
        observables=observables,
        diagnostics=diag,
    )


def liouvillian_residual(gen: LindbladGenerator, rho: np.ndarray) -> float:
    """Max-column-sum norm of ``L(rho)``, the steady-state defect."""
    lrho = gen.prepared().apply(np.asarray(rho, dtype=complex))
    return float(np.abs(lrho).sum(axis=0).max())


def _finalize_steady_state(
    gen: LindbladGenerator, rho: np.ndarray, tol: float, info: dict
) -> tuple[np.ndarray, dict]:
    rho = 0.5 * (rho + rho.conj().T)
    tr = np.trace(rho).real
    if abs(tr) < 1e-12:
        raise ConvergenceFailure(
            "steady-state solve returned a traceless matrix; the iteration "
            "collapsed onto the null space"
        )
    rho = rho / tr
    residual = liouvillian_residual(gen, rho)
    info["residual"] = residual
    if residual > tol:
        raise ConvergenceFailure(
            f"steady-state residual {residual:.3g} exceeds tolerance {tol:.3g} "
            f"(method {info['method']})"
        )
    low = float(np.linalg.eigvalsh(rho)[0])
    info["min_eigenvalue"] = low
    if low < POSITIVITY_TOL:
        raise ConvergenceFailure(
            f"steady state has negative population {low:.3g}; enlarge the "
            "truncation"
        )
    return rho, info


def _steady_state_direct(
    gen: LindbladGenerator, tol: float
) -> tuple[np.ndarray, dict]:
    size = gen.space.size
    if size > DIRECT_DIM_LIMIT:
        raise ValidationError(
            f"direct steady-state solve is limited to dimension "
            f"{DIRECT_DIM_LIMIT} (got {size}); use method='deflated'"
        )
    ident = sp.identity(size, dtype=complex, format="csr")
    H = gen.hamiltonian
    lmat = -1j * (sp.kron(H, ident) - sp.kron(ident, H.T))
    for rate, c in gen.collapse:
        if rate == 0.0:
            continue
        cdc = (c.conj().T @ c).tocsr()
        lmat = lmat + (0.5 * rate) * (
            2.0 * sp.kron(c, c.conj())
            - sp.kron(cdc, ident)
            - sp.kron(ident, cdc.T)
        )
    lmat = lmat.tolil()
    # Replace one row by the trace functional to pin the normalization.
    diag_cols = np.arange(size) * size + np.arange(size)
    lmat[0, :] = 0.0
    lmat[0, diag_cols] = 1.0
    rhs = np.zeros(size * size, dtype=complex)
    rhs[0] = 1.0
    solver = spla.splu(lmat.tocsc())
    rho = solver.solve(rhs).reshape(size, size)
    return _finalize_steady_state(gen, rho, tol, {"method": "direct"})


def _steady_state_deflated(
    gen: LindbladGenerator,
    tol: float,
    rho0: np.ndarray | None,
    linear_rtol: float,
    maxiter: int,
    inner_m: int,
) -> tuple[np.ndarray, dict]:
    size = gen.space.size
    prepared = gen.prepared()
    drift = prepared.drift.toarray()
    t_mat, q_mat = scipy.linalg.schur(drift, output="complex")
    trsyl = scipy.linalg.get_lapack_funcs("trsyl", (t_mat,))
    q_h = q_mat.conj().T

    def drift_solve(c: np.ndarray) -> np.ndarray:
        """Solve A y + y A^H = c through the cached Schur form."""
        y, scale, info = trsyl(t_mat, t_mat, q_h @ c @ q_mat, tranb="C")
        if info < 0:
            raise ConvergenceFailure(
                f"triangular Sylvester solve failed (info = {info}); the "
                "drift is likely singular (all damping rates must be > 0)"
            )
        return q_mat @ (y / scale) @ q_h

    def jumps(rho: np.ndarray) -> np.ndarray:
        out = np.zeros_like(rho)
        for rate, c, cdag in prepared.jumps:
            out += rate * (c @ rho @ cdag)
        return out

    unit = (np.eye(size, dtype=complex) / size).reshape(-1)
    matvecs = 0

    def matvec(vec: np.ndarray) -> np.ndarray:
        nonlocal matvecs
        matvecs += 1
        rho = vec.reshape(size, size)
        out = rho + drift_solve(jumps(rho))
        return out.reshape(-1) + np.trace(rho) * unit

    op = spla.LinearOperator(
        (size * size, size * size), matvec=matvec, dtype=complex
    )
    x0 = None if rho0 is None else np.asarray(rho0, dtype=complex).reshape(-1)
    sol, exit_code = spla.lgmres(
        op,
        unit.copy(),
        x0=x0,
        rtol=linear_rtol,
        atol=0.0,
        maxiter=maxiter,
        inner_m=inner_m,
    )
    if exit_code != 0:
        raise ConvergenceFailure(
            f"deflated steady-state iteration did not converge "
            f"(lgmres code {exit_code} after {matvecs} products); check that "
            "every damping rate is positive, or try method='march'"
        )
    info = {"method": "deflated", "matvecs": matvecs}
    return _finalize_steady_state(gen, sol.reshape(size, size), tol, info)


def _steady_state_march(
    gen: LindbladGenerator,
    tol: float,
    rho0: np.ndarray | None,
    max_time: float,
    rtol: float,
) -> tuple[np.ndarray, dict]:
    size = gen.space.size
    rho = (
        np.outer(vacuum_state(gen.space), vacuum_state(gen.space).conj())
        if rho0 is None
        else _as_density_matrix(rho0, gen.space)
    )
    prepared = gen.prepared()

    def rhs(t: float, r: np.ndarray) -> np.ndarray:
        return prepared.apply(r)

    elapsed = 0.0
    horizon = 25.0
    # Stability cap: near convergence the solution is flat and pure error
    # control would push the explicit step past the stability boundary.
    max_step = 2.5 / prepared.spectral_radius()
    residual = liouvillian_residual(gen, rho)
    while residual > tol:
        if elapsed >= max_time:
            raise ConvergenceFailure(
                f"time marching reached t = {elapsed:.3g} with residual "
                f"{residual:.3g} > {tol:.3g}; the relaxation is too slow "
                "(weak damping or metastability); use method='deflated'"
            )
        horizon = min(horizon, max_time - elapsed)
        res = integrate(
            rhs, rho, [0.0, horizon], rtol=rtol, atol=1e-12, max_step=max_step
        )
        rho = res.y[-1]
        rho = 0.5 * (rho + rho.conj().T)
        elapsed += horizon
        horizon *= 2.0
        residual = liouvillian_residual(gen, rho)
    info = {"method": "march", "marched_time": elapsed}
    return _finalize_steady_state(gen, rho, tol, info)


def steady_state(
    gen: LindbladGenerator,
    method: str = "auto",
    tol: float = 1e-8,
    rho0: np.ndarray | None = None,
    max_time: float = 1e6,
    linear_rtol: float = 1e-10,
    maxiter: int = 300,
    inner_m: int = 40,
    march_rtol: float = 1e-8,
) -> tuple[np.ndarray, dict]:
    """Solve ``L(rho) = 0`` with ``tr rho = 1``.

    Parameters
    ----------
    method:
        "direct", "deflated", "march", or "auto" (direct up to dimension
        200 when every channel is damped, deflated above that, marching
        when some damping rate vanishes).
    tol:
        Acceptance threshold on the residual ``||L(rho)||`` (max column
        sum); failure to meet it raises :class:`ConvergenceFailure`.
    rho0:
        Optional warm start (initial guess for "deflated", initial state
        for "march"; ignored by "direct").

    Returns
    -------
    (rho, info):
        The normalized Hermitian steady state and a dictionary with the
        method used, the final residual, and solver statistics.
    """
    if method == "auto":
        damped = all(rate > 0 for rate, _ in gen.collapse) and gen.collapse
        if not damped:
            method = "march"
        elif gen.space.size <= DIRECT_DIM_LIMIT:
            method = "direct"
        else:
            method = "deflated"
    if method == "direct":
        return _steady_state_direct(gen, tol)
    if method == "deflated":
        return _steady_state_deflated(
            gen, tol, rho0, linear_rtol, maxiter, inner_m
        )
    if method == "march":
        return _steady_state_march(gen, tol, rho0, max_time, march_rtol)
    raise ValidationError(
        f"unknown steady-state method {method!r}; expected 'auto', 'direct', "
        "'deflated', or 'march'"
    )
