"""Shared explicit Runge-Kutta integrator (Dormand-Prince 5(4)).

One integrator serves both the mean-field equations and the master equation,
operating on complex ndarrays of any shape. Two modes:

* adaptive (default): embedded 4th-order error estimate, elementwise
  tolerance ``atol + rtol * |y|``, step-size controller with safety factor
  and clamped growth;
* fixed step: a caller-chosen step size marched deterministically, so two
  runs with identical inputs produce bitwise-identical states.

Sample times are hit exactly in both modes (the step is clamped at each
requested time), which avoids interpolation and keeps sampling reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import IntegrationFailure, ValidationError

__all__ = ["OdeResult", "integrate"]

# Dormand-Prince coefficients. The 5th-order weights equal the last stage
# row, so the first stage of the next step reuses the last evaluation (FSAL).
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_B5 = np.append(_A[6], 0.0)
_ERR = np.array(
    [71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40]
)

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0


@dataclass
class OdeResult:
    """States sampled at the requested times, plus step statistics."""

    t: np.ndarray
    y: list[np.ndarray]
    n_accepted: int
    n_rejected: int


def _error_norm(err: np.ndarray, scale: np.ndarray) -> float:
    with np.errstate(over="ignore", invalid="ignore"):
        val = float(np.sqrt(np.mean(np.abs(err / scale) ** 2)))
    return val if np.isfinite(val) else np.inf


def _initial_step(
    rhs: Callable, t0: float, y0: np.ndarray, f0: np.ndarray, rtol: float, atol: float
) -> float:
    """Cheap two-evaluation estimate of a reasonable first step size."""
    scale = atol + rtol * np.abs(y0)
    d0 = _error_norm(y0, scale)
    d1 = _error_norm(f0, scale)
    h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    y1 = y0 + h0 * f0
    f1 = rhs(t0 + h0, y1)
    d2 = _error_norm(f1 - f0, scale) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1)


def integrate(
    rhs: Callable[[float, np.ndarray], np.ndarray],
    y0: np.ndarray,
    t_eval: Sequence[float],
    rtol: float = 1e-8,
    atol: float = 1e-10,
    fixed_step: float | None = None,
    first_step: float | None = None,
    max_step: float | None = None,
    max_steps: int = 10_000_000,
    on_step: Callable[[float, np.ndarray], None] | None = None,
    on_sample: Callable[[int, float, np.ndarray], None] | None = None,
    store: bool = True,
) -> OdeResult:
    """Integrate ``dy/dt = rhs(t, y)`` and sample the solution at ``t_eval``.

    Parameters
    ----------
    rhs:
        Right-hand side; must return an array of the same shape as ``y``.
    y0:
        Initial state at ``t_eval[0]`` (any shape, real or complex).
    t_eval:
        Strictly increasing sample times; the first entry is the initial
        time and its sample is ``y0`` itself.
    rtol, atol:
        Error tolerances for the adaptive mode (ignored with
        ``fixed_step``).
    fixed_step:
        March with exactly this step (clamped only to land on sample
        times), skipping error control. Deterministic across runs.
    max_step:
        Upper bound on the adaptive step. Essential for stiff linear
        systems near flat solutions: there the error estimate goes to
        zero, the controller grows the step past the explicit stability
        boundary, and amplified roundoff is deposited into the solution
        before the estimator notices. Bound the step by roughly
        ``2.5 / spectral_radius`` of the system matrix to prevent this.
    on_step:
        Callback ``on_step(t, y)`` invoked at the initial point and after
        every accepted step. The array must not be mutated by the callback.
    on_sample:
        Callback ``on_sample(index, t, y)`` invoked once per entry of
        ``t_eval`` (index 0 is the initial state). Lets large states be
        consumed without keeping them all in memory; combine with
        ``store=False``.
    store:
        Keep a copy of the state at every sample time in the result. With
        ``store=False`` the result's ``y`` list is empty.
    """
    t_eval = np.asarray(t_eval, dtype=float)
    if t_eval.ndim != 1 or t_eval.size < 1:
        raise ValidationError("t_eval must be a non-empty 1-D array of times")
    if t_eval.size > 1 and not np.all(np.diff(t_eval) > 0):
        raise ValidationError("t_eval must be strictly increasing")
    if fixed_step is not None and not fixed_step > 0:
        raise ValidationError(f"fixed_step must be > 0, got {fixed_step}")
    if max_step is not None and not max_step > 0:
        raise ValidationError(f"max_step must be > 0, got {max_step}")

    y = np.array(y0, dtype=complex if np.iscomplexobj(y0) else float, copy=True)
    t = float(t_eval[0])
    samples: list[np.ndarray] = []
    if store:
        samples.append(y.copy())
    if on_sample is not None:
        on_sample(0, t, y)
    if on_step is not None:
        on_step(t, y)

    n_accepted = 0
    n_rejected = 0
    k = [None] * 7  # stage derivatives
    k[0] = rhs(t, y)

    if fixed_step is not None:
        h_base = float(fixed_step)
    else:
        h_base = (
            float(first_step)
            if first_step is not None
            else _initial_step(rhs, t, y, k[0], rtol, atol)
        )
        if max_step is not None:
            h_base = min(h_base, float(max_step))

    next_sample = 1
    t_end = float(t_eval[-1])
    while next_sample < t_eval.size:
        if n_accepted + n_rejected >= max_steps:
            raise IntegrationFailure(
                f"step budget {max_steps} exhausted at t = {t:.6g} "
                f"(target {t_end:.6g})"
            )
        t_target = float(t_eval[next_sample])
        h = min(h_base, t_target - t)
        if h <= abs(t) * 1e-15 + 1e-300:
            raise IntegrationFailure(
                f"step size underflow at t = {t:.6g} (h = {h:.3g})"
            )

        for i in range(1, 7):
            yi = y + h * sum(_A[i][j] * k[j] for j in range(i))
            k[i] = rhs(t + _C[i] * h, yi)
        y_new = y + h * sum(_B5[j] * k[j] for j in range(7) if _B5[j] != 0.0)
        # FSAL: the 7th stage already sits at (t + h, y_new).

        if fixed_step is None:
            err_vec = h * sum(_ERR[j] * k[j] for j in range(7) if _ERR[j] != 0.0)
            scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
            err = _error_norm(err_vec, scale)
            if err > 1.0:
                n_rejected += 1
                factor = max(_MIN_FACTOR, _SAFETY * err ** -0.2)
                h_base = h * factor
                continue
            factor = _MAX_FACTOR if err == 0.0 else _SAFETY * err ** -0.2
            h_base = h * min(_MAX_FACTOR, max(_MIN_FACTOR, factor))
            if max_step is not None:
                h_base = min(h_base, float(max_step))
        else:
            if not np.all(np.isfinite(y_new.view(float))):
                raise IntegrationFailure(
                    f"non-finite state at t = {t + h:.6g} with fixed step "
                    f"{fixed_step}; the step is too large for this system"
                )

        t += h
        y = y_new
        k[0] = k[6]
        n_accepted += 1
        if on_step is not None:
            on_step(t, y)
        while next_sample < t_eval.size and t >= t_eval[next_sample] - 1e-12 * max(
            1.0, abs(t)
        ):
            if store:
                samples.append(y.copy())
            if on_sample is not None:
                on_sample(next_sample, t, y)
            next_sample += 1

    return OdeResult(
        t=t_eval.copy(), y=samples, n_accepted=n_accepted, n_rejected=n_rejected
    )
