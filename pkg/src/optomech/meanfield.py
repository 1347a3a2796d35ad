"""Classical (mean-field) dynamics, effective potential, and steady states.

Factorizing the cavity-mechanics state into coherent amplitudes turns the
master equation into ODEs for the mechanical quadratures ``(x_k, p_k)`` and
the cavity amplitude ``alpha``::

    dx_k/dt = omega_m p_k
    dp_k/dt = -omega_m x_k + g_k |alpha|^2       - (gamma_k/2) p_k   (linear)
    dp_k/dt = -(omega_m + 2 g_k |alpha|^2) x_k   - (gamma_k/2) p_k   (quadratic)
    dalpha/dt = [i dtilde(x) - kappa/2] alpha + eta

where ``dtilde`` is the displacement-shifted detuning
``delta_c + sum_k g_k x_k`` (linear) or ``delta_c - sum_k g_k x_k^2``
(quadratic). Because the cavity relaxes on the fast timescale ``kappa``
while the mechanics moves on ``omega_m``, the cavity can be eliminated
adiabatically, ``alpha -> eta / (kappa/2 - i dtilde)``, leaving conservative
motion (for ``gamma = 0``) in the effective potential::

    U_eff(x) = (omega_m/2) sum_k x_k^2
               - (2 eta^2 / kappa) * arctan(2 dtilde(x) / kappa)

with ``dp_k/dt = -dU_eff/dx_k - (gamma_k/2) p_k`` exactly. All steady states
follow in closed form: a cubic for linear coupling, and for quadratic
coupling the origin plus displaced rings at radius
``R^2 = (-delta_c +/- sqrt(2|g| eta^2/omega_m - kappa^2/4)) / |g|``
for modes with negative coupling. Stability is classified by the eigenvalues
of the Hessian of ``U_eff`` (minima are stable under weak damping); near-zero
eigenvalues set a ``degenerate`` flag instead of forcing a label.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NoSombreroError, ShapeError, ValidationError
from .model import Coupling, SystemParams
from .ode import integrate

__all__ = [
    "MeanFieldState",
    "MeanFieldTrajectory",
    "SteadyStatePoint",
    "adiabatic_cavity_field",
    "effective_potential",
    "potential_gradient",
    "potential_hessian",
    "mechanical_energy",
    "meanfield_rhs",
    "integrate_meanfield",
    "linear_cubic_coefficients",
    "linear_steady_states",
    "quadratic_steady_states",
    "find_steady_states",
    "multistability_condition",
    "quadratic_critical_pump_rates",
    "sombrero_radius",
    "well_oscillation_frequency",
]

#: Hessian eigenvalues with magnitude at or below this are treated as zero
#: modes: the point is flagged degenerate rather than classified by them.
DEGENERACY_TOL = 1e-8


@dataclass
class MeanFieldState:
    """Classical phase-space point: mechanical quadratures plus cavity field."""

    x: np.ndarray
    p: np.ndarray
    alpha: complex = 0.0

    def __post_init__(self) -> None:
        self.x = np.atleast_1d(np.asarray(self.x, dtype=float))
        self.p = np.atleast_1d(np.asarray(self.p, dtype=float))
        if self.x.shape != self.p.shape or self.x.ndim != 1:
            raise ShapeError(
                f"x and p must be equal-length 1-D arrays, got {self.x.shape} "
                f"and {self.p.shape}"
            )
        self.alpha = complex(self.alpha)


@dataclass
class MeanFieldTrajectory:
    """Sampled mean-field evolution. ``x`` and ``p`` have shape (nt, N)."""

    times: np.ndarray
    x: np.ndarray
    p: np.ndarray
    alpha: np.ndarray
    adiabatic: bool


@dataclass(frozen=True)
class SteadyStatePoint:
    """A mean-field fixed point with its potential-curvature classification.

    ``stability`` is "stable" when every Hessian eigenvalue of the effective
    potential is positive (a minimum, hence stable under weak damping) and
    "unstable" otherwise. ``degenerate`` marks zero modes within
    :data:`DEGENERACY_TOL`, e.g. a point on a continuous ring of minima.
    """

    x: np.ndarray
    alpha: complex
    stability: str
    degenerate: bool
    hessian_eigenvalues: np.ndarray

    @property
    def p(self) -> np.ndarray:
        return np.zeros_like(self.x)


def _as_points(x: np.ndarray, n_mech: int) -> tuple[np.ndarray, bool]:
    """Normalize position input to shape (..., N); scalars allowed for N=1."""
    arr = np.asarray(x, dtype=float)
    if n_mech == 1 and (arr.ndim == 0 or arr.shape[-1] != 1):
        arr = arr[..., np.newaxis]
        return arr, True
    if arr.ndim == 0 or arr.shape[-1] != n_mech:
        raise ShapeError(
            f"positions must have last axis of length {n_mech}, got shape "
            f"{np.shape(x)}"
        )
    return arr, False


def _shifted_detuning(params: SystemParams, x: np.ndarray) -> np.ndarray:
    g = np.asarray(params.g)
    if params.coupling is Coupling.LINEAR:
        return params.delta_c + (x * g).sum(axis=-1)
    return params.delta_c - (g * x**2).sum(axis=-1)


def adiabatic_cavity_field(params: SystemParams, x: np.ndarray) -> np.ndarray:
    """Cavity amplitude slaved to the mechanical positions.

    This is the fixed point of the cavity equation at frozen ``x``:
    ``alpha = eta / (kappa/2 - i dtilde(x))``. Returns a complex scalar for
    a single point or an array matching the leading shape of ``x``.
    """
    pts, squeezed = _as_points(x, params.n_mech)
    dt = _shifted_detuning(params, pts)
    alpha = params.eta / (params.kappa / 2.0 - 1j * dt)
    if squeezed and np.ndim(x) == 0:
        return complex(alpha)
    return alpha


def effective_potential(params: SystemParams, x: np.ndarray) -> np.ndarray:
    """Adiabatic potential for the mechanics, in units of hbar*kappa."""
    pts, _ = _as_points(x, params.n_mech)
    dt = _shifted_detuning(params, pts)
    harm = 0.5 * params.omega_m * (pts**2).sum(axis=-1)
    drive = (2.0 * params.eta**2 / params.kappa) * np.arctan(
        2.0 * dt / params.kappa
    )
    return harm - drive


def potential_gradient(params: SystemParams, x: np.ndarray) -> np.ndarray:
    """Gradient of :func:`effective_potential`, shape (..., N)."""
    pts, _ = _as_points(x, params.n_mech)
    dt = _shifted_detuning(params, pts)[..., np.newaxis]
    photons = params.eta**2 / (dt**2 + params.kappa**2 / 4.0)
    g = np.asarray(params.g)
    if params.coupling is Coupling.LINEAR:
        ddt = np.broadcast_to(g, pts.shape)
    else:
        ddt = -2.0 * g * pts
    return params.omega_m * pts - photons * ddt


def potential_hessian(params: SystemParams, x: np.ndarray) -> np.ndarray:
    """Hessian of :func:`effective_potential` at one point, shape (N, N)."""
    pts, _ = _as_points(x, params.n_mech)
    if pts.ndim != 1:
        raise ShapeError("potential_hessian expects a single point")
    dt = float(_shifted_detuning(params, pts))
    denom = dt**2 + params.kappa**2 / 4.0
    photons = params.eta**2 / denom
    # d(photons)/d(dtilde) = -2 dt eta^2 / denom^2
    dphotons = -2.0 * dt * params.eta**2 / denom**2
    g = np.asarray(params.g)
    n = params.n_mech
    if params.coupling is Coupling.LINEAR:
        ddt = np.broadcast_to(g, (n,)).astype(float)
        d2dt = np.zeros((n, n))
    else:
        ddt = -2.0 * g * pts
        d2dt = np.diag(-2.0 * g)
    hess = params.omega_m * np.eye(n)
    hess -= dphotons * np.outer(ddt, ddt)
    hess -= photons * d2dt
    return hess


def mechanical_energy(
    params: SystemParams, x: np.ndarray, p: np.ndarray
) -> np.ndarray:
    """Conserved adiabatic energy ``(omega_m/2) sum p^2 + U_eff(x)``."""
    pts, _ = _as_points(p, params.n_mech)
    kinetic = 0.5 * params.omega_m * (pts**2).sum(axis=-1)
    return kinetic + effective_potential(params, x)


def meanfield_rhs(
    params: SystemParams, t: float, z: np.ndarray, adiabatic: bool = False
) -> np.ndarray:
    """Right-hand side on the packed state used by :func:`integrate_meanfield`.

    Packing: ``[x_1..x_N, p_1..p_N, alpha]`` as a complex vector (``alpha``
    omitted in adiabatic mode). Exposed mainly for testing; most callers
    want :func:`integrate_meanfield`.
    """
    n = params.n_mech
    x = z[:n].real
    p = z[n : 2 * n].real
    g = np.asarray(params.g)
    gam = np.asarray(params.gamma)
    out = np.empty_like(z)
    out[:n] = params.omega_m * p
    if adiabatic:
        out[n : 2 * n] = -potential_gradient(params, x) - 0.5 * gam * p
        return out
    alpha = z[2 * n]
    photons = abs(alpha) ** 2
    if params.coupling is Coupling.LINEAR:
        force = g * photons - params.omega_m * x
    else:
        force = -(params.omega_m + 2.0 * g * photons) * x
    out[n : 2 * n] = force - 0.5 * gam * p
    dt = _shifted_detuning(params, x)
    out[2 * n] = (1j * dt - params.kappa / 2.0) * alpha + params.eta
    return out


def integrate_meanfield(
    params: SystemParams,
    state0: MeanFieldState,
    t_eval: np.ndarray,
    adiabatic: bool = False,
    rtol: float = 1e-9,
    atol: float = 1e-12,
    fixed_step: float | None = None,
) -> MeanFieldTrajectory:
    """Integrate the mean-field equations and sample at ``t_eval``.

    In adiabatic mode the cavity amplitude is not a dynamical variable; the
    returned ``alpha`` column holds the slaved value at each sample.
    """
    n = params.n_mech
    if state0.x.shape != (n,):
        raise ShapeError(
            f"initial state has {state0.x.shape[0]} mechanical modes, "
            f"params have {n}"
        )
    if adiabatic:
        z0 = np.concatenate([state0.x, state0.p]).astype(complex)
    else:
        z0 = np.concatenate(
            [state0.x, state0.p, [state0.alpha]]
        ).astype(complex)

    def rhs(t: float, z: np.ndarray) -> np.ndarray:
        return meanfield_rhs(params, t, z, adiabatic=adiabatic)

    res = integrate(
        rhs, z0, t_eval, rtol=rtol, atol=atol, fixed_step=fixed_step
    )
    zs = np.array(res.y)
    x = zs[:, :n].real
    p = zs[:, n : 2 * n].real
    if adiabatic:
        alpha = np.array([adiabatic_cavity_field(params, xi) for xi in x])
        alpha = alpha.reshape(len(x))
    else:
        alpha = zs[:, 2 * n]
    return MeanFieldTrajectory(
        times=res.t, x=x, p=p, alpha=alpha, adiabatic=adiabatic
    )


def _classify(params: SystemParams, x: np.ndarray) -> SteadyStatePoint:
    eigs = np.linalg.eigvalsh(potential_hessian(params, x))
    degenerate = bool(np.any(np.abs(eigs) <= DEGENERACY_TOL))
    definite = eigs[np.abs(eigs) > DEGENERACY_TOL]
    stable = bool(definite.size == 0 or np.all(definite > 0))
    return SteadyStatePoint(
        x=np.array(x, dtype=float),
        alpha=complex(adiabatic_cavity_field(params, x)),
        stability="stable" if stable else "unstable",
        degenerate=degenerate,
        hessian_eigenvalues=eigs,
    )


def linear_cubic_coefficients(params: SystemParams) -> np.ndarray:
    """Coefficients (highest power first) of the photon-number cubic.

    Every linear-coupling fixed point has ``x_k = g_k A / omega_m`` with
    ``A = |alpha|^2`` a nonnegative root of::

        G^2 A^3 + 2 delta_c G A^2 + (delta_c^2 + kappa^2/4) A - eta^2 = 0,
        G = sum_k g_k^2 / omega_m .

    For equal couplings this is equivalent to the standard displacement
    cubic in ``x``.
    """
    if params.coupling is not Coupling.LINEAR:
        raise ValidationError("the displacement cubic applies to linear coupling")
    G = sum(gk**2 for gk in params.g) / params.omega_m
    return np.array(
        [
            G**2,
            2.0 * params.delta_c * G,
            params.delta_c**2 + params.kappa**2 / 4.0,
            -params.eta**2,
        ]
    )


def _polish_polynomial_root(coeffs: np.ndarray, r: float) -> float:
    poly = np.polynomial.Polynomial(coeffs[::-1])
    dpoly = poly.deriv()
    for _ in range(8):
        f = poly(r)
        df = dpoly(r)
        if df == 0.0:
            break
        step = f / df
        r -= step
        if abs(step) < 1e-15 * max(1.0, abs(r)):
            break
    return r


def linear_steady_states(params: SystemParams) -> list[SteadyStatePoint]:
    """All fixed points for linear coupling, sorted by displacement norm."""
    coeffs = linear_cubic_coefficients(params)
    roots = np.roots(coeffs)
    scale = max(1.0, abs(params.delta_c), params.eta)
    g = np.asarray(params.g)
    points: list[SteadyStatePoint] = []
    seen: list[float] = []
    for r in roots:
        if abs(r.imag) > 1e-9 * scale:
            continue
        a = _polish_polynomial_root(coeffs, float(r.real))
        if a < -1e-12:
            continue
        a = max(a, 0.0)
        if any(abs(a - s) <= 1e-9 * max(1.0, s) for s in seen):
            continue
        seen.append(a)
        points.append(_classify(params, g * a / params.omega_m))
    points.sort(key=lambda pt: float(np.linalg.norm(pt.x)))
    return points


def quadratic_steady_states(params: SystemParams) -> list[SteadyStatePoint]:
    """All fixed points for quadratic coupling.

    Per mode, either ``x_k = 0`` or the photon number is pinned at
    ``-omega_m / (2 g_k)`` (possible only for ``g_k < 0``). Modes sharing a
    common negative coupling can therefore displace onto a sphere of radius
    ``R``; for a single such mode the two points ``+/-R`` are returned, for
    a group the representative ``(R, 0, ...)`` is returned with
    ``degenerate=True`` standing in for the whole ring.
    """
    if params.coupling is not Coupling.QUADRATIC:
        raise ValidationError(
            "quadratic_steady_states applies to quadratic coupling"
        )
    n = params.n_mech
    points = [_classify(params, np.zeros(n))]
    g = np.asarray(params.g)
    # Group modes by (negative) coupling value.
    groups: list[tuple[float, list[int]]] = []
    for k in range(n):
        if g[k] >= 0:
            continue
        for gv, members in groups:
            if abs(g[k] - gv) <= 1e-9 * abs(gv):
                members.append(k)
                break
        else:
            groups.append((float(g[k]), [k]))
    for gv, members in groups:
        radicand = 2.0 * abs(gv) * params.eta**2 / params.omega_m - (
            params.kappa**2 / 4.0
        )
        if radicand <= 0:
            continue
        s = math.sqrt(radicand)
        for sign in (+1.0, -1.0):
            r_sq = (-params.delta_c + sign * s) / abs(gv)
            if r_sq <= 0:
                continue
            radius = math.sqrt(r_sq)
            x = np.zeros(n)
            x[members[0]] = radius
            if len(members) == 1:
                points.append(_classify(params, x))
                x_neg = x.copy()
                x_neg[members[0]] = -radius
                points.append(_classify(params, x_neg))
            else:
                points.append(_classify(params, x))
    points.sort(key=lambda pt: (float(np.linalg.norm(pt.x)), pt.x[-1]))
    return points


def find_steady_states(params: SystemParams) -> list[SteadyStatePoint]:
    """Dispatch to the closed-form enumeration for the coupling type."""
    if params.coupling is Coupling.LINEAR:
        return linear_steady_states(params)
    return quadratic_steady_states(params)


def multistability_condition(delta_c: float, kappa: float = 1.0) -> bool:
    """Necessary condition for three linear-coupling fixed points.

    The displacement cubic can have three real roots only when
    ``|delta_c| / kappa > sqrt(3)/2`` (the pump must also lie in a window
    that depends on the remaining parameters).
    """
    if not kappa > 0:
        raise ValidationError(f"kappa must be > 0, got {kappa}")
    return abs(delta_c) / kappa > math.sqrt(3.0) / 2.0


def _softest_coupling(params: SystemParams) -> float:
    g_min = min(params.g)
    if g_min >= 0:
        raise ValidationError(
            "requires at least one negative quadratic coupling (a softened mode)"
        )
    return abs(g_min)


def quadratic_critical_pump_rates(params: SystemParams) -> tuple[float, float]:
    """Pump rates bracketing the quadratic-coupling bifurcations.

    Returns ``(eta_1, eta_2)``: displaced solutions appear above
    ``eta_1 = sqrt(omega_m kappa^2 / (8 |g|))`` and the origin loses
    stability above
    ``eta_2 = sqrt(omega_m (delta_c^2 + kappa^2/4) / (2 |g|))``, where
    ``|g|`` is the magnitude of the most negative coupling. The two
    coincide at zero detuning.
    """
    if params.coupling is not Coupling.QUADRATIC:
        raise ValidationError("critical pump rates apply to quadratic coupling")
    mag = _softest_coupling(params)
    eta_1 = math.sqrt(params.omega_m * params.kappa**2 / (8.0 * mag))
    eta_2 = math.sqrt(
        params.omega_m
        * (params.delta_c**2 + params.kappa**2 / 4.0)
        / (2.0 * mag)
    )
    return eta_1, eta_2


def sombrero_radius(params: SystemParams) -> float:
    """Radius of the displaced ring of minima for quadratic coupling.

    ``R = sqrt[(-delta_c + sqrt(2 |g| eta^2 / omega_m - kappa^2/4)) / |g|]``
    with ``|g|`` from the most negative coupling. Raises
    :class:`NoSombreroError` below threshold, where the expression has no
    positive solution and the origin is the only minimum.
    """
    if params.coupling is not Coupling.QUADRATIC:
        raise ValidationError("sombrero_radius applies to quadratic coupling")
    mag = _softest_coupling(params)
    radicand = 2.0 * mag * params.eta**2 / params.omega_m - params.kappa**2 / 4.0
    if radicand <= 0:
        raise NoSombreroError(
            f"pump eta = {params.eta} is below the displacement threshold"
        )
    r_sq = (-params.delta_c + math.sqrt(radicand)) / mag
    if r_sq <= 0:
        raise NoSombreroError(
            f"detuning delta_c = {params.delta_c} suppresses the displaced ring"
        )
    return math.sqrt(r_sq)


def well_oscillation_frequency(params: SystemParams) -> float:
    """Closed-form orbit frequency near the displaced quadratic-coupling ring,
    ``omega_m - kappa^2 omega_m^2 / (8 |g| eta^2)``.

    This is the frequency of orbits that traverse a displaced well with
    enough amplitude to sample the outer harmonic region (equivalently, the
    inverse period of wave-packet splitting and recombination); the
    curvature frequency at the exact well bottom is larger. ``|g|`` is the
    magnitude of the most negative coupling.
    """
    if params.coupling is not Coupling.QUADRATIC:
        raise ValidationError(
            "well_oscillation_frequency applies to quadratic coupling"
        )
    mag = _softest_coupling(params)
    if params.eta <= 0:
        raise ValidationError("well_oscillation_frequency needs eta > 0")
    return params.omega_m - (
        params.kappa**2 * params.omega_m**2 / (8.0 * mag * params.eta**2)
    )
