"""Ground states of the effective mechanical potential on a position grid.

The mechanics seen through the adiabatically eliminated cavity moves in
``U_eff`` (see :mod:`optomech.meanfield`) with kinetic energy
``(omega_m/2) sum_k p_k^2``, i.e. the grid Hamiltonian::

    H = -(omega_m/2) sum_k d^2/dx_k^2 + U_eff(x)

This module relaxes a trial wavefunction to the ground state of that
*effective single-particle problem* (not of the coupled cavity-mechanics
system) by imaginary-time propagation with an annealed step size: large
steps quickly find the right region, then successive halvings remove the
Trotter bias. A fixed large step converges to a biased fixed point, so the
annealing is not optional.

Propagation uses a Strang splitting ``exp(-dtau V/2) exp(-dtau T)
exp(-dtau V/2)`` with the kinetic factor applied spectrally (FFT) when every
axis length is a power of two, and through an unconditionally stable Pade
approximation of a finite-difference Laplacian otherwise.

Fock-space coefficients of the result come from projecting onto Hermite
functions, the number states of the bare mechanical oscillator.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.fft
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    BoundaryLeakError,
    ConvergenceFailure,
    ShapeError,
    TruncationError,
    TruncationWarning,
    ValidationError,
)
from .meanfield import effective_potential, find_steady_states
from .model import SystemParams

__all__ = [
    "GridAxis",
    "PositionGrid",
    "GroundStateResult",
    "hermite_functions",
    "solve_ground_state",
    "fock_project",
    "fock_reconstruct",
]

#: Probability allowed in the outermost grid shell before the result is
#: rejected as leaking through the boundary.
EDGE_PROBABILITY_LIMIT = 1e-8

#: Margin in oscillator-length units required around every classical
#: minimum when validating grid coverage.
COVERAGE_MARGIN = 4.0


@dataclass(frozen=True)
class GridAxis:
    """Uniform axis ``[lo, hi)`` with ``n`` points (endpoint excluded, so the
    FFT's periodic wrap-around sits at the far edge)."""

    lo: float
    hi: float
    n: int

    def __post_init__(self) -> None:
        if not self.hi > self.lo:
            raise ValidationError(f"axis needs hi > lo, got [{self.lo}, {self.hi})")
        if self.n < 8:
            raise ValidationError(f"axis needs at least 8 points, got {self.n}")

    @property
    def spacing(self) -> float:
        return (self.hi - self.lo) / self.n

    def points(self) -> np.ndarray:
        return self.lo + self.spacing * np.arange(self.n)


@dataclass(frozen=True)
class PositionGrid:
    """Tensor grid over the mechanical coordinates, one axis per mode."""

    axes: tuple[GridAxis, ...]

    def __post_init__(self) -> None:
        if not isinstance(self.axes, tuple):
            object.__setattr__(self, "axes", tuple(self.axes))
        if len(self.axes) == 0:
            raise ValidationError("a position grid needs at least one axis")

    @property
    def ndim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(ax.n for ax in self.axes)

    @property
    def cell_volume(self) -> float:
        return math.prod(ax.spacing for ax in self.axes)

    def meshgrid(self) -> list[np.ndarray]:
        return np.meshgrid(*(ax.points() for ax in self.axes), indexing="ij")

    def points_array(self) -> np.ndarray:
        """All grid points as an array of shape ``(*shape, ndim)``."""
        return np.stack(self.meshgrid(), axis=-1)


@dataclass
class GroundStateResult:
    """Converged wavefunction with its energy and relaxation history."""

    grid: PositionGrid
    psi: np.ndarray
    energy: float
    energy_history: list[tuple[float, int, float]]
    edge_probability: float


def hermite_functions(n_levels: int, x: np.ndarray) -> np.ndarray:
    """First ``n_levels`` harmonic-oscillator eigenfunctions on ``x``.

    Row ``n`` is ``phi_n(x)`` for the dimensionless oscillator
    (``phi_0 = pi^{-1/4} exp(-x^2/2)``), generated with the stable
    three-term recurrence
    ``phi_{n+1} = sqrt(2/(n+1)) x phi_n - sqrt(n/(n+1)) phi_{n-1}``.
    """
    if n_levels < 1:
        raise ValidationError(f"n_levels must be >= 1, got {n_levels}")
    x = np.asarray(x, dtype=float)
    out = np.empty((n_levels, x.size), dtype=float)
    out[0] = math.pi ** -0.25 * np.exp(-0.5 * x**2)
    if n_levels > 1:
        out[1] = math.sqrt(2.0) * x * out[0]
    for n in range(1, n_levels - 1):
        out[n + 1] = math.sqrt(2.0 / (n + 1)) * x * out[n] - math.sqrt(
            n / (n + 1.0)
        ) * out[n - 1]
    return out


def _coverage_targets(params: SystemParams, ndim: int) -> list[list[float]]:
    """Per-axis coordinates that the grid must cover with margin."""
    targets: list[list[float]] = [[0.0] for _ in range(ndim)]
    for pt in find_steady_states(params):
        if pt.stability != "stable":
            continue
        radius = float(np.linalg.norm(pt.x))
        for k in range(ndim):
            if pt.degenerate:
                # A ring of minima sweeps +/- radius through every grouped
                # axis; demanding it of all axes is a safe overestimate.
                targets[k].extend([radius, -radius])
            else:
                targets[k].append(float(pt.x[k]))
    return targets


def _check_coverage(params: SystemParams, grid: PositionGrid) -> None:
    for k, (axis, targets) in enumerate(
        zip(grid.axes, _coverage_targets(params, grid.ndim))
    ):
        lo_needed = min(targets) - COVERAGE_MARGIN
        hi_needed = max(targets) + COVERAGE_MARGIN
        if axis.lo > lo_needed or axis.hi - axis.spacing < hi_needed:
            raise ValidationError(
                f"axis {k} spans [{axis.lo}, {axis.hi - axis.spacing:.6g}] but the "
                f"classical minima require [{lo_needed:.6g}, {hi_needed:.6g}] "
                f"(minima plus {COVERAGE_MARGIN} units of margin)"
            )


class _SpectralKinetic:
    """Kinetic propagator via FFT: exact for the periodic grid."""

    def __init__(self, grid: PositionGrid, omega_m: float) -> None:
        ks = np.meshgrid(
            *(
                2.0 * math.pi * scipy.fft.fftfreq(ax.n, ax.spacing)
                for ax in grid.axes
            ),
            indexing="ij",
        )
        self.tk = 0.5 * omega_m * sum(k**2 for k in ks)

    def propagate(self, psi: np.ndarray, dtau: float) -> np.ndarray:
        return scipy.fft.ifftn(np.exp(-dtau * self.tk) * scipy.fft.fftn(psi)).real

    def energy(self, psi: np.ndarray, cell: float) -> float:
        ft = scipy.fft.fftn(psi)
        return float(
            np.sum(self.tk * np.abs(ft) ** 2) / np.sum(np.abs(ft) ** 2)
        )


class _FiniteDifferenceKinetic:
    """Kinetic propagator via a Pade(1,1) step of the 3-point Laplacian.

    ``exp(-dtau T) ~ (1 + dtau T/2)^{-1} (1 - dtau T/2)`` is
    unconditionally stable in imaginary time; the factorization of the
    left-hand operator is cached per step size.
    """

    def __init__(self, grid: PositionGrid, omega_m: float) -> None:
        terms = []
        for k, ax in enumerate(grid.axes):
            stencil = sp.diags(
                [1.0, -2.0, 1.0], [-1, 0, 1], shape=(ax.n, ax.n)
            ) / ax.spacing**2
            factors = [
                stencil if j == k else sp.identity(a.n)
                for j, a in enumerate(grid.axes)
            ]
            term = factors[0]
            for f in factors[1:]:
                term = sp.kron(term, f)
            terms.append(term)
        self.t_op = (-0.5 * omega_m * sum(terms)).tocsc()
        self.shape = grid.shape
        self._solver_cache: dict[float, spla.SuperLU] = {}

    def propagate(self, psi: np.ndarray, dtau: float) -> np.ndarray:
        n = self.t_op.shape[0]
        if dtau not in self._solver_cache:
            lhs = sp.identity(n, format="csc") + (0.5 * dtau) * self.t_op
            self._solver_cache[dtau] = spla.splu(lhs)
        rhs = psi.reshape(n) - (0.5 * dtau) * (self.t_op @ psi.reshape(n))
        return self._solver_cache[dtau].solve(rhs).reshape(self.shape)

    def energy(self, psi: np.ndarray, cell: float) -> float:
        flat = psi.reshape(-1)
        return float(flat @ (self.t_op @ flat) * cell)


def _default_initial_state(
    params: SystemParams, grid: PositionGrid
) -> np.ndarray:
    """Unit-width Gaussians on every stable classical minimum (and ring),
    plus a broad background so no symmetry sector starts empty."""
    pts = grid.points_array()
    r2 = (pts**2).sum(axis=-1)
    psi = 1e-3 * np.exp(-r2 / (2.0 * 16.0))
    for pt in find_steady_states(params):
        if pt.stability != "stable":
            continue
        if pt.degenerate:
            radius = float(np.linalg.norm(pt.x))
            psi += np.exp(-0.5 * (np.sqrt(r2) - radius) ** 2)
        else:
            d2 = ((pts - pt.x) ** 2).sum(axis=-1)
            psi += np.exp(-0.5 * d2)
            d2m = ((pts + pt.x) ** 2).sum(axis=-1)
            psi += np.exp(-0.5 * d2m) * (
                1.0 if params.coupling == "quadratic" else 0.0
            )
    return psi


def solve_ground_state(
    params: SystemParams,
    grid: PositionGrid,
    psi0: np.ndarray | None = None,
    dtau0: float | None = None,
    levels: int = 6,
    step_tol: float = 1e-12,
    max_steps_per_level: int = 40_000,
    check_coverage: bool = True,
) -> GroundStateResult:
    """Relax to the ground state of the effective potential.

    Parameters
    ----------
    params:
        System parameters; ``params.n_mech`` must equal ``grid.ndim``.
    grid:
        Position grid. Unless ``check_coverage=False``, every axis must
        span all classical minima with 4 units of margin.
    psi0:
        Optional initial guess (any nonzero overlap with the ground state
        suffices); defaults to Gaussians seeded on the classical minima.
    dtau0:
        Initial imaginary-time step, default ``0.1 / omega_m``. The step is
        halved ``levels - 1`` times; each level runs until the energy is
        stationary to ``step_tol`` (relative, per step).
    """
    if grid.ndim != params.n_mech:
        raise ValidationError(
            f"grid has {grid.ndim} axes but the model has {params.n_mech} "
            "mechanical modes"
        )
    if check_coverage:
        _check_coverage(params, grid)

    spectral = all(ax.n & (ax.n - 1) == 0 for ax in grid.axes)
    kinetic = (
        _SpectralKinetic(grid, params.omega_m)
        if spectral
        else _FiniteDifferenceKinetic(grid, params.omega_m)
    )
    potential = effective_potential(params, grid.points_array())
    cell = grid.cell_volume

    if psi0 is None:
        psi = _default_initial_state(params, grid)
    else:
        psi = np.asarray(psi0, dtype=float).copy()
        if psi.shape != grid.shape:
            raise ShapeError(
                f"psi0 has shape {psi.shape}, grid has shape {grid.shape}"
            )
    norm = math.sqrt(float((psi**2).sum()) * cell)
    if norm == 0.0:
        raise ValidationError("initial state is identically zero")
    psi /= norm

    def energy_of(state: np.ndarray) -> float:
        return kinetic.energy(state, cell) + float(
            (potential * state**2).sum() * cell
        )

    dtau = dtau0 if dtau0 is not None else 0.1 / params.omega_m
    history: list[tuple[float, int, float]] = []
    energy = energy_of(psi)
    for _ in range(levels):
        half_v = np.exp(-0.5 * dtau * potential)
        steps = 0
        while steps < max_steps_per_level:
            psi = half_v * kinetic.propagate(half_v * psi, dtau)
            psi /= math.sqrt(float((psi**2).sum()) * cell)
            steps += 1
            if steps % 10 == 0 or steps == max_steps_per_level:
                new_energy = energy_of(psi)
                if abs(new_energy - energy) <= step_tol * max(
                    abs(new_energy), 1e-12
                ) * 10.0:
                    energy = new_energy
                    break
                energy = new_energy
        else:
            raise ConvergenceFailure(
                f"imaginary-time level dtau = {dtau:.4g} did not reach "
                f"stationary energy within {max_steps_per_level} steps"
            )
        history.append((dtau, steps, energy))
        dtau *= 0.5

    edge = _edge_probability(psi, cell)
    if edge > EDGE_PROBABILITY_LIMIT:
        raise BoundaryLeakError(
            f"probability {edge:.3g} in the outermost grid shell exceeds "
            f"{EDGE_PROBABILITY_LIMIT:.0e}; enlarge the grid"
        )
    # Fix the (arbitrary) overall sign so results are reproducible.
    if psi.sum() < 0:
        psi = -psi
    return GroundStateResult(
        grid=grid,
        psi=psi,
        energy=energy,
        energy_history=history,
        edge_probability=edge,
    )


def _edge_probability(psi: np.ndarray, cell: float) -> float:
    total = 0.0
    for axis in range(psi.ndim):
        for index in (0, -1):
            sl = [slice(None)] * psi.ndim
            sl[axis] = index
            total += float((psi[tuple(sl)] ** 2).sum()) * cell
    return total


def fock_project(
    psi: np.ndarray, grid: PositionGrid, dims: tuple[int, ...]
) -> tuple[np.ndarray, float]:
    """Expand a grid wavefunction over number states of the bare oscillator.

    Returns ``(coeffs, reconstruction_error)`` where ``coeffs[n1, ..., nN]``
    multiplies the product Hermite function and the error is the L2 norm of
    the difference between ``psi`` and its truncated reconstruction. An
    error above 1e-3 raises :class:`TruncationError`; above 1e-4 it only
    warns.
    """
    psi = np.asarray(psi, dtype=float)
    if psi.shape != grid.shape:
        raise ShapeError(f"psi shape {psi.shape} does not match grid {grid.shape}")
    if len(dims) != grid.ndim:
        raise ShapeError(
            f"need one truncation per axis ({grid.ndim}), got {len(dims)}"
        )
    coeffs = psi.copy()
    for k, (axis, d) in enumerate(zip(grid.axes, dims)):
        basis = hermite_functions(d, axis.points()) * axis.spacing
        # Contract axis k of psi with the sample axis of the basis.
        coeffs = np.tensordot(basis, coeffs, axes=([1], [k]))
        # tensordot puts the new index first; rotate it back into place.
        coeffs = np.moveaxis(coeffs, 0, k)
    recon = fock_reconstruct(coeffs, grid)
    err = math.sqrt(float(((psi - recon) ** 2).sum()) * grid.cell_volume)
    if err > 1e-3:
        raise TruncationError(
            f"Fock truncation {dims} reconstructs the wavefunction to "
            f"{err:.3g} (limit 1e-3); increase the truncation"
        )
    if err > 1e-4:
        warnings.warn(
            f"Fock truncation {dims} is marginal (reconstruction error "
            f"{err:.3g})",
            TruncationWarning,
            stacklevel=2,
        )
    return coeffs, err


def fock_reconstruct(coeffs: np.ndarray, grid: PositionGrid) -> np.ndarray:
    """Evaluate a Hermite-function expansion back on the grid."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.ndim != grid.ndim:
        raise ShapeError(
            f"coefficient array has {coeffs.ndim} axes, grid has {grid.ndim}"
        )
    out = coeffs
    for k, axis in enumerate(grid.axes):
        basis = hermite_functions(coeffs.shape[k], axis.points())
        out = np.tensordot(basis, out, axes=([0], [k]))
        out = np.moveaxis(out, 0, k)
    return out
