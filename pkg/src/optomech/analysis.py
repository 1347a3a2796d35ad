"""Reduced states, entanglement measures, and distribution diagnostics.

All entropies are von Neumann entropies in nats. Position distributions are
reconstructed from Fock-space density matrices through Hermite functions
(the bare-oscillator eigenfunctions), so a mechanical mode's ``P(x)``
needs no grid simulation.
"""

from __future__ import annotations

import string
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import (
    ContractViolationError,
    DimensionError,
    ShapeError,
    ValidationError,
)
from .groundstate import PositionGrid, hermite_functions
from .hilbert import (
    HilbertSpaceSpec,
    QuantumState,
    embed,
    expectation,
    momentum,
    position,
)

__all__ = [
    "partial_trace",
    "von_neumann_entropy",
    "mutual_information",
    "SchmidtDecomposition",
    "schmidt_decompose",
    "grid_schmidt_coefficients",
    "entropy_from_schmidt",
    "position_distribution",
    "joint_position_distribution",
    "angular_momentum_operator",
    "angular_momentum_series",
]

#: Reduced-state eigenvalues below this are treated as exact zeros.
EIGENVALUE_FLOOR = 1e-14

#: Eigenvalues more negative than this indicate an invalid state.
NEGATIVITY_LIMIT = -1e-8


def _coerce_state(state, dims: Sequence[int] | None) -> tuple[np.ndarray, tuple[int, ...]]:
    if isinstance(state, QuantumState):
        return state.density_matrix(), state.space.dims
    arr = np.asarray(state, dtype=complex)
    if dims is None:
        raise ValidationError(
            "dims must be given when the state is a bare array"
        )
    dims = tuple(int(d) for d in dims)
    size = int(np.prod(dims))
    if arr.ndim == 1 and arr.shape == (size,):
        return np.outer(arr, arr.conj()), dims
    if arr.shape == (size, size):
        return arr, dims
    raise ShapeError(
        f"state shape {arr.shape} incompatible with mode dimensions {dims}"
    )


def partial_trace(
    state, keep: Sequence[int], dims: Sequence[int] | None = None
) -> QuantumState:
    """Trace out every mode not listed in ``keep``.

    Parameters
    ----------
    state:
        :class:`QuantumState`, state vector, or density matrix; bare arrays
        need ``dims``.
    keep:
        Mode indices to retain, in their original order.

    Returns
    -------
    QuantumState
        Density matrix on the retained modes.
    """
    rho, all_dims = _coerce_state(state, dims)
    n = len(all_dims)
    keep = sorted(set(int(k) for k in keep))
    if not keep:
        raise ValidationError("keep must name at least one mode")
    if keep[0] < 0 or keep[-1] >= n:
        raise ValidationError(f"keep indices {keep} out of range for {n} modes")

    letters = string.ascii_lowercase
    if 2 * n > len(letters):
        raise ValidationError(f"partial_trace supports up to {len(letters) // 2} modes")
    row = list(letters[:n])
    col = list(letters[n : 2 * n])
    for k in range(n):
        if k not in keep:
            col[k] = row[k]  # repeated index: summed over
    out_row = [row[k] for k in keep]
    out_col = [letters[n + k] for k in keep]
    spec = "".join(row) + "".join(col) + "->" + "".join(out_row + out_col)
    tensor = rho.reshape(*all_dims, *all_dims)
    kept_dims = tuple(all_dims[k] for k in keep)
    size = int(np.prod(kept_dims))
    reduced = np.einsum(spec, tensor).reshape(size, size)
    return QuantumState(space=HilbertSpaceSpec(kept_dims), data=reduced)


def _state_eigenvalues(rho: np.ndarray) -> np.ndarray:
    vals = np.linalg.eigvalsh(rho)
    low = float(vals.min(initial=0.0))
    if low < NEGATIVITY_LIMIT:
        raise ContractViolationError(
            f"density matrix has eigenvalue {low:.3g} below {NEGATIVITY_LIMIT}; "
            "not a physical state"
        )
    vals = np.clip(vals, 0.0, None)
    return vals[vals > EIGENVALUE_FLOOR]


def von_neumann_entropy(state, dims: Sequence[int] | None = None) -> float:
    """``-tr(rho ln rho)`` in nats; exactly 0.0 for pure input vectors."""
    if isinstance(state, QuantumState) and state.is_pure:
        return 0.0
    arr = state.data if isinstance(state, QuantumState) else np.asarray(state)
    if arr.ndim == 1:
        return 0.0
    vals = _state_eigenvalues(np.asarray(arr, dtype=complex))
    if vals.size == 0:
        return 0.0
    return float(-(vals * np.log(vals)).sum())


def mutual_information(
    state,
    part_a: Sequence[int],
    part_b: Sequence[int],
    dims: Sequence[int] | None = None,
) -> float:
    """``S(A) + S(B) - S(AB)`` for two disjoint groups of modes.

    The state may cover more modes than ``A`` and ``B``; the rest are traced
    out first.
    """
    if set(part_a) & set(part_b):
        raise ValidationError(
            f"mode groups overlap: {sorted(part_a)} and {sorted(part_b)}"
        )
    rho_ab = partial_trace(state, sorted(set(part_a) | set(part_b)), dims)
    # Mode positions inside the reduced state.
    kept = sorted(set(part_a) | set(part_b))
    pos = {mode: i for i, mode in enumerate(kept)}
    rho_a = partial_trace(rho_ab, [pos[m] for m in part_a])
    rho_b = partial_trace(rho_ab, [pos[m] for m in part_b])
    return (
        von_neumann_entropy(rho_a)
        + von_neumann_entropy(rho_b)
        - von_neumann_entropy(rho_ab)
    )


@dataclass
class SchmidtDecomposition:
    """Schmidt form ``|psi> = sum_i lambda_i |u_i>|v_i>`` of a pure bipartite
    state; ``coefficients`` are nonnegative, descending, squared-summing to 1."""

    coefficients: np.ndarray
    left: np.ndarray
    right: np.ndarray

    def number(self, threshold: float = 1e-3) -> int:
        """Count of coefficients above ``threshold``."""
        return int(np.sum(self.coefficients > threshold))

    def entropy(self) -> float:
        """Entanglement entropy of either side, in nats."""
        return entropy_from_schmidt(self.coefficients)


def schmidt_decompose(state, dims: Sequence[int] | None = None) -> SchmidtDecomposition:
    """Schmidt decomposition of a pure state of exactly two modes."""
    if isinstance(state, QuantumState):
        if not state.is_pure:
            raise ValidationError("schmidt_decompose needs a pure state")
        dims = state.space.dims
        vec = state.data
    else:
        vec = np.asarray(state, dtype=complex)
        if vec.ndim != 1:
            raise ValidationError("schmidt_decompose needs a pure state vector")
        if dims is None:
            raise ValidationError("dims must be given for a bare vector")
    dims = tuple(int(d) for d in dims)
    if len(dims) != 2:
        raise ValidationError(
            f"schmidt_decompose needs exactly two modes, got dims {dims}"
        )
    mat = vec.reshape(dims)
    u, s, vh = np.linalg.svd(mat, full_matrices=False)
    norm = np.linalg.norm(s)
    if norm == 0:
        raise ValidationError("cannot decompose the zero vector")
    # Column i of ``right`` is |v_i> itself (the i-th row of vh), so the
    # expansion sum_i lambda_i |u_i> (x) |v_i> reproduces the state verbatim.
    return SchmidtDecomposition(coefficients=s / norm, left=u, right=vh.T)


def grid_schmidt_coefficients(psi: np.ndarray, grid: PositionGrid) -> np.ndarray:
    """Schmidt coefficients of a real two-axis grid wavefunction.

    The discretized continuum decomposition: singular values of
    ``psi[i, j]`` scaled by ``sqrt(dx1 dx2)`` so the squares sum to 1 for a
    normalized wavefunction.
    """
    psi = np.asarray(psi)
    if psi.ndim != 2 or grid.ndim != 2:
        raise ShapeError("grid Schmidt coefficients need a two-axis wavefunction")
    s = np.linalg.svd(psi, compute_uv=False)
    s = s * np.sqrt(grid.cell_volume)
    norm = np.linalg.norm(s)
    if norm == 0:
        raise ValidationError("cannot decompose the zero wavefunction")
    return s / norm


def entropy_from_schmidt(coefficients: np.ndarray) -> float:
    """Entanglement entropy ``-sum lambda^2 ln lambda^2`` in nats."""
    lam2 = np.asarray(coefficients, dtype=float) ** 2
    lam2 = lam2[lam2 > EIGENVALUE_FLOOR]
    return float(-(lam2 * np.log(lam2)).sum())


def position_distribution(state, x: np.ndarray) -> np.ndarray:
    """Probability density ``P(x)`` of a single mode.

    Parameters
    ----------
    state:
        Single-mode state vector or density matrix (or a one-mode
        :class:`QuantumState`). Use :func:`partial_trace` first for a mode
        embedded in a larger space.
    x:
        Sample points in oscillator units.

    Notes
    -----
    ``P(x) = sum_{nm} rho_{nm} phi_n(x) phi_m(x)``. The result integrates
    to 1 only if both the truncation holds the state and the grid covers
    it; neither is checked here.
    """
    if isinstance(state, QuantumState):
        if state.space.n_modes != 1:
            raise ShapeError(
                f"position_distribution needs one mode, got {state.space.n_modes}; "
                "partial_trace the rest first"
            )
        state = state.data
    arr = np.asarray(state, dtype=complex)
    x = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        basis = hermite_functions(arr.shape[0], x)
        amp = basis.T @ arr
        return np.abs(amp) ** 2
    if arr.ndim == 2 and arr.shape[0] == arr.shape[1]:
        basis = hermite_functions(arr.shape[0], x)
        return np.einsum("nx,nm,mx->x", basis, arr, basis).real
    raise ShapeError(f"state has shape {arr.shape}; expected a vector or square matrix")


def joint_position_distribution(
    state, x1: np.ndarray, x2: np.ndarray
) -> np.ndarray:
    """Joint density ``P(x1, x2)`` of a two-mode state (vector or matrix)."""
    if isinstance(state, QuantumState):
        dims = state.space.dims
        arr = state.data
    else:
        raise ValidationError(
            "joint_position_distribution needs a QuantumState (for its dims)"
        )
    if len(dims) != 2:
        raise ShapeError(f"need exactly two modes, got dims {dims}")
    b1 = hermite_functions(dims[0], np.asarray(x1, dtype=float))
    b2 = hermite_functions(dims[1], np.asarray(x2, dtype=float))
    if arr.ndim == 1:
        amp = np.einsum("nm,nx,my->xy", arr.reshape(dims), b1, b2)
        return np.abs(amp) ** 2
    tensor = arr.reshape(*dims, *dims)
    return np.einsum(
        "nmkl,nx,kx,my,ly->xy", tensor, b1, b1.conj(), b2, b2
    ).real


def angular_momentum_operator(
    space: HilbertSpaceSpec, mode_a: int = 1, mode_b: int = 2
) -> sp.csr_matrix:
    """Phase-space angular momentum ``x_a p_b - x_b p_a`` of two modes.

    For equal quadratic couplings this generates rotations of the
    two-mode sombrero potential and commutes with the Hamiltonian.
    """
    if mode_a == mode_b:
        raise ValidationError("angular momentum needs two distinct modes")
    for m in (mode_a, mode_b):
        if not 0 <= m < space.n_modes:
            raise DimensionError(
                f"mode index {m} out of range for a {space.n_modes}-mode space"
            )
        if space.dims[m] < 2:
            raise DimensionError(f"mode {m} is frozen (dimension 1)")
    x_a = embed(position(space.dims[mode_a]), mode_a, space)
    p_a = embed(momentum(space.dims[mode_a]), mode_a, space)
    x_b = embed(position(space.dims[mode_b]), mode_b, space)
    p_b = embed(momentum(space.dims[mode_b]), mode_b, space)
    return (x_a @ p_b - x_b @ p_a).tocsr()


def angular_momentum_series(traj, mode_a: int = 1, mode_b: int = 2) -> np.ndarray:
    """``<x_a p_b - x_b p_a>`` at each stored sample of a trajectory."""
    if traj.states is None:
        raise ValidationError(
            "trajectory has no stored states; rerun evolve with store_states=True"
        )
    op = angular_momentum_operator(traj.space, mode_a, mode_b)
    return np.array(
        [expectation(op, rho).real for rho in traj.states]
    )
