"""Truncated Fock spaces, bosonic operators, and common states.

Conventions used throughout the package:

* Each bosonic mode is truncated to ``dim`` Fock levels ``|0> ... |dim-1>``.
* Multi-mode spaces are Kronecker products with the cavity mode first
  (slowest-varying index) and the last mechanical mode fastest-varying,
  matching :func:`numpy.kron` ordering.
* Dimensionless quadratures ``x = (b + b^dag)/sqrt(2)`` and
  ``p = -i (b - b^dag)/sqrt(2)``, so ``[x, p] = i`` away from the truncation
  edge.

A mode of dimension 1 is permitted as a frozen placeholder (its only operator
content is the 1x1 identity and zero ladder operators), which makes
mechanics-only or cavity-only calculations expressible in the same space
type. Ladder operators themselves require ``dim >= 2``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import reduce
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import (
    ContractViolationError,
    DimensionError,
    ShapeError,
    TruncationWarning,
)

__all__ = [
    "MAX_TOTAL_DIMENSION",
    "HilbertSpaceSpec",
    "QuantumState",
    "annihilation",
    "creation",
    "number",
    "identity",
    "position",
    "momentum",
    "tensor",
    "embed",
    "fock_state",
    "vacuum_state",
    "coherent_state",
    "product_state",
    "expectation",
]

#: Guard against accidentally requesting a space whose density matrices
#: could not fit in memory. 2e5 basis states means a 2e5 x 2e5 complex
#: density matrix, about 640 GB; anything near this limit is a mistake.
MAX_TOTAL_DIMENSION = 200_000


@dataclass(frozen=True)
class HilbertSpaceSpec:
    """An ordered list of per-mode Fock truncations.

    Parameters
    ----------
    dims:
        Truncation of each mode, cavity first. Every entry must be a
        positive integer; the product must not exceed
        :data:`MAX_TOTAL_DIMENSION`.
    """

    dims: tuple[int, ...]

    def __post_init__(self) -> None:
        if not isinstance(self.dims, tuple):
            object.__setattr__(self, "dims", tuple(self.dims))
        if len(self.dims) == 0:
            raise DimensionError("a Hilbert space needs at least one mode")
        for d in self.dims:
            if not isinstance(d, (int, np.integer)) or isinstance(d, bool):
                raise DimensionError(f"mode dimensions must be integers, got {d!r}")
            if d < 1:
                raise DimensionError(f"mode dimensions must be >= 1, got {d}")
        if self.size > MAX_TOTAL_DIMENSION:
            raise DimensionError(
                f"total dimension {self.size} exceeds the guard limit "
                f"{MAX_TOTAL_DIMENSION}; reduce the per-mode truncations"
            )

    @property
    def size(self) -> int:
        """Total dimension (product of the per-mode truncations)."""
        return math.prod(self.dims)

    @property
    def n_modes(self) -> int:
        return len(self.dims)

    def __iter__(self):
        return iter(self.dims)


def _check_dim(dim: int) -> int:
    if not isinstance(dim, (int, np.integer)) or isinstance(dim, bool) or dim < 2:
        raise DimensionError(f"ladder operators need an integer dimension >= 2, got {dim!r}")
    return int(dim)


def annihilation(dim: int) -> sp.csr_matrix:
    """Single-mode annihilation operator with ``<n-1| a |n> = sqrt(n)``."""
    dim = _check_dim(dim)
    data = np.sqrt(np.arange(1, dim, dtype=float))
    return sp.diags(data, offsets=1, shape=(dim, dim), dtype=complex, format="csr")


def creation(dim: int) -> sp.csr_matrix:
    """Single-mode creation operator, the adjoint of :func:`annihilation`."""
    return annihilation(dim).conj().T.tocsr()


def number(dim: int) -> sp.csr_matrix:
    """Single-mode number operator ``a^dag a``."""
    dim = _check_dim(dim)
    return sp.diags(np.arange(dim, dtype=float), dtype=complex, format="csr")


def identity(dim: int) -> sp.csr_matrix:
    if dim < 1:
        raise DimensionError(f"identity needs dimension >= 1, got {dim}")
    return sp.identity(dim, dtype=complex, format="csr")


def position(dim: int) -> sp.csr_matrix:
    """Dimensionless position quadrature ``(a + a^dag)/sqrt(2)``."""
    a = annihilation(dim)
    return ((a + a.conj().T) / math.sqrt(2)).tocsr()


def momentum(dim: int) -> sp.csr_matrix:
    """Dimensionless momentum quadrature ``-i (a - a^dag)/sqrt(2)``."""
    a = annihilation(dim)
    return ((-1j / math.sqrt(2)) * (a - a.conj().T)).tocsr()


def tensor(*ops: sp.spmatrix) -> sp.csr_matrix:
    """Kronecker product of operators, first factor slowest-varying."""
    if not ops:
        raise ShapeError("tensor() needs at least one operator")
    return reduce(lambda x, y: sp.kron(x, y, format="csr"), ops).tocsr()


def embed(op: sp.spmatrix, mode: int, space: HilbertSpaceSpec) -> sp.csr_matrix:
    """Lift a single-mode operator to the full space, identity elsewhere.

    Parameters
    ----------
    op:
        Square operator acting on mode ``mode``; its dimension must equal
        ``space.dims[mode]``.
    mode:
        Index into ``space.dims`` (0 is the cavity).
    """
    if not 0 <= mode < space.n_modes:
        raise DimensionError(
            f"mode index {mode} out of range for a {space.n_modes}-mode space"
        )
    d = space.dims[mode]
    if op.shape != (d, d):
        raise ShapeError(
            f"operator shape {op.shape} does not match dimension {d} of mode {mode}"
        )
    factors = [
        op if k == mode else identity(space.dims[k]) for k in range(space.n_modes)
    ]
    return tensor(*factors)


def fock_state(dim: int, n: int) -> np.ndarray:
    """Number state ``|n>`` as a dense complex vector."""
    if dim < 1:
        raise DimensionError(f"dimension must be >= 1, got {dim}")
    if not 0 <= n < dim:
        raise DimensionError(f"Fock index {n} outside the truncation 0..{dim - 1}")
    vec = np.zeros(dim, dtype=complex)
    vec[n] = 1.0
    return vec


def vacuum_state(space: HilbertSpaceSpec) -> np.ndarray:
    """Product vacuum ``|0, 0, ...>`` of the full space."""
    vec = np.zeros(space.size, dtype=complex)
    vec[0] = 1.0
    return vec


def coherent_state(dim: int, beta: complex) -> np.ndarray:
    """Truncated coherent state with amplitude ``beta``, renormalized.

    Emits :class:`~optomech.errors.TruncationWarning` when the Poisson
    weight clipped by the truncation exceeds 1e-8.
    """
    if dim < 1:
        raise DimensionError(f"dimension must be >= 1, got {dim}")
    beta = complex(beta)
    nbar = abs(beta) ** 2
    # beta^n / sqrt(n!) accumulated multiplicatively to avoid overflow.
    amps = np.empty(dim, dtype=complex)
    amps[0] = 1.0
    for n in range(1, dim):
        amps[n] = amps[n - 1] * beta / math.sqrt(n)
    amps *= math.exp(-nbar / 2.0)
    norm = np.linalg.norm(amps)
    if norm == 0.0:
        raise DimensionError(
            f"coherent state with |beta| = {abs(beta):.3g} underflows at truncation {dim}"
        )
    tail = max(0.0, 1.0 - norm * norm)
    if tail > 1e-8:
        recommended = nbar + 5.0 * math.sqrt(max(nbar, 1.0)) + 5.0
        warnings.warn(
            f"coherent state with |beta| = {abs(beta):.3g} leaves probability "
            f"{tail:.2e} beyond truncation {dim} (recommend >= "
            f"{math.ceil(recommended)})",
            TruncationWarning,
            stacklevel=2,
        )
    return amps / norm


def product_state(space: HilbertSpaceSpec, factors: Sequence[np.ndarray]) -> np.ndarray:
    """Kronecker product of per-mode state vectors, ordered like ``space.dims``."""
    if len(factors) != space.n_modes:
        raise ShapeError(
            f"need {space.n_modes} single-mode factors, got {len(factors)}"
        )
    for k, (vec, d) in enumerate(zip(factors, space.dims)):
        if np.shape(vec) != (d,):
            raise ShapeError(
                f"factor {k} has shape {np.shape(vec)}, expected ({d},)"
            )
    out = np.asarray(factors[0], dtype=complex)
    for vec in factors[1:]:
        out = np.kron(out, np.asarray(vec, dtype=complex))
    return out


def expectation(op: sp.spmatrix | np.ndarray, state: np.ndarray) -> complex:
    """``<psi| op |psi>`` for a vector or ``Tr(op rho)`` for a density matrix."""
    state = np.asarray(state)
    if state.ndim == 1:
        return complex(np.vdot(state, op @ state))
    if state.ndim == 2:
        if sp.issparse(op):
            return complex((op @ state).trace())
        return complex(np.trace(np.asarray(op) @ state))
    raise ShapeError(f"state must be a vector or a matrix, got ndim={state.ndim}")


@dataclass
class QuantumState:
    """A pure state (1-D amplitudes) or density matrix (2-D) on a space.

    ``data`` is stored as given; :meth:`validate` checks normalization and,
    for density matrices, Hermiticity.
    """

    space: HilbertSpaceSpec
    data: np.ndarray

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data, dtype=complex)
        n = self.space.size
        if self.data.shape not in ((n,), (n, n)):
            raise ShapeError(
                f"state data shape {self.data.shape} incompatible with space "
                f"dimension {n}; expected ({n},) or ({n}, {n})"
            )

    @property
    def is_pure(self) -> bool:
        return self.data.ndim == 1

    def density_matrix(self) -> np.ndarray:
        """The state as a density matrix (outer product for pure states)."""
        if self.is_pure:
            return np.outer(self.data, self.data.conj())
        return self.data

    def validate(self, atol: float = 1e-8) -> None:
        """Raise :class:`ContractViolationError` if not a valid state."""
        if self.is_pure:
            norm = np.linalg.norm(self.data)
            if abs(norm - 1.0) > atol:
                raise ContractViolationError(
                    f"state vector norm {norm} deviates from 1 by more than {atol}"
                )
            return
        tr = np.trace(self.data)
        if abs(tr - 1.0) > atol:
            raise ContractViolationError(
                f"density matrix trace {tr} deviates from 1 by more than {atol}"
            )
        herm_defect = np.abs(self.data - self.data.conj().T).max()
        if herm_defect > atol:
            raise ContractViolationError(
                f"density matrix Hermiticity defect {herm_defect} exceeds {atol}"
            )

    def expectation(self, op: sp.spmatrix | np.ndarray) -> complex:
        return expectation(op, self.data)
