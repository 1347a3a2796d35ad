"""System parameters, Hamiltonian, and Lindblad generator.

The model is a single driven, damped cavity mode coupled to ``N`` mechanical
oscillators that share one frequency. In the frame rotating at the drive
frequency, with ``hbar = 1`` and rates measured in units of the cavity
linewidth ``kappa``, the Hamiltonian is::

    H = -delta_c a^dag a + i eta (a^dag - a)
        + sum_k omega_m (b_k^dag b_k + 1/2)
        + V

with the optomechanical interaction either linear or quadratic in the
mechanical displacement ``x_k = (b_k + b_k^dag)/sqrt(2)``::

    V_linear    = - a^dag a * sum_k g_k x_k
    V_quadratic = + a^dag a * sum_k g_k x_k^2

Dissipation enters through a Lindblad master equation::

    drho/dt = -i [H, rho] + (kappa/2) D[a] rho + sum_k (gamma_k/2) D[b_k] rho
    D[c] rho = 2 c rho c^dag - c^dag c rho - rho c^dag c

Modes frozen to dimension 1 (see :mod:`optomech.hilbert`) drop out of every
term, including the vacuum-energy constant, so a mechanics-only or
cavity-only calculation can reuse the same builders.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ContractViolationError, DimensionError, ValidationError
from .hilbert import HilbertSpaceSpec, annihilation, embed, number, position

__all__ = [
    "Coupling",
    "SystemParams",
    "LindbladGenerator",
    "build_hamiltonian",
    "build_generator",
    "liouvillian_apply",
    "superoperator_matrix",
    "spectral_abscissa",
]


class Coupling(str, Enum):
    """Functional form of the optomechanical interaction."""

    LINEAR = "linear"
    QUADRATIC = "quadratic"


@dataclass(frozen=True)
class SystemParams:
    """Physical parameters, all rates in units of the cavity linewidth.

    Parameters
    ----------
    coupling:
        ``Coupling.LINEAR`` or ``Coupling.QUADRATIC`` (strings accepted).
    omega_m:
        Shared mechanical frequency, > 0.
    g:
        Per-mode coupling strengths; the length sets the number of
        mechanical modes. Either sign is allowed.
    delta_c:
        Cavity detuning from the drive.
    eta:
        Pump rate, >= 0 (a pump phase only rotates the cavity quadratures).
    gamma:
        Per-mode mechanical damping rates, each >= 0, same length as ``g``.
    kappa:
        Cavity energy decay rate; 1.0 in the natural units used here.
    """

    coupling: Coupling
    omega_m: float
    g: tuple[float, ...]
    delta_c: float
    eta: float
    gamma: tuple[float, ...]
    kappa: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "coupling", Coupling(self.coupling))
        object.__setattr__(self, "g", tuple(float(v) for v in np.atleast_1d(self.g)))
        object.__setattr__(
            self, "gamma", tuple(float(v) for v in np.atleast_1d(self.gamma))
        )
        problems = []
        if len(self.g) == 0:
            problems.append("g must list at least one mechanical coupling")
        if len(self.gamma) != len(self.g):
            problems.append(
                f"gamma has {len(self.gamma)} entries but g has {len(self.g)}"
            )
        if not self.omega_m > 0:
            problems.append(f"omega_m must be > 0, got {self.omega_m}")
        if not self.kappa > 0:
            problems.append(f"kappa must be > 0, got {self.kappa}")
        if self.eta < 0:
            problems.append(f"eta must be >= 0, got {self.eta}")
        if any(gk < 0 for gk in self.gamma):
            problems.append(f"gamma entries must be >= 0, got {self.gamma}")
        if problems:
            raise ValidationError("; ".join(problems))

    @property
    def n_mech(self) -> int:
        """Number of mechanical modes."""
        return len(self.g)


def _check_space(params: SystemParams, space: HilbertSpaceSpec) -> None:
    if space.n_modes != params.n_mech + 1:
        raise DimensionError(
            f"space has {space.n_modes} modes but the model needs "
            f"{params.n_mech + 1} (cavity + {params.n_mech} mechanical)"
        )


def build_hamiltonian(params: SystemParams, space: HilbertSpaceSpec) -> sp.csr_matrix:
    """Assemble the rotating-frame Hamiltonian on ``space`` as sparse CSR."""
    _check_space(params, space)
    dims = space.dims
    size = space.size
    H = sp.csr_matrix((size, size), dtype=complex)

    d_a = dims[0]
    if d_a >= 2:
        a = embed(annihilation(d_a), 0, space)
        n_a = embed(number(d_a), 0, space)
        H = H - params.delta_c * n_a + 1j * params.eta * (a.conj().T - a)
    else:
        n_a = None

    for k in range(params.n_mech):
        d_k = dims[k + 1]
        if d_k < 2:
            continue  # frozen mode: no energy, no coupling
        n_k = embed(number(d_k), k + 1, space)
        H = H + params.omega_m * (n_k + 0.5 * sp.identity(size, dtype=complex, format="csr"))
        if n_a is None:
            continue
        x_k = embed(position(d_k), k + 1, space)
        if params.coupling is Coupling.LINEAR:
            H = H - params.g[k] * (n_a @ x_k)
        else:
            H = H + params.g[k] * (n_a @ (x_k @ x_k))
    return H.tocsr()


@dataclass
class LindbladGenerator:
    """A Hamiltonian plus a list of ``(rate, operator)`` collapse channels.

    The generator acts on density matrices as::

        L(rho) = -i [H, rho]
                 + sum (rate/2) (2 c rho c^dag - c^dag c rho - rho c^dag c)

    Use :func:`liouvillian_apply` (or the cached fast path it wraps) rather
    than materializing the superoperator.
    """

    space: HilbertSpaceSpec
    hamiltonian: sp.csr_matrix
    collapse: tuple[tuple[float, sp.csr_matrix], ...]
    _prepared: "_PreparedGenerator | None" = field(
        default=None, repr=False, compare=False
    )

    def prepared(self) -> "_PreparedGenerator":
        """Cached precomputation for repeated applications."""
        if self._prepared is None:
            self._prepared = _PreparedGenerator(self)
        return self._prepared


class _PreparedGenerator:
    """Precomputed pieces for fast Lindblad application to Hermitian matrices.

    Writing ``A = -iH - (1/2) sum_j rate_j c_j^dag c_j`` gives, for Hermitian
    ``rho``::

        L(rho) = A rho + (A rho)^dag + sum_j rate_j c_j rho c_j^dag

    which costs one sparse-dense product per term and keeps the result
    exactly Hermitian.
    """

    def __init__(self, gen: LindbladGenerator) -> None:
        size = gen.space.size
        sink = sp.csr_matrix((size, size), dtype=complex)
        for rate, c in gen.collapse:
            if rate != 0.0:
                sink = sink + (0.5 * rate) * (c.conj().T @ c)
        self.drift = (-1j * gen.hamiltonian - sink).tocsr()
        self.jumps = tuple(
            (rate, c.tocsr(), c.conj().T.tocsr())
            for rate, c in gen.collapse
            if rate != 0.0
        )
        self.size = size
        self._radius: float | None = None

    def apply(self, rho: np.ndarray) -> np.ndarray:
        """``L(rho)`` for Hermitian ``rho`` (not checked here)."""
        m = self.drift @ rho
        out = m + m.conj().T
        for rate, c, cdag in self.jumps:
            out += rate * (c @ rho @ cdag)
        return out

    def apply_general(self, rho: np.ndarray) -> np.ndarray:
        """``L(rho)`` for arbitrary ``rho`` (complex-linear form)."""
        out = self.drift @ rho + rho @ self.drift.conj().T
        for rate, c, cdag in self.jumps:
            out += rate * (c @ rho @ cdag)
        return out

    def spectral_radius(self) -> float:
        """Estimated spectral radius of the generator (cached).

        Sets the stability step limit for explicit integration:
        ``dt < ~3 / radius``. Computed with a few Arnoldi iterations;
        falls back to the rigorous 1-norm bound
        ``2 ||A||_1 + sum rate ||c||_1^2`` if they fail to converge.
        """
        if self._radius is None:
            import scipy.sparse.linalg as spla

            n = self.size

            def matvec(v: np.ndarray) -> np.ndarray:
                return self.apply_general(v.reshape(n, n)).ravel()

            op = spla.LinearOperator(
                (n * n, n * n), matvec=matvec, dtype=complex
            )
            try:
                lam = spla.eigs(
                    op, k=1, which="LM", return_eigenvectors=False,
                    maxiter=300, tol=1e-3,
                    v0=np.linspace(1.0, 2.0, n * n),
                )
                self._radius = float(abs(lam[0]))
            except Exception:
                self._radius = float(
                    2 * spla.norm(self.drift, 1)
                    + sum(
                        rate * spla.norm(c, 1) ** 2
                        for rate, c, _ in self.jumps
                    )
                )
        return self._radius


def build_generator(params: SystemParams, space: HilbertSpaceSpec) -> LindbladGenerator:
    """Hamiltonian plus cavity ``(kappa, a)`` and mechanical ``(gamma_k, b_k)``
    collapse channels on ``space``."""
    _check_space(params, space)
    H = build_hamiltonian(params, space)
    collapse: list[tuple[float, sp.csr_matrix]] = []
    if space.dims[0] >= 2:
        collapse.append((params.kappa, embed(annihilation(space.dims[0]), 0, space)))
    for k in range(params.n_mech):
        d_k = space.dims[k + 1]
        if d_k >= 2:
            collapse.append(
                (params.gamma[k], embed(annihilation(d_k), k + 1, space))
            )
    return LindbladGenerator(space=space, hamiltonian=H, collapse=tuple(collapse))


def liouvillian_apply(
    gen: LindbladGenerator, rho: np.ndarray, check: bool = True
) -> np.ndarray:
    """Evaluate ``drho/dt = L(rho)`` for a Hermitian density matrix.

    Parameters
    ----------
    gen:
        Generator from :func:`build_generator`.
    rho:
        Hermitian matrix of the full space dimension. Hermiticity within
        1e-8 is a precondition (checked unless ``check=False``) because the
        fast application path assumes it.
    """
    rho = np.asarray(rho, dtype=complex)
    size = gen.space.size
    if rho.shape != (size, size):
        raise DimensionError(
            f"rho has shape {rho.shape}, expected ({size}, {size})"
        )
    if check:
        defect = np.abs(rho - rho.conj().T).max()
        if defect > 1e-8:
            raise ContractViolationError(
                f"rho is not Hermitian (defect {defect:.3g} > 1e-8)"
            )
    return gen.prepared().apply(rho)


def superoperator_matrix(gen: LindbladGenerator) -> sp.csr_matrix:
    """The generator as a sparse matrix acting on row-major vectorized rho.

    With ``A = -iH - (1/2) sum_j rate_j c_j^dag c_j`` the action
    ``L(rho) = A rho + rho A^dag + sum_j rate_j c_j rho c_j^dag``
    vectorizes (C order) to
    ``A (x) I + I (x) conj(A) + sum_j rate_j c_j (x) conj(c_j)``.
    """
    prep = gen.prepared()
    n = prep.size
    eye = sp.identity(n, dtype=complex, format="csr")
    a = prep.drift
    s = sp.kron(a, eye) + sp.kron(eye, a.conj())
    for rate, c, _ in prep.jumps:
        s = s + rate * sp.kron(c, c.conj())
    return s.tocsr()


def spectral_abscissa(gen: LindbladGenerator, k: int = 6) -> float:
    """Largest real part among the generator's eigenvalues.

    The exact Lindblad generator always has abscissa zero (the steady
    state); a clearly positive value is a truncation artifact — the
    clipped Fock edge supports growing modes, so time marching diverges
    and long evolutions amplify integration error into them. Use this to
    vet a truncation before expensive runs: values at roundoff scale mean
    the truncated generator is dynamically trustworthy.
    """
    import scipy.sparse.linalg as spla

    s = superoperator_matrix(gen)
    if s.shape[0] <= 4096:
        return float(np.linalg.eigvals(s.toarray()).real.max())
    vals = spla.eigs(
        s, k=k, which="LR", return_eigenvectors=False, maxiter=10000
    )
    return float(vals.real.max())
