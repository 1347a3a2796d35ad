"""Imaginary-time ground-state solver and Hermite-basis projections.

The main oracle is independent diagonalization: the same discretized
Hamiltonian (FFT kinetic + diagonal potential) assembled as an explicit
matrix and handed to an eigensolver.
"""
import math

import numpy as np
import pytest
import scipy.fft
import scipy.sparse.linalg as spla

from optomech import (
    Coupling,
    GridAxis,
    PositionGrid,
    ShapeError,
    SystemParams,
    TruncationError,
    ValidationError,
    coherent_state,
    effective_potential,
    fock_project,
    fock_reconstruct,
    hermite_functions,
    solve_ground_state,
)

HARMONIC = SystemParams(
    coupling=Coupling.LINEAR, omega_m=0.01, g=(0.0,), delta_c=-1.5, eta=0.0,
    gamma=(0.0,),
)
DOUBLE_WELL = SystemParams(
    coupling=Coupling.LINEAR, omega_m=0.006, g=(0.3,), delta_c=-1.5, eta=0.18,
    gamma=(0.002,),
)
SOMBRERO = SystemParams(
    coupling=Coupling.QUADRATIC, omega_m=0.01, g=(-0.2,), delta_c=-0.02,
    eta=0.17, gamma=(0.002,),
)


def grid_1d(lo=-12.0, hi=12.0, n=256):
    return PositionGrid((GridAxis(lo, hi, n),))


def spectral_hamiltonian_1d(params: SystemParams, grid: PositionGrid) -> np.ndarray:
    """Dense matrix of the exact discretization used by the solver:
    FFT kinetic energy plus the diagonal effective potential."""
    axis = grid.axes[0]
    n = axis.n
    k = 2.0 * math.pi * scipy.fft.fftfreq(n, axis.spacing)
    f = scipy.fft.fft(np.eye(n), axis=0)
    kinetic = scipy.fft.ifft(0.5 * params.omega_m * k[:, None] ** 2 * f, axis=0)
    potential = np.diag(effective_potential(params, grid.points_array()))
    return kinetic.real + potential


def test_harmonic_ground_state_energy_and_shape():
    result = solve_ground_state(HARMONIC, grid_1d())
    # pure oscillator: E0 = omega_m/2 exactly, Gaussian of unit width
    assert result.energy == pytest.approx(HARMONIC.omega_m / 2, rel=1e-9)
    x = result.grid.axes[0].points()
    gauss = np.pi**-0.25 * np.exp(-(x**2) / 2)
    overlap = float((result.psi * gauss).sum()) * result.grid.cell_volume
    assert overlap == pytest.approx(1.0, abs=1e-8)
    assert result.edge_probability < 1e-12


def test_two_mode_harmonic_ground_state_is_product():
    params = SystemParams(
        coupling=Coupling.LINEAR, omega_m=0.01, g=(0.0, 0.0), delta_c=-1.5,
        eta=0.0, gamma=(0.0, 0.0),
    )
    grid = PositionGrid((GridAxis(-8.0, 8.0, 64), GridAxis(-8.0, 8.0, 64)))
    result = solve_ground_state(params, grid)
    assert result.energy == pytest.approx(params.omega_m, rel=1e-9)
    from optomech import grid_schmidt_coefficients

    lam = grid_schmidt_coefficients(result.psi, grid)
    assert lam[0] == pytest.approx(1.0, abs=1e-9)
    assert lam[1] < 1e-6


@pytest.mark.parametrize(
    "params,grid",
    [
        (DOUBLE_WELL, PositionGrid((GridAxis(-4.0, 12.0, 256),))),
        (SOMBRERO, PositionGrid((GridAxis(-8.0, 8.0, 256),))),
    ],
    ids=["double-well", "sombrero"],
)
def test_ground_state_matches_direct_diagonalization(params, grid):
    result = solve_ground_state(params, grid)
    H = spectral_hamiltonian_1d(params, grid)
    H = 0.5 * (H + H.T)
    eigenvalues, eigenvectors = np.linalg.eigh(H)
    assert result.energy == pytest.approx(eigenvalues[0], abs=1e-9)
    phi = eigenvectors[:, 0] / math.sqrt(grid.cell_volume)
    if phi.sum() < 0:
        phi = -phi
    overlap = float((result.psi * phi).sum()) * grid.cell_volume
    assert abs(overlap) == pytest.approx(1.0, abs=1e-8)


def test_two_axis_ground_state_matches_lanczos():
    params = SystemParams(
        coupling=Coupling.QUADRATIC, omega_m=0.01, g=(0.2, -0.2), delta_c=-0.02,
        eta=0.22, gamma=(0.0, 0.0),
    )
    grid = PositionGrid((GridAxis(-5.0, 5.0, 64), GridAxis(-7.0, 7.0, 64)))
    result = solve_ground_state(params, grid)

    shape = grid.shape
    ks = np.meshgrid(
        *(2.0 * math.pi * scipy.fft.fftfreq(ax.n, ax.spacing) for ax in grid.axes),
        indexing="ij",
    )
    tk = 0.5 * params.omega_m * sum(k**2 for k in ks)
    potential = effective_potential(params, grid.points_array())

    def matvec(v):
        psi = v.reshape(shape)
        out = scipy.fft.ifftn(tk * scipy.fft.fftn(psi)).real + potential * psi
        return out.ravel()

    op = spla.LinearOperator(
        (np.prod(shape), np.prod(shape)), matvec=matvec, dtype=float
    )
    eigenvalues = spla.eigsh(
        op, k=1, which="SA", return_eigenvectors=False, maxiter=20000, tol=1e-11
    )
    assert result.energy == pytest.approx(float(eigenvalues[0]), abs=1e-8)


def test_energy_history_is_monotone_nonincreasing():
    result = solve_ground_state(DOUBLE_WELL, PositionGrid((GridAxis(-4.0, 12.0, 256),)))
    energies = [level[-1] for level in result.energy_history]
    assert len(energies) >= 2
    assert all(b <= a + 1e-12 for a, b in zip(energies, energies[1:]))


def test_small_grid_rejected_by_both_guards():
    from optomech import BoundaryLeakError

    # sombrero minima at +/- 2.2 need 4 units of margin: rejected up front
    with pytest.raises(ValidationError):
        solve_ground_state(SOMBRERO, PositionGrid((GridAxis(-4.0, 4.0, 128),)))
    # skipping the up-front check still trips the boundary-leak check on
    # the converged state, which has real weight at the grid edge here
    with pytest.raises(BoundaryLeakError):
        solve_ground_state(
            SOMBRERO, PositionGrid((GridAxis(-4.0, 4.0, 128),)),
            check_coverage=False,
        )


def test_grid_mode_count_mismatch():
    with pytest.raises(ValidationError):
        solve_ground_state(
            DOUBLE_WELL,
            PositionGrid((GridAxis(-4.0, 12.0, 64), GridAxis(-4.0, 12.0, 64))),
        )


def test_explicit_initial_state_and_shape_check():
    grid = grid_1d(n=128)
    x = grid.axes[0].points()
    seed = np.exp(-((x - 1.0) ** 2))
    result = solve_ground_state(HARMONIC, grid, psi0=seed)
    assert result.energy == pytest.approx(HARMONIC.omega_m / 2, rel=1e-9)
    with pytest.raises(ShapeError):
        solve_ground_state(HARMONIC, grid, psi0=np.ones(64))
    with pytest.raises(ValidationError):
        solve_ground_state(HARMONIC, grid, psi0=np.zeros(128))


def test_hermite_functions_orthonormal_and_complete():
    x = np.linspace(-14.0, 14.0, 2801)
    dx = x[1] - x[0]
    basis = hermite_functions(60, x)
    gram = basis @ basis.T * dx
    assert np.abs(gram - np.eye(60)).max() < 1e-10
    # known closed form at the origin: phi_n(0) = 0 for odd n and
    # (-1)^(n/2) sqrt(n!)/(2^(n/2) (n/2)! pi^(1/4)) for even n
    mid = len(x) // 2
    for n in (0, 1, 2, 3, 8, 15, 40):
        if n % 2 == 1:
            expected = 0.0
        else:
            half = n // 2
            log_mag = (
                0.5 * math.lgamma(n + 1)
                - half * math.log(2.0)
                - math.lgamma(half + 1)
                - 0.25 * math.log(math.pi)
            )
            expected = (-1.0) ** half * math.exp(log_mag)
        assert basis[n, mid] == pytest.approx(expected, abs=1e-12)


def test_hermite_functions_satisfy_recurrence_against_scipy():
    from scipy.special import eval_hermite

    x = np.linspace(-3.0, 3.0, 7)
    basis = hermite_functions(6, x)
    for n in range(6):
        ref = (
            eval_hermite(n, x)
            * np.exp(-(x**2) / 2)
            / math.sqrt(2.0**n * math.factorial(n))
            / math.pi**0.25
        )
        assert np.allclose(basis[n], ref, atol=1e-12)


def test_fock_project_recovers_coherent_amplitudes():
    # A displaced oscillator ground state is a (real-amplitude) coherent
    # state, so the projection must reproduce the Poissonian amplitudes.
    beta = 1.2
    grid = grid_1d(n=512)
    x = grid.axes[0].points()
    psi = np.pi**-0.25 * np.exp(-((x - math.sqrt(2) * beta) ** 2) / 2)
    coeffs, err = fock_project(psi, grid, (30,))
    assert err < 1e-10
    assert np.allclose(coeffs, coherent_state(30, beta), atol=1e-9)


def test_fock_project_round_trip_and_truncation_error():
    grid = grid_1d(n=256)
    x = grid.axes[0].points()
    psi = np.pi**-0.25 * np.exp(-((x - 3.5) ** 2) / 2)
    with pytest.raises(TruncationError):
        fock_project(psi, grid, (4,))
    coeffs, err = fock_project(psi, grid, (40,))
    recon = fock_reconstruct(coeffs, grid)
    assert math.sqrt(float(((psi - recon) ** 2).sum()) * grid.cell_volume) == (
        pytest.approx(err, abs=1e-12)
    )
    assert err < 1e-8


def test_fock_project_shape_validation():
    grid = grid_1d(n=128)
    with pytest.raises(ShapeError):
        fock_project(np.ones(64), grid, (10,))
    with pytest.raises(ShapeError):
        fock_project(np.ones(128), grid, (10, 10))


def test_grid_axis_validation():
    with pytest.raises(ValidationError):
        GridAxis(2.0, -2.0, 64)
    with pytest.raises(ValidationError):
        GridAxis(-2.0, 2.0, 1)
    axis = GridAxis(-2.0, 2.0, 8)
    assert axis.spacing == pytest.approx(0.5)
    assert len(axis.points()) == 8
    # half-open convention: the right endpoint is excluded
    assert axis.points()[-1] == pytest.approx(1.5)
