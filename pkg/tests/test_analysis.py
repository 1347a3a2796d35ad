"""Entanglement and distribution diagnostics against closed-form states."""
import math

import numpy as np
import pytest

from optomech import (
    GridAxis,
    HilbertSpaceSpec,
    PositionGrid,
    QuantumState,
    ShapeError,
    ValidationError,
    angular_momentum_operator,
    angular_momentum_series,
    coherent_state,
    entropy_from_schmidt,
    fock_state,
    grid_schmidt_coefficients,
    joint_position_distribution,
    mutual_information,
    partial_trace,
    position_distribution,
    product_state,
    schmidt_decompose,
    von_neumann_entropy,
)
from optomech.hilbert import embed, expectation, momentum, position


def bell_like(d: int) -> np.ndarray:
    psi = np.zeros(d * d, dtype=complex)
    psi[0] = 1 / math.sqrt(2)  # |00>
    psi[d + 1] = 1 / math.sqrt(2)  # |11>
    return psi


def test_partial_trace_of_product_state_gives_factors():
    space = HilbertSpaceSpec((3, 4))
    f0 = coherent_state(3, 0.2)
    f1 = fock_state(4, 2)
    psi = product_state(space, [f0, f1])
    red0 = partial_trace(psi, [0], dims=space.dims)
    red1 = partial_trace(psi, [1], dims=space.dims)
    assert np.allclose(red0.data, np.outer(f0, f0.conj()), atol=1e-12)
    assert np.allclose(red1.data, np.outer(f1, f1.conj()), atol=1e-12)
    assert np.trace(red0.data).real == pytest.approx(1.0, abs=1e-12)


def test_partial_trace_of_bell_pair_is_maximally_mixed():
    red = partial_trace(bell_like(2), [0], dims=(2, 2))
    assert np.allclose(red.data, 0.5 * np.eye(2), atol=1e-12)


def test_partial_trace_multimode_keep_two_of_three():
    dims = (2, 3, 2)
    space = HilbertSpaceSpec(dims)
    factors = [coherent_state(2, 0.1), coherent_state(3, 0.4), fock_state(2, 1)]
    psi = product_state(space, factors)
    red = partial_trace(psi, [0, 2], dims=dims)
    expected = np.kron(
        np.outer(factors[0], factors[0].conj()),
        np.outer(factors[2], factors[2].conj()),
    )
    assert np.allclose(red.data, expected, atol=1e-12)
    assert red.space.dims == (2, 2)


def test_partial_trace_accepts_density_matrices_and_validates():
    rho = np.outer(bell_like(2), bell_like(2).conj())
    red = partial_trace(rho, [1], dims=(2, 2))
    assert np.allclose(red.data, 0.5 * np.eye(2), atol=1e-12)
    with pytest.raises(ValidationError):
        partial_trace(rho, [], dims=(2, 2))
    with pytest.raises(ValidationError):
        partial_trace(rho, [2], dims=(2, 2))


def test_entropy_closed_forms():
    pure = np.outer(bell_like(2), bell_like(2).conj())
    assert von_neumann_entropy(pure, dims=(2, 2)) == pytest.approx(0.0, abs=1e-10)
    assert von_neumann_entropy(0.5 * np.eye(2), dims=(2,)) == pytest.approx(
        math.log(2), abs=1e-12
    )
    mixed = np.diag([0.7, 0.2, 0.1])
    expected = -sum(p * math.log(p) for p in (0.7, 0.2, 0.1))
    assert von_neumann_entropy(mixed, dims=(3,)) == pytest.approx(expected, abs=1e-12)


def test_mutual_information_benchmarks():
    space = HilbertSpaceSpec((2, 2))
    produced = product_state(space, [fock_state(2, 0), fock_state(2, 1)])
    assert mutual_information(produced, [0], [1], dims=(2, 2)) == pytest.approx(
        0.0, abs=1e-10
    )
    # Bell pair: I = 2 ln 2; classical mixture of 00 and 11: I = ln 2
    assert mutual_information(bell_like(2), [0], [1], dims=(2, 2)) == pytest.approx(
        2 * math.log(2), abs=1e-10
    )
    rho_cc = np.zeros((4, 4), dtype=complex)
    rho_cc[0, 0] = 0.5
    rho_cc[3, 3] = 0.5
    assert mutual_information(rho_cc, [0], [1], dims=(2, 2)) == pytest.approx(
        math.log(2), abs=1e-10
    )
    with pytest.raises(ValidationError):
        mutual_information(bell_like(2), [0], [0], dims=(2, 2))


def test_schmidt_decompose_bell_pair():
    dec = schmidt_decompose(bell_like(3), dims=(3, 3))
    assert np.allclose(dec.coefficients[:2], [1 / math.sqrt(2)] * 2, atol=1e-12)
    assert dec.number(threshold=1e-3) == 2
    assert dec.entropy() == pytest.approx(math.log(2), abs=1e-12)


def test_schmidt_reconstructs_state():
    rng = np.random.default_rng(2)
    vec = rng.normal(size=12) + 1j * rng.normal(size=12)
    vec /= np.linalg.norm(vec)
    dec = schmidt_decompose(vec, dims=(3, 4))
    rebuilt = np.zeros((3, 4), dtype=complex)
    for lam, u, v in zip(dec.coefficients, dec.left.T, dec.right.T):
        rebuilt += lam * np.outer(u, v)
    # global phase-free comparison
    overlap = abs(np.vdot(rebuilt.ravel(), vec))
    assert overlap == pytest.approx(1.0, abs=1e-12)


def test_schmidt_entropy_agrees_with_partial_trace_entropy():
    # two independent routes to the entanglement entropy must agree to 1e-8
    rng = np.random.default_rng(9)
    vec = rng.normal(size=30) + 1j * rng.normal(size=30)
    vec /= np.linalg.norm(vec)
    dims = (5, 6)
    via_schmidt = schmidt_decompose(vec, dims=dims).entropy()
    via_reduction = von_neumann_entropy(partial_trace(vec, [0], dims=dims))
    assert via_schmidt == pytest.approx(via_reduction, abs=1e-8)
    assert entropy_from_schmidt(
        schmidt_decompose(vec, dims=dims).coefficients
    ) == pytest.approx(via_schmidt, abs=1e-12)


def test_schmidt_validation():
    with pytest.raises(ValidationError):
        schmidt_decompose(bell_like(2))  # dims missing
    with pytest.raises(ValidationError):
        schmidt_decompose(np.zeros(4), dims=(2, 2))
    with pytest.raises(ValidationError):
        schmidt_decompose(np.ones(8) / math.sqrt(8), dims=(2, 2, 2))


def test_grid_schmidt_product_state_is_rank_one():
    grid = PositionGrid((GridAxis(-6.0, 6.0, 64), GridAxis(-6.0, 6.0, 64)))
    x1, x2 = grid.meshgrid()
    psi = np.exp(-(x1**2) / 2) * np.exp(-((x2 - 1.0) ** 2) / 2) / math.sqrt(math.pi)
    lam = grid_schmidt_coefficients(psi, grid)
    assert lam[0] == pytest.approx(1.0, abs=1e-10)
    assert lam[1] < 1e-8


def test_grid_schmidt_two_gaussian_superposition_closed_form():
    # psi = phi_a(x1) phi_a(x2) + phi_-a(x1) phi_-a(x2) has Schmidt values
    # proportional to (1 + s, 1 - s) with s = <phi_a|phi_-a> = exp(-a^2).
    a = 1.1
    grid = PositionGrid((GridAxis(-8.0, 8.0, 128), GridAxis(-8.0, 8.0, 128)))
    x1, x2 = grid.meshgrid()

    def packet(x, center):
        return math.pi**-0.25 * np.exp(-((x - center) ** 2) / 2)

    psi = packet(x1, a) * packet(x2, a) + packet(x1, -a) * packet(x2, -a)
    psi /= math.sqrt(float((psi**2).sum()) * grid.cell_volume)
    lam = grid_schmidt_coefficients(psi, grid)
    s = math.exp(-(a**2))
    norm = math.hypot(1 + s, 1 - s)
    assert lam[0] == pytest.approx((1 + s) / norm, abs=1e-9)
    assert lam[1] == pytest.approx((1 - s) / norm, abs=1e-9)
    assert lam[2] < 1e-9


def test_position_distribution_closed_forms():
    x = np.linspace(-8.0, 8.0, 1601)
    dx = x[1] - x[0]
    beta = 0.9
    psi = coherent_state(40, beta)
    prob = position_distribution(QuantumState(HilbertSpaceSpec((40,)), psi), x)
    gauss = np.exp(-((x - math.sqrt(2) * beta) ** 2)) / math.sqrt(math.pi)
    assert np.abs(prob - gauss).max() < 1e-8
    assert np.trapezoid(prob, dx=dx) == pytest.approx(1.0, abs=1e-8)

    one = position_distribution(QuantumState(HilbertSpaceSpec((5,)), fock_state(5, 1)), x)
    ref = 2.0 * x**2 * np.exp(-(x**2)) / math.sqrt(math.pi)
    assert np.abs(one - ref).max() < 1e-10


def test_position_distribution_matrix_and_vector_routes_agree():
    x = np.linspace(-6.0, 6.0, 301)
    psi = coherent_state(25, 0.7 + 0.2j)
    state = QuantumState(HilbertSpaceSpec((25,)), psi)
    rho = QuantumState(HilbertSpaceSpec((25,)), np.outer(psi, psi.conj()))
    assert np.allclose(
        position_distribution(state, x), position_distribution(rho, x), atol=1e-11
    )


def test_joint_position_distribution_factorizes_for_products():
    space = HilbertSpaceSpec((6, 6))
    f0 = coherent_state(6, 0.4)
    f1 = fock_state(6, 1)
    psi = QuantumState(space, product_state(space, [f0, f1]))
    x1 = np.linspace(-4.0, 4.0, 41)
    x2 = np.linspace(-4.0, 4.0, 37)
    joint = joint_position_distribution(psi, x1, x2)
    m1 = position_distribution(QuantumState(HilbertSpaceSpec((6,)), f0), x1)
    m2 = position_distribution(QuantumState(HilbertSpaceSpec((6,)), f1), x2)
    assert np.abs(joint - np.outer(m1, m2)).max() < 1e-10


def test_angular_momentum_operator_against_manual_assembly():
    space = HilbertSpaceSpec((2, 5, 6))
    op = angular_momentum_operator(space, 1, 2)
    manual = (
        embed(position(5), 1, space) @ embed(momentum(6), 2, space)
        - embed(position(6), 2, space) @ embed(momentum(5), 1, space)
    )
    assert np.abs((op - manual).toarray()).max() < 1e-12
    dense = op.toarray()
    assert np.abs(dense - dense.conj().T).max() < 1e-12


def test_angular_momentum_coherent_expectation():
    # <L> = 2 Re(b1) Im(b2) - 2 Re(b2) Im(b1) for a coherent product state
    space = HilbertSpaceSpec((1, 12, 12))
    psi = product_state(
        space,
        [fock_state(1, 0), coherent_state(12, 0.4), coherent_state(12, 0.2j)],
    )
    op = angular_momentum_operator(space, 1, 2)
    assert expectation(op, psi).real == pytest.approx(2 * 0.4 * 0.2, abs=1e-9)


def test_angular_momentum_commutes_with_symmetric_hamiltonian_in_bulk():
    # With equal quadratic couplings, H commutes with L exactly in the
    # untruncated algebra; on a truncated space the defect lives at the
    # Fock-space edge, so project onto the bulk before comparing.
    from optomech import Coupling, SystemParams, build_hamiltonian

    space = HilbertSpaceSpec((3, 9, 9))
    params = SystemParams(
        coupling=Coupling.QUADRATIC, omega_m=0.01, g=(-0.2, -0.2), delta_c=-0.02,
        eta=0.1, gamma=(0.0, 0.0),
    )
    H = build_hamiltonian(params, space)
    L = angular_momentum_operator(space, 1, 2)
    comm = (H @ L - L @ H).toarray()
    keep = []
    for idx in range(space.size):
        rem, n2 = divmod(idx, 9)
        _, n1 = divmod(rem, 9)
        if n1 <= 4 and n2 <= 4:
            keep.append(idx)
    bulk = comm[np.ix_(keep, keep)]
    assert np.abs(bulk).max() < 1e-13
    assert np.abs(comm).max() > 1e-3  # the defect really does live at the edge


def test_angular_momentum_series_matches_streamed_observable():
    from optomech import Coupling, SystemParams, build_generator
    from optomech.qdyn import evolve

    space = HilbertSpaceSpec((2, 6, 6))
    params = SystemParams(
        coupling=Coupling.QUADRATIC, omega_m=0.4, g=(-0.05, -0.05), delta_c=-0.1,
        eta=0.02, gamma=(0.01, 0.01),
    )
    gen = build_generator(params, space)
    psi0 = product_state(
        space, [fock_state(2, 0), coherent_state(6, 0.3), coherent_state(6, 0.2j)]
    )
    op = angular_momentum_operator(space, 1, 2)
    t_eval = np.linspace(0.0, 20.0, 9)
    traj = evolve(gen, psi0, t_eval, e_ops={"L": op}, store_states=True)
    series = angular_momentum_series(traj, 1, 2)
    streamed = traj.observables.values["L"].real
    sample_mask = np.isin(traj.observables.times, t_eval)
    assert np.allclose(series, streamed[sample_mask], atol=1e-9)


def test_angular_momentum_series_requires_stored_states():
    class Hollow:
        states = None

    with pytest.raises(ValidationError):
        angular_momentum_series(Hollow())


def test_grid_schmidt_shape_validation():
    grid = PositionGrid((GridAxis(-2.0, 2.0, 8),))
    with pytest.raises(ShapeError):
        grid_schmidt_coefficients(np.ones(8), grid)
