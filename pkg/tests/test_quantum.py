import math

import numpy as np
import pytest

from conftest import grammar
from specgen import random_specs
from gramflow.config_space import enumerate_basis
from gramflow.quantum import (
    DensityMatrix,
    HamiltonianSpec,
    HermitianOperator,
    LocalObservable,
    QuantumError,
    basis_vector,
    build_hamiltonian,
    convergence_scan,
    diagonal_operator,
    evolve,
    expectation,
    gibbs_state,
    gibbs_weights,
    jump_operator,
    measure,
    measurement_outcomes,
    propagator,
    spectral_projectors,
    word_projector,
)

ONE = "terminals: a\nnonterminals: S\naxiom: S\nrule S -> a\n"
TWO = "terminals: a\nnonterminals: S\naxiom: S\nrule S -> a S\nrule S -> a\n"


@pytest.fixture(scope="module")
def one():
    return grammar(ONE)


def block(one, r=0.7, **kw):
    return build_hamiltonian(HamiltonianSpec(one, 1, lambda_default=r, **kw))


def test_three_level_hamiltonian(one):
    H = block(one, 0.7)
    assert H.basis.words == ((), ("a",), ("S",))
    expected = np.zeros((3, 3))
    expected[1, 2] = expected[2, 1] = 0.7
    assert np.array_equal(H.matrix, expected)
    Hc = block(one, 0.7, c=1.0)
    assert np.array_equal(np.diag(Hc.matrix).real, [0.0, 1.0, 1.0])
    Hi = block(one, 0.7, c=2.0, correction="identity")
    assert np.array_equal(np.diag(Hi.matrix).real, [2.0, 2.0, 2.0])


def test_jump_operator_examples(one):
    basis = enumerate_basis(("a", "S"), 1)
    A = jump_operator(one.productions[0], 1, basis)
    expected = np.zeros((3, 3))
    expected[1, 2] = 1.0
    assert np.array_equal(A, expected)
    two = grammar(TWO)
    assert not jump_operator(two.productions[0], 1, basis).any()
    with pytest.raises(QuantumError):
        jump_operator(one.productions[0], 0, basis)


def test_jump_operator_positions():
    two = grammar(TWO)
    basis = enumerate_basis(("a", "S"), 3)
    A2 = jump_operator(two.productions[1], 2, basis)
    src, dst = basis.index_of("aS"), basis.index_of("aa")
    assert A2[dst, src] == 1.0
    assert A2[:, basis.index_of("Sa")].sum() == 0
    grow = jump_operator(two.productions[0], 1, basis)
    assert grow[basis.index_of("aSa"), basis.index_of("Sa")] == 1.0
    assert not grow[:, basis.index_of("SSS")].any()


def test_adjoint_pairing_exhaustive():
    for spec in random_specs(30, seed=4):
        basis = enumerate_basis(spec.grammar.alphabet, spec.N)
        if basis.dim > 64:
            continue
        for prod in spec.grammar.productions:
            for j in range(1, spec.N + 1):
                A = jump_operator(prod, j, basis)
                Astar = A.conj().T
                assert np.array_equal(A, Astar.conj().T)
                # every column has at most one 1: basis words map to basis words or to 0
                assert set(np.unique(A)) <= {0.0, 1.0}
                assert (A.sum(axis=0) <= 1).all()


def test_closed_form_evolution(one):
    r = 0.7
    H = block(one, r)
    psi0 = basis_vector(H.basis, ("S",))
    for t in np.linspace(-3, 3, 25):
        psi = evolve(psi0, H, float(t))
        assert np.allclose(psi, [0, 1j * math.sin(r * t), math.cos(r * t)], atol=1e-10, rtol=0)


def test_evolve_identities():
    rng = np.random.default_rng(0)
    for spec in random_specs(15, seed=1):
        H = build_hamiltonian(spec)
        psi = rng.normal(size=H.basis.dim) + 1j * rng.normal(size=H.basis.dim)
        assert np.allclose(evolve(psi, H, 0.0), psi, atol=1e-12)
        back = evolve(evolve(psi, H, 0.8), H, -0.8)
        assert np.allclose(back, psi, atol=1e-10)
        rho = DensityMatrix.pure(H.basis, psi / np.linalg.norm(psi))
        assert abs(evolve(rho, H, 1.3).trace - 1) < 1e-10


def test_basis_mismatch(one):
    H = block(one)
    with pytest.raises(QuantumError):
        evolve(np.ones(4), H, 1.0)
    other = build_hamiltonian(HamiltonianSpec(one, 2))
    with pytest.raises(QuantumError):
        expectation(gibbs_state(H, 1.0), word_projector(other.basis, ("a",)))


def test_closed_form_gibbs(one):
    r, tau = 0.7, 1.3
    H = block(one, r)
    rho = gibbs_state(H, tau)
    w, V = np.linalg.eigh(H.matrix)
    weights = np.real(np.einsum("ik,ij,jk->k", V.conj(), rho.matrix, V))
    Z = 2 * math.cosh(tau * r) + 1
    expected = {-r: math.exp(tau * r) / Z, 0.0: 1 / Z, r: math.exp(-tau * r) / Z}
    for lam, p in zip(w, weights):
        key = min(expected, key=lambda k: abs(k - lam))
        assert abs(p - expected[key]) < 1e-10


def test_gibbs_infinite_temperature_and_weights():
    for spec in random_specs(10, seed=2):
        H = build_hamiltonian(spec)
        rho = gibbs_state(H, 0.0)
        assert np.allclose(rho.matrix, np.eye(H.basis.dim) / H.basis.dim, atol=1e-12)
        p = gibbs_weights(H, 0.9)
        assert (np.diff(p) <= 1e-15).all()
    with pytest.raises(QuantumError):
        gibbs_state(H, -1.0)


def test_expectation_examples(one):
    H = block(one)
    rho = gibbs_state(H, 0.4)
    identity = HermitianOperator(H.basis, np.eye(3, dtype=complex))
    assert abs(expectation(rho, identity) - 1) < 1e-12
    P = word_projector(H.basis, ("a",))
    assert abs(expectation(rho, P) - rho.matrix[1, 1].real) < 1e-12
    d_rho = DensityMatrix(H.basis, np.diag([0.2, 0.3, 0.5]).astype(complex))
    X = diagonal_operator(H.basis, [1.0, -2.0, 4.0])
    assert abs(expectation(d_rho, X) - (0.2 - 0.6 + 2.0)) < 1e-12


def test_density_matrix_checks(one):
    basis = enumerate_basis(("a", "S"), 1)
    with pytest.raises(QuantumError):
        DensityMatrix(basis, np.diag([0.5, 0.6, 0.0]).astype(complex))
    with pytest.raises(QuantumError):
        DensityMatrix(basis, np.diag([1.5, -0.5, 0.0]).astype(complex))


def test_measurement_commuting_is_trivial(one):
    basis = enumerate_basis(("a", "S"), 1)
    rho = DensityMatrix(basis, np.diag([0.2, 0.3, 0.5]).astype(complex))
    X = diagonal_operator(basis, [1.0, 1.0, 3.0])
    out = measure(rho, X)
    assert np.allclose(out.matrix, rho.matrix, atol=1e-12)


def test_measurement_plus_state(one):
    basis = enumerate_basis(("a", "S"), 1)
    psi = np.array([0, 1, 1], dtype=complex) / math.sqrt(2)
    rho = DensityMatrix.pure(basis, psi)
    X = diagonal_operator(basis, [0.0, 1.0, 2.0])
    post = measure(rho, X)
    assert np.allclose(post.matrix, np.diag([0, 0.5, 0.5]), atol=1e-12)
    assert abs(post.trace - 1) < 1e-12
    outcomes = measurement_outcomes(rho, X)
    assert [o.eigenvalue for o in outcomes] == pytest.approx([0.0, 1.0, 2.0])
    assert [o.probability for o in outcomes] == pytest.approx([0.0, 0.5, 0.5])
    picked = measure(rho, X, 2)
    assert np.allclose(picked.post_state.matrix, np.diag([0, 0, 1]), atol=1e-12)
    with pytest.raises(QuantumError, match="zero-probability conditioning"):
        measure(rho, X, 0)
    with pytest.raises(QuantumError):
        measure(rho, X, 3)


def test_projector_clustering():
    basis = enumerate_basis(("a",), 2)
    X = diagonal_operator(basis, [1.0, 1.0 + 1e-10, 2.0])
    projs = spectral_projectors(X)
    assert len(projs) == 2
    assert np.allclose(projs[0][1], np.diag([1, 1, 0]))


def test_propagator_is_unitary():
    for spec in random_specs(10, seed=3):
        H = build_hamiltonian(spec)
        U = propagator(H, 0.37)
        assert np.allclose(U @ U.conj().T, np.eye(H.basis.dim), atol=1e-10)


def _single_rule_value(r, tau, N):
    z = 2 * math.cosh(tau * r)
    return math.cosh(tau * r) / sum(z**n for n in range(N + 1))


def test_scan_single_rule_closed_form(one):
    base = enumerate_basis(("a", "S"), 1)
    rows = convergence_scan(HamiltonianSpec(one, 1), 1.0, LocalObservable.word(base, ("a",)), [1, 2, 3])
    for row in rows:
        assert abs(row["value"] - _single_rule_value(1.0, 1.0, row["N"])) < 1e-10
    assert rows[0]["delta"] is None
    assert rows[1]["delta"] == pytest.approx(abs(rows[1]["value"] - rows[0]["value"]))


def test_scan_infinite_temperature():
    g = grammar(TWO)
    base = enumerate_basis(("a", "S"), 2)
    values = {("a",): 1.0, ("S", "a"): 3.0}
    rows = convergence_scan(HamiltonianSpec(g, 2), 0.0, LocalObservable.diagonal(base, values), [2, 3, 4])
    for row in rows:
        assert abs(row["value"] - 4.0 / row["dim"]) < 1e-12


def test_scan_trend():
    g = grammar(TWO)
    base = enumerate_basis(("a", "S"), 3)
    rows = convergence_scan(HamiltonianSpec(g, 3), 1.0, LocalObservable.word(base, ("a",)), range(3, 8))
    deltas = [r["delta"] for r in rows[1:]]
    assert all(b <= a for a, b in zip(deltas, deltas[1:]))


def test_scan_errors(one):
    base = enumerate_basis(("a", "S"), 2)
    X = LocalObservable.word(base, ("a",))
    with pytest.raises(QuantumError):
        convergence_scan(HamiltonianSpec(one, 1), 1.0, X, [1, 2])
    with pytest.raises(QuantumError):
        convergence_scan(HamiltonianSpec(one, 1), 1.0, X, [3, 2])


def test_coupling_sources():
    g = grammar("terminals: a\nnonterminals: S\naxiom: S\nrule S -> a @ u=0,2\n")
    spec = HamiltonianSpec(g, 1, lambda_default=5.0)
    assert spec.coupling(0) == 2j
    assert HamiltonianSpec(g, 1, lambdas={0: 3.0}).coupling(0) == 3.0
    H = build_hamiltonian(spec)
    assert H.matrix[1, 2] == 2j and H.matrix[2, 1] == -2j
    with pytest.raises(QuantumError):
        HamiltonianSpec(g, 1, lambdas={4: 1.0})
    with pytest.raises(QuantumError):
        HamiltonianSpec(g, 0)
