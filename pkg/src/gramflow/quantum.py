"""Truncated quantum dynamics generated by grammar productions.

States and observables are dense complex matrices indexed by the words
of length <= N (see :mod:`gramflow.config_space`).  Each production
``pi = (lhs, rhs)`` and site ``j`` gives a jump operator ``A_pi(j)``
that rewrites the occurrence of ``lhs`` starting at site ``j``; the
Hamiltonian is

    H_N = sum_pi sum_j (lam_pi A_pi(j) + conj(lam_pi) A_pi(j)^*) + c H_c

restricted to the truncated space.  Rewrites whose image is longer than
N, and words without a matching occurrence, are annihilated.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Mapping, Optional, Sequence, Union

import numpy as np

from .config_space import BasisEnumeration, enumerate_basis
from .grammar import Grammar, Production, Word

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-10
PSD_TOL = 1e-10
CLUSTER_TOL = 1e-8
ZERO_PROB = 1e-12

Correction = Union[str, Callable[[Word], float]]


class QuantumError(ValueError):
    pass


def _max_abs(a: np.ndarray) -> float:
    return float(np.max(np.abs(a))) if a.size else 0.0


@dataclass(frozen=True, eq=False)
class HermitianOperator:
    basis: BasisEnumeration
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (self.basis.dim, self.basis.dim):
            raise QuantumError(f"matrix shape {m.shape} does not match basis dim {self.basis.dim}")
        err = _max_abs(m - m.conj().T)
        if err > HERMITIAN_TOL:
            raise QuantumError(f"operator is not Hermitian (max deviation {err:.3g})")
        object.__setattr__(self, "matrix", m)

    @cached_property
    def eigh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.linalg.eigh(self.matrix)

    @property
    def spectrum(self) -> np.ndarray:
        return self.eigh[0]


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    basis: BasisEnumeration
    matrix: np.ndarray
    check_positive: bool = field(default=True, repr=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (self.basis.dim, self.basis.dim):
            raise QuantumError(f"matrix shape {m.shape} does not match basis dim {self.basis.dim}")
        err = _max_abs(m - m.conj().T)
        if err > HERMITIAN_TOL:
            raise QuantumError(f"density matrix is not Hermitian (max deviation {err:.3g})")
        tr = np.trace(m).real
        if abs(tr - 1.0) > TRACE_TOL:
            raise QuantumError(f"density matrix trace is {tr!r}, not 1")
        if self.check_positive:
            low = np.linalg.eigvalsh(m)[0] if m.size else 0.0
            if low < -PSD_TOL:
                raise QuantumError(f"density matrix has negative eigenvalue {low:.3g}")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def pure(cls, basis: BasisEnumeration, psi: np.ndarray) -> "DensityMatrix":
        psi = np.asarray(psi, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        return cls(basis, _hermitize(np.outer(psi, psi.conj())))

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix).real)


def _hermitize(m: np.ndarray) -> np.ndarray:
    return (m + m.conj().T) / 2


def basis_vector(basis: BasisEnumeration, word: Sequence[str]) -> np.ndarray:
    v = np.zeros(basis.dim, dtype=complex)
    v[basis.index_of(word)] = 1.0
    return v


# ---------------------------------------------------------------------------
# operators from productions


def _jump_pairs(production: Production, j: int, basis: BasisEnumeration):
    """(source index, target index) for every basis word rewritten at site j."""
    lhs, rhs = production.lhs, production.rhs
    N = basis.max_len
    start = j - 1
    for a, word in enumerate(basis.words):
        if word[start : start + len(lhs)] != lhs:
            continue
        image = word[:start] + rhs + word[start + len(lhs) :]
        if len(image) <= N:
            yield a, basis.index[image]


def jump_operator(production: Production, j: int, basis: BasisEnumeration) -> np.ndarray:
    """Matrix of A_pi(j): e_alpha -> e_beta on matching words, 0 elsewhere."""
    if j < 1:
        raise QuantumError("site index j must be >= 1")
    A = np.zeros((basis.dim, basis.dim))
    for a, b in _jump_pairs(production, j, basis):
        A[b, a] = 1.0
    return A


def grammar_basis(g: Grammar, N: int) -> BasisEnumeration:
    return enumerate_basis(g.alphabet, N)


@dataclass(frozen=True)
class HamiltonianSpec:
    grammar: Grammar
    N: int
    # production index -> coupling; falls back to the production amplitude, then the default
    lambdas: Mapping[int, complex] = field(default_factory=dict)
    lambda_default: complex = 1.0
    c: float = 0.0
    correction: Correction = "length"

    def __post_init__(self):
        if self.N < 1:
            raise QuantumError("N must be >= 1")
        if isinstance(self.correction, str) and self.correction not in ("length", "identity"):
            raise QuantumError(f"unknown correction {self.correction!r}")
        for k in self.lambdas:
            if not 0 <= k < len(self.grammar.productions):
                raise QuantumError(f"lambda given for unknown production index {k}")

    def coupling(self, k: int) -> complex:
        if k in self.lambdas:
            return complex(self.lambdas[k])
        amp = self.grammar.productions[k].amplitude
        return complex(self.lambda_default if amp is None else amp)

    def with_N(self, N: int) -> "HamiltonianSpec":
        return dataclasses.replace(self, N=N)


def correction_diagonal(spec: HamiltonianSpec, basis: BasisEnumeration) -> np.ndarray:
    if spec.correction == "length":
        return np.array([len(w) for w in basis.words], dtype=float)
    if spec.correction == "identity":
        return np.ones(basis.dim)
    return np.array([float(spec.correction(w)) for w in basis.words])


def build_hamiltonian(spec: HamiltonianSpec, basis: Optional[BasisEnumeration] = None) -> HermitianOperator:
    basis = grammar_basis(spec.grammar, spec.N) if basis is None else basis
    M = np.zeros((basis.dim, basis.dim), dtype=complex)
    rows, cols, vals = [], [], []
    for k, prod in enumerate(spec.grammar.productions):
        lam = spec.coupling(k)
        if lam == 0:
            continue
        for j in range(1, basis.max_len + 1):
            for a, b in _jump_pairs(prod, j, basis):
                rows.append(b)
                cols.append(a)
                vals.append(lam)
    if rows:
        np.add.at(M, (np.array(rows), np.array(cols)), np.array(vals, dtype=complex))
    H = M + M.conj().T
    if spec.c:
        H[np.diag_indices(basis.dim)] += spec.c * correction_diagonal(spec, basis)
    return HermitianOperator(basis, H)


# ---------------------------------------------------------------------------
# dynamics and states


def propagator(H: HermitianOperator, t: float) -> np.ndarray:
    """U(t) = exp(i t H) via the spectral decomposition of H."""
    w, V = H.eigh
    return (V * np.exp(1j * t * w)) @ V.conj().T


def evolve(state, H: HermitianOperator, t: float):
    """Evolve a ray (1-D array) or a DensityMatrix for time ``t`` under exp(itH)."""
    w, V = H.eigh
    phase = np.exp(1j * t * w)
    if isinstance(state, DensityMatrix):
        if state.basis.words != H.basis.words:
            raise QuantumError("state and Hamiltonian live on different bases")
        U = (V * phase) @ V.conj().T
        return DensityMatrix(H.basis, _hermitize(U @ state.matrix @ U.conj().T), check_positive=False)
    psi = np.asarray(state, dtype=complex)
    if psi.shape != (H.basis.dim,):
        raise QuantumError(f"ray of shape {psi.shape} does not match basis dim {H.basis.dim}")
    return V @ (phase * (V.conj().T @ psi))


def gibbs_weights(H: HermitianOperator, tau: float) -> np.ndarray:
    w = H.spectrum
    x = np.exp(-tau * (w - w.min())) if w.size else w
    return x / x.sum()


def gibbs_state(H: HermitianOperator, tau: float) -> DensityMatrix:
    """exp(-tau H) / tr exp(-tau H), shifted by the ground energy for stability."""
    if tau < 0:
        raise QuantumError("tau must be >= 0")
    _, V = H.eigh
    p = gibbs_weights(H, tau)
    rho = (V * p) @ V.conj().T
    return DensityMatrix(H.basis, _hermitize(rho), check_positive=False)


def expectation(rho: DensityMatrix, X: HermitianOperator) -> float:
    if rho.basis.words != X.basis.words:
        raise QuantumError("state and observable live on different bases")
    value = np.einsum("ij,ji->", rho.matrix, X.matrix)
    if abs(value.imag) > 1e-10:
        raise QuantumError(f"tr(rho X) has imaginary part {value.imag:.3g}")
    return float(value.real)


def word_projector(basis: BasisEnumeration, word: Sequence[str]) -> HermitianOperator:
    m = np.zeros((basis.dim, basis.dim), dtype=complex)
    k = basis.index_of(word)
    m[k, k] = 1.0
    return HermitianOperator(basis, m)


def diagonal_operator(basis: BasisEnumeration, values: Sequence[float]) -> HermitianOperator:
    return HermitianOperator(basis, np.diag(np.asarray(values, dtype=complex)))


# ---------------------------------------------------------------------------
# measurement


@dataclass(frozen=True, eq=False)
class MeasurementOutcome:
    eigenvalue: float
    probability: float
    # None when the outcome has (numerically) zero probability
    post_state: Optional[DensityMatrix]


def spectral_projectors(X: HermitianOperator, tol: float = CLUSTER_TOL) -> list[tuple[float, np.ndarray]]:
    """Eigenvalues of X merged within ``tol`` and the projector onto each eigenspace."""
    w, V = X.eigh
    groups: list[list[int]] = []
    for k in range(len(w)):
        if groups and w[k] - w[groups[-1][-1]] <= tol:
            groups[-1].append(k)
        else:
            groups.append([k])
    out = []
    for g in groups:
        Vg = V[:, g]
        out.append((float(np.mean(w[g])), Vg @ Vg.conj().T))
    return out


def measurement_outcomes(rho: DensityMatrix, X: HermitianOperator) -> list[MeasurementOutcome]:
    if rho.basis.words != X.basis.words:
        raise QuantumError("state and observable live on different bases")
    out = []
    for value, P in spectral_projectors(X):
        prob = float(np.einsum("ij,ji->", rho.matrix, P).real)
        post = None
        if prob >= ZERO_PROB:
            post = DensityMatrix(rho.basis, _hermitize(P @ rho.matrix @ P) / prob, check_positive=False)
        out.append(MeasurementOutcome(value, max(prob, 0.0), post))
    return out


def measure(rho: DensityMatrix, X: HermitianOperator, outcome: Optional[int] = None):
    """Filtered (``outcome`` given) or unfiltered measurement of X in state rho.

    ``outcome`` indexes the distinct eigenvalues of X in ascending order and
    yields a MeasurementOutcome with the conditioned state P rho P / tr(rho P).
    Without it the non-selective post-measurement state sum_j P_j rho P_j is
    returned.
    """
    if outcome is None:
        if rho.basis.words != X.basis.words:
            raise QuantumError("state and observable live on different bases")
        acc = np.zeros_like(rho.matrix)
        for _, P in spectral_projectors(X):
            acc += P @ rho.matrix @ P
        return DensityMatrix(rho.basis, _hermitize(acc), check_positive=False)
    outcomes = measurement_outcomes(rho, X)
    if not 0 <= outcome < len(outcomes):
        raise QuantumError(f"outcome index {outcome} out of range (0..{len(outcomes) - 1})")
    chosen = outcomes[outcome]
    if chosen.post_state is None:
        raise QuantumError("zero-probability conditioning")
    return chosen


# ---------------------------------------------------------------------------
# quasi-local observables and N scans


@dataclass(frozen=True, eq=False)
class LocalObservable:
    """An observable on a small basis, embedded into larger ones by zero padding."""

    base: BasisEnumeration
    matrix: np.ndarray

    def embed(self, basis: BasisEnumeration) -> HermitianOperator:
        if basis.alphabet != self.base.alphabet:
            raise QuantumError("observable and target basis use different alphabets")
        if basis.max_len < self.base.max_len:
            raise QuantumError(
                f"observable needs N >= {self.base.max_len}, target basis has N={basis.max_len}"
            )
        m = np.zeros((basis.dim, basis.dim), dtype=complex)
        d = self.base.dim
        # the length-ordered smaller basis is a prefix of the larger one
        m[:d, :d] = self.matrix
        return HermitianOperator(basis, m)

    @classmethod
    def word(cls, base: BasisEnumeration, word: Sequence[str]) -> "LocalObservable":
        return cls(base, word_projector(base, word).matrix)

    @classmethod
    def diagonal(cls, base: BasisEnumeration, values: Mapping[Word, float]) -> "LocalObservable":
        diag = np.zeros(base.dim)
        for w, v in values.items():
            diag[base.index_of(w)] = v
        return cls(base, np.diag(diag).astype(complex))


def convergence_scan(
    spec: HamiltonianSpec, tau: float, observable: LocalObservable, N_list: Sequence[int]
) -> list[dict]:
    """tr(rho_N X) for each N, with the absolute change from the previous N."""
    N_list = list(N_list)
    if any(b <= a for a, b in zip(N_list, N_list[1:])):
        raise QuantumError("N_list must be strictly ascending")
    rows = []
    prev = None
    for N in N_list:
        H = build_hamiltonian(spec.with_N(N))
        value = expectation(gibbs_state(H, tau), observable.embed(H.basis))
        rows.append(
            {"N": N, "dim": H.basis.dim, "value": value, "delta": None if prev is None else abs(value - prev)}
        )
        prev = value
    return rows


__all__ = [
    "HermitianOperator",
    "DensityMatrix",
    "HamiltonianSpec",
    "MeasurementOutcome",
    "LocalObservable",
    "QuantumError",
    "basis_vector",
    "jump_operator",
    "grammar_basis",
    "build_hamiltonian",
    "correction_diagonal",
    "propagator",
    "evolve",
    "gibbs_state",
    "gibbs_weights",
    "expectation",
    "word_projector",
    "diagonal_operator",
    "spectral_projectors",
    "measurement_outcomes",
    "measure",
    "convergence_scan",
]
