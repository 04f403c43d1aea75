"""Brute-force oracles in the fixed-particle sector basis.

Everything here is dense and deliberately naive: the spin-free Hamiltonian is
built twice (operator application and Slater-Condon rules), the XDF form is
built from matrix exponentials of one-body generators, and time evolution uses
a full eigendecomposition. These are the yardsticks the fast paths are tested
against.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations

import numpy as np
import scipy.linalg
import scipy.optimize
import scipy.sparse as sp

from .ingest import ActiveHamiltonian
from .xdf import XdfHamiltonian

MAX_DENSE_ORB = 8
MAX_XDF_DENSE_ORB = 4


@dataclass(frozen=True)
class DenseHamiltonian:
    """Hamiltonian matrix over sector bitstrings (full-register indices, ascending)."""

    n_orb: int
    n_alpha: int
    n_beta: int
    basis: np.ndarray
    matrix: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.basis)

    def to_sector(self, state: np.ndarray) -> np.ndarray:
        return state[self.basis]

    def to_full(self, vec: np.ndarray) -> np.ndarray:
        out = np.zeros(4**self.n_orb, dtype=complex)
        out[self.basis] = vec
        return out


def sector_basis(n_orb: int, n_alpha: int, n_beta: int) -> np.ndarray:
    idx = np.arange(4**n_orb)
    lo, hi = idx & ((1 << n_orb) - 1), idx >> n_orb
    pc = np.array([bin(i).count("1") for i in range(1 << n_orb)])
    return idx[(pc[lo] == n_alpha) & (pc[hi] == n_beta)]


def _excite(det: int, create: int, annihilate: int) -> tuple[int, int]:
    """``a^+_create a_annihilate |det>`` as (new det, sign); sign 0 means the result vanishes."""
    if not (det >> annihilate) & 1:
        return det, 0
    sign = -1 if (det & ((1 << annihilate) - 1)).bit_count() & 1 else 1
    det ^= 1 << annihilate
    if (det >> create) & 1:
        return det, 0
    if (det & ((1 << create) - 1)).bit_count() & 1:
        sign = -sign
    return det ^ (1 << create), sign


@lru_cache(maxsize=8)
def sector_excitation_operators(n_orb: int, n_alpha: int, n_beta: int) -> tuple[np.ndarray, tuple]:
    """Sparse matrices of ``E_pq = sum_sigma a^+_{p sigma} a_{q sigma}`` in the sector basis."""
    basis = sector_basis(n_orb, n_alpha, n_beta)
    pos = {int(b): i for i, b in enumerate(basis)}
    dim = len(basis)
    ops = []
    for p in range(n_orb):
        row = []
        for q in range(n_orb):
            rows, cols, vals = [], [], []
            for j, det in enumerate(basis):
                for shift in (0, n_orb):
                    new, sgn = _excite(int(det), p + shift, q + shift)
                    if sgn:
                        rows.append(pos[new])
                        cols.append(j)
                        vals.append(sgn)
            row.append(sp.csr_matrix((vals, (rows, cols)), shape=(dim, dim), dtype=float))
        ops.append(tuple(row))
    return basis, tuple(ops)


def _guard(n_orb: int, limit: int) -> None:
    if n_orb > limit:
        raise ValueError(f"dense construction limited to n_orb <= {limit}, got {n_orb}")


def build_dense_operator(act: ActiveHamiltonian) -> DenseHamiltonian:
    """``E_ext + sum kappa_pq E_pq + 1/2 sum g_pqrs E_pq E_rs`` by sparse operator products."""
    n = act.n_orb
    _guard(n, MAX_DENSE_ORB)
    basis, E = sector_excitation_operators(n, act.n_alpha, act.n_beta)
    dim = len(basis)
    H = sp.identity(dim, format="csr") * act.e_ext
    for p in range(n):
        for q in range(n):
            W = sp.csr_matrix((dim, dim))
            for r in range(n):
                for s in range(n):
                    if act.g_pqrs[p, q, r, s] != 0.0:
                        W = W + act.g_pqrs[p, q, r, s] * E[r][s]
            H = H + act.kappa_pq[p, q] * E[p][q] + 0.5 * (E[p][q] @ W)
    M = H.toarray()
    return DenseHamiltonian(n, act.n_alpha, act.n_beta, basis, 0.5 * (M + M.T))


def build_dense_slater_condon(act: ActiveHamiltonian) -> DenseHamiltonian:
    """Same matrix from spin-orbital Slater-Condon rules with the bare one-electron integrals."""
    n = act.n_orb
    _guard(n, MAX_DENSE_ORB)
    g = act.g_pqrs
    h = act.kappa_pq + 0.5 * np.einsum("prrq->pq", g)
    nso = 2 * n
    spin = np.arange(nso) // n
    orb = np.arange(nso) % n
    h_so = h[np.ix_(orb, orb)] * (spin[:, None] == spin[None, :])
    # <ij|kl> = (ik|jl) delta(s_i, s_k) delta(s_j, s_l)
    phys = g[np.ix_(orb, orb, orb, orb)].transpose(0, 2, 1, 3)
    phys = phys * (spin[:, None, None, None] == spin[None, None, :, None])
    phys = phys * (spin[None, :, None, None] == spin[None, None, None, :])
    anti = phys - phys.transpose(0, 1, 3, 2)

    basis = sector_basis(n, act.n_alpha, act.n_beta)
    pos = {int(b): i for i, b in enumerate(basis)}
    M = np.zeros((len(basis), len(basis)))
    for col, det in enumerate(basis):
        det = int(det)
        occ = [i for i in range(nso) if (det >> i) & 1]
        vir = [a for a in range(nso) if not (det >> a) & 1]
        occ_a = np.array(occ)
        sub = anti[np.ix_(occ_a, occ_a, occ_a, occ_a)]
        M[col, col] = act.e_ext + h_so[occ_a, occ_a].sum() + 0.5 * np.einsum("ijij->", sub)
        for i in occ:
            for a in vir:
                if spin[i] != spin[a]:
                    continue
                new, sgn = _excite(det, a, i)
                M[pos[new], col] = sgn * (h_so[a, i] + anti[a, occ_a, i, occ_a].sum())
        for i, j in combinations(occ, 2):
            for a, b in combinations(vir, 2):
                if sorted((spin[a], spin[b])) != sorted((spin[i], spin[j])):
                    continue
                mid, s1 = _excite(det, b, j)
                new, s2 = _excite(mid, a, i)
                if s1 * s2 == 0:
                    continue
                M[pos[new], col] = s1 * s2 * anti[a, b, i, j]
    return DenseHamiltonian(n, act.n_alpha, act.n_beta, basis, M)


def build_dense(act: ActiveHamiltonian, method: str = "operator") -> DenseHamiltonian:
    """Dense spin-free Hamiltonian; ``method`` is ``"operator"`` or ``"slater-condon"``."""
    if method == "operator":
        return build_dense_operator(act)
    if method == "slater-condon":
        return build_dense_slater_condon(act)
    raise ValueError(f"unknown method {method!r}")


def dense_rotation(U: np.ndarray, n_orb: int, n_alpha: int, n_beta: int) -> np.ndarray:
    """Sector matrix of ``R(U) = exp(sum_pq log(U)_pq E_pq)``, so ``R a^+_k R^+ = sum_p U_pk a^+_p``."""
    _, E = sector_excitation_operators(n_orb, n_alpha, n_beta)
    X = scipy.linalg.logm(np.asarray(U, dtype=complex))
    X = 0.5 * (X - X.conj().T)
    K = sum(X[p, q] * E[p][q] for p in range(n_orb) for q in range(n_orb))
    return scipy.linalg.expm(K.toarray())


def _pauli_z(basis: np.ndarray, n_orb: int) -> tuple[np.ndarray, np.ndarray]:
    k = np.arange(n_orb)
    za = 1.0 - 2.0 * ((basis[:, None] >> k) & 1)
    zb = 1.0 - 2.0 * ((basis[:, None] >> (k + n_orb)) & 1)
    return za, zb


def one_body_pauli(f_k: np.ndarray, basis: np.ndarray, n_orb: int) -> np.ndarray:
    """``-1/2 sum_k f_k (Z_k + Z_kb)`` on each basis string, written term by term."""
    za, zb = _pauli_z(basis, n_orb)
    out = np.zeros(len(basis))
    for k in range(n_orb):
        out -= 0.5 * f_k[k] * (za[:, k] + zb[:, k])
    return out


def two_body_pauli(Z: np.ndarray, basis: np.ndarray, n_orb: int) -> np.ndarray:
    """``1/8 sum_{k!=l} Z_kl (Z_k+Z_kb)(Z_l+Z_lb) + 1/4 sum_k Z_kk Z_k Z_kb`` term by term."""
    za, zb = _pauli_z(basis, n_orb)
    out = np.zeros(len(basis))
    for k in range(n_orb):
        out += 0.25 * Z[k, k] * za[:, k] * zb[:, k]
        for l in range(n_orb):
            if l != k:
                out += 0.125 * Z[k, l] * (za[:, k] + zb[:, k]) * (za[:, l] + zb[:, l])
    return out


def dense_xdf_terms(xdf: XdfHamiltonian) -> list[np.ndarray]:
    """Dense sector matrices ``R(U_s) D_s R(U_s)^+`` for every term (0 = one-body)."""
    n = xdf.n_orb
    _guard(n, MAX_XDF_DENSE_ORB)
    basis = sector_basis(n, xdf.n_alpha, xdf.n_beta)
    pairs = [(xdf.one_body.U0, one_body_pauli(xdf.one_body.f_k, basis, n))]
    pairs += [(f.Ut, two_body_pauli(f.Z_kl, basis, n)) for f in xdf.factors]
    terms = []
    for U, d in pairs:
        R = dense_rotation(U, n, xdf.n_alpha, xdf.n_beta)
        terms.append((R * d) @ R.conj().T)
    return terms


def build_dense_xdf(xdf: XdfHamiltonian) -> DenseHamiltonian:
    n = xdf.n_orb
    basis = sector_basis(n, xdf.n_alpha, xdf.n_beta)
    M = xdf.e0 * np.eye(len(basis), dtype=complex)
    for term in dense_xdf_terms(xdf):
        M = M + term
    M = 0.5 * (M + M.conj().T)
    if np.max(np.abs(M.imag)) < 1e-12:
        M = M.real
    return DenseHamiltonian(n, xdf.n_alpha, xdf.n_beta, basis, M)


def fci_ground(dense: DenseHamiltonian) -> tuple[float, np.ndarray]:
    """Lowest eigenpair; the vector is returned in the sector basis."""
    w, v = scipy.linalg.eigh(dense.matrix, subset_by_index=[0, 0])
    return float(w[0]), v[:, 0]


class ExactPropagator:
    """``exp(-i H tau)`` through a cached full eigendecomposition of the dense matrix."""

    def __init__(self, dense: DenseHamiltonian):
        self.dense = dense
        self.energies, self.vectors = scipy.linalg.eigh(dense.matrix)

    @property
    def ground_energy(self) -> float:
        return float(self.energies[0])

    def propagate(self, state: np.ndarray, tau: float) -> np.ndarray:
        """Evolve a full-register state; amplitude outside the sector is dropped."""
        v = self.dense.to_sector(state)
        coeff = self.vectors.conj().T @ v
        return self.dense.to_full(self.vectors @ (np.exp(-1j * self.energies * tau) * coeff))

    def apply_hamiltonian(self, state: np.ndarray) -> np.ndarray:
        return self.dense.to_full(self.dense.matrix @ self.dense.to_sector(state))


def exact_propagate(dense: DenseHamiltonian, state: np.ndarray, tau: float) -> np.ndarray:
    return ExactPropagator(dense).propagate(state, tau)


@dataclass(frozen=True)
class WeightSearchResult:
    p: np.ndarray
    objective: float
    converged: bool
    n_iter: int


def weight_objective(c: np.ndarray, p: np.ndarray) -> float:
    """Second-order error functional ``sum_s c_s (1/p_s - 1)``."""
    c, p = np.asarray(c, float), np.asarray(p, float)
    mask = c > 0
    return float(np.sum(c[mask] * (1.0 / p[mask] - 1.0)))


def brute_force_weights(c: np.ndarray, tol: float = 1e-14) -> WeightSearchResult:
    """Numerically minimize ``sum_s c_s (1/p_s - 1)`` over the probability simplex.

    The simplex is parametrized by a softmax and searched with BFGS, knowing
    nothing of the closed-form optimum. Terms with ``c_s = 0`` get ``p_s = 0``.
    """
    c = np.asarray(c, dtype=float)
    if np.any(c < 0) or not np.any(c > 0):
        raise ValueError("c must be non-negative with at least one positive entry")
    active = np.flatnonzero(c > 0)
    ca = c[active]
    scale = ca.sum()

    def fun(theta):
        z = np.exp(theta - theta.max())
        p = z / z.sum()
        f = np.sum(ca / p) / scale
        dfdp = -ca / p**2 / scale
        grad = p * (dfdp - np.dot(dfdp, p))
        return f, grad

    res = scipy.optimize.minimize(
        fun, np.zeros(len(ca)), jac=True, method="BFGS", options={"gtol": tol, "maxiter": 10_000}
    )
    z = np.exp(res.x - res.x.max())
    p = np.zeros_like(c)
    p[active] = z / z.sum()
    gnorm = float(np.max(np.abs(res.jac))) if len(ca) > 1 else 0.0
    return WeightSearchResult(p, weight_objective(c, p), bool(res.success or gnorm < 1e-7), int(res.nit))
