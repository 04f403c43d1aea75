"""Statevector engine for fast-forwardable XDF terms.

A state is a complex vector of length ``4**n_orb``. Qubit ``j`` is bit ``j`` of the
index; alpha orbitals occupy qubits ``0..n_orb-1`` and beta orbitals
``n_orb..2*n_orb-1`` (Jordan-Wigner, alpha block then beta block). Reshaped to
``(2**n_orb, 2**n_orb)`` in C order, a state reads ``psi[beta_bits, alpha_bits]``.

Orbital rotations act identically on both spin blocks and never need Z strings:
nearest-neighbour Givens rotations stay inside one block, and moving a beta
rotation past the alpha block costs an alpha-parity factor that cancels.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Literal

import numpy as np

from .xdf import XdfHamiltonian


@lru_cache(maxsize=None)
def occupations(n_orb: int) -> tuple[np.ndarray, np.ndarray]:
    """Alpha and beta occupation tables, each ``(4**n_orb, n_orb)`` of 0/1 int8."""
    idx = np.arange(4**n_orb)
    k = np.arange(n_orb)
    occ_a = ((idx[:, None] >> k) & 1).astype(np.int8)
    occ_b = ((idx[:, None] >> (k + n_orb)) & 1).astype(np.int8)
    occ_a.setflags(write=False)
    occ_b.setflags(write=False)
    return occ_a, occ_b


def n_orb_of(state: np.ndarray) -> int:
    n = int(round(np.log(state.shape[0]) / np.log(4)))
    if 4**n != state.shape[0]:
        raise ValueError(f"state length {state.shape[0]} is not a power of 4")
    return n


def sector_mask(n_orb: int, n_alpha: int, n_beta: int) -> np.ndarray:
    occ_a, occ_b = occupations(n_orb)
    return (occ_a.sum(1) == n_alpha) & (occ_b.sum(1) == n_beta)


def sector_indices(n_orb: int, n_alpha: int, n_beta: int) -> np.ndarray:
    return np.flatnonzero(sector_mask(n_orb, n_alpha, n_beta))


def init_reference(n_orb: int, n_alpha: int, n_beta: int) -> np.ndarray:
    """Determinant with the lowest ``n_alpha`` alpha and ``n_beta`` beta orbitals occupied."""
    if not (0 <= n_alpha <= n_orb and 0 <= n_beta <= n_orb):
        raise ValueError(f"occupation ({n_alpha}, {n_beta}) exceeds n_orb={n_orb}")
    state = np.zeros(4**n_orb, dtype=complex)
    state[(2**n_alpha - 1) + ((2**n_beta - 1) << n_orb)] = 1.0
    return state


def inner(bra: np.ndarray, ket: np.ndarray) -> complex:
    if bra.shape != ket.shape:
        raise ValueError(f"dimension mismatch {bra.shape} vs {ket.shape}")
    return complex(np.vdot(bra, ket))


# --- Givens rotations -------------------------------------------------------


@lru_cache(maxsize=None)
def _pair_indices(n_modes: int, p: int) -> tuple[np.ndarray, np.ndarray]:
    """Indices (over ``2**n_modes`` Fock states) with only ``p`` resp. only ``p+1`` occupied in the pair."""
    idx = np.arange(2**n_modes)
    bp, bq = (idx >> p) & 1, (idx >> (p + 1)) & 1
    x = idx[(bp == 1) & (bq == 0)]
    y = x ^ ((1 << p) | (1 << (p + 1)))
    return x, y


def _rotate_axis(arr: np.ndarray, axis: int, n_modes: int, p: int, angle: float) -> None:
    """In place: ``|p> -> cos|p> + sin|p+1>``, ``|p+1> -> -sin|p> + cos|p+1>`` along ``axis``."""
    x, y = _pair_indices(n_modes, p)
    c, s = np.cos(angle), np.sin(angle)
    view = np.moveaxis(arr, axis, 0)
    ax, ay = view[x], view[y]
    view[x] = c * ax - s * ay
    view[y] = s * ax + c * ay


def _flip_axis(arr: np.ndarray, axis: int, n_modes: int, mode: int) -> None:
    view = np.moveaxis(arr, axis, 0)
    view[((np.arange(2**n_modes) >> mode) & 1) == 1] *= -1


def apply_givens_pair(state: np.ndarray, p: int, angle: float) -> np.ndarray:
    """Rotate spatial orbitals ``(p, p+1)`` by ``angle`` in both spin blocks.

    Within each spin block the singly-occupied pair amplitudes mix by
    ``[[cos, -sin], [sin, cos]]``; ``|00>`` and ``|11>`` are untouched.
    """
    n = n_orb_of(state)
    if not 0 <= p < n - 1:
        raise IndexError(f"pair ({p}, {p + 1}) out of range for n_orb={n}")
    psi = state.reshape(2**n, 2**n).copy()
    _rotate_axis(psi, 1, n, p, angle)
    _rotate_axis(psi, 0, n, p, angle)
    return psi.reshape(-1)


@dataclass(frozen=True)
class GivensNetwork:
    """Adjacent-pair Givens sequence implementing the orbital rotation ``G``.

    ``G^+ a^+_k G = sum_p U[p, k] a^+_p``. Applying the network runs ``flip_last``
    (a sign on strings with the last orbital occupied, present when det U = -1)
    and then ``rotations`` in order.
    """

    n_orb: int
    rotations: tuple[tuple[int, float], ...]
    flip_last: bool = False

    def __len__(self) -> int:
        return len(self.rotations)


def compile_givens_network(U: np.ndarray, atol: float = 1e-8) -> GivensNetwork:
    """QR-decompose ``U.T`` with nearest-neighbour Givens rotations."""
    U = np.asarray(U, dtype=float)
    n = U.shape[0]
    if U.shape != (n, n) or np.max(np.abs(U.T @ U - np.eye(n))) > atol:
        raise ValueError("orbital rotation matrix must be square and orthogonal")
    M = U.T.copy()
    zeroing: list[tuple[int, float]] = []
    for j in range(n - 1):
        for i in range(n - 1, j, -1):
            a, b = M[i - 1, j], M[i, j]
            if abs(b) < 1e-15:
                continue
            r = np.hypot(a, b)
            c, s = a / r, b / r
            top, bot = M[i - 1].copy(), M[i].copy()
            M[i - 1] = c * top + s * bot
            M[i] = -s * top + c * bot
            zeroing.append((i - 1, float(np.arctan2(s, c))))
    flip = bool(M[n - 1, n - 1] < 0)
    # M = Q_1^T ... Q_m^T D, so R(M) applies D first and Q_1^T last.
    return GivensNetwork(n, tuple(reversed(zeroing)), flip)


def _apply_network_axis(arr: np.ndarray, axis: int, net: GivensNetwork, inverse: bool) -> None:
    n = net.n_orb
    if not inverse:
        if net.flip_last:
            _flip_axis(arr, axis, n, n - 1)
        for p, angle in net.rotations:
            _rotate_axis(arr, axis, n, p, angle)
    else:
        for p, angle in reversed(net.rotations):
            _rotate_axis(arr, axis, n, p, -angle)
        if net.flip_last:
            _flip_axis(arr, axis, n, n - 1)


def apply_givens_network(state: np.ndarray, net: GivensNetwork, inverse: bool = False) -> np.ndarray:
    """Apply ``G`` (or ``G^+`` with ``inverse=True``) pair by pair."""
    n = net.n_orb
    psi = state.reshape(2**n, 2**n).copy()
    _apply_network_axis(psi, 1, net, inverse)
    _apply_network_axis(psi, 0, net, inverse)
    return psi.reshape(-1)


def network_fock_matrix(net: GivensNetwork) -> np.ndarray:
    """Single-spin ``2**n x 2**n`` matrix of ``G`` obtained by running the network on the identity."""
    W = np.eye(2**net.n_orb)
    _apply_network_axis(W, 0, net, inverse=False)
    return W


# --- diagonal operators -----------------------------------------------------


def one_body_diagonal(f_k: np.ndarray, n_orb: int) -> np.ndarray:
    """Eigenvalues of ``-1/2 sum_k f_k (Z_k + Z_kb)`` on every bitstring."""
    occ_a, occ_b = occupations(n_orb)
    y = 1.0 - occ_a - occ_b  # (Z_k + Z_kb) / 2
    return -(y @ np.asarray(f_k, dtype=float))


def two_body_diagonal(Z: np.ndarray, n_orb: int) -> np.ndarray:
    """Eigenvalues of ``1/8 sum_{k!=l} Z_kl (Z_k+Z_kb)(Z_l+Z_lb) + 1/4 sum_k Z_kk Z_k Z_kb``."""
    occ_a, occ_b = occupations(n_orb)
    y = 1.0 - occ_a - occ_b
    zz = (1.0 - 2.0 * occ_a) * (1.0 - 2.0 * occ_b)
    d = np.diag(Z)
    off = 0.5 * (np.einsum("bk,kl,bl->b", y, Z, y) - (y * y) @ d)
    return off + 0.25 * (zz @ d)


@dataclass(frozen=True)
class DiagonalOperator:
    kind: Literal["one-body", "two-body"]
    coefficients: np.ndarray
    n_orb: int
    _values: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def values(self) -> np.ndarray:
        if self._values is None:
            fn = one_body_diagonal if self.kind == "one-body" else two_body_diagonal
            object.__setattr__(self, "_values", fn(self.coefficients, self.n_orb))
        return self._values


def evolve_diagonal(state: np.ndarray, op: DiagonalOperator | np.ndarray, tau: float) -> np.ndarray:
    """Multiply each amplitude by ``exp(-i tau d(b))``."""
    d = op.values if isinstance(op, DiagonalOperator) else op
    return state * np.exp(-1j * tau * d)


# --- XDF Hamiltonian --------------------------------------------------------


class XdfSimulator:
    """Applies XDF terms ``H_s = G_s^+ D_s G_s`` and their exact exponentials.

    Term 0 is the one-body term, term ``1 + t`` is two-body factor ``t``. The
    rotation of each term is compiled once to a Givens network and cached as
    particle-number blocks of its single-spin Fock matrix. Read-only after
    construction; safe to share between threads.
    """

    def __init__(self, xdf: XdfHamiltonian):
        self.xdf = xdf
        self.n_orb = n = xdf.n_orb
        Us = [xdf.one_body.U0] + [fac.Ut for fac in xdf.factors]
        self.networks = [compile_givens_network(U) for U in Us]
        self.diagonals = [DiagonalOperator("one-body", xdf.one_body.f_k, n)] + [
            DiagonalOperator("two-body", fac.Z_kl, n) for fac in xdf.factors
        ]
        pop = np.array([bin(i).count("1") for i in range(2**n)])
        self._groups = [np.flatnonzero(pop == k) for k in range(n + 1)]
        self._blocks = []
        for net in self.networks:
            W = network_fock_matrix(net)
            self._blocks.append([W[np.ix_(I, I)] for I in self._groups])
        self.sector = sector_mask(n, xdf.n_alpha, xdf.n_beta)
        Ib, Ia = self._groups[xdf.n_beta], self._groups[xdf.n_alpha]
        self._sector_flat = (Ib[:, None] * 2**n + Ia[None, :]).ravel()
        self._sector_shape = (len(Ib), len(Ia))
        self._outside = np.flatnonzero(~self.sector)

    @property
    def n_terms(self) -> int:
        return len(self.networks)

    def reference_state(self) -> np.ndarray:
        return init_reference(self.n_orb, self.xdf.n_alpha, self.xdf.n_beta)

    def rotate(self, state: np.ndarray, s: int, inverse: bool = False) -> np.ndarray:
        """Apply ``G_s`` (or ``G_s^+``) using the cached blocks; all-zero blocks are skipped."""
        blocks = self._blocks[s]
        if not state[self._outside].any():
            # Fast path: all amplitude in the simulator's own sector, one block pair.
            Wb, Wa = blocks[self.xdf.n_beta], blocks[self.xdf.n_alpha]
            if inverse:
                Wb, Wa = Wb.T, Wa.T
            out = np.zeros(state.shape, dtype=complex)
            out[self._sector_flat] = (Wb @ state[self._sector_flat].reshape(self._sector_shape) @ Wa.T).ravel()
            return out
        n = self.n_orb
        psi = state.reshape(2**n, 2**n)
        out = np.zeros_like(psi, dtype=complex)
        nz = psi != 0
        rows, cols = nz.any(axis=1), nz.any(axis=0)
        active_b = [k for k, I in enumerate(self._groups) if rows[I].any()]
        active_a = [k for k, I in enumerate(self._groups) if cols[I].any()]
        for kb in active_b:
            Ib = self._groups[kb]
            Wb = blocks[kb].T if inverse else blocks[kb]
            for ka in active_a:
                Ia = self._groups[ka]
                Wa = blocks[ka].T if inverse else blocks[ka]
                out[np.ix_(Ib, Ia)] = Wb @ psi[np.ix_(Ib, Ia)] @ Wa.T
        return out.reshape(-1)

    def _check(self, s: int) -> None:
        if not 0 <= s < self.n_terms:
            raise IndexError(f"term {s} out of range 0..{self.n_terms - 1}")

    def apply_term(self, state: np.ndarray, s: int) -> np.ndarray:
        self._check(s)
        phi = self.rotate(state, s)
        return self.rotate(self.diagonals[s].values * phi, s, inverse=True)

    def apply_term_evolution(self, state: np.ndarray, s: int, tau: float) -> np.ndarray:
        """``exp(-i tau H_s)`` exactly: network, diagonal phase, inverse network."""
        self._check(s)
        if tau == 0:
            return state.copy()
        phi = self.rotate(state, s)
        phi = evolve_diagonal(phi, self.diagonals[s], tau)
        return self.rotate(phi, s, inverse=True)

    def apply_hamiltonian(self, state: np.ndarray) -> np.ndarray:
        out = self.xdf.e0 * state
        for s in range(self.n_terms):
            out = out + self.apply_term(state, s)
        return out

    def expectation(self, state: np.ndarray) -> float:
        return float(np.real(inner(state, self.apply_hamiltonian(state))) / np.real(inner(state, state)))

    def term_norms(self) -> np.ndarray:
        """Spectral norm of each term restricted to the active particle sector."""
        return np.array([np.max(np.abs(d.values[self.sector])) for d in self.diagonals])
