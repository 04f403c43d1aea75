"""Finite-shot emulation of Hadamard-test matrix-element estimation.

For a bra ``L`` and ket ``R`` the ancilla of a Hadamard test ends in ``|q>`` with
the system left in ``(L + (-1)^q R) / 2`` (real part) or ``(L -/+ i R) / 2``
(imaginary part). With

    N_x^A = |L + R|^2,  N_x^B = |L - R|^2,  N_y^A = |L - i R|^2,  N_y^B = |L + i R|^2

and the physics inner product ``<L|R> = sum conj(L) R`` one has

    Re <L|O|R> = (<x^A|O|x^A> - <x^B|O|x^B>) / 4
    Im <L|O|R> = (<y^A|O|y^A> - <y^B|O|y^B>) / 4.

Each shot draws an ancilla bin ``q`` with probability ``N^q / N_X`` and, for a
term ``H_t = G_t^+ D_t G_t``, a bitstring from the rotated bin state ``G_t x^q``.
The per-shot value ``(N_X / 4) (-1)^q D_t(bitstring)`` is then an unbiased
sample of the real (or imaginary) part. For unit-norm states ``N_X = 4`` and the
overlap estimator reduces to ``(n^0 - n^1) / M``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .statevector import XdfSimulator, inner


@dataclass(frozen=True)
class CombinationStates:
    phi_xA: np.ndarray
    phi_xB: np.ndarray
    phi_yA: np.ndarray
    phi_yB: np.ndarray

    @staticmethod
    def _norm2(v: np.ndarray) -> float:
        return float(np.real(np.vdot(v, v)))

    @property
    def N_xA(self) -> float:
        return self._norm2(self.phi_xA)

    @property
    def N_xB(self) -> float:
        return self._norm2(self.phi_xB)

    @property
    def N_yA(self) -> float:
        return self._norm2(self.phi_yA)

    @property
    def N_yB(self) -> float:
        return self._norm2(self.phi_yB)

    @property
    def N_X(self) -> float:
        return self.N_xA + self.N_xB

    @property
    def N_Y(self) -> float:
        return self.N_yA + self.N_yB

    def p_re(self, q: int) -> float:
        return (self.N_xA if q == 0 else self.N_xB) / self.N_X

    def p_im(self, q: int) -> float:
        return (self.N_yA if q == 0 else self.N_yB) / self.N_Y

    def part(self, which: str) -> tuple[np.ndarray, np.ndarray, float]:
        """``(bin-0 state, bin-1 state, N_total)`` for ``which`` in {"re", "im"}."""
        if which == "re":
            return self.phi_xA, self.phi_xB, self.N_X
        return self.phi_yA, self.phi_yB, self.N_Y


def build_combination_states(bra: np.ndarray, ket: np.ndarray) -> CombinationStates:
    if bra.shape != ket.shape:
        raise ValueError("bra and ket dimensions differ")
    return CombinationStates(bra + ket, bra - ket, bra - 1j * ket, bra + 1j * ket)


@dataclass(frozen=True)
class ShotPlan:
    """Shot budget for one matrix element.

    Attributes:
        M: Shots per element, shared between real and imaginary parts and, for
            Hamiltonian elements, between the XDF terms.
        seed: Master seed; every element draws from its own stream.
        mode: ``"sample"`` draws shots, ``"exact"`` replaces sampling by the
            exact distribution sums (the ``M -> infinity`` limit).
        re_fraction: Share of shots spent on the real part.
        allocation: ``"uniform"`` over terms, or ``"norm"`` (proportional to the
            term spectral norms).
    """

    M: int
    seed: int = 0
    mode: Literal["sample", "exact"] = "sample"
    re_fraction: float = 0.5
    allocation: Literal["uniform", "norm"] = "uniform"

    def __post_init__(self):
        if self.mode not in ("sample", "exact"):
            raise ValueError(f"unknown shot mode {self.mode!r}")
        if self.mode == "sample" and self.M < 1:
            raise ValueError("M must be >= 1")
        if not 0.0 < self.re_fraction <= 1.0:
            raise ValueError("re_fraction must lie in (0, 1]")

    def split_re_im(self, M: int | None = None) -> tuple[int, int]:
        M = self.M if M is None else M
        m_re = min(M, max(1, int(round(M * self.re_fraction))))
        return m_re, M - m_re

    def rng(self, stream: Sequence[int]) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence(entropy=self.seed, spawn_key=tuple(int(s) for s in stream)))


@dataclass
class ShotTally:
    """Running sums of per-shot values for one estimand part."""

    n: int = 0
    total: float = 0.0
    total_sq: float = 0.0
    n0: int = 0
    n1: int = 0

    def __add__(self, other: "ShotTally") -> "ShotTally":
        return ShotTally(self.n + other.n, self.total + other.total, self.total_sq + other.total_sq,
                         self.n0 + other.n0, self.n1 + other.n1)

    @property
    def mean(self) -> float:
        return self.total / self.n if self.n else 0.0

    @property
    def variance(self) -> float:
        if self.n < 2:
            return 0.0
        return max(self.total_sq - self.n * self.mean**2, 0.0) / (self.n - 1)

    @property
    def se(self) -> float:
        return float(np.sqrt(self.variance / self.n)) if self.n else float("inf")


@dataclass
class ElementEstimate:
    """Estimate of one complex matrix element.

    ``tallies`` maps ``(part, label)`` with ``part`` in {"re", "im"} to the shot
    sums of that piece; it is empty in exact mode. ``low_confidence`` is set when
    an ancilla bin with nonzero probability received no shots.
    """

    value: complex
    se_re: float
    se_im: float
    tallies: dict[tuple[str, str], ShotTally] = field(default_factory=dict)
    low_confidence: bool = False

    @property
    def se(self) -> complex:
        return complex(self.se_re, self.se_im)


def _from_tallies(tallies: dict, low_confidence: bool) -> ElementEstimate:
    re = sum(t.mean for (p, _), t in tallies.items() if p == "re")
    im = sum(t.mean for (p, _), t in tallies.items() if p == "im")
    se_re = np.sqrt(sum(t.se**2 for (p, _), t in tallies.items() if p == "re" and t.n))
    se_im = np.sqrt(sum(t.se**2 for (p, _), t in tallies.items() if p == "im" and t.n))
    return ElementEstimate(complex(re, im), float(se_re), float(se_im), tallies, low_confidence)


def _sample_bitstrings(rng: np.random.Generator, probs: np.ndarray, k: int) -> np.ndarray:
    """Inverse-CDF sampling over the support of ``probs`` (unnormalized)."""
    support = np.flatnonzero(probs)
    cdf = np.cumsum(probs[support])
    u = rng.random(k) * cdf[-1]
    return support[np.minimum(np.searchsorted(cdf, u, side="right"), len(support) - 1)]


def _sample_part(
    rng: np.random.Generator,
    s0: np.ndarray,
    s1: np.ndarray,
    n_total: float,
    diag: np.ndarray | None,
    shots: int,
) -> tuple[ShotTally, bool]:
    """Shots for one part; ``diag`` is the diagonal in the (already rotated) frame, None for identity."""
    if shots == 0:
        return ShotTally(), False
    w0 = float(np.real(np.vdot(s0, s0)))
    w1 = float(np.real(np.vdot(s1, s1)))
    n1 = int(rng.binomial(shots, w1 / n_total))
    n0 = shots - n1
    scale = n_total / 4.0
    if diag is None:
        total = scale * (n0 - n1)
        total_sq = scale**2 * shots
    else:
        v0 = diag[_sample_bitstrings(rng, np.abs(s0) ** 2, n0)] if n0 else np.zeros(0)
        v1 = diag[_sample_bitstrings(rng, np.abs(s1) ** 2, n1)] if n1 else np.zeros(0)
        total = scale * (v0.sum() - v1.sum())
        total_sq = scale**2 * (np.dot(v0, v0) + np.dot(v1, v1))
    low = (n0 == 0 and w0 > 1e-14 * n_total) or (n1 == 0 and w1 > 1e-14 * n_total)
    return ShotTally(shots, float(total), float(total_sq), n0, n1), low


def estimate_overlap(
    bra: np.ndarray, ket: np.ndarray, plan: ShotPlan, stream: Sequence[int] = (0,)
) -> ElementEstimate:
    """Hadamard-test estimate of ``<bra|ket>``; exact in ``plan.mode == "exact"``."""
    if plan.mode == "exact":
        return ElementEstimate(inner(bra, ket), 0.0, 0.0)
    comb = build_combination_states(bra, ket)
    rng = plan.rng(tuple(stream))
    m_re, m_im = plan.split_re_im()
    tallies, low = {}, False
    for part, shots in (("re", m_re), ("im", m_im)):
        s0, s1, n_tot = comb.part(part)
        tallies[(part, "S")], flag = _sample_part(rng, s0, s1, n_tot, None, shots)
        low |= flag
    return _from_tallies(tallies, low or m_im == 0)


def _term_shots(plan: ShotPlan, sim: XdfSimulator, M: int) -> np.ndarray:
    L = sim.n_terms
    if plan.allocation == "norm":
        w = sim.term_norms()
        w = w / w.sum()
    else:
        w = np.full(L, 1.0 / L)
    shots = np.floor(w * M).astype(int)
    shots[np.argsort(-(w * M - shots))[: M - shots.sum()]] += 1
    return shots


def estimate_h_element(
    bra: np.ndarray,
    ket: np.ndarray,
    sim: XdfSimulator,
    plan: ShotPlan,
    stream: Sequence[int] = (0,),
    overlap: ElementEstimate | None = None,
) -> ElementEstimate:
    """Estimate ``<bra|H|ket>`` term by term, adding ``E0`` times an overlap estimate.

    The overlap is estimated with a fresh budget of ``plan.M`` shots unless one
    is passed in (the Krylov driver reuses its ``S`` estimate for the same pair).
    """
    e0 = sim.xdf.e0
    if plan.mode == "exact":
        return ElementEstimate(inner(bra, sim.apply_hamiltonian(ket)), 0.0, 0.0)
    if overlap is None:
        overlap = estimate_overlap(bra, ket, plan, (*stream, 1))
    comb = build_combination_states(bra, ket)
    rng = plan.rng((*stream, 0))
    tallies, low = {}, overlap.low_confidence
    m_re, m_im = plan.split_re_im()
    for part, M_part in (("re", m_re), ("im", m_im)):
        s0, s1, n_tot = comb.part(part)
        for s, shots in enumerate(_term_shots(plan, sim, M_part)):
            r0, r1 = sim.rotate(s0, s), sim.rotate(s1, s)
            tallies[(part, f"H{s}")], flag = _sample_part(rng, r0, r1, n_tot, sim.diagonals[s].values, int(shots))
            low |= flag
    for key, t in overlap.tallies.items():
        tallies[(key[0], "E0*S")] = ShotTally(t.n, e0 * t.total, e0**2 * t.total_sq, t.n0, t.n1)
    if not overlap.tallies:
        est = _from_tallies(tallies, low)
        est.value += e0 * overlap.value
        return est
    return _from_tallies(tallies, low)


def exact_h_parts(bra: np.ndarray, ket: np.ndarray, sim: XdfSimulator) -> complex:
    """``sum_t (N^A v^A - N^B v^B) / 4`` for both parts plus ``E0 <bra|ket>``, from exact bin averages.

    Mirrors the shot estimator with sampling replaced by expectation values, so
    comparing it with ``<bra|H|ket>`` pins the recombination signs.
    """
    comb = build_combination_states(bra, ket)
    val = 0j
    for part, unit in (("re", 1.0), ("im", 1j)):
        s0, s1, _ = comb.part(part)
        acc = sim.xdf.e0 * (np.vdot(s0, s0).real - np.vdot(s1, s1).real) / 4
        for s in range(sim.n_terms):
            d = sim.diagonals[s].values
            r0, r1 = sim.rotate(s0, s), sim.rotate(s1, s)
            acc += (np.dot(np.abs(r0) ** 2, d) - np.dot(np.abs(r1) ** 2, d)) / 4
        val += unit * acc
    return complex(val)


def combine_trajectory_shots(estimates: Sequence[ElementEstimate]) -> ElementEstimate:
    """Pool shots from several trajectories into one estimate.

    Sampled estimates are merged shot by shot (a mixture of Bernoulli draws is a
    Bernoulli draw), so with equal shots per trajectory the pooled mean equals
    the average of the per-trajectory means. Exact-mode estimates are averaged,
    with the spread across trajectories as standard error.
    """
    if not estimates:
        raise ValueError("no estimates to combine")
    if all(e.tallies for e in estimates):
        pooled: dict = {}
        for e in estimates:
            for k, t in e.tallies.items():
                pooled[k] = pooled.get(k, ShotTally()) + t
        return _from_tallies(pooled, any(e.low_confidence for e in estimates))
    vals = np.array([e.value for e in estimates])
    n = len(vals)
    se = np.std(vals.real, ddof=1) / np.sqrt(n) if n > 1 else 0.0
    se_i = np.std(vals.imag, ddof=1) / np.sqrt(n) if n > 1 else 0.0
    return ElementEstimate(complex(vals.mean()), float(se), float(se_i), {},
                           any(e.low_confidence for e in estimates))
