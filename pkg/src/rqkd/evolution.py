"""Deterministic and randomized time-evolution protocols over XDF terms.

All protocols here approximate ``exp(-i (H - E0) tau)``: the scalar ``E0`` only
contributes a global phase and is left out of every step. Compare against the
exact propagator with that phase removed (see :func:`exact_overlap`).

Term indices follow :class:`~rqkd.statevector.XdfSimulator`: 0 is the one-body
term, ``1 + t`` is two-body factor ``t``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .statevector import XdfSimulator, inner

WeightMode = Literal["qdrift", "eig", "optimal", "uniform"]
Ansatz = Literal["d1", "d3"]

WEIGHT_MODES = ("qdrift", "eig", "optimal", "uniform")
DROP_RTOL = 1e-12
ONE_BODY = 0


class DegenerateWeightsError(ValueError):
    """Every candidate term has zero weight."""


@dataclass(frozen=True)
class WeightSet:
    """Sampling distribution over Hamiltonian terms.

    Attributes:
        mode: How the weights were derived.
        ansatz: ``"d1"`` samples every term, ``"d3"`` only the two-body factors.
        terms: Term indices carrying weight, ascending.
        p: Probabilities aligned with ``terms``; positive and summing to one.
        lam: Sum of the term spectral norms over ``terms`` (qdrift mode only).
    """

    mode: str
    ansatz: str
    terms: np.ndarray
    p: np.ndarray
    lam: float | None = None

    def __post_init__(self):
        if len(self.terms) != len(self.p) or len(self.p) == 0:
            raise ValueError("terms and p must be non-empty and aligned")
        if np.any(self.p <= 0) or abs(self.p.sum() - 1.0) > 1e-12:
            raise ValueError("p must be positive and normalized")

    def prob(self, s: int) -> float:
        i = np.searchsorted(self.terms, s)
        if i >= len(self.terms) or self.terms[i] != s:
            raise KeyError(f"term {s} carries no weight")
        return float(self.p[i])

    def as_dict(self) -> dict:
        return {"mode": self.mode, "ansatz": self.ansatz, "terms": self.terms.tolist(),
                "p": self.p.tolist(), "lambda": self.lam}


def candidate_terms(n_terms: int, ansatz: Ansatz) -> np.ndarray:
    if ansatz == "d1":
        return np.arange(n_terms)
    if ansatz == "d3":
        return np.arange(1, n_terms)
    raise ValueError(f"unknown ansatz {ansatz!r}")


def optimal_weights(c: np.ndarray) -> np.ndarray:
    """Closed-form minimizer ``sqrt(c_s) / sum sqrt(c_s)`` of ``sum c_s (1/p_s - 1)``."""
    root = np.sqrt(np.asarray(c, dtype=float))
    if not root.sum() > 0:
        raise DegenerateWeightsError("all c_s are zero")
    return root / root.sum()


def second_order_functional(c: np.ndarray, p: np.ndarray) -> float:
    """``sum_s c_s (1/p_s - 1)``, the state-projected second-order error weight."""
    c, p = np.asarray(c, float), np.asarray(p, float)
    return float(np.sum(c * (1.0 / p - 1.0)))


def term_second_moments(sim: XdfSimulator, phi0: np.ndarray) -> np.ndarray:
    """``c_s = <phi0|H_s^2|phi0> = ||H_s phi0||^2`` for every term."""
    return np.array([np.real(inner(v, v)) for v in (sim.apply_term(phi0, s) for s in range(sim.n_terms))])


def _normalize(mode, ansatz, terms, raw, lam=None) -> WeightSet:
    raw = np.asarray(raw, dtype=float)
    if not np.any(raw > 0):
        raise DegenerateWeightsError(f"{mode} weights are all zero")
    keep = raw > DROP_RTOL * raw.max()
    return WeightSet(mode, ansatz, np.asarray(terms)[keep], raw[keep] / raw[keep].sum(), lam)


def compute_weights(
    sim: XdfSimulator,
    mode: WeightMode,
    ansatz: Ansatz = "d1",
    phi0: np.ndarray | None = None,
) -> WeightSet:
    """Build the sampling distribution for ``ansatz``.

    ``qdrift`` uses the exact sector spectral norm of each term, ``optimal`` the
    closed form in ``c_s`` at ``phi0``, ``eig`` the magnitudes ``|h_t|`` of the
    first-stage eigenvalues. Under ``d1`` the one-body term has no ``h_t``, so
    ``eig`` gives it its qdrift share and splits the rest by ``|h_t|``. Terms
    whose raw weight falls below ``1e-12`` of the largest are dropped.

    Raises:
        DegenerateWeightsError: all candidate weights vanish.
        ValueError: unknown mode, or ``optimal`` without ``phi0``.
    """
    terms = candidate_terms(sim.n_terms, ansatz)
    if mode == "qdrift":
        norms = sim.term_norms()[terms]
        return _normalize(mode, ansatz, terms, norms, float(norms.sum()))
    if mode == "optimal":
        if phi0 is None:
            raise ValueError("optimal weights need a reference state")
        c = term_second_moments(sim, phi0)[terms]
        return _normalize(mode, ansatz, terms, np.sqrt(c))
    if mode == "uniform":
        return _normalize(mode, ansatz, terms, np.ones(len(terms)))
    if mode == "eig":
        h = np.array([abs(f.h_t) for f in sim.xdf.factors])
        if ansatz == "d3":
            return _normalize(mode, ansatz, terms, h)
        norms = sim.term_norms()
        p0 = norms[ONE_BODY] / norms.sum()
        raw = np.concatenate([[p0], (1.0 - p0) * h / h.sum()]) if h.sum() > 0 else np.array([1.0])
        return _normalize(mode, ansatz, terms[: len(raw)], raw)
    raise ValueError(f"unknown weight mode {mode!r}; expected one of {WEIGHT_MODES}")


# --- deterministic product formulas ----------------------------------------


def ts1_step(sim: XdfSimulator, state: np.ndarray, dt: float, order: Sequence[int] | None = None) -> np.ndarray:
    """One first-order Trotter step; default order is one-body then factors as stored."""
    for s in range(sim.n_terms) if order is None else order:
        state = sim.apply_term_evolution(state, s, dt)
    return state


def ts2_step(sim: XdfSimulator, state: np.ndarray, dt: float, order: Sequence[int] | None = None) -> np.ndarray:
    """Symmetric (Strang) step: half steps forward, half steps back; the middle pair is fused."""
    order = list(range(sim.n_terms)) if order is None else list(order)
    for s in order[:-1]:
        state = sim.apply_term_evolution(state, s, dt / 2)
    state = sim.apply_term_evolution(state, order[-1], dt)
    for s in reversed(order[:-1]):
        state = sim.apply_term_evolution(state, s, dt / 2)
    return state


# --- randomized protocols ---------------------------------------------------


def _check_ansatz(weights: WeightSet, ansatz: str) -> None:
    if weights.ansatz != ansatz:
        raise ValueError(f"weights built for {weights.ansatz}, used with {ansatz}")


def lcu_channel_step(
    sim: XdfSimulator, state: np.ndarray, weights: WeightSet, dt: float, ansatz: Ansatz = "d1"
) -> np.ndarray:
    """Deterministic average ``sum_s p_s V_s(dt) |state>`` (not unitary).

    For ``d3`` every ``V_t`` shares its outer one-body half steps, so they are
    applied once outside the sum.
    """
    _check_ansatz(weights, ansatz)
    if ansatz == "d3":
        state = sim.apply_term_evolution(state, ONE_BODY, dt / 2)
    out = np.zeros_like(state, dtype=complex)
    for s, p in zip(weights.terms, weights.p):
        out += p * sim.apply_term_evolution(state, int(s), dt / p)
    if ansatz == "d3":
        out = sim.apply_term_evolution(out, ONE_BODY, dt / 2)
    return out


@dataclass(frozen=True)
class Trajectory:
    R: int
    indices: np.ndarray
    seed: int
    stream: tuple[int, ...]


def trajectory_rng(seed: int, stream: int | Sequence[int]) -> np.random.Generator:
    """Independent generator for ``(seed, stream)``; does not depend on call order."""
    key = (stream,) if isinstance(stream, (int, np.integer)) else tuple(stream)
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=tuple(int(k) for k in key)))


def sample_trajectory(weights: WeightSet, R: int, seed: int, stream: int | Sequence[int] = 0) -> Trajectory:
    """Draw ``R`` i.i.d. term indices from ``weights``."""
    if R < 1:
        raise ValueError("R must be >= 1")
    rng = trajectory_rng(seed, stream)
    picks = rng.choice(len(weights.p), size=R, p=weights.p)
    key = (stream,) if isinstance(stream, (int, np.integer)) else tuple(stream)
    return Trajectory(R, weights.terms[picks], seed, tuple(int(k) for k in key))


def apply_trajectory(
    sim: XdfSimulator,
    state: np.ndarray,
    weights: WeightSet,
    indices: Sequence[int] | Trajectory,
    dt: float,
    ansatz: Ansatz = "d1",
) -> np.ndarray:
    """Apply the sampled unitaries ``V_{s_1}, V_{s_2}, ...`` in order.

    Neighbouring one-body half steps of ``d3`` are fused into one evolution.
    """
    _check_ansatz(weights, ansatz)
    seq = indices.indices if isinstance(indices, Trajectory) else indices
    pending = 0.0
    for s in seq:
        s = int(s)
        if ansatz == "d3":
            state = sim.apply_term_evolution(state, ONE_BODY, pending + dt / 2)
            pending = dt / 2
        state = sim.apply_term_evolution(state, s, dt / weights.prob(s))
    if pending:
        state = sim.apply_term_evolution(state, ONE_BODY, pending)
    return state


# --- error models -----------------------------------------------------------


def ts1_bound(lam: float, tau: float, R: int) -> float:
    return lam**2 * tau**2 / R


def d1_bound(lambda1: float, lambda2: float, tau: float, R: int) -> float:
    return (lambda1 + lambda2) ** 2 * tau**2 / (2 * R)


def d3_bound(lambda2: float, tau: float, R: int) -> float:
    return lambda2**2 * tau**2 / (2 * R)


def protocol_bound(protocol: str, sim: XdfSimulator, tau: float, R: int) -> float:
    x = sim.xdf
    if protocol == "d1":
        return d1_bound(x.lambda1, x.lambda2, tau, R)
    if protocol == "d3":
        return d3_bound(x.lambda2, tau, R)
    if protocol == "ts1":
        return ts1_bound(x.lambda_total, tau, R)
    return float("nan")


def error_operator_action(sim: XdfSimulator, weights: WeightSet, state: np.ndarray) -> np.ndarray:
    """``E |state>`` with ``E = sum_s H_s^2 / p_s - (sum_s H_s)^2`` over the sampled terms.

    The matrix-element error of ``C(tau/R)^R`` is ``tau^2/(2R) <phi|E|phi>`` to
    leading order; for ``d3`` the one-body cross terms cancel and only the
    sampled two-body terms enter.
    """
    hs = [sim.apply_term(state, int(s)) for s in weights.terms]
    total = sum(hs)
    out = -sum(sim.apply_term(total, int(s)) for s in weights.terms)
    for s, p, h in zip(weights.terms, weights.p, hs):
        out = out + sim.apply_term(h, int(s)) / p
    return out


def exact_overlap(propagator, phi0: np.ndarray, e0: float, tau: float) -> complex:
    """``<phi0| exp(-i (H - E0) tau) |phi0>`` from a dense :class:`~rqkd.reference.ExactPropagator`."""
    return inner(phi0, propagator.propagate(phi0, tau)) * np.exp(1j * e0 * tau)


def run_protocol(
    sim: XdfSimulator,
    state: np.ndarray,
    protocol: str,
    dt: float,
    steps: int,
    weights: WeightSet | None = None,
) -> np.ndarray:
    """``steps`` micro-steps of ``ts1``, ``ts2`` or the exact-average channel ``d1``/``d3``."""
    for _ in range(steps):
        if protocol == "ts1":
            state = ts1_step(sim, state, dt)
        elif protocol == "ts2":
            state = ts2_step(sim, state, dt)
        elif protocol in ("d1", "d3"):
            if weights is None:
                raise ValueError(f"{protocol} needs weights")
            state = lcu_channel_step(sim, state, weights, dt, protocol)
        else:
            raise ValueError(f"unknown protocol {protocol!r}")
    return state
