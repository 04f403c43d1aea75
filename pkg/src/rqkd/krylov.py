"""Krylov subspace assembly, canonical orthogonalization and the generalized eigensolve."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from typing import Literal

import numpy as np
import scipy.linalg

from . import depth as depth_mod
from . import evolution as ev
from . import measurement as ms
from .statevector import XdfSimulator, inner

ANSATZE = ("d1", "d3", "ts1", "ts2", "exact")
ESTIMATIONS = ("exact-lcu", "trajectories", "shots")
SCHEMES = ("independent", "fixed-basis")


class DegenerateSubspaceError(ArithmeticError):
    """No overlap eigenvalue survives the orthogonalization threshold."""


@dataclass
class KrylovConfig:
    """Protocol parameters.

    Attributes:
        D: Subspace dimension.
        delta_tau: Macro time step between basis states (1/Hartree).
        r: Micro-steps per macro step; basis state ``n`` uses ``n r`` steps of ``delta_tau / r``.
        ansatz: ``d1``, ``d3`` (randomized), ``ts1``, ``ts2`` (Trotter) or ``exact``.
        weights: Weight mode for the randomized ansatze.
        sigma_co: Overlap eigenvalue threshold. ``None`` picks ``1e-12`` for
            noise-free estimation and ``10 / sqrt(shots)`` in shot mode.
        estimation: ``exact-lcu`` (deterministic states: the averaged channel for
            d1/d3), ``trajectories`` (Monte Carlo over sampled unitaries) or ``shots``.
        n_traj: Trajectory samples; in shot mode 0 means deterministic states.
        shots: Shots per matrix element in shot mode.
        scheme: ``independent`` bra/ket trajectories per sample, or ``fixed-basis``
            (one trajectory per basis state shared by all elements of a sample).
        seed: Master seed.
    """

    D: int = 6
    delta_tau: float = 0.1
    r: int = 2
    ansatz: Literal["d1", "d3", "ts1", "ts2", "exact"] = "d3"
    weights: str = "optimal"
    sigma_co: float | None = None
    estimation: Literal["exact-lcu", "trajectories", "shots"] = "exact-lcu"
    n_traj: int = 0
    shots: int = 10_000
    scheme: Literal["independent", "fixed-basis"] = "independent"
    seed: int = 0

    def __post_init__(self):
        if self.D < 1 or self.r < 1:
            raise ValueError("D and r must be >= 1")
        if self.delta_tau <= 0:
            raise ValueError("delta_tau must be positive")
        if self.ansatz not in ANSATZE:
            raise ValueError(f"unknown ansatz {self.ansatz!r}")
        if self.estimation not in ESTIMATIONS:
            raise ValueError(f"unknown estimation {self.estimation!r}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.weights not in ev.WEIGHT_MODES:
            raise ValueError(f"unknown weight mode {self.weights!r}")
        if self.sigma_co is not None and self.sigma_co <= 0:
            raise ValueError("sigma_co must be positive")
        if self.estimation == "trajectories" and (self.n_traj < 1 or self.ansatz not in ("d1", "d3")):
            raise ValueError("trajectory estimation needs n_traj >= 1 and a randomized ansatz")
        if self.estimation == "shots" and self.shots < 1:
            raise ValueError("shot estimation needs shots >= 1")

    @property
    def dt(self) -> float:
        return self.delta_tau / self.r

    @property
    def randomized(self) -> bool:
        return self.ansatz in ("d1", "d3")

    def resolved_sigma_co(self) -> float:
        if self.sigma_co is not None:
            return self.sigma_co
        return 10.0 / np.sqrt(self.shots) if self.estimation == "shots" else 1e-12


@dataclass
class KrylovPair:
    S: np.ndarray
    H: np.ndarray
    mode: str
    se_S: np.ndarray | None = None
    se_H: np.ndarray | None = None
    low_confidence: np.ndarray | None = None
    samples: tuple[np.ndarray, np.ndarray] | None = None  # per-sample (S, H) in trajectory mode

    @property
    def D(self) -> int:
        return self.S.shape[0]

    def leading(self, d: int) -> "KrylovPair":
        cut = lambda a: None if a is None else a[:d, :d]
        return KrylovPair(self.S[:d, :d], self.H[:d, :d], self.mode, cut(self.se_S), cut(self.se_H),
                          cut(self.low_confidence))


@dataclass
class SpectrumResult:
    energies: np.ndarray
    vectors: np.ndarray
    retained_dim: int

    @property
    def e0(self) -> float:
        return float(self.energies[0])


def _hermitize(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + A.conj().T)


# --- basis construction -----------------------------------------------------


class _Stepper:
    """One micro-step of the configured deterministic protocol."""

    def __init__(self, cfg: KrylovConfig, sim: XdfSimulator, weights: ev.WeightSet | None, propagator=None):
        self.cfg, self.sim, self.weights, self.propagator = cfg, sim, weights, propagator

    def __call__(self, state: np.ndarray) -> np.ndarray:
        a, dt = self.cfg.ansatz, self.cfg.dt
        if a == "ts1":
            return ev.ts1_step(self.sim, state, dt)
        if a == "ts2":
            return ev.ts2_step(self.sim, state, dt)
        if a == "exact":
            return self.propagator.propagate(state, dt)
        return ev.lcu_channel_step(self.sim, state, self.weights, dt, a)


def make_weights(cfg: KrylovConfig, sim: XdfSimulator, phi0: np.ndarray) -> ev.WeightSet | None:
    if not cfg.randomized:
        return None
    return ev.compute_weights(sim, cfg.weights, cfg.ansatz, phi0)


def build_basis(
    cfg: KrylovConfig,
    sim: XdfSimulator,
    phi0: np.ndarray,
    weights: ev.WeightSet | None = None,
    propagator=None,
) -> list[np.ndarray]:
    """Deterministic basis ``[phi0, A^r phi0, A^{2r} phi0, ...]`` for the configured step ``A``.

    For d1/d3 ``A`` is the averaged channel, so states after the first are not
    normalized. The ``exact`` ansatz needs a dense propagator from
    :mod:`rqkd.reference`.
    """
    if cfg.randomized and weights is None:
        weights = make_weights(cfg, sim, phi0)
    if cfg.ansatz == "exact" and propagator is None:
        raise ValueError("exact ansatz needs a propagator")
    step = _Stepper(cfg, sim, weights, propagator)
    basis = [phi0.astype(complex)]
    for _ in range(1, cfg.D):
        st = basis[-1]
        for _ in range(cfg.r):
            st = step(st)
        basis.append(st)
    return basis


def trajectory_basis(
    cfg: KrylovConfig, sim: XdfSimulator, phi0: np.ndarray, weights: ev.WeightSet, stream: tuple[int, ...]
) -> list[np.ndarray]:
    """One sampled basis: state ``n`` evolves ``phi0`` through its own ``n r`` sampled steps.

    States share the trajectory prefix, which leaves each state's distribution
    unchanged while costing ``(D-1) r`` steps in total.
    """
    R = max(1, (cfg.D - 1) * cfg.r)
    traj = ev.sample_trajectory(weights, R, cfg.seed, stream)
    basis = [phi0.astype(complex)]
    for n in range(1, cfg.D):
        seg = traj.indices[(n - 1) * cfg.r : n * cfg.r]
        basis.append(ev.apply_trajectory(sim, basis[-1], weights, seg, cfg.dt, cfg.ansatz))
    return basis


# --- matrices ---------------------------------------------------------------


def matrices_from_states(sim: XdfSimulator, bras: list[np.ndarray], kets: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Raw ``S_mn = <bra_m|ket_n>`` and ``H_mn = <bra_m|H|ket_n>``."""
    B = np.array(bras)
    K = np.array(kets)
    HK = np.array([sim.apply_hamiltonian(k) for k in kets])
    return B.conj() @ K.T, B.conj() @ HK.T


def build_matrices(
    cfg: KrylovConfig,
    sim: XdfSimulator,
    phi0: np.ndarray,
    basis: list[np.ndarray] | None = None,
    weights: ev.WeightSet | None = None,
    propagator=None,
) -> KrylovPair:
    """Assemble and Hermitize ``S`` and ``H`` in the configured estimation mode."""
    if cfg.randomized and weights is None:
        weights = make_weights(cfg, sim, phi0)
    if cfg.estimation == "trajectories":
        return _trajectory_matrices(cfg, sim, phi0, weights)
    if basis is None:
        basis = build_basis(cfg, sim, phi0, weights, propagator)
    if cfg.estimation == "exact-lcu":
        S, H = matrices_from_states(sim, basis, basis)
        return KrylovPair(_hermitize(S), _hermitize(H), f"exact-lcu/{cfg.ansatz}")
    return _shot_matrices(cfg, sim, phi0, basis, weights)


def _trajectory_matrices(cfg, sim, phi0, weights) -> KrylovPair:
    D, n = cfg.D, cfg.n_traj
    Ss = np.empty((n, D, D), complex)
    Hs = np.empty((n, D, D), complex)
    for k in range(n):
        bras = trajectory_basis(cfg, sim, phi0, weights, (k, 0))
        kets = bras if cfg.scheme == "fixed-basis" else trajectory_basis(cfg, sim, phi0, weights, (k, 1))
        Ss[k], Hs[k] = matrices_from_states(sim, bras, kets)

    def se(a):
        if n < 2:
            return None
        return (np.std(a.real, axis=0, ddof=1) + 1j * np.std(a.imag, axis=0, ddof=1)) / np.sqrt(n)

    return KrylovPair(_hermitize(Ss.mean(0)), _hermitize(Hs.mean(0)), f"trajectories/{cfg.ansatz}",
                      se(Ss), se(Hs), samples=(Ss, Hs))


def _shot_matrices(cfg, sim, phi0, basis, weights) -> KrylovPair:
    """Shot-noise estimates of the upper triangle; the lower triangle follows by Hermiticity.

    With ``n_traj > 0`` and a randomized ansatz every element pools shots over
    ``n_traj`` independent bra/ket trajectory pairs; otherwise the deterministic
    ``basis`` states are measured directly.
    """
    D = cfg.D
    S = np.eye(D, dtype=complex)
    H = np.zeros((D, D), complex)
    se_S = np.zeros((D, D), complex)
    se_H = np.zeros((D, D), complex)
    low = np.zeros((D, D), bool)
    plan = ms.ShotPlan(cfg.shots, cfg.seed)
    use_traj = cfg.randomized and cfg.n_traj > 0
    for m in range(D):
        for n in range(m, D):
            if use_traj:
                per = max(1, cfg.shots // cfg.n_traj)
                sub = ms.ShotPlan(per, cfg.seed)
                s_list, h_list = [], []
                for k in range(cfg.n_traj):
                    bra = trajectory_basis(cfg, sim, phi0, weights, (m, n, k, 0))[m]
                    ket = trajectory_basis(cfg, sim, phi0, weights, (m, n, k, 1))[n]
                    s_est = ms.estimate_overlap(bra, ket, sub, (m, n, k, 2))
                    s_list.append(s_est)
                    h_list.append(ms.estimate_h_element(bra, ket, sim, sub, (m, n, k, 3), overlap=s_est))
                s_est = ms.combine_trajectory_shots(s_list)
                h_est = ms.combine_trajectory_shots(h_list)
            else:
                bra, ket = basis[m], basis[n]
                s_est = ms.estimate_overlap(bra, ket, plan, (m, n, 0))
                h_est = ms.estimate_h_element(bra, ket, sim, plan, (m, n, 1), overlap=s_est)
            S[m, n] = s_est.value
            H[m, n] = h_est.value
            se_S[m, n], se_H[m, n] = s_est.se, h_est.se
            low[m, n] = s_est.low_confidence or h_est.low_confidence
            if m != n:
                S[n, m], H[n, m] = np.conj(S[m, n]), np.conj(H[m, n])
                se_S[n, m], se_H[n, m], low[n, m] = se_S[m, n], se_H[m, n], low[m, n]
    return KrylovPair(_hermitize(S), _hermitize(H), f"shots/{cfg.ansatz}", se_S, se_H, low)


# --- solve ------------------------------------------------------------------


def canonical_orthogonalization(S: np.ndarray, H: np.ndarray, sigma_co: float) -> tuple[np.ndarray, np.ndarray, int]:
    """Return ``(X^+ H X, X, k)`` with ``X = U_k s_k^{-1/2}`` over overlap eigenvalues above ``sigma_co``."""
    s, U = scipy.linalg.eigh(_hermitize(S))
    keep = s > sigma_co
    k = int(keep.sum())
    if k == 0:
        raise DegenerateSubspaceError(f"no overlap eigenvalue above sigma_co={sigma_co:g}")
    X = U[:, keep] / np.sqrt(s[keep])
    return _hermitize(X.conj().T @ H @ X), X, k


def solve(pair: KrylovPair, sigma_co: float) -> SpectrumResult:
    """Solve ``H c = E S c``; ``H`` already carries ``E0 S``, so no shift is applied."""
    Ht, X, k = canonical_orthogonalization(pair.S, pair.H, sigma_co)
    e, v = scipy.linalg.eigh(Ht)
    return SpectrumResult(e, X @ v, k)


def energy_series(pair: KrylovPair, sigma_co: float) -> list[SpectrumResult]:
    """Solutions on the leading ``d x d`` blocks for ``d = 1..D`` from a single matrix build."""
    return [solve(pair.leading(d), sigma_co) for d in range(1, pair.D + 1)]


def jackknife_energy(pair: KrylovPair, sigma_co: float, blocks: int = 50) -> tuple[float, float]:
    """Grouped jackknife of the lowest energy over the trajectory samples."""
    if pair.samples is None:
        raise ValueError("jackknife needs per-sample matrices")
    Ss, Hs = pair.samples
    n = len(Ss)
    groups = np.array_split(np.arange(n), min(blocks, n))
    tot_S, tot_H = Ss.sum(0), Hs.sum(0)
    vals = []
    for g in groups:
        m = n - len(g)
        S = _hermitize((tot_S - Ss[g].sum(0)) / m)
        H = _hermitize((tot_H - Hs[g].sum(0)) / m)
        vals.append(solve(KrylovPair(S, H, pair.mode), sigma_co).e0)
    vals = np.array(vals)
    G = len(groups)
    full = solve(pair, sigma_co).e0
    se = float(np.sqrt((G - 1) / G * np.sum((vals - vals.mean()) ** 2)))
    return full, se


# --- series driver ----------------------------------------------------------


@dataclass
class SeriesRow:
    d: int
    e0: float
    retained_dim: int
    eps_S: float | None
    depth: int
    delta_e: float | None = None


@dataclass
class SeriesResult:
    config: dict
    rows: list[SeriesRow]
    spectrum: SpectrumResult
    pair: KrylovPair
    depth: dict
    weights: dict | None = None
    e_fci: float | None = None
    meta: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        for line in json.dumps(self.config, sort_keys=True, indent=1).splitlines():
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["D", "E0", "delta_E", "retained_dim", "eps_S", "depth"])
        for r in self.rows:
            w.writerow([r.d, repr(r.e0), "" if r.delta_e is None else repr(r.delta_e), r.retained_dim,
                        "" if r.eps_S is None else repr(r.eps_S), r.depth])
        return buf.getvalue()

    def to_record(self) -> dict:
        return {
            "config": self.config,
            "rows": [asdict(r) for r in self.rows],
            "energies": self.spectrum.energies.tolist(),
            "e_fci": self.e_fci,
            "depth": self.depth,
            "weights": self.weights,
            "meta": self.meta,
        }


def run_series(
    cfg: KrylovConfig,
    sim: XdfSimulator,
    phi0: np.ndarray,
    propagator=None,
    depth_convention: str = "appendix",
) -> SeriesResult:
    """Build once at full ``D`` and report the energy for every leading block.

    ``eps_S`` for row ``d`` is ``|<phi0|U((d-1) delta_tau)|phi0> - S_0,d-1|`` with
    the exact propagator's ``E0`` phase removed; it needs ``propagator`` (a
    :class:`~rqkd.reference.ExactPropagator`) and is ``None`` otherwise. The
    ``exact`` ansatz keeps the phase on both sides.
    """
    weights = make_weights(cfg, sim, phi0)
    pair = build_matrices(cfg, sim, phi0, weights=weights, propagator=propagator)
    sigma = cfg.resolved_sigma_co()
    series = energy_series(pair, sigma)
    tally = depth_mod.tally_protocol(cfg.ansatz, 2 * sim.n_orb, sim.xdf.n_df, cfg.r, cfg.D,
                                     convention=depth_convention)
    e_fci = propagator.ground_energy if propagator is not None else None
    norm0 = np.real(inner(phi0, phi0))
    rows = []
    for d, res in enumerate(series, start=1):
        eps = None
        if propagator is not None:
            tau = (d - 1) * cfg.delta_tau
            ref = inner(phi0, propagator.propagate(phi0, tau))
            if cfg.ansatz != "exact":
                ref *= np.exp(1j * sim.xdf.e0 * tau)
            eps = float(abs(ref - pair.S[0, d - 1] / norm0))
        rows.append(SeriesRow(d, res.e0, res.retained_dim, eps, tally.basis_depths[d - 1],
                              None if e_fci is None else res.e0 - e_fci))
    config = {**asdict(cfg), "sigma_co_resolved": sigma, "n_orb": sim.n_orb, "n_df": sim.xdf.n_df,
              "term_order": "one-body, then factors by descending |h_t|"}
    return SeriesResult(config, rows, series[-1], pair, tally.as_dict(),
                        None if weights is None else weights.as_dict(), e_fci)
