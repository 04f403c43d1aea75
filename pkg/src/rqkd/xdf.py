"""Explicit double factorization (XDF) of the two-electron tensor.

The factorized Hamiltonian is

    H = E0 - 1/2 sum_k f_k G0^+ (Z_k + Z_kb) G0
           + sum_t G_t^+ [ 1/8 sum_{k!=l} Z^t_kl (Z_k + Z_kb)(Z_l + Z_lb)
                           + 1/4 sum_k Z^t_kk Z_k Z_kb ] G_t

with ``Z^t_kl = h_t gamma^t_k gamma^t_l``. The same-orbital ``Z_k Z_kb`` piece is
what remains of the k == l products after the scalar part ``1/4 sum Z_kk`` is moved
into ``E0``; without it the form is not exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg

from .ingest import ActiveHamiltonian

DEFAULT_SIGMA_DF = 1e-8


@dataclass(frozen=True)
class XdfOneBody:
    f_k: np.ndarray
    U0: np.ndarray


@dataclass(frozen=True)
class XdfTwoBodyFactor:
    t: int
    h_t: float
    gamma_k: np.ndarray
    Ut: np.ndarray
    Z_kl: np.ndarray

    @property
    def A(self) -> np.ndarray:
        return (self.Ut * self.gamma_k) @ self.Ut.T


@dataclass(frozen=True)
class XdfHamiltonian:
    n_orb: int
    n_alpha: int
    n_beta: int
    e0: float
    one_body: XdfOneBody
    factors: tuple[XdfTwoBodyFactor, ...]
    lambda1: float
    lambda2: float
    sigma_df: float

    @property
    def n_df(self) -> int:
        return len(self.factors)

    @property
    def n_terms(self) -> int:
        """Number of fast-forwardable terms; term 0 is the one-body term, term ``1 + t`` factor ``t``."""
        return 1 + len(self.factors)

    @property
    def lambda_total(self) -> float:
        return self.lambda1 + self.lambda2


def lambda_norms(f_k: np.ndarray, Z: list[np.ndarray] | tuple[np.ndarray, ...]) -> tuple[float, float]:
    lam1 = float(np.sum(np.abs(f_k)))
    lam2 = 0.0
    for z in Z:
        lam2 += 0.5 * np.sum(np.abs(z)) - 0.25 * np.sum(np.abs(np.diag(z)))
    return lam1, float(lam2)


def first_factorization(g: np.ndarray, sigma_df: float = DEFAULT_SIGMA_DF) -> list[tuple[float, np.ndarray]]:
    """Eigendecompose the ``(pq),(rs)`` pair matrix and keep factors with ``|h_t| > sigma_df``.

    Returns ``(h_t, A_t)`` pairs in descending ``|h_t|`` order, each ``A_t`` a
    symmetric ``n x n`` matrix.
    """
    n = g.shape[0]
    pair = g.reshape(n * n, n * n)
    asym = np.max(np.abs(pair - pair.T), initial=0.0)
    if asym > 1e-8:
        raise ValueError(f"pair matrix is not symmetric (max deviation {asym:.3e})")
    try:
        w, v = scipy.linalg.eigh(0.5 * (pair + pair.T))
    except np.linalg.LinAlgError as exc:
        raise ArithmeticError("eigendecomposition of the pair matrix failed") from exc
    order = np.argsort(-np.abs(w), kind="stable")
    out = []
    for i in order:
        if not abs(w[i]) > sigma_df:
            break
        a = v[:, i].reshape(n, n)
        out.append((float(w[i]), 0.5 * (a + a.T)))
    return out


def second_factorization(A: np.ndarray, h_t: float, t: int = 0) -> XdfTwoBodyFactor:
    try:
        gamma, U = scipy.linalg.eigh(A)
    except np.linalg.LinAlgError as exc:
        raise ArithmeticError(f"eigendecomposition of factor {t} failed") from exc
    Z = h_t * np.outer(gamma, gamma)
    return XdfTwoBodyFactor(t, float(h_t), gamma, U, Z)


def assemble_xdf(act: ActiveHamiltonian, sigma_df: float = DEFAULT_SIGMA_DF) -> XdfHamiltonian:
    g = act.g_pqrs
    factors = tuple(
        second_factorization(A, h, t) for t, (h, A) in enumerate(first_factorization(g, sigma_df))
    )
    f_pq = act.kappa_pq + np.einsum("pqrr->pq", g)
    f_k, U0 = scipy.linalg.eigh(0.5 * (f_pq + f_pq.T))
    e0 = (
        act.e_ext
        + np.sum(f_k)
        - 0.5 * np.einsum("ppqq->", g)
        + 0.25 * sum(np.trace(fac.Z_kl) for fac in factors)
    )
    lam1, lam2 = lambda_norms(f_k, [fac.Z_kl for fac in factors])
    return XdfHamiltonian(
        act.n_orb, act.n_alpha, act.n_beta, float(e0), XdfOneBody(f_k, U0), factors,
        lam1, lam2, float(sigma_df),
    )


def reconstruct_eri(xdf: XdfHamiltonian, g: np.ndarray | None = None) -> tuple[np.ndarray, float | None]:
    """Rebuild ``sum_t A_t h_t A_t`` from the stored factors.

    Returns the tensor and, if the original ``g`` is given, the max-abs deviation from it.
    """
    n = xdf.n_orb
    eri = np.zeros((n, n, n, n))
    for fac in xdf.factors:
        A = fac.A
        eri += fac.h_t * np.einsum("pq,rs->pqrs", A, A)
    err = None if g is None else float(np.max(np.abs(eri - g)))
    return eri, err


def save_xdf(path: str | Path, xdf: XdfHamiltonian) -> None:
    """Write an ``.npz`` dump; binary float64 so ``load_xdf`` round-trips exactly."""
    arrays = {
        "meta": np.array([xdf.n_orb, xdf.n_alpha, xdf.n_beta]),
        "scalars": np.array([xdf.e0, xdf.lambda1, xdf.lambda2, xdf.sigma_df]),
        "f_k": xdf.one_body.f_k,
        "U0": xdf.one_body.U0,
        "h_t": np.array([fac.h_t for fac in xdf.factors]),
        "gamma": np.array([fac.gamma_k for fac in xdf.factors]).reshape(xdf.n_df, xdf.n_orb),
        "Ut": np.array([fac.Ut for fac in xdf.factors]).reshape(xdf.n_df, xdf.n_orb, xdf.n_orb),
    }
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_xdf(path: str | Path) -> XdfHamiltonian:
    with np.load(path) as d:
        n_orb, n_alpha, n_beta = (int(x) for x in d["meta"])
        e0, lam1, lam2, sigma = (float(x) for x in d["scalars"])
        factors = tuple(
            XdfTwoBodyFactor(t, float(h), gam, U, h * np.outer(gam, gam))
            for t, (h, gam, U) in enumerate(zip(d["h_t"], d["gamma"], d["Ut"]))
        )
        one = XdfOneBody(d["f_k"].copy(), d["U0"].copy())
    return XdfHamiltonian(n_orb, n_alpha, n_beta, e0, one, factors, lam1, lam2, sigma)
