"""CNOT count and depth accounting for the evolution protocols.

Closed forms on a line of ``N = 2 n_orb`` qubits (alpha block then beta block):

* A Givens network for one orbital rotation acts on both spin blocks in
  parallel. Each block needs ``(N/2)(N/2 - 1)/2`` two-CNOT Givens fabrics, so one
  network costs ``N (N/2 - 1)`` CNOTs at depth ``N``.
* The one-body diagonal is a layer of single-qubit Rz gates: no CNOTs.
* The two-body diagonal is an all-to-all ZZ swap network: ``3 N (N - 1) / 2``
  CNOTs at depth ``3N``.

A rank-1 step (network, diagonal, inverse network) with a ZZ layer therefore
costs ``N (5N - 7) / 2`` CNOTs at depth ``5N``. No circuit is ever built here.
"""

from __future__ import annotations

from dataclasses import dataclass, field

PROTOCOLS = ("d1", "d3", "ts1", "ts2", "exact")


@dataclass(frozen=True)
class GateTally:
    """CNOT totals plus a per-component ``{name: (count, depth)}`` breakdown."""

    cnot_count: int
    cnot_depth: int
    breakdown: dict[str, tuple[int, int]] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def scaled(self, k: int, **meta) -> "GateTally":
        return GateTally(
            self.cnot_count * k,
            self.cnot_depth * k,
            {name: (c * k, d * k) for name, (c, d) in self.breakdown.items()},
            {**self.meta, **meta},
        )

    def __add__(self, other: "GateTally") -> "GateTally":
        names = dict.fromkeys([*self.breakdown, *other.breakdown])
        merged = {
            n: tuple(a + b for a, b in zip(self.breakdown.get(n, (0, 0)), other.breakdown.get(n, (0, 0))))
            for n in names
        }
        return GateTally(self.cnot_count + other.cnot_count, self.cnot_depth + other.cnot_depth, merged, self.meta)


def _check_n(N: int) -> None:
    if N < 2 or N % 2:
        raise ValueError(f"qubit count must be even and >= 2, got {N}")


def givens_network(N: int, count: int = 1) -> GateTally:
    _check_n(N)
    c = N * (N // 2 - 1)
    return GateTally(c * count, N * count, {"givens": (c * count, N * count)})


def zz_layer(N: int) -> GateTally:
    _check_n(N)
    c = 3 * N * (N - 1) // 2
    return GateTally(c, 3 * N, {"zz": (c, 3 * N)})


def rz_layer(N: int) -> GateTally:
    _check_n(N)
    return GateTally(0, 0, {"rz": (0, 0)})


def tally_rank1_step(N: int) -> GateTally:
    """Network, two-body diagonal, inverse network: ``N(5N-7)/2`` CNOTs, depth ``5N``."""
    return givens_network(N, 2) + zz_layer(N)


def tally_one_body_step(N: int) -> GateTally:
    """Network, Rz layer, inverse network: depth ``2N``."""
    return givens_network(N, 2) + rz_layer(N)


def tally_step(protocol: str, N: int, n_df: int, merge: bool = False) -> GateTally:
    """Cost of one micro-step.

    ``d1`` is charged the worst-case sampled term (a rank-1 two-body step).
    ``d3`` surrounds it with one-body half steps; with ``merge=True`` the
    adjacent rotations ``G_o G_s^+`` and ``G_s G_o^+`` are fused, leaving four
    networks instead of six. ``ts1`` runs every term once; ``ts2`` runs the
    symmetric sequence with the middle term fused.
    """
    if protocol == "d1":
        return tally_rank1_step(N)
    if protocol == "d3":
        if merge:
            return givens_network(N, 4) + rz_layer(N) + zz_layer(N)
        return tally_one_body_step(N) + tally_rank1_step(N) + tally_one_body_step(N)
    if protocol == "ts1":
        out = tally_one_body_step(N)
        for _ in range(n_df):
            out = out + tally_rank1_step(N)
        return out
    if protocol == "ts2":
        if n_df == 0:
            return tally_one_body_step(N)
        out = tally_one_body_step(N).scaled(2)
        for _ in range(2 * n_df - 1):
            out = out + tally_rank1_step(N)
        return out
    if protocol == "exact":
        return GateTally(0, 0, {})
    raise ValueError(f"unknown protocol {protocol!r}")


@dataclass(frozen=True)
class ProtocolTally:
    """Per-step tally, depth of each Krylov basis state and the maximum."""

    protocol: str
    N: int
    n_df: int
    r: int
    D: int
    merge: bool
    convention: str
    per_step: GateTally
    basis_depths: tuple[int, ...]

    @property
    def max_depth(self) -> int:
        return max(self.basis_depths)

    def as_dict(self) -> dict:
        return {
            "protocol": self.protocol, "N": self.N, "n_df": self.n_df, "r": self.r, "D": self.D,
            "merge": self.merge, "convention": self.convention, "step_cnot_count": self.per_step.cnot_count,
            "step_cnot_depth": self.per_step.cnot_depth, "basis_depths": list(self.basis_depths),
            "max_depth": self.max_depth,
        }


CONVENTIONS = ("appendix", "table")


def tally_protocol(
    protocol: str, N: int, n_df: int, r: int, D: int, merge: bool = False, convention: str = "appendix"
) -> ProtocolTally:
    """Per-basis-state depths for a Krylov run.

    ``convention="appendix"`` charges basis state ``n`` (``n = 0..D-1``) for its
    ``n r`` micro-steps, so the maximum is ``step * r * (D - 1)``, e.g. ``5NR(D-1)``
    for d1. ``convention="table"`` charges ``(n + 1) r`` steps, maximum
    ``step * r * D``; together with ``merge=False`` this reproduces the published
    depth table digit for digit.
    """
    _check_n(N)
    if r < 1 or D < 1:
        raise ValueError("r and D must be >= 1")
    if convention not in CONVENTIONS:
        raise ValueError(f"unknown convention {convention!r}; expected one of {CONVENTIONS}")
    step = tally_step(protocol, N, n_df, merge)
    shift = 1 if convention == "table" else 0
    depths = tuple((n + shift) * r * step.cnot_depth for n in range(D))
    return ProtocolTally(protocol, N, n_df, r, D, merge, convention, step, depths)
