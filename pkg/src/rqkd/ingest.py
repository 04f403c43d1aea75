"""FCIDUMP ingestion and active-space coefficient assembly."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

SYMMETRY_TOL = 1e-8

FIXTURES = ("h2", "h4", "h6", "h8")


class FcidumpError(ValueError):
    """Malformed FCIDUMP input. ``lineno`` is 1-based, or None when not line-specific."""

    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class ConsistencyError(FcidumpError):
    """Two stored entries map to the same tensor element with different values."""


@dataclass(frozen=True)
class IntegralSet:
    """Integrals in a fixed orbital basis, chemists' notation ``g[p,q,r,s] = (pq|rs)``."""

    n_orb: int
    e_nuc_ext: float
    h_pq: np.ndarray
    g_pqrs: np.ndarray
    n_alpha: int
    n_beta: int


@dataclass(frozen=True)
class ActiveHamiltonian:
    n_orb: int
    e_ext: float
    kappa_pq: np.ndarray
    g_pqrs: np.ndarray
    n_alpha: int
    n_beta: int


@dataclass
class SymmetryReport:
    deviations: dict[str, float] = field(default_factory=dict)
    tol: float = SYMMETRY_TOL

    @property
    def passed(self) -> bool:
        return all(v <= self.tol for v in self.deviations.values())

    @property
    def failures(self) -> list[str]:
        return [k for k, v in self.deviations.items() if v > self.tol]


_NAMELIST_START = re.compile(r"^\s*&FCI\b", re.IGNORECASE)
_NAMELIST_END = re.compile(r"^\s*(&END|/)\s*$", re.IGNORECASE)
_KEY = re.compile(r"([A-Za-z_][A-Za-z0-9_]*)\s*=")


def _to_float(token: str) -> float:
    return float(token.replace("D", "E").replace("d", "e"))


def _parse_header(lines: list[str]) -> tuple[dict[str, str], int]:
    if not lines or not _NAMELIST_START.match(lines[0]):
        raise FcidumpError("expected '&FCI' namelist header", 1)
    chunks: list[str] = []
    for i, line in enumerate(lines):
        text = line.strip()
        if i == 0:
            text = _NAMELIST_START.sub("", text)
        if _NAMELIST_END.match(text) or text.upper().endswith("&END"):
            text = re.sub(r"(&END|/)\s*$", "", text, flags=re.IGNORECASE)
            chunks.append(text)
            return _parse_keyvals(" ".join(chunks)), i + 1
        chunks.append(text)
    raise FcidumpError("header not terminated by '&END' or '/'", len(lines))


def _parse_keyvals(text: str) -> dict[str, str]:
    parts = _KEY.split(text)
    return {k.upper(): v.strip().strip(",").strip() for k, v in zip(parts[1::2], parts[2::2])}


def _header_int(header: dict[str, str], key: str, default: int | None = None) -> int:
    if key not in header:
        if default is None:
            raise FcidumpError(f"header missing {key}", 1)
        return default
    try:
        return int(header[key].split(",")[0])
    except ValueError as exc:
        raise FcidumpError(f"header field {key}={header[key]!r} is not an integer", 1) from exc


def _eightfold(p: int, q: int, r: int, s: int) -> set[tuple[int, int, int, int]]:
    return {
        (p, q, r, s), (q, p, r, s), (p, q, s, r), (q, p, s, r),
        (r, s, p, q), (s, r, p, q), (r, s, q, p), (s, r, q, p),
    }


def parse_fcidump(text: str | bytes) -> IntegralSet:
    """Parse FCIDUMP text into a symmetry-completed :class:`IntegralSet`.

    Orbital-energy lines (``e i 0 0 0``) and ORBSYM are accepted and ignored.

    Raises:
        FcidumpError: malformed header, bad data line, or index out of range.
        ConsistencyError: symmetry-equivalent entries disagree by more than 1e-8.
    """
    if isinstance(text, bytes):
        text = text.decode()
    lines = text.splitlines()
    header, start = _parse_header(lines)
    n = _header_int(header, "NORB")
    nelec = _header_int(header, "NELEC")
    ms2 = _header_int(header, "MS2", 0)
    if n < 1:
        raise FcidumpError(f"NORB must be positive, got {n}", 1)
    if (nelec + ms2) % 2 or abs(ms2) > nelec:
        raise FcidumpError(f"inconsistent NELEC={nelec}, MS2={ms2}", 1)
    n_alpha, n_beta = (nelec + ms2) // 2, (nelec - ms2) // 2
    if n_alpha > n or n_beta > n:
        raise FcidumpError(f"NELEC={nelec} does not fit in NORB={n}", 1)

    h = np.zeros((n, n))
    g = np.zeros((n, n, n, n))
    h_set = np.zeros((n, n), dtype=bool)
    g_set = np.zeros((n, n, n, n), dtype=bool)
    e_core = 0.0

    def store(arr, mask, idx, value, lineno):
        if mask[idx] and abs(arr[idx] - value) > SYMMETRY_TOL:
            raise ConsistencyError(
                f"entry {tuple(i + 1 for i in idx)} = {value!r} conflicts with {arr[idx]!r}", lineno
            )
        arr[idx] = value
        mask[idx] = True

    for lineno, line in enumerate(lines[start:], start=start + 1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 5:
            raise FcidumpError(f"expected 'value i j k l', got {line.strip()!r}", lineno)
        try:
            value = _to_float(parts[0])
            i, j, k, l = (int(x) for x in parts[1:])
        except ValueError as exc:
            raise FcidumpError(f"cannot parse {line.strip()!r}", lineno) from exc
        if not all(0 <= x <= n for x in (i, j, k, l)):
            raise FcidumpError(f"index out of range 0..{n} in {line.strip()!r}", lineno)
        if i == j == k == l == 0:
            e_core += value
        elif k == l == 0:
            if j == 0:
                continue  # orbital energy
            store(h, h_set, (i - 1, j - 1), value, lineno)
            store(h, h_set, (j - 1, i - 1), value, lineno)
        else:
            if 0 in (i, j, k, l):
                raise FcidumpError(f"partially zero two-electron index in {line.strip()!r}", lineno)
            for idx in _eightfold(i - 1, j - 1, k - 1, l - 1):
                store(g, g_set, idx, value, lineno)

    return IntegralSet(n, e_core, h, g, n_alpha, n_beta)


def write_fcidump(ints: IntegralSet, tol: float = 0.0) -> str:
    """Serialize unique entries (i>=j, k>=l, ij>=kl); values use ``repr`` so reparsing is exact."""
    n = ints.n_orb
    ms2 = ints.n_alpha - ints.n_beta
    out = [
        f" &FCI NORB={n},NELEC={ints.n_alpha + ints.n_beta},MS2={ms2},",
        "  ORBSYM=" + "1," * n,
        "  ISYM=1,",
        " &END",
    ]
    for i in range(n):
        for j in range(i + 1):
            ij = i * (i + 1) // 2 + j
            for k in range(n):
                for l in range(k + 1):
                    if k * (k + 1) // 2 + l > ij:
                        continue
                    v = ints.g_pqrs[i, j, k, l]
                    if abs(v) > tol:
                        out.append(f"{float(v)!r} {i + 1} {j + 1} {k + 1} {l + 1}")
    for i in range(n):
        for j in range(i + 1):
            v = ints.h_pq[i, j]
            if abs(v) > tol:
                out.append(f"{float(v)!r} {i + 1} {j + 1} 0 0")
    out.append(f"{float(ints.e_nuc_ext)!r} 0 0 0 0")
    return "\n".join(out) + "\n"


def read_fcidump(path: str | Path) -> IntegralSet:
    return parse_fcidump(Path(path).read_text())


def load_fixture(name: str) -> IntegralSet:
    """Load a shipped hydrogen-chain fixture (``h2``, ``h4``, ``h6`` or ``h8``)."""
    name = name.lower()
    if name not in FIXTURES:
        raise KeyError(f"unknown fixture {name!r}; available: {', '.join(FIXTURES)}")
    text = resources.files("rqkd.data").joinpath(f"{name}.fcidump").read_text()
    return parse_fcidump(text)


def assemble_active(ints: IntegralSet) -> ActiveHamiltonian:
    """Fold the ordering term of the spin-free Hamiltonian into ``kappa``.

    All ingested orbitals are active (no frozen core), so the core sums vanish and
    ``kappa_pq = h_pq - 1/2 sum_r g_prrq``.
    """
    kappa = ints.h_pq - 0.5 * np.einsum("prrq->pq", ints.g_pqrs)
    kappa = 0.5 * (kappa + kappa.T)
    return ActiveHamiltonian(
        ints.n_orb, ints.e_nuc_ext, kappa, ints.g_pqrs, ints.n_alpha, ints.n_beta
    )


def validate_symmetries(ints: IntegralSet, tol: float = SYMMETRY_TOL) -> SymmetryReport:
    """Max absolute deviation per symmetry class of ``h`` and ``g``."""
    h, g = ints.h_pq, ints.g_pqrs
    n = ints.n_orb
    pair = g.reshape(n * n, n * n)
    dev = {
        "h_pq=h_qp": float(np.max(np.abs(h - h.T), initial=0.0)),
        "g_pqrs=g_qprs": float(np.max(np.abs(g - g.transpose(1, 0, 2, 3)), initial=0.0)),
        "g_pqrs=g_pqsr": float(np.max(np.abs(g - g.transpose(0, 1, 3, 2)), initial=0.0)),
        "g_pqrs=g_rspq": float(np.max(np.abs(g - g.transpose(2, 3, 0, 1)), initial=0.0)),
        "g_pqrs=g_qpsr": float(np.max(np.abs(g - g.transpose(1, 0, 3, 2)), initial=0.0)),
        "g_pqrs=g_srqp": float(np.max(np.abs(g - g.transpose(3, 2, 1, 0)), initial=0.0)),
        "pair_matrix": float(np.max(np.abs(pair - pair.T), initial=0.0)),
    }
    return SymmetryReport(dev, tol)
