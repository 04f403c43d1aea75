"""Command-line driver: ``rqkd {factorize,evolve-error,krylov,shot-study}``.

Settings come from an optional JSON/YAML config file (``--config``) and are
overridden by explicit flags. Every output file embeds the resolved config and
the package version; nothing time-dependent is written, so reruns with the same
config and seed are byte-identical.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from . import depth as depth_mod
from . import evolution as ev
from . import measurement as ms
from . import reference as ref
from .ingest import FIXTURES, FcidumpError, assemble_active, load_fixture, read_fcidump
from .krylov import KrylovConfig, run_series
from .statevector import XdfSimulator, inner
from .xdf import assemble_xdf, reconstruct_eri, save_xdf

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
COMMANDS = ("factorize", "evolve-error", "krylov", "shot-study")
VERSION = f"rqkd {__version__}"
PROPAGATOR_MAX_ORB = 6


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str = "krylov"
    input: str = "h4"
    out: str = "."
    sigma_df: float = 1e-8
    dtau: float = 0.1
    slices: int = 2
    dim: int = 6
    ansatz: str = "d3"
    weights: str = "optimal"
    estimation: str = "exact-lcu"
    shots: int = 10_000
    trajectories: int = 0
    sigma_co: float | None = None
    seed: int = 0
    repeats: int = 10
    taus: list[float] = field(default_factory=lambda: [0.1, 1.0, 10.0])
    R_grid: list[int] = field(default_factory=lambda: [1, 2, 4, 8, 16, 32, 64])
    protocols: list[str] = field(default_factory=lambda: ["ts1", "ts2", "d1", "d3"])
    sigma_sweep: list[float] = field(default_factory=lambda: [1e-2, 1e-4, 1e-6, 1e-8, 1e-10, 0.0])
    shot_grid: list[int] = field(default_factory=lambda: [100, 1000, 10_000, 100_000, 1_000_000])
    shot_R: list[int] = field(default_factory=lambda: [5, 10, 15])
    shot_dt: float = 0.04

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.input.lower() not in FIXTURES and not Path(self.input).is_file():
            raise ConfigError(f"input {self.input!r} is neither a fixture name nor an existing file")
        for name in ("dim", "slices", "shots", "repeats"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.trajectories < 0 or self.sigma_df < 0 or self.dtau <= 0 or self.shot_dt <= 0:
            raise ConfigError("trajectories, sigma_df must be >= 0 and time steps > 0")
        bad = set(self.protocols) - {"ts1", "ts2", "d1", "d3"}
        if bad:
            raise ConfigError(f"unknown protocols {sorted(bad)}")
        try:
            self.krylov_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def krylov_config(self) -> KrylovConfig:
        return KrylovConfig(
            D=self.dim, delta_tau=self.dtau, r=self.slices, ansatz=self.ansatz, weights=self.weights,
            sigma_co=self.sigma_co, estimation=self.estimation, n_traj=self.trajectories,
            shots=self.shots, seed=self.seed,
        )


# --- config plumbing --------------------------------------------------------


FLAG_MAP = {
    "input": str, "out": str, "sigma_df": float, "dtau": float, "slices": int, "dim": int,
    "ansatz": str, "weights": str, "estimation": str, "shots": int, "trajectories": int,
    "sigma_co": float, "seed": int, "repeats": int,
}

COMMAND_HELP = {
    "factorize": "XDF factorization and truncation sweep",
    "evolve-error": "Krylov overlap error versus circuit depth per protocol",
    "krylov": "build Krylov matrices and solve for ground-state energy",
    "shot-study": "Hadamard-test estimator spread versus shot count",
}

FLAG_HELP = {
    "input": "fixture name (h2, h4, h6, h8) or FCIDUMP path",
    "out": "output directory",
    "sigma_df": "XDF truncation threshold",
    "dtau": "Krylov time step",
    "slices": "micro-steps per Krylov time step",
    "dim": "Krylov dimension D",
    "ansatz": "d1, d3, ts1, ts2 or exact",
    "weights": "qdrift, eig or optimal",
    "estimation": "exact-lcu, trajectories or shots",
    "shots": "shots per matrix element",
    "trajectories": "trajectory samples for trajectories mode",
    "sigma_co": "canonical orthogonalization threshold (default depends on estimation)",
    "seed": "root RNG seed",
    "repeats": "repeats per shot-study point",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rqkd", description="Randomized quantum Krylov toolkit.")
    parser.add_argument("--version", action="version", version=VERSION)
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd in COMMANDS:
        p = sub.add_parser(cmd, help=COMMAND_HELP[cmd])
        p.add_argument("--config", help="JSON or YAML file with RunConfig fields")
        for name, typ in FLAG_MAP.items():
            p.add_argument("--" + name.replace("_", "-"), dest=name, type=typ, default=None, help=FLAG_HELP[name])
    return parser


def _load_config_file(path: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    try:
        data = yaml.safe_load(text) if not path.endswith(".json") else json.loads(text)
    except (yaml.YAMLError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot parse config {path!r}: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a mapping")
    return {k.replace("-", "_"): v for k, v in data.items()}


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values = _load_config_file(args.config) if args.config else {}
    known = {f.name for f in fields(RunConfig)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    for name in FLAG_MAP:
        v = getattr(args, name)
        if v is not None:
            values[name] = v
    values["command"] = args.command
    if values.get("sigma_df") in ("inf", "Infinity"):
        values["sigma_df"] = math.inf
    try:
        cfg = RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    cfg.validate()
    return cfg


def load_active(spec: str):
    ints = load_fixture(spec) if spec.lower() in FIXTURES else read_fcidump(spec)
    return assemble_active(ints)


def _config_header(cfg: RunConfig) -> str:
    blob = json.dumps({"version": VERSION, **asdict(cfg)}, sort_keys=True, indent=1)
    return "".join(f"# {line}\n" for line in blob.splitlines())


def _write_csv(path: Path, cfg: RunConfig, header: list[str], rows: list[list]) -> None:
    buf = io.StringIO()
    buf.write(_config_header(cfg))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(["" if v is None else (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for v in row])
    path.write_text(buf.getvalue())


def _write_json(path: Path, cfg: RunConfig, payload: dict) -> None:
    record = {"version": VERSION, "config": asdict(cfg), **payload}
    path.write_text(json.dumps(record, indent=1, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(type(o).__name__)


# --- commands ---------------------------------------------------------------


def factorization_sweep(act, sigmas: list[float]) -> list[dict]:
    rows = []
    for sig in sigmas:
        x = assemble_xdf(act, sig)
        _, err = reconstruct_eri(x, act.g_pqrs)
        rows.append({"sigma_df": sig, "n_df": x.n_df, "lambda1": x.lambda1, "lambda2": x.lambda2,
                     "eri_max_error": err})
    return rows


def cmd_factorize(cfg: RunConfig) -> dict:
    act = load_active(cfg.input)
    xdf = assemble_xdf(act, cfg.sigma_df)
    out = Path(cfg.out)
    save_xdf(out / "xdf.npz", xdf)
    _, err = reconstruct_eri(xdf, act.g_pqrs)
    sweep = factorization_sweep(act, cfg.sigma_sweep)
    _write_csv(out / "factorize.csv", cfg, list(sweep[0]), [list(r.values()) for r in sweep])
    report = {"n_df": xdf.n_df, "lambda1": xdf.lambda1, "lambda2": xdf.lambda2, "e0": xdf.e0,
              "eri_max_error": err, "sweep": sweep}
    _write_json(out / "factorize.json", cfg, report)
    return report


def evolve_error_table(
    sim: XdfSimulator,
    propagator: ref.ExactPropagator,
    taus: list[float],
    R_grid: list[int],
    protocols: list[str],
    weight_mode: str = "optimal",
) -> list[dict]:
    """``eps_S = |<phi0|U(tau)|phi0> - <phi0|A(tau/R)^R|phi0>|`` per protocol, tau and R."""
    phi0 = sim.reference_state()
    N, n_df = 2 * sim.n_orb, sim.xdf.n_df
    weights = {p: ev.compute_weights(sim, weight_mode, p, phi0) for p in protocols if p in ("d1", "d3")}
    rows = []
    for tau in taus:
        exact = ev.exact_overlap(propagator, phi0, sim.xdf.e0, tau)
        for prot in protocols:
            step_depth = depth_mod.tally_step(prot, N, n_df).cnot_depth
            for R in R_grid:
                st = ev.run_protocol(sim, phi0, prot, tau / R, R, weights.get(prot))
                bound = ev.protocol_bound(prot, sim, tau, R)
                rows.append({"protocol": prot, "tau": tau, "R": R, "depth": R * step_depth,
                             "eps_S": abs(inner(phi0, st) - exact),
                             "bound": None if math.isnan(bound) else bound})
    return rows


def find_crossover(rows: list[dict], tau: float, a: str = "ts1", b: str = "d3") -> dict | None:
    """Depth region where protocol ``a`` is more accurate than ``b`` at equal CNOT depth.

    ``a`` is interpolated log-log onto those depths of ``b`` that lie inside
    ``a``'s depth range. Returns None when ``a`` never wins there.
    """
    ca = sorted((r["depth"], r["eps_S"]) for r in rows if r["protocol"] == a and r["tau"] == tau)
    cb = sorted((r["depth"], r["eps_S"]) for r in rows if r["protocol"] == b and r["tau"] == tau)
    if not ca or not cb:
        return None
    da, ea = np.log([d for d, _ in ca]), np.log([max(e, 1e-300) for _, e in ca])
    wins = [d for d, e in cb
            if da[0] <= np.log(d) <= da[-1] and np.interp(np.log(d), da, ea) < np.log(max(e, 1e-300))]
    if not wins:
        return None
    return {"tau": tau, "favours": a, "over": b, "depth_min": min(wins), "depth_max": max(wins),
            "n_points": len(wins)}


def cmd_evolve_error(cfg: RunConfig) -> dict:
    act = load_active(cfg.input)
    if act.n_orb > 4:
        raise ConfigError("evolve-error needs the dense oracle; use a fixture with n_orb <= 4")
    sim = XdfSimulator(assemble_xdf(act, cfg.sigma_df))
    prop = ref.ExactPropagator(ref.build_dense(act))
    rows = evolve_error_table(sim, prop, cfg.taus, cfg.R_grid, cfg.protocols, cfg.weights)
    out = Path(cfg.out)
    cols = ["protocol", "tau", "R", "depth", "eps_S", "bound"]
    _write_csv(out / "evolve_error.csv", cfg, cols, [[r[c] for c in cols] for r in rows])
    crossovers = [c for tau in cfg.taus if (c := find_crossover(rows, tau)) is not None]
    violations = [r for r in rows if r["bound"] is not None and r["protocol"] in ("d1", "d3") and r["eps_S"] > r["bound"]]
    report = {"crossovers": crossovers, "bound_violations": len(violations), "n_rows": len(rows)}
    _write_json(out / "evolve_error.json", cfg, report)
    return report


def cmd_krylov(cfg: RunConfig) -> dict:
    act = load_active(cfg.input)
    sim = XdfSimulator(assemble_xdf(act, cfg.sigma_df))
    kcfg = cfg.krylov_config()
    prop = None
    if act.n_orb <= PROPAGATOR_MAX_ORB:
        prop = ref.ExactPropagator(ref.build_dense(act))
    elif kcfg.ansatz == "exact":
        raise ConfigError("exact ansatz needs the dense propagator (n_orb <= 6)")
    result = run_series(kcfg, sim, sim.reference_state(), propagator=prop)
    if prop is None and act.n_orb <= ref.MAX_DENSE_ORB:
        e_fci, _ = ref.fci_ground(ref.build_dense(act))
        result.e_fci = e_fci
        for row in result.rows:
            row.delta_e = row.e0 - e_fci
    out = Path(cfg.out)
    cols = ["D", "E0", "delta_E", "retained_dim", "eps_S", "depth"]
    _write_csv(out / "krylov.csv", cfg, cols,
               [[r.d, r.e0, r.delta_e, r.retained_dim, r.eps_S, r.depth] for r in result.rows])
    record = result.to_record()
    _write_json(out / "krylov.json", cfg, record)
    return record


def shot_study_table(
    sim: XdfSimulator, R_list: list[int], M_list: list[int], repeats: int, dt: float, seed: int,
    weight_mode: str = "optimal",
) -> list[dict]:
    """Spread of shot estimates of ``<phi0|psi_R>`` and ``<phi0|H|psi_R>`` versus ``M``.

    ``psi_R`` is one sampled d3 trajectory of ``R`` steps, held fixed for all
    repeats, so the spread measured is pure shot noise.
    """
    phi0 = sim.reference_state()
    w = ev.compute_weights(sim, weight_mode, "d3", phi0)
    lam = sim.xdf.lambda_total
    rows = []
    for R in R_list:
        psi = ev.apply_trajectory(sim, phi0, w, ev.sample_trajectory(w, R, seed, (R,)), dt, "d3")
        for M in M_list:
            s_vals, h_vals = [], []
            for k in range(repeats):
                plan = ms.ShotPlan(M, seed)
                s_est = ms.estimate_overlap(phi0, psi, plan, (R, M, k, 0))
                h_est = ms.estimate_h_element(phi0, psi, sim, plan, (R, M, k, 1), overlap=s_est)
                s_vals.append(s_est.value.real)
                h_vals.append(h_est.value.real)
            rows.append({"R": R, "M": M, "std_re_S": float(np.std(s_vals, ddof=1)),
                         "std_re_H": float(np.std(h_vals, ddof=1)), "inv_sqrt_M": 1 / math.sqrt(M),
                         "lambda_over_sqrt_M": lam / math.sqrt(M)})
    return rows


def loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def cmd_shot_study(cfg: RunConfig) -> dict:
    act = load_active(cfg.input)
    sim = XdfSimulator(assemble_xdf(act, cfg.sigma_df))
    rows = shot_study_table(sim, cfg.shot_R, cfg.shot_grid, cfg.repeats, cfg.shot_dt, cfg.seed, cfg.weights)
    cols = ["R", "M", "std_re_S", "std_re_H", "inv_sqrt_M", "lambda_over_sqrt_M"]
    out = Path(cfg.out)
    _write_csv(out / "shot_study.csv", cfg, cols, [[r[c] for c in cols] for r in rows])
    slopes = {}
    for R in cfg.shot_R:
        sub = [r for r in rows if r["R"] == R]
        M = [r["M"] for r in sub]
        slopes[str(R)] = {"S": loglog_slope(M, [r["std_re_S"] for r in sub]),
                          "H": loglog_slope(M, [r["std_re_H"] for r in sub])}
    report = {"slopes": slopes}
    _write_json(out / "shot_study.json", cfg, report)
    return report


HANDLERS = {"factorize": cmd_factorize, "evolve-error": cmd_evolve_error, "krylov": cmd_krylov,
            "shot-study": cmd_shot_study}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        Path(cfg.out).mkdir(parents=True, exist_ok=True)
        HANDLERS[cfg.command](cfg)
    except (ConfigError, FcidumpError, OSError) as exc:
        print(f"rqkd: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, np.linalg.LinAlgError, ev.DegenerateWeightsError) as exc:
        print(f"rqkd: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def main_entry() -> None:
    sys.exit(main())
