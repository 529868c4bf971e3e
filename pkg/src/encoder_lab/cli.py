"""``encoder-lab`` command line.

Exit codes: 0 success, 1 failed verification, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import math
import sys
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .code import build_toric, logical_paulis, validate_code
from .exact import MAX_QUBITS, dm_from_product, evolve
from .observables import logical_name
from .states import PSI_PRESETS, RHO_D_CHOICES, initial_factors, initial_tableau, is_stabilizer_psi, psi_vector, unencoded_expectation
from .verify import VerificationReport, lemma2_time, theorem_time, verify_logical_fixedpoint

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
BACKENDS = ("exact", "trajectory", "syndrome")
COLUMNS = ("run_id", "backend", "L", "seed", "t", "observable", "value", "stderr", "n_samples")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    L: int = 2
    backend: str = "exact"
    t_max: float = 10.0
    sample_times: list[float] | None = None
    n_samples: int = 11  # evenly spaced on [0, t_max] when sample_times is unset
    ntraj: int = 1000
    master_seed: int = 0
    alpha: float = 2.0
    epsilon: float = 0.25
    psi: Any = "00"
    rho_d: str = "mixed"
    include_sinks: bool = True
    out: str | None = None
    format: str = "csv"
    L_list: list[int] = field(default_factory=lambda: [8, 16, 32, 64, 128])

    def times(self) -> list[float]:
        if self.sample_times is not None:
            return sorted(float(t) for t in self.sample_times)
        return np.linspace(0.0, self.t_max, self.n_samples).tolist()

    def validate(self, engine: bool = True) -> None:
        """``engine=False`` skips the backend-specific guards (for commands that run no engine)."""
        if self.backend not in BACKENDS:
            raise ConfigError(f"backend must be one of {BACKENDS}")
        if self.L < 2:
            raise ConfigError("L must be >= 2")
        if engine and self.backend == "exact" and 2 * self.L * self.L > MAX_QUBITS:
            raise ConfigError(f"exact backend needs 2L^2 <= {MAX_QUBITS} qubits (L=2)")
        if self.t_max < 0:
            raise ConfigError("t_max must be nonnegative")
        if self.sample_times is None and self.n_samples < 1:
            raise ConfigError("n_samples must be >= 1")
        ts = self.times()
        if ts and (ts[0] < 0 or ts[-1] > self.t_max):
            raise ConfigError("sample times must lie in [0, t_max]")
        if self.ntraj < 1:
            raise ConfigError("ntraj must be >= 1")
        if not 0 < self.epsilon <= 1:
            raise ConfigError("epsilon must lie in (0, 1]")
        if self.alpha < 1:
            raise ConfigError("alpha must be >= 1")
        if self.rho_d not in RHO_D_CHOICES:
            raise ConfigError(f"rho_d must be one of {RHO_D_CHOICES}")
        if self.format not in ("csv", "json"):
            raise ConfigError("format must be csv or json")
        try:
            self.psi = parse_psi(self.psi)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if engine and self.backend != "exact" and not is_stabilizer_psi(self.psi):
            raise ConfigError(f"psi {self.psi!r} needs the exact backend")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        if isinstance(d["psi"], np.ndarray):
            d["psi"] = [[float(a.real), float(a.imag)] for a in d["psi"]]
        d.pop("out")
        return d

    def run_id(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


def parse_psi(psi):
    """Preset name, comma-separated amplitudes ("1,0,0,1j"), or a list of numbers / [re, im] pairs."""
    if isinstance(psi, str):
        if psi in PSI_PRESETS:
            return psi
        if "," not in psi:
            raise ValueError(f"unknown psi preset {psi!r}; choose from {sorted(PSI_PRESETS)}")
        psi = [complex(p.strip().replace(" ", "")) for p in psi.split(",")]
    vals = [complex(*p) if isinstance(p, (list, tuple)) else complex(p) for p in psi]
    return psi_vector(vals)


def load_config(path: str | None, overrides: dict, engine: bool = True) -> RunConfig:
    data: dict = {}
    if path:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
    data.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        cfg = RunConfig(**data)
        cfg.L, cfg.ntraj, cfg.master_seed, cfg.n_samples = int(cfg.L), int(cfg.ntraj), int(cfg.master_seed), int(cfg.n_samples)
        cfg.t_max, cfg.alpha, cfg.epsilon = float(cfg.t_max), float(cfg.alpha), float(cfg.epsilon)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    cfg.validate(engine)
    return cfg


# -- output -------------------------------------------------------------------------


def _num(v) -> str:
    return format(float(v), ".17g")


def _json_num(v):
    v = float(v)
    return v if math.isfinite(v) else str(v)


def write_rows(cfg: RunConfig, rows: list[tuple], stream=None) -> None:
    """Rows are (L, t, observable, value, stderr, n_samples); run id, backend and seed come from cfg."""
    rid = cfg.run_id()
    full = [(rid, cfg.backend, L, cfg.master_seed, t, name, v, se, n) for L, t, name, v, se, n in rows]
    if cfg.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in full:
            w.writerow([*r[:4], _num(r[4]), r[5], _num(r[6]), _num(r[7]), r[8]])
        text = buf.getvalue()
    else:
        recs = [
            dict(zip(COLUMNS, (*r[:4], _json_num(r[4]), r[5], _json_num(r[6]), _json_num(r[7]), r[8])))
            for r in full
        ]
        text = json.dumps({"columns": list(COLUMNS), "rows": recs}, indent=1) + "\n"
    if cfg.out:
        with open(cfg.out, "w", newline="") as fh:
            fh.write(text)
    else:
        (stream or sys.stdout).write(text)


# -- engines ---------------------------------------------------------------------------


def run_exact(cfg: RunConfig) -> tuple[list[tuple], VerificationReport]:
    spec, lay = build_toric(cfg.L, cfg.include_sinks)
    rho = dm_from_product(initial_factors(lay, cfg.psi, cfg.rho_d))
    alphas = sorted({1.5, 2.0, 3.0, cfg.alpha})
    res = evolve(rho, spec, cfg.t_max, cfg.times(), alphas=alphas)
    rows = [(t, name, vals[i], 0.0, 1) for name, vals in res.observables.items() for i, t in enumerate(res.times)]
    rows.sort(key=lambda r: r[0])
    rep = VerificationReport()
    worst = max(
        float(np.max(np.abs(res.observables[logical_name(k)] - unencoded_expectation(cfg.psi, k))))
        for k in logical_paulis(spec)
    )
    rep.add("logical expectations conserved", worst <= 1e-6, value=worst, bound=1e-6)
    return rows, rep


def _stats_rows(stats) -> list[tuple]:
    return [
        (t, name, stats.mean[i, k], stats.stderr[i, k], stats.ntraj)
        for i, t in enumerate(stats.times)
        for k, name in enumerate(stats.names)
    ]


def run_trajectory_backend(cfg: RunConfig) -> tuple[list[tuple], VerificationReport]:
    from .trajectory import run_ensemble

    spec, lay = build_toric(cfg.L, cfg.include_sinks)
    tab = initial_tableau(spec, lay, cfg.psi, cfg.rho_d)
    alphas = sorted({1.5, 2.0, 3.0, cfg.alpha})
    stats = run_ensemble(spec, tab, cfg.t_max, cfg.times(), cfg.ntraj, cfg.master_seed, alphas=alphas)
    rep = VerificationReport()
    worst = 0.0
    for k in logical_paulis(spec):
        mean, se = stats.get(logical_name(k))
        init = tab.expectation(logical_paulis(spec)[k])
        if init:
            # a definite logical stays put on every trajectory
            worst = max(worst, float(np.max(np.abs(mean - init))))
    rep.add("definite logicals unchanged on every trajectory", worst == 0.0, value=worst, bound=0.0)
    return _stats_rows(stats), rep


def run_syndrome_backend(cfg: RunConfig) -> tuple[list[tuple], VerificationReport]:
    from .syndrome import run_chain_ensemble

    alphas = sorted({1.5, 2.0, 3.0, cfg.alpha})
    ens = run_chain_ensemble(cfg.L, cfg.t_max, cfg.times(), cfg.ntraj, cfg.master_seed, cfg.psi, cfg.rho_d, alphas)
    rows = _stats_rows(ens.stats)
    absorb = ens.absorption_times
    done = np.isfinite(absorb)
    rows.append((cfg.t_max, "absorbed_fraction", float(done.mean()), math.nan, len(absorb)))
    if done.all():
        se = absorb.std(ddof=1) / math.sqrt(len(absorb)) if len(absorb) > 1 else math.nan
        rows.append((cfg.t_max, "absorption_time_mean", float(absorb.mean()), float(se), len(absorb)))
        rows.append((cfg.t_max, "absorption_time_median", float(np.median(absorb)), math.nan, len(absorb)))
    rep = VerificationReport()
    n = ens.stats.get("H")[0]
    # counts only ever fall along a chain, so the ensemble mean is nonincreasing too
    rep.add("mean excitation count nonincreasing", bool(np.all(np.diff(n) <= 1e-12)))
    return rows, rep


ENGINES = {"exact": run_exact, "trajectory": run_trajectory_backend, "syndrome": run_syndrome_backend}


def run(cfg: RunConfig) -> int:
    rows, rep = ENGINES[cfg.backend](cfg)
    write_rows(cfg, [(cfg.L, *r) for r in rows])
    if not rep.passed:
        print(rep.summary(), file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


# -- subcommands ----------------------------------------------------------------------------


def _config(args, backend: str | None = None, engine: bool = True) -> RunConfig:
    overrides = {
        "L": args.L,
        "t_max": args.t_max,
        "ntraj": args.ntraj,
        "master_seed": args.seed,
        "alpha": args.alpha,
        "epsilon": args.epsilon,
        "psi": args.psi,
        "rho_d": args.rho_d,
        "backend": backend or args.backend,
        "out": args.out,
        "format": args.format,
        "include_sinks": args.include_sinks,
        "sample_times": args.sample_times,
        "n_samples": args.n_samples,
        "L_list": args.L_list,
    }
    return load_config(args.config, overrides, engine)


def cmd_validate(args) -> int:
    cfg = _config(args, engine=False)
    spec, _ = build_toric(cfg.L, cfg.include_sinks)
    rep = validate_code(spec)
    for v in rep.violations:
        print(f"[FAIL] {v}")
    print(f"validate L={cfg.L} sites={spec.num_sites} m={spec.m}: {'PASS' if rep.passed else 'FAIL'}")
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_verify_logical(args) -> int:
    cfg = _config(args, engine=False)
    rep = verify_logical_fixedpoint(build_toric(cfg.L, cfg.include_sinks)[0])
    print(rep.summary())
    return EXIT_OK if rep.passed else EXIT_FAIL


def _engine_cmd(backend: str):
    def cmd(args) -> int:
        return run(_config(args, backend))

    return cmd


def cmd_run(args) -> int:
    return run(_config(args))


def cmd_scaling(args) -> int:
    from .syndrome import convergence_experiment, linear_fit

    cfg = _config(args, "syndrome")
    table = convergence_experiment(cfg.L_list, cfg.epsilon, cfg.ntraj, cfg.master_seed, cfg.psi, cfg.rho_d)
    rows, failed = [], False
    for r in table:
        for name, val, se in (
            ("absorption_time_mean", r.mean, r.stderr),
            ("absorption_time_median", r.median, math.nan),
            (f"absorption_time_q{1 - cfg.epsilon:g}", r.quantile, math.nan),
            ("lemma2_bound", r.bound, math.nan),
            ("runs_above_bound", len(r.exceeding), math.nan),
        ):
            rows.append((r.L, math.nan, name, val, se, r.ntraj))
        for i, t in r.exceeding:
            print(f"L={r.L}: chain {i} (seed {cfg.master_seed}, key ({r.L}, {i})) absorbed at {t:.6g} > {r.bound:.6g}", file=sys.stderr)
        failed |= not r.passed
    if len(table) >= 2:
        slope, intercept, r2 = linear_fit([r.L for r in table], [r.mean for r in table])
        print(f"fit: mean = {slope:.6g} L + {intercept:.6g}, R^2 = {r2:.6f}", file=sys.stderr)
    write_rows(cfg, rows)
    return EXIT_FAIL if failed else EXIT_OK


def cmd_theorem_time(args) -> int:
    cfg = _config(args, engine=False)
    print(f"theorem_time(L={cfg.L}, eps={cfg.epsilon:g}) = {theorem_time(cfg.L, cfg.epsilon):.6f}")
    print(f"lemma2_time(L={cfg.L}, eps={cfg.epsilon:g}) = {lemma2_time(cfg.L, cfg.epsilon):.6f}")
    return EXIT_OK


def cmd_verify_all(args) -> int:
    from .acceptance import CRITERIA, run_criterion

    seed = args.seed if args.seed is not None else 0
    selected = args.only or [c.number for c in CRITERIA]
    ok = True
    for k in selected:
        res = run_criterion(k, seed)
        print(res.line())
        for c in res.report.checks:
            print("    " + c.line())
        ok &= res.passed
    print("verify-all: " + ("PASS" if ok else "FAIL"))
    return EXIT_OK if ok else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with RunConfig fields; flags override it")
    common.add_argument("--L", type=int)
    common.add_argument("--t-max", type=float, dest="t_max")
    common.add_argument("--sample-times", type=lambda s: [float(x) for x in s.split(",")], dest="sample_times",
                        help="comma-separated times")
    common.add_argument("--n-samples", type=int, dest="n_samples", help="evenly spaced sample count on [0, t_max]")
    common.add_argument("--ntraj", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--alpha", type=float)
    common.add_argument("--epsilon", type=float)
    common.add_argument("--psi", help=f"preset {sorted(PSI_PRESETS)} or four comma-separated amplitudes")
    common.add_argument("--rho-d", dest="rho_d", choices=RHO_D_CHOICES)
    common.add_argument("--backend", choices=BACKENDS)
    common.add_argument("--out")
    common.add_argument("--format", choices=("csv", "json"))
    common.add_argument("--include-sinks", dest="include_sinks", action=argparse.BooleanOptionalAction, default=None)
    common.add_argument("--L-list", dest="L_list", type=lambda s: [int(x) for x in s.split(",")])

    p = argparse.ArgumentParser(prog="encoder-lab", description="Dissipative toric-code encoder simulations.")
    sub = p.add_subparsers(dest="command", required=True)
    cmds = {
        "validate": (cmd_validate, "check the toric code construction"),
        "verify-logical": (cmd_verify_logical, "symbolic logical fixed-point check"),
        "run": (cmd_run, "run the backend named in the config"),
        "exact-run": (_engine_cmd("exact"), "dense evolution (L=2)"),
        "traj-run": (_engine_cmd("trajectory"), "stabilizer-trajectory ensemble"),
        "syndrome-run": (_engine_cmd("syndrome"), "classical excitation chain ensemble"),
        "scaling": (cmd_scaling, "absorption time versus L"),
        "theorem-time": (cmd_theorem_time, "print the convergence-time bounds"),
        "verify-all": (cmd_verify_all, "run the acceptance suite"),
    }
    for name, (fn, help_) in cmds.items():
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.set_defaults(func=fn)
        if name == "verify-all":
            sp.add_argument("--only", type=lambda s: [int(x) for x in s.split(",")], help="comma-separated criterion numbers")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
