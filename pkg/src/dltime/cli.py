"""
Config-driven experiment runner.

Usage::

    dltime verify-lemmas --config run.cfg --out results/
    dltime moment-scan   --config run.cfg
    dltime rate-fit      --config run.cfg [--scan results/moment_scan.csv]
    dltime simulate      --config run.cfg
    dltime classify      --H1 0.5 --H2 0.5 --d 2 --k 0
    dltime --schema

The config is flat ``dotted.key = value`` text with ``#`` comments. Exit codes:
0 pass, 1 usage or config error, 2 verification failure, 3 numerical
non-convergence.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import math
import sys
import warnings
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .covariance import CovarianceModel, FieldSpec
from .kernel import MultiIndex, as_multi_index
from .quadrature import NonConvergenceWarning, QuadConfig
from .rates import classify_regime, format_number, rate_fit

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_FAILED = 2
EXIT_NONCONVERGED = 3


class ConfigError(ValueError):
    """Malformed or invalid experiment configuration."""


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

def _as_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# key -> (attribute, parser)
_KEYS = {
    "model1.kind": ("model1_kind", str),
    "model1.H0": ("model1_H0", float),
    "model1.K0": ("model1_K0", float),
    "model2.kind": ("model2_kind", str),
    "model2.H0": ("model2_H0", float),
    "model2.K0": ("model2_K0", float),
    "d": ("d", int),
    "k": ("k", str),
    "T": ("T", float),
    "eps.max": ("eps_max", float),
    "eps.ratio": ("eps_ratio", float),
    "eps.count": ("eps_count", int),
    "grid.n": ("grid_n", int),
    "mc.paths": ("mc_paths", int),
    "mc.seed": ("mc_seed", int),
    "quad.nodes_per_dim": ("quad_nodes_per_dim", int),
    "quad.splits": ("quad_splits", int),
    "quad.abs_tol": ("quad_abs_tol", float),
    "quad.rel_tol": ("quad_rel_tol", float),
    "output.dir": ("output_dir", str),
    "verify.quick": ("verify_quick", _as_bool),
    "verify.dirichlet_tol": ("verify_dirichlet_tol", float),
    "verify.slope_tol": ("verify_slope_tol", float),
}


@dataclass
class ExperimentConfig:
    model1_kind: str = "bifbm"
    model1_H0: float = 0.5
    model1_K0: float = 1.0
    model2_kind: str = "bifbm"
    model2_H0: float = 0.5
    model2_K0: float = 1.0
    d: int = 1
    k: str = "0"
    T: float = 1.0
    eps_max: float = 0.1
    eps_ratio: float = 0.5
    eps_count: int = 14
    grid_n: int = 256
    mc_paths: int = 1000
    mc_seed: int = 0
    quad_nodes_per_dim: int = 6
    quad_splits: int = 4
    quad_abs_tol: float = 1e-10
    quad_rel_tol: float = 1e-4
    output_dir: str = "."
    verify_quick: bool = False
    verify_dirichlet_tol: float = 1e-4
    verify_slope_tol: float = 0.05
    source: str = field(default="<defaults>", compare=False)

    @classmethod
    def from_text(cls, text: str, source: str = "<string>") -> "ExperimentConfig":
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if not sep or not key:
                raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
            if key not in _KEYS:
                raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
            if key in values:
                raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
            attr, parse = _KEYS[key]
            try:
                values[attr] = parse(value)
            except ValueError as exc:
                raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None
        cfg = cls(**values, source=source)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_text(text, str(path))

    def _model(self, kind, H0, K0) -> CovarianceModel:
        if kind not in ("bifbm", "subfbm"):
            raise ConfigError(f"model kind must be 'bifbm' or 'subfbm', got {kind!r}")
        return CovarianceModel(kind, H0, K0)

    def field_spec(self) -> FieldSpec:
        return FieldSpec(self._model(self.model1_kind, self.model1_H0, self.model1_K0),
                         self._model(self.model2_kind, self.model2_H0, self.model2_K0),
                         self.d)

    def multi_index(self) -> MultiIndex:
        parts = [p.strip() for p in self.k.split(",")]
        ks = tuple(int(p) for p in parts)
        if len(ks) == 1 and self.d > 1 and ks[0] == 0:
            ks = (0,) * self.d
        return as_multi_index(ks, self.d)

    def quad_config(self) -> QuadConfig:
        return QuadConfig(self.quad_nodes_per_dim, self.quad_splits, self.quad_abs_tol,
                          self.quad_rel_tol)

    def eps_values(self) -> np.ndarray:
        return self.eps_max * self.eps_ratio ** np.arange(self.eps_count)

    def validate(self) -> None:
        try:
            self.field_spec()
            self.multi_index()
            self.quad_config()
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from None
        if not self.T > 0:
            raise ConfigError("T must be positive")
        if not (self.eps_max > 0 and 0 < self.eps_ratio < 1 and self.eps_count >= 1):
            raise ConfigError("need eps.max > 0, 0 < eps.ratio < 1, eps.count >= 1")
        if self.grid_n < 1 or self.mc_paths < 1:
            raise ConfigError("grid.n and mc.paths must be positive")
        if self.verify_dirichlet_tol < 0 or self.verify_slope_tol < 0:
            raise ConfigError("verification tolerances must be non-negative")

    def dump(self) -> str:
        lines = []
        for key, (attr, _) in _KEYS.items():
            lines.append(f"{key} = {getattr(self, attr)}")
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------

SCHEMA = {
    "lemmas.csv": [
        ("lemma", "str", "check name"),
        ("trials", "int", "number of configurations evaluated"),
        ("worst", "float", "worst error, violation count or ratio spread (see detail)"),
        ("passed", "int", "1 if the check passed, else 0"),
        ("detail", "str", "human-readable summary of the worst case"),
    ],
    "moment_scan.csv": [
        ("eps", "float", "mollification variance"),
        ("value", "float", "second moment of the mollified functional at x = 0"),
        ("err_estimate", "float", "difference between two quadrature orders"),
        ("flagged", "int", "1 if err_estimate exceeds the tolerance, else 0"),
    ],
    "rate_fit.csv": [
        ("regime", "str", "exists, critical_log, critical_logsq, power or log_times_power"),
        ("predicted_exponent", "float", "exponent of the predicted form (empty if none)"),
        ("fitted_exponent", "float", "fitted exponent (empty when the limit exists)"),
        ("loglog_slope", "float", "plain log-log slope of the fitted tail"),
        ("r2", "float", "R^2 of the predicted form with an additive constant"),
        ("r2_power", "float", "R^2 of a pure power law in log-log coordinates"),
    ],
    "simulate.csv": [
        ("path_index", "int", "index of the simulated path pair"),
        ("value", "float", "mollified functional for this path pair"),
    ],
    "simulate_summary.csv": [
        ("n_paths", "int", "number of path pairs"),
        ("eps", "float", "mollification variance used"),
        ("mean", "float", "sample mean of the per-path values"),
        ("mean_se", "float", "standard error of the mean"),
        ("m2", "float", "sample second moment"),
        ("m2_se", "float", "standard error of m2"),
        ("m4", "float", "sample fourth moment"),
        ("m4_se", "float", "standard error of m4"),
    ],
}


def schema_text() -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["file", "column", "type", "description"])
    for name, cols in SCHEMA.items():
        for col, typ, desc in cols:
            w.writerow([name, col, typ, desc])
    return out.getvalue()


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def write_csv(path: Path, name: str, rows) -> Path:
    cols = [c for c, _, _ in SCHEMA[name]]
    target = path / name
    with open(target, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in cols])
    return target


def write_report(path: Path, name: str, cfg: ExperimentConfig, body: str) -> Path:
    stamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    target = path / name
    target.write_text(f"# dltime {__version__}  {stamp}\n# config: {cfg.source}\n"
                      f"{body.rstrip()}\n", encoding="utf-8")
    return target


def verdict(desc) -> str:
    """One-line regime summary."""
    def num(x):
        return format_number(x).replace("-", "−")

    if desc.regime == "exists":
        return f"exists, θ₁<{num(desc.theta1_max)}, θ₂<{num(desc.theta2_max)}"
    if desc.regime == "critical_log":
        return "diverges: ln(1+ε^{−1/2})"
    if desc.regime == "critical_logsq":
        return "diverges: ln²(1+ε^{−1/2})"
    if desc.regime == "power":
        return f"diverges: ε^{{{num(desc.exponent)}}}"
    return f"diverges: ln(1+ε^{{−1/2}})·ε^{{{num(desc.exponent)}}}"


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def _out_dir(args, cfg: ExperimentConfig) -> Path:
    path = Path(args.out if args.out else cfg.output_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _count_nonconvergence(caught) -> int:
    return sum(issubclass(w.category, NonConvergenceWarning) for w in caught)


def cmd_verify_lemmas(args, cfg: ExperimentConfig) -> int:
    from .lemmas import run_battery

    out = _out_dir(args, cfg)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", NonConvergenceWarning)
        rows = run_battery(cfg.T, cfg.quad_config(), quick=cfg.verify_quick,
                           dirichlet_tol=cfg.verify_dirichlet_tol,
                           slope_tol=cfg.verify_slope_tol)
    n_warn = _count_nonconvergence(caught)
    write_csv(out, "lemmas.csv", [vars(r) for r in rows])
    lines = [f"{'PASS' if r.passed else 'FAIL'}  {r.lemma:<32s} {r.detail}" for r in rows]
    if n_warn:
        lines.append(f"{n_warn} quadrature non-convergence warning(s)")
    body = "\n".join(lines)
    write_report(out, "lemmas_report.txt", cfg, body)
    print(body)
    if not all(r.passed for r in rows):
        return EXIT_FAILED
    return EXIT_NONCONVERGED if n_warn else EXIT_OK


def cmd_moment_scan(args, cfg: ExperimentConfig) -> int:
    from .moments import moment_scan

    out = _out_dir(args, cfg)
    results = moment_scan(cfg.field_spec(), cfg.multi_index(), cfg.eps_values(), T=cfg.T,
                          cfg=cfg.quad_config())
    rows = [{"eps": r.eps, "value": r.value, "err_estimate": r.err_estimate,
             "flagged": r.flagged} for r in results]
    target = write_csv(out, "moment_scan.csv", rows)
    n_flag = sum(r.flagged for r in results)
    print(f"wrote {len(rows)} rows to {target} ({n_flag} flagged)")
    return EXIT_NONCONVERGED if n_flag else EXIT_OK


def read_scan(path) -> tuple[np.ndarray, np.ndarray]:
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.DictReader(fh))
        eps = np.array([float(r["eps"]) for r in rows])
        values = np.array([float(r["value"]) for r in rows])
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError(f"cannot read scan {path}: {exc}") from None
    return eps, values


def cmd_rate_fit(args, cfg: ExperimentConfig) -> int:
    out = _out_dir(args, cfg)
    spec = cfg.field_spec()
    desc = classify_regime(spec.H1, spec.H2, spec.d, cfg.multi_index())
    if desc.regime == "exists":
        fit = rate_fit(desc, [], [])
    else:
        eps, values = read_scan(args.scan or out / "moment_scan.csv")
        try:
            fit = rate_fit(desc, eps, values)
        except ValueError as exc:
            raise ConfigError(f"scan cannot be fitted: {exc}") from None
    write_csv(out, "rate_fit.csv", [fit])
    lines = [f"regime: {verdict(desc)}"]
    if desc.diverges:
        lines.append(f"predicted exponent: {_fmt(fit['predicted_exponent'])}")
        lines.append(f"fitted exponent:    {_fmt(fit['fitted_exponent'])}")
        lines.append(f"log-log slope:      {_fmt(fit['loglog_slope'])}")
        lines.append(f"r2 (predicted form): {_fmt(fit['r2'])}")
        lines.append(f"r2 (pure power):     {_fmt(fit['r2_power'])}")
    else:
        lines.append("limit exists; no divergence to fit")
    body = "\n".join(lines)
    write_report(out, "rate_fit_report.txt", cfg, body)
    print(body)
    return EXIT_OK


def _mean_se(v: np.ndarray):
    mean = math.fsum(v) / v.size
    se = math.sqrt(math.fsum((v - mean) ** 2) / (v.size - 1) / v.size)
    return mean, se


def cmd_simulate(args, cfg: ExperimentConfig) -> int:
    from .localtime import estimate_Lk_eps, sample_moment, simulate_pair
    from .pathgen import TimeGrid

    if cfg.mc_paths < 100:
        raise ConfigError("simulate needs mc.paths >= 100 for moment estimates")
    out = _out_dir(args, cfg)
    spec = cfg.field_spec()
    px, py = simulate_pair(spec, TimeGrid(cfg.T, cfg.grid_n), cfg.mc_paths, cfg.mc_seed)
    est = estimate_Lk_eps(px, py, cfg.multi_index(), cfg.eps_max)
    v = est.per_path_values
    write_csv(out, "simulate.csv", [{"path_index": i, "value": float(x)} for i, x in enumerate(v)])
    mean, mean_se = _mean_se(v)
    m2, m2_se = sample_moment(est, 2)
    m4, m4_se = sample_moment(est, 4)
    summary = {"n_paths": est.n_paths, "eps": est.eps, "mean": mean, "mean_se": mean_se,
               "m2": m2, "m2_se": m2_se, "m4": m4, "m4_se": m4_se}
    write_csv(out, "simulate_summary.csv", [summary])
    print(", ".join(f"{k}={_fmt(v)}" for k, v in summary.items()))
    return EXIT_OK


def cmd_classify(args, cfg: ExperimentConfig | None) -> int:
    if cfg is not None:
        spec = cfg.field_spec()
        H1, H2, d, k = spec.H1, spec.H2, spec.d, cfg.multi_index()
    else:
        if None in (args.H1, args.H2, args.d):
            raise ConfigError("classify needs --H1, --H2 and --d (or --config)")
        H1, H2, d = args.H1, args.H2, args.d
        try:
            ks = tuple(int(p) for p in args.k.split(","))
        except ValueError:
            raise ConfigError(f"bad --k {args.k!r}") from None
        k = ks * d if len(ks) == 1 and ks[0] == 0 else ks
    try:
        desc = classify_regime(H1, H2, d, k)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    print(verdict(desc))
    return EXIT_OK


COMMANDS = {
    "verify-lemmas": cmd_verify_lemmas,
    "moment-scan": cmd_moment_scan,
    "rate-fit": cmd_rate_fit,
    "simulate": cmd_simulate,
    "classify": cmd_classify,
}


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="flat 'key = value' experiment config")
    common.add_argument("--out", help="output directory (overrides output.dir)")
    common.add_argument("--schema", action="store_true", default=argparse.SUPPRESS,
                        help="print the CSV column schema and exit")
    common.add_argument("--threads", type=int, help="worker threads (speed only)")

    parser = _Parser(prog="dltime", description="Local-time derivative experiments.")
    parser.add_argument("--version", action="version", version=f"dltime {__version__}")
    parser.add_argument("--schema", action="store_true", default=False,
                        help="print the CSV column schema and exit")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    for name in ("verify-lemmas", "moment-scan", "simulate"):
        sub.add_parser(name, parents=[common])
    rf = sub.add_parser("rate-fit", parents=[common])
    rf.add_argument("--scan", help="moment-scan CSV (default: <out>/moment_scan.csv)")
    cl = sub.add_parser("classify", parents=[common])
    cl.add_argument("--H1", type=float)
    cl.add_argument("--H2", type=float)
    cl.add_argument("--d", type=int)
    cl.add_argument("--k", default="0", help="derivative order, e.g. 1 or 1,0")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:   # usage errors, --help and --version
        return int(exc.code or 0)
    if args.schema:
        sys.stdout.write(schema_text())
        return EXIT_OK
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG
    if args.threads is not None:
        if args.threads < 1:
            print("dltime: error: --threads must be positive", file=sys.stderr)
            return EXIT_CONFIG
        from .moments import set_threads
        set_threads(args.threads)
    try:
        if args.command == "classify":
            cfg = ExperimentConfig.load(args.config) if args.config else None
        else:
            cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"dltime: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
