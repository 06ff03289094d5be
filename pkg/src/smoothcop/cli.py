"""Command-line driver for the Monte Carlo experiments.

Every subcommand writes its main result (CSV or JSON) to ``--out`` (or to
standard output) and, when ``--out`` is a file, a run manifest
``<out>.manifest.json`` recording the configuration, seed, library version
and wall time. Results depend only on the configuration and the seed, not on
``--workers``.

Exit codes: 0 success, 2 configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from importlib import metadata

import numpy as np

from .bootstrap import coverage_study, draw_bootstrap_sample
from .changepoint import Ar1Config, generate_ar1, rejection_rates, run_test
from .data import Sample, atomic_write_text, compute_ranks, read_sample_csv
from .derivatives import Bandwidth, BernsteinDegree, PdEstimatorSpec, ise_study
from .errors import ConfigError, DataError, SmoothCopError
from .models import CopulaModel
from .multiplier import MultiplierConfig, covariance_study, quantile_study
from .parallel import replication_rng
from .smoothing import SmoothEmpiricalCopula, SmoothingFamily

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


class _Parser(argparse.ArgumentParser):
    # argparse exits on its own; route its errors through ConfigError instead
    def error(self, message):
        raise ConfigError(message)


# ---------------------------------------------------------------------------
# value helpers


def _floats(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(v) for v in str(text).split(",") if v.strip()]


def _ints(text) -> list[int]:
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    return [int(v) for v in str(text).split(",") if v.strip()]


def _names(text) -> list[str]:
    if isinstance(text, (list, tuple)):
        return [str(v) for v in text]
    return [v.strip() for v in str(text).split(",") if v.strip()]


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _csv_text(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _single(value, kind, name):
    vals = _floats(value) if kind is float else _ints(value)
    if len(vals) != 1:
        raise ConfigError(f"--{name} takes a single value here")
    return vals[0]


def _model(args, tau=None) -> CopulaModel:
    tau = _single(args.tau, float, "tau") if tau is None else tau
    return CopulaModel.from_tau(args.copula, tau, args.d)


def _mult(args) -> MultiplierConfig:
    return MultiplierConfig(args.multiplier, args.ell)


def parse_estimator(label: str, L: float = 1.0, truncate: bool = True) -> PdEstimatorSpec:
    """Build an estimator from a label such as ``bin-delta``, ``betab4-delta-adaptive``,
    ``bin-nabla-dts`` or ``bernstein-adaptive``.
    """
    parts = label.lower().split("-")
    flags = set(parts[1:])
    adaptive = "adaptive" in flags
    if parts[0] == "bernstein":
        deg = BernsteinDegree.adaptive() if adaptive else BernsteinDegree.fixed(L)
        return PdEstimatorSpec(placement="bernstein", degree=deg, truncate=truncate)
    diff = "nabla" if "nabla" in flags else "delta"
    placement = "diff_then_smooth" if "dts" in flags else "smooth_then_diff"
    bw = Bandwidth.adaptive() if adaptive else Bandwidth.fixed(L)
    unknown = flags - {"adaptive", "nabla", "delta", "dts", "raw"}
    if unknown:
        raise ConfigError(f"unknown estimator option(s) {sorted(unknown)} in {label!r}")
    try:
        fam = SmoothingFamily.parse(parts[0])
    except SmoothCopError as exc:
        raise ConfigError(str(exc)) from None
    return PdEstimatorSpec(diff, placement, fam, truncate and "raw" not in flags, bw)


# ---------------------------------------------------------------------------
# subcommands; each returns (text, suffix)


def cmd_draw(args):
    rng = replication_rng(args.seed, 0)
    if args.input:
        x = read_sample_csv(args.input)
    else:
        x = Sample(_model(args).sample(_single(args.n, int, "n"), rng))
    cop = SmoothEmpiricalCopula(compute_ranks(x), args.family)
    v = draw_bootstrap_sample(cop, replication_rng(args.seed, 0, stream=1))
    return _csv_text([f"u{j + 1}" for j in range(v.shape[1])], v.tolist()), "csv"


def _coverage_rows(args, statistic):
    rows = []
    for fam in _names(args.family):
        for tau in _floats(args.tau):
            for n in _ints(args.n):
                r = coverage_study(_model(args, tau), n, fam, args.B, args.reps, args.level,
                                   statistic, args.method, args.seed, args.workers)
                rows.append([tau, n, SmoothingFamily.parse(fam).name, r.coverage, r.avg_length])
    return _csv_text(["tau", "n", "family", "coverage", "avg_length"], rows), "csv"


def cmd_ci_kendall(args):
    return _coverage_rows(args, "tau")


def cmd_ci_frank(args):
    if args.copula.lower() != "frank":
        raise ConfigError("ci-frank needs --copula frank")
    return _coverage_rows(args, "frank")


def cmd_mult_cov(args):
    rows = []
    for n in _ints(args.n):
        st = covariance_study(_model(args), n, args.target_family, _names(args.families), args.B, args.reps,
                              args.target_draws, _mult(args), args.seed, args.workers)
        for name in st.mse:
            rows.append([n, SmoothingFamily.parse(args.target_family).name, name, 1e4 * st.mean_mse(name)])
    return _csv_text(["n", "target_family", "replicate_family", "mse_x1e4"], rows), "csv"


def cmd_mult_quantile(args):
    rows = []
    for n in _ints(args.n):
        st = quantile_study(_model(args), n, args.target_family, _names(args.families), args.B, args.reps,
                            args.functional, _floats(args.levels), args.target_draws, _mult(args),
                            args.seed, args.workers)
        for name, mse in st.mse.items():
            for q, e in zip(st.levels, mse):
                rows.append([n, SmoothingFamily.parse(args.target_family).name, name, st.functional, float(q),
                             1e4 * float(e)])
    header = ["n", "target_family", "replicate_family", "functional", "level", "mse_x1e4"]
    return _csv_text(header, rows), "csv"


def cmd_pd_imse(args):
    labels = _names(args.estimators)
    specs = [parse_estimator(lb, args.L, not args.no_truncate) for lb in labels]
    model = _model(args)
    rows = []
    for n in _ints(args.n):
        ise = ise_study(specs, model, args.margin, n, args.reps, args.grid, args.seed, args.workers)
        se = ise.std(axis=0, ddof=1) / np.sqrt(len(ise)) if len(ise) > 1 else np.zeros(len(specs))
        for lb, v, s in zip(labels, ise.mean(axis=0), se):
            rows.append([n, lb, float(v), float(s)])
    return _csv_text(["n", "estimator", "imse", "imse_se"], rows), "csv"


def _cpd_config(args, n):
    pre = CopulaModel.from_tau(args.copula, args.tau)
    if args.tau2 is None:
        return Ar1Config(args.beta, pre, n)
    post = CopulaModel.from_tau(args.copula, args.tau2)
    return Ar1Config.with_change_at(args.beta, pre, post, n, args.t)


def cmd_cpd(args):
    if args.input:
        x = read_sample_csv(args.input)
    else:
        x = generate_ar1(_cpd_config(args, _single(args.n, int, "n")), replication_rng(args.seed, 0))
    res = run_test(x, args.family, args.B, _mult(args), replication_rng(args.seed, 0, stream=1))
    if args.replicates:
        atomic_write_text(args.replicates, _csv_text(["replicate"], [[v] for v in res.replicate_values]))
    out = {"statistic": res.statistic, "p_value": res.p_value, "argmax_s": res.argmax_s}
    return json.dumps(out, indent=2, sort_keys=True) + "\n", "json"


def cmd_cpd_mc(args):
    rows = []
    fams = _names(args.family)
    for n in _ints(args.n):
        rates = rejection_rates(_cpd_config(args, n), fams, args.B, args.reps, args.level, _mult(args),
                                args.seed, args.workers)
        for name, r in rates.items():
            rows.append([n, args.beta, args.tau, "" if args.tau2 is None else args.tau2,
                         "" if args.tau2 is None else args.t, name, 100.0 * r])
    return _csv_text(["n", "beta", "tau", "tau2", "t", "family", "rejection_pct"], rows), "csv"


# ---------------------------------------------------------------------------
# parser


def _common(suppress: bool = False) -> argparse.ArgumentParser:
    # subcommands take the global flags too; their copies must not reset
    # values given before the command name, hence SUPPRESS defaults there
    def dflt(v):
        return argparse.SUPPRESS if suppress else v
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=dflt(0), help="master seed (default 0)")
    g.add_argument("--workers", type=int, default=dflt(1), help="worker processes (default 1)")
    g.add_argument("--out", default=dflt(None), help="output file (default: standard output)")
    g.add_argument("--config", default=dflt(None), help="JSON file of option values; flags override it")
    return p


def _copula_opts(p, tau=0.5, n="80"):
    p.add_argument("--copula", default="clayton", help="independence | clayton | gumbel | frank")
    p.add_argument("--tau", default=tau, help="Kendall's tau (comma list where supported)")
    p.add_argument("--d", type=int, default=2, help="dimension")
    p.add_argument("--n", default=n, help="sample size (comma list where supported)")


def _mult_opts(p, kind="iid"):
    p.add_argument("--multiplier", default=kind, choices=["iid", "dependent"])
    p.add_argument("--ell", type=int, default=None, help="dependence length of dependent multipliers")


def build_parser() -> argparse.ArgumentParser:
    common = _common(suppress=True)
    parser = _Parser(prog="smoothcop", description="Smooth empirical copula experiments.", parents=[_common()])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("draw", parents=[common], help="one smooth-bootstrap sample")
    _copula_opts(p, n="20")
    p.add_argument("--family", default="bin", help="bin | betab4")
    p.add_argument("--input", default=None, help="CSV sample to fit instead of simulating one")
    p.set_defaults(func=cmd_draw)

    for name, func, copula, tau in (("ci-kendall", cmd_ci_kendall, "clayton", "0.5"),
                                    ("ci-frank", cmd_ci_frank, "frank", "0.75")):
        p = sub.add_parser(name, parents=[common], help="coverage of smooth-bootstrap intervals")
        _copula_opts(p, tau=tau)
        p.set_defaults(copula=copula, func=func)
        p.add_argument("--family", default="bin", help="bin | betab4 (comma list)")
        p.add_argument("--B", type=int, default=250, help="bootstrap samples per interval")
        p.add_argument("--reps", type=int, default=100, help="Monte Carlo replications")
        p.add_argument("--level", type=float, default=0.95)
        p.add_argument("--method", default="percentile", choices=["percentile", "basic"])

    for name, func in (("mult-cov", cmd_mult_cov), ("mult-quantile", cmd_mult_quantile)):
        p = sub.add_parser(name, parents=[common], help="accuracy of multiplier estimates")
        _copula_opts(p, tau=0.25)
        p.add_argument("--target-family", default="bin")
        p.add_argument("--families", default="dirac,bin,betab4", help="replicate families (comma list)")
        p.add_argument("--B", type=int, default=300, help="multiplier replicates")
        p.add_argument("--reps", type=int, default=100)
        p.add_argument("--target-draws", type=int, default=20000)
        _mult_opts(p)
        p.set_defaults(func=func)
        if name == "mult-quantile":
            p.add_argument("--functional", default="cvm", choices=["ks", "cvm"])
            p.add_argument("--levels", default="0.9,0.95,0.99", help="quantile levels (comma list)")

    p = sub.add_parser("pd-imse", parents=[common], help="IMSE of partial-derivative estimators")
    _copula_opts(p, n="40")
    p.add_argument("--estimators", default="dirac-nabla,dirac-delta,bin-delta,betab4-delta",
                   help="estimator labels (comma list)")
    p.add_argument("--margin", type=int, default=0, help="0-based margin")
    p.add_argument("--reps", type=int, default=200)
    p.add_argument("--grid", type=int, default=None, help="grid points per dimension")
    p.add_argument("--L", type=float, default=1.0, help="bandwidth constant of fixed rules")
    p.add_argument("--no-truncate", action="store_true")
    p.set_defaults(func=cmd_pd_imse)

    for name, func in (("cpd", cmd_cpd), ("cpd-mc", cmd_cpd_mc)):
        p = sub.add_parser(name, parents=[common], help="copula change-point test")
        p.add_argument("--copula", default="frank")
        p.add_argument("--tau", type=float, default=0.33, help="Kendall's tau (before the change)")
        p.add_argument("--tau2", type=float, default=None, help="Kendall's tau after the change")
        p.add_argument("--t", type=float, default=0.5, help="change after observation floor(n t)")
        p.add_argument("--beta", type=float, default=0.0, help="AR(1) coefficient")
        p.add_argument("--n", default="100", help="sample size (comma list for cpd-mc)")
        p.add_argument("--B", type=int, default=250)
        _mult_opts(p, "dependent")
        if name == "cpd":
            p.add_argument("--family", default="bin", help="dirac | bin | betab4")
            p.add_argument("--input", default=None, help="CSV sample (instead of the AR(1) design)")
            p.add_argument("--replicates", default=None, help="write replicate values to this CSV")
        else:
            p.add_argument("--family", default="dirac,bin", help="families (comma list)")
            p.add_argument("--reps", type=int, default=100)
            p.add_argument("--level", type=float, default=0.05)
        p.set_defaults(func=func)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not args.config:
        return args
    try:
        with open(args.config) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{args.config}: {exc.strerror}") from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{args.config}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{args.config}:1: expected a JSON object")
    known = vars(args)
    lines = text.splitlines()
    for key in cfg:
        dest = key.replace("-", "_")
        if dest not in known or dest in ("func", "command", "config"):
            line = next((i + 1 for i, ln in enumerate(lines) if f'"{key}"' in ln), 1)
            raise ConfigError(f"{args.config}:{line}: unknown option {key!r} for {args.command}")
    # re-parse with file values as defaults so that explicit flags win
    sub = parser._subparsers._group_actions[0].choices[args.command]
    values = {k.replace("-", "_"): v for k, v in cfg.items()}
    glob = {k: values.pop(k) for k in ("seed", "workers", "out") if k in values}
    parser.set_defaults(**glob)
    sub.set_defaults(**values)
    return parser.parse_args(argv)


def _check(args) -> None:
    if args.workers < 1:
        raise ConfigError("--workers must be at least 1")
    for key in ("B", "reps"):
        if key in vars(args) and int(getattr(args, key)) < 1:
            raise ConfigError(f"--{key} must be positive")


def _manifest(args, wall: float) -> str:
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in ("func",)}
    return json.dumps({"command": args.command, "config": cfg, "seed": args.seed,
                       "version": _version(), "wall_time_s": round(wall, 3)}, indent=2, default=str) + "\n"


def run(argv: list[str] | None = None) -> int:
    """Run one subcommand; returns the exit status."""
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        _check(args)
        start = time.perf_counter()
        text, _ = args.func(args)
        wall = time.perf_counter() - start
        if args.out:
            atomic_write_text(args.out, text)
            atomic_write_text(f"{args.out}.manifest.json", _manifest(args, wall))
        else:
            sys.stdout.write(text)
        return EXIT_OK
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConfigError, SmoothCopError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def main() -> None:
    sys.exit(run())
