"""Command-line interface: fit, adapt, debias, ci, simulate, check.

Exit codes: 0 success; 1 I/O, parse, or configuration errors; 2 solver
non-convergence (outputs still written); 3 failed grid selection without
--fallback; 4 failed property checks in `check`.

Every run writes a manifest JSON (effective configuration, seed, versions);
feeding a manifest back through --config reproduces the run byte-for-byte.
Coordinates are 1-based on the command line and converted at this boundary.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import platform
import sys

import numpy as np
import scipy

from . import __version__
from .dataset import SimSpec, load_csv
from .glasso import default_glasso_lambda, graphical_lasso, precision_to_csv, sample_cov
from .huber import HuberConfig, WeightSpec, fit_huber
from .inference import confidence_region, efficiency_identity_check, one_step
from .lepski import LepskiConfig, SelectionError, adaptive_fit
from .scale import MoMConfig, default_grid_depth, median_of_means
from .score import get_score
from .experiments import ExperimentSpec, run_consistency, run_coverage, run_mom_mad_checks

SCHEMA = 1

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NONCONVERGED = 2
EXIT_NO_SELECTION = 3
EXIT_CHECK_FAILED = 4


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_ERROR):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    # map argparse's own failures onto the documented exit contract
    def error(self, message):
        raise CliError(message)


DEFAULTS: dict[str, dict] = {
    "fit": {"tau": None, "lambda": None, "b": 1.0, "tol": 1e-10, "max_iter": 20000,
            "y_column": "y"},
    "adapt": {"k": 1, "C": 20.0, "delta": 0.05, "M": None, "lambda": None, "b": 1.0,
              "fallback": False, "y_column": "y"},
    "debias": {"score": "gaussian", "glasso_lambda": None, "y_column": "y"},
    "ci": {"score": "gaussian", "glasso_lambda": None, "alpha": 0.1, "J": None,
           "y_column": "y"},
    "simulate": {"scenario": None, "trials": 10, "seed": 0, "n_grid": None, "p": 10,
                 "alpha": 0.1, "k": 4, "C": 20.0, "delta": 0.05, "M": None,
                 "lambda": None, "b": 1.0, "custom": None},
    "check": {"trials": 1000, "seed": 0, "quad_tol": 1e-9},
}


def _load_config(path: str, command: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise CliError(f"config {path} is not valid JSON: {exc}")
    if not isinstance(raw, dict):
        raise CliError("config must be a JSON object")
    if raw.get("schema", SCHEMA) != SCHEMA:
        raise CliError(f"unsupported config schema {raw.get('schema')!r}")
    if "command" in raw and "config" in raw:  # a manifest from a previous run
        if raw["command"] != command:
            raise CliError(f"manifest is for command {raw['command']!r}, not {command!r}")
        section = raw["config"]
    else:
        sections = set(raw) - {"schema"}
        unknown = sections - set(DEFAULTS)
        if unknown:
            raise CliError(f"unknown config sections: {sorted(unknown)}")
        section = raw.get(command, {})
    unknown = set(section) - set(DEFAULTS[command])
    if unknown:
        raise CliError(f"unknown keys in {command} config: {sorted(unknown)}")
    return dict(section)


def _merge(command: str, args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS[command])
    if getattr(args, "config", None):
        cfg.update(_load_config(args.config, command))
    for key in DEFAULTS[command]:
        flag = getattr(args, key.replace("-", "_"), None)
        if flag is not None and flag is not False:
            cfg[key] = flag
    return cfg


def _versions() -> dict:
    return {
        "adahuber": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def _write_manifest(path: str, command: str, cfg: dict) -> None:
    manifest = {"schema": SCHEMA, "command": command, "config": cfg, "versions": _versions()}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _read_data(path: str, y_column):
    try:
        return load_csv(path, y_column=y_column)
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}")
    except ValueError as exc:
        raise CliError(str(exc))


def _cmd_fit(args) -> int:
    cfg = _merge("fit", args)
    data = _read_data(args.data, cfg["y_column"])
    if cfg["tau"] is None:
        # default transition parameter: three times the robust response-scale bound
        mom = median_of_means(data.y**2, MoMConfig())
        if mom <= 0:
            raise CliError("cannot derive a default tau from an all-zero response")
        cfg["tau"] = 3.0 * math.sqrt(2.0 * mom)
    if cfg["tau"] <= 0:
        raise CliError("tau must be positive")
    if cfg["lambda"] is not None and cfg["lambda"] < 0:
        raise CliError("lambda must be nonnegative")
    hcfg = HuberConfig(tau=cfg["tau"], lam=cfg["lambda"], weights=WeightSpec(b=cfg["b"]),
                       tol=cfg["tol"], max_iter=int(cfg["max_iter"]))
    est = fit_huber(data, hcfg)
    _write_json(args.out, est.to_dict())
    _write_manifest(args.out + ".manifest.json", "fit", cfg)
    if not est.converged:
        print(f"fit did not converge within {hcfg.max_iter} iterations "
              f"(kkt_residual={est.kkt_residual:.3e})", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


def _cmd_adapt(args) -> int:
    cfg = _merge("adapt", args)
    data = _read_data(args.data, cfg["y_column"])
    if cfg["k"] < 1:
        raise CliError("k must be at least 1")
    lep = LepskiConfig(
        C=cfg["C"], k=int(cfg["k"]), M=None if cfg["M"] is None else int(cfg["M"]),
        huber_template=HuberConfig(lam=cfg["lambda"], weights=WeightSpec(b=cfg["b"])),
        fallback=bool(cfg["fallback"]),
    )
    try:
        result = adaptive_fit(data, lep, MoMConfig(delta=cfg["delta"]))
    except SelectionError as exc:
        print(f"selection failed: {exc}", file=sys.stderr)
        return EXIT_NO_SELECTION
    if result.fallback_used:
        print("warning: selection fell back to the largest grid scale", file=sys.stderr)
    _write_json(args.out, result.to_dict())
    grid_csv = os.path.splitext(args.out)[0] + "_grid.csv"
    with open(grid_csv, "w", encoding="utf-8") as fh:
        fh.write("sigma,l2_to_selected,objective\n")
        for s, dist, obj in result.grid_csv_rows():
            fh.write(f"{s!r},{dist!r},{obj!r}\n")
    _write_manifest(args.out + ".manifest.json", "adapt", cfg)
    return EXIT_OK


def _load_beta(path: str, p: int) -> np.ndarray:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise CliError(f"{path} is not valid JSON: {exc}")
    beta = payload.get("beta") if isinstance(payload, dict) else None
    if beta is None:
        raise CliError(f"{path} does not contain a 'beta' array")
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (p,):
        raise CliError(f"beta in {path} has length {beta.size}, expected {p}")
    return beta


def _debias_common(args, command: str):
    cfg = _merge(command, args)
    data = _read_data(args.data, cfg["y_column"])
    beta = _load_beta(args.beta, data.p)
    try:
        score = get_score(cfg["score"])
    except ValueError as exc:
        raise CliError(str(exc))
    lam_g = cfg["glasso_lambda"]
    if lam_g is None:
        lam_g = default_glasso_lambda(data.n, data.p)
    precision = graphical_lasso(sample_cov(data), lam_g)
    return cfg, data, beta, score, precision


def _cmd_debias(args) -> int:
    cfg, data, beta, score, precision = _debias_common(args, "debias")
    corrected = one_step(data, beta, precision, score)
    _write_json(args.out, corrected.to_dict())
    _write_manifest(args.out + ".manifest.json", "debias", cfg)
    if not precision.converged:
        print("precision estimate did not converge "
              f"(kkt_residual={precision.kkt_residual:.3e})", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


def _cmd_ci(args) -> int:
    cfg, data, beta, score, precision = _debias_common(args, "ci")
    alpha = cfg["alpha"]
    if not (0 < alpha < 1):
        raise CliError("alpha must lie strictly between 0 and 1")
    if not cfg["J"]:
        raise CliError("--J is required (comma-separated 1-based coordinates)")
    try:
        J_one_based = [int(tok) for tok in str(cfg["J"]).split(",")]
    except ValueError:
        raise CliError(f"cannot parse J={cfg['J']!r}")
    if any(j < 1 for j in J_one_based):
        raise CliError("coordinates are 1-based in the CLI; 0 is not a valid index")
    if any(j > data.p for j in J_one_based):
        raise CliError(f"J contains an index above p={data.p}")
    corrected = one_step(data, beta, precision, score)
    region = confidence_region(data, corrected, precision, score,
                               [j - 1 for j in J_one_based], alpha)
    _write_json(args.out, region.to_dict(one_based=True))
    _write_manifest(args.out + ".manifest.json", "ci", cfg)
    if not precision.converged:
        print("precision estimate did not converge "
              f"(kkt_residual={precision.kkt_residual:.3e})", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


def _cmd_simulate(args) -> int:
    cfg = _merge("simulate", args)
    scenario = cfg["scenario"]
    if scenario not in ("fig1", "fig2", "coverage", "custom"):
        raise CliError(f"unknown scenario {scenario!r}; choose fig1, fig2, coverage, or custom")
    n_grid = cfg["n_grid"]
    if isinstance(n_grid, str):
        n_grid = tuple(int(tok) for tok in n_grid.split(","))
    elif n_grid is not None:
        n_grid = tuple(int(v) for v in n_grid)
    else:
        n_grid = (100,) if scenario == "coverage" else (100, 200, 400)
    custom = cfg["custom"]
    if custom is not None and not isinstance(custom, SimSpec):
        custom = SimSpec.from_dict(custom)
    spec = ExperimentSpec(
        scenario=scenario, n_grid=n_grid, trials=int(cfg["trials"]), seed=int(cfg["seed"]),
        C=cfg["C"], k=int(cfg["k"]), delta=cfg["delta"],
        M=None if cfg["M"] is None else int(cfg["M"]), lam=cfg["lambda"], b=cfg["b"],
        alpha=cfg["alpha"], p=int(cfg["p"]), custom=custom,
    )
    os.makedirs(args.out_dir, exist_ok=True)
    report = run_coverage(spec) if scenario == "coverage" else run_consistency(spec)
    csv_path, json_path = report.save(args.out_dir)
    cfg["scenario"], cfg["n_grid"] = scenario, list(n_grid)
    if custom is not None:
        cfg["custom"] = custom.to_dict()
    _write_manifest(os.path.join(args.out_dir, "manifest.json"), "simulate", cfg)
    print(csv_path)
    print(json_path)
    return EXIT_OK


def _cmd_check(args) -> int:
    cfg = _merge("check", args)
    failures: list[str] = []
    results: dict = {}

    v1, v2 = efficiency_identity_check(3, quad_tol=cfg["quad_tol"])
    results["efficiency_identity"] = {"v1": v1, "v2": v2}
    ok = abs(v1 - v2) / abs(v1) <= 1e-6 and abs(v1 - 1.5) <= 1e-6
    print(f"[{'PASS' if ok else 'FAIL'}] efficiency identity: v1 = {v1:.10f}, v2 = {v2:.10f}")
    if not ok:
        failures.append("efficiency_identity")

    mc = run_mom_mad_checks(int(cfg["trials"]), int(cfg["seed"]))
    results["mom_mad"] = mc
    print(f"[{'PASS' if mc['mom_ok'] else 'FAIL'}] median-of-means deviation: "
          f"failure rate {mc['mom_failure_rate']:.4f} vs delta + 0.02 = {mc['delta'] + 0.02:.4f}")
    if not mc["mom_ok"]:
        failures.append("mom_deviation")
    print(f"[{'PASS' if mc['mad_ok'] else 'FAIL'}] mad dominance: "
          f"mean diff {mc['mad_diff_mean']:.5f} >= -3 SE = {-3 * mc['mad_diff_se']:.5f}")
    if not mc["mad_ok"]:
        failures.append("mad_dominance")

    if args.out_dir:
        os.makedirs(args.out_dir, exist_ok=True)
        _write_json(os.path.join(args.out_dir, "check_report.json"),
                    {"results": results, "failures": failures})
        _write_manifest(os.path.join(args.out_dir, "manifest.json"), "check", cfg)
    if failures:
        print("failed checks: " + ", ".join(failures), file=sys.stderr)
        return EXIT_CHECK_FAILED
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="adahuber",
                     description="Adaptive-scale robust sparse regression pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="JSON config or a manifest from a previous run")
        p.add_argument("--y-column", dest="y_column", default=None)

    p = sub.add_parser("fit", description="One penalized Huber fit at a fixed tau")
    p.add_argument("data")
    add_common(p)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--lambda", dest="lambda_", type=float, default=None)
    p.add_argument("--b", type=float, default=None)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--max-iter", dest="max_iter", type=int, default=None)
    p.add_argument("--out", default="est.json")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("adapt", description="Scale bracketing, grid fits, and selection")
    p.add_argument("data")
    add_common(p)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--C", type=float, default=None)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--M", type=int, default=None)
    p.add_argument("--lambda", dest="lambda_", type=float, default=None)
    p.add_argument("--b", type=float, default=None)
    p.add_argument("--fallback", action="store_true", default=False)
    p.add_argument("--out", default="result.json")
    p.set_defaults(func=_cmd_adapt)

    for name, desc in (("debias", "One-step correction of a fitted estimate"),
                       ("ci", "Confidence intervals around the one-step estimate")):
        p = sub.add_parser(name, description=desc)
        p.add_argument("data")
        add_common(p)
        p.add_argument("--beta", required=True, help="JSON file with a 'beta' array")
        p.add_argument("--score", choices=["gaussian", "t3"], default=None)
        p.add_argument("--glasso-lambda", dest="glasso_lambda", type=float, default=None)
        if name == "ci":
            p.add_argument("--J", default=None, help="1-based coordinates, e.g. 1,2")
            p.add_argument("--alpha", type=float, default=None)
        p.add_argument("--out", default=f"{name}.json")
        p.set_defaults(func=_cmd_debias if name == "debias" else _cmd_ci)

    p = sub.add_parser("simulate", description="Run a simulation scenario, write CSV + JSON")
    p.add_argument("--scenario", default=None)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--n-grid", dest="n_grid", default=None, help="comma-separated sizes")
    p.add_argument("--p", type=int, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--C", type=float, default=None)
    p.add_argument("--M", type=int, default=None)
    p.add_argument("--config", help="JSON config or manifest")
    p.add_argument("--out-dir", dest="out_dir", default="results")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("check", description="Numerical identity and Monte Carlo checks")
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", help="JSON config or manifest")
    p.add_argument("--out-dir", dest="out_dir", default=None)
    p.set_defaults(func=_cmd_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if hasattr(args, "lambda_"):
            setattr(args, "lambda", args.lambda_)
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ValueError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
