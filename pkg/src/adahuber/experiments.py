"""Desk-scale simulation harness: error-vs-n sweeps, interval coverage, and
Monte Carlo checks of the scale-estimation building blocks."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dataset import Dataset, SimSpec, generate, make_rng, _student_t_draws
from .glasso import default_glasso_lambda, graphical_lasso, sample_cov
from .huber import HuberConfig, WeightSpec
from .inference import confidence_region, one_step
from .lepski import LepskiConfig, adaptive_fit
from .scale import MoMConfig, mad, median_of_means
from .score import gaussian_score, t3_score

__all__ = [
    "ExperimentSpec",
    "ReportRow",
    "ExperimentReport",
    "run_consistency",
    "run_coverage",
    "run_mom_mad_checks",
]

SCENARIOS = ("fig1", "fig2", "coverage", "custom")


@dataclass(frozen=True)
class ExperimentSpec:
    """One experiment: scenario, sample sizes, trial count, seed, tuning knobs.

    fig1: gaussian covariates, t3 errors scaled by 0.01, p=200, k=4.
    fig2: t3 covariates and errors, p=100, k=4.
    coverage: t3 covariates and errors, dimensions and level configurable.
    custom: caller-supplied SimSpec (its n and seed are overridden per run).
    """

    scenario: str
    n_grid: tuple[int, ...] = (100, 200, 400, 800)
    trials: int = 10
    seed: int = 0
    C: float = 20.0
    k: int = 4
    delta: float = 0.05
    M: int | None = None
    lam: float | None = None
    b: float = 1.0
    glasso_lambda: float | None = None
    alpha: float = 0.1
    p: int = 10
    custom: SimSpec | None = None

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}; choose from {SCENARIOS}")
        if self.trials < 1:
            raise ValueError("trials must be positive")
        if self.scenario == "custom" and self.custom is None:
            raise ValueError("custom scenario requires a SimSpec")
        object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))

    def to_dict(self) -> dict:
        d = {
            "scenario": self.scenario,
            "n_grid": list(self.n_grid),
            "trials": self.trials,
            "seed": self.seed,
            "C": self.C,
            "k": self.k,
            "delta": self.delta,
            "M": self.M,
            "lam": self.lam,
            "b": self.b,
            "glasso_lambda": self.glasso_lambda,
            "alpha": self.alpha,
            "p": self.p,
            "custom": None if self.custom is None else self.custom.to_dict(),
        }
        return d


def trial_seed(seed: int, n: int, trial: int) -> int:
    """Documented seed-splitting rule: one Philox stream per (seed, n, trial)."""
    return int(np.random.SeedSequence([int(seed), int(n), int(trial)]).generate_state(1, np.uint64)[0])


def _sim_for(spec: ExperimentSpec, n: int, trial: int) -> SimSpec:
    seed = trial_seed(spec.seed, n, trial)
    if spec.scenario == "fig1":
        return SimSpec(n, 200, 4, (1.0,) * 4, "gaussian_identity", "student_t(3,0.01)", seed)
    if spec.scenario == "fig2":
        return SimSpec(n, 100, 4, (1.0,) * 4, "student_t(3)", "student_t(3,0.01)", seed)
    if spec.scenario == "coverage":
        k = min(spec.k, spec.p)
        return SimSpec(n, spec.p, k, (1.0,) * k, "student_t(3)", "student_t(3,0.01)", seed)
    return replace(spec.custom, n=n, seed=seed)


def _lepski_config(spec: ExperimentSpec) -> LepskiConfig:
    template = HuberConfig(lam=spec.lam, weights=WeightSpec(b=spec.b))
    return LepskiConfig(C=spec.C, k=spec.k, M=spec.M, huber_template=template, fallback=True)


def _score_for(sim: SimSpec):
    return t3_score() if sim.error_dist.startswith("student_t") else gaussian_score()


@dataclass
class ReportRow:
    scenario: str
    n: int
    trial: int
    estimator: str
    l2_error: float
    l1_error: float
    coords: tuple[float, ...]
    covered: tuple[int, ...] = ()


@dataclass
class ExperimentReport:
    spec: ExperimentSpec
    rows: list[ReportRow]
    summary: dict

    def to_csv(self, path) -> None:
        k = max((len(r.coords) for r in self.rows), default=0)
        kc = max((len(r.covered) for r in self.rows), default=0)
        header = ["scenario", "n", "trial", "estimator", "l2_error", "l1_error"]
        header += [f"coord_{i + 1}" for i in range(k)]
        header += [f"covered_{i + 1}" for i in range(kc)]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for r in self.rows:
                row = [r.scenario, r.n, r.trial, r.estimator, repr(r.l2_error), repr(r.l1_error)]
                row += [repr(c) for c in r.coords] + [""] * (k - len(r.coords))
                row += [str(c) for c in r.covered] + [""] * (kc - len(r.covered))
                writer.writerow(row)

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({"spec": self.spec.to_dict(), "summary": self.summary}, fh, indent=2)
            fh.write("\n")

    def save(self, out_dir) -> tuple[str, str]:
        import os

        base = f"{self.spec.scenario}_seed{self.spec.seed}"
        csv_path = os.path.join(out_dir, base + ".csv")
        json_path = os.path.join(out_dir, base + ".json")
        self.to_csv(csv_path)
        self.to_json(json_path)
        return csv_path, json_path


def _errors(beta_hat: np.ndarray, beta_star: np.ndarray) -> tuple[float, float]:
    diff = beta_hat - beta_star
    return float(np.linalg.norm(diff)), float(np.abs(diff).sum())


def _mean_and_var_summary(rows: list[ReportRow]) -> dict:
    mean_l2: dict = {}
    mean_l1: dict = {}
    coord_var: dict = {}
    keys = sorted({(r.n, r.estimator) for r in rows})
    for n, est in keys:
        sel = [r for r in rows if r.n == n and r.estimator == est]
        mean_l2.setdefault(str(n), {})[est] = float(np.mean([r.l2_error for r in sel]))
        mean_l1.setdefault(str(n), {})[est] = float(np.mean([r.l1_error for r in sel]))
        coords = np.asarray([r.coords for r in sel])
        coord_var.setdefault(str(n), {})[est] = [float(v) for v in coords.var(axis=0, ddof=1)] if len(sel) > 1 else None
    return {"mean_l2": mean_l2, "mean_l1": mean_l1, "coord_variance": coord_var}


def run_consistency(spec: ExperimentSpec) -> ExperimentReport:
    """Sweep n_grid: per trial, the adaptive fit then the one-step correction,
    recording l2/l1 errors against the simulation truth."""
    if spec.scenario not in ("fig1", "fig2", "custom"):
        raise ValueError("run_consistency expects scenario fig1, fig2, or custom")
    mom = MoMConfig(delta=spec.delta)
    lep = _lepski_config(spec)
    rows: list[ReportRow] = []
    for n in spec.n_grid:
        for trial in range(spec.trials):
            sim = _sim_for(spec, n, trial)
            data = generate(sim)
            support = np.flatnonzero(data.beta_star)
            try:
                res = adaptive_fit(data, lep, mom)
                l2, l1 = _errors(res.beta, data.beta_star)
                rows.append(ReportRow(spec.scenario, n, trial, "lepski", l2, l1,
                                      tuple(float(v) for v in res.beta[support])))
                gl = spec.glasso_lambda
                theta = graphical_lasso(
                    sample_cov(data), default_glasso_lambda(n, data.p) if gl is None else gl
                )
                corrected = one_step(data, res.beta, theta, _score_for(sim))
                l2, l1 = _errors(corrected.b_psi, data.beta_star)
                rows.append(ReportRow(spec.scenario, n, trial, "one_step", l2, l1,
                                      tuple(float(v) for v in corrected.b_psi[support])))
            except (ValueError, RuntimeError, FloatingPointError) as exc:
                # record the failure, keep sweeping
                rows.append(ReportRow(spec.scenario, n, trial, f"failed:{type(exc).__name__}",
                                      math.nan, math.nan, ()))
    return ExperimentReport(spec, rows, _mean_and_var_summary(rows))


def run_coverage(spec: ExperimentSpec) -> ExperimentReport:
    """Per trial: adaptive fit, precision estimate, one-step with the t3 score
    and with the identity (gaussian) score, then one interval per nonzero
    coordinate at level 1 - alpha; records whether each interval covered."""
    if spec.scenario != "coverage":
        raise ValueError("run_coverage expects the coverage scenario")
    mom = MoMConfig(delta=spec.delta)
    lep = _lepski_config(spec)
    scores = {"one_step_t3": t3_score(), "one_step_gaussian": gaussian_score()}
    rows: list[ReportRow] = []
    for n in spec.n_grid:
        for trial in range(spec.trials):
            sim = _sim_for(spec, n, trial)
            data = generate(sim)
            support = np.flatnonzero(data.beta_star)
            try:
                res = adaptive_fit(data, lep, mom)
                gl = spec.glasso_lambda
                theta = graphical_lasso(
                    sample_cov(data), default_glasso_lambda(n, data.p) if gl is None else gl
                )
                for label, score in scores.items():
                    corrected = one_step(data, res.beta, theta, score)
                    covered = []
                    for j in support:
                        region = confidence_region(data, corrected, theta, score, [int(j)], spec.alpha)
                        lo, hi = region.per_coordinate_intervals[0]
                        covered.append(int(lo <= data.beta_star[j] <= hi))
                    l2, l1 = _errors(corrected.b_psi, data.beta_star)
                    rows.append(ReportRow(spec.scenario, n, trial, label, l2, l1,
                                          tuple(float(v) for v in corrected.b_psi[support]),
                                          tuple(covered)))
            except (ValueError, RuntimeError, FloatingPointError) as exc:
                rows.append(ReportRow(spec.scenario, n, trial, f"failed:{type(exc).__name__}",
                                      math.nan, math.nan, ()))
    summary = _mean_and_var_summary(rows)
    coverage: dict = {}
    for n in spec.n_grid:
        for label in scores:
            sel = [r for r in rows if r.n == n and r.estimator == label and r.covered]
            flat = [c for r in sel for c in r.covered]
            coverage.setdefault(str(n), {})[label] = float(np.mean(flat)) if flat else math.nan
    summary["coverage"] = coverage
    summary["alpha"] = spec.alpha
    return ExperimentReport(spec, rows, summary)


def run_mom_mad_checks(
    trials: int,
    seed: int,
    delta: float = 0.05,
    sample_size: int = 200,
    mad_sample: int = 1000,
) -> dict:
    """Monte Carlo validation of the scale-bracketing building blocks.

    (a) Median-of-means deviation: draw t3 samples (mean 0, second absolute
        central moment v = 3) and count how often the estimate leaves the
        high-probability band sqrt(12 v) * sqrt(16 log(e^(1/8)/delta) / n);
        the failure frequency should stay near delta.
    (b) MAD dominance: adding independent noise cannot shrink the median
        absolute deviation of a symmetric unimodal variable; checked on the
        normal/t3 pair via paired samples.
    """
    if trials < 100:
        raise ValueError("trials must be at least 100 for stable frequencies")
    cfg = MoMConfig(delta=delta)
    v = 3.0
    bound = math.sqrt(12.0 * v) * math.sqrt(16.0 * math.log(math.exp(0.125) / delta) / sample_size)
    failures = 0
    mad_x = np.empty(trials)
    mad_xy = np.empty(trials)
    for t in range(trials):
        rng = make_rng([int(seed), t])
        draws = _student_t_draws(rng, 3, sample_size)
        if abs(median_of_means(draws, cfg)) > bound:
            failures += 1
        x = rng.standard_normal(mad_sample)
        y = _student_t_draws(rng, 3, mad_sample)
        mad_x[t] = mad(x)
        mad_xy[t] = mad(x + y)
    diff = mad_xy - mad_x
    diff_se = float(diff.std(ddof=1) / math.sqrt(trials))
    return {
        "trials": trials,
        "delta": delta,
        "mom_bound": bound,
        "mom_failure_rate": failures / trials,
        "mad_x_mean": float(mad_x.mean()),
        "mad_xy_mean": float(mad_xy.mean()),
        "mad_diff_mean": float(diff.mean()),
        "mad_diff_se": diff_se,
        "mom_ok": failures / trials <= delta + 0.02,
        "mad_ok": float(diff.mean()) >= -3.0 * diff_se,
    }
