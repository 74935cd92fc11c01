"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines and timings.
"""

import json
import math
import time

import numpy as np
import pytest

from adahuber.dataset import Dataset, SimSpec, generate, make_rng
from adahuber.experiments import ExperimentSpec, run_consistency, run_coverage, run_mom_mad_checks
from adahuber.glasso import graphical_lasso, kkt_residual, sample_cov
from adahuber.huber import HuberConfig, WeightSpec, fit_huber, kkt_check
from adahuber.inference import efficiency_identity_check, one_step
from adahuber.lepski import LepskiConfig, select
from adahuber.cli import main as cli_main
from adahuber.score import gaussian_score

BIG_B = 1e12


def _report(num: int, name: str, ok: bool, detail: str, started: float):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {num:2d} ({name}): {detail} " \
           f"[{time.time() - started:.1f}s]"
    print(line)
    return line


def _batched_subgradient_oracle(instances, iters=30_000):
    """Best objective per instance from a decaying-step subgradient method,
    run simultaneously over zero-padded instances (independent arithmetic
    from the solver)."""
    B = len(instances)
    nmax = max(d.n for d, _, _ in instances)
    pmax = max(d.p for d, _, _ in instances)
    X = np.zeros((B, nmax, pmax))
    y = np.zeros((B, nmax))
    ns = np.zeros(B)
    taus = np.zeros(B)
    threshs = np.zeros(B)
    for i, (data, tau, lam) in enumerate(instances):
        X[i, : data.n, : data.p] = data.X
        y[i, : data.n] = data.y
        ns[i] = data.n
        taus[i] = tau
        threshs[i] = lam * tau

    def objectives(beta):
        u = np.einsum("bij,bj->bi", X, beta) - y
        au = np.abs(u)
        tt = taus[:, None]
        vals = np.where(au <= tt, 0.5 * u * u, tt * au - 0.5 * tt * tt)
        return vals.sum(axis=1) / ns + threshs * np.abs(beta).sum(axis=1)

    curvs = np.array([np.linalg.eigvalsh(d.X.T @ d.X / d.n).max() for d, _, _ in instances])
    steps = 1.0 / np.maximum(curvs, 1e-8)
    beta = np.zeros((B, pmax))
    best = objectives(beta)
    for t in range(1, iters + 1):
        u = np.einsum("bij,bj->bi", X, beta) - y
        clipped = np.clip(u, -taus[:, None], taus[:, None])
        grad = np.einsum("bi,bij->bj", clipped, X) / ns[:, None] + threshs[:, None] * np.sign(beta)
        beta = beta - (steps / math.sqrt(t))[:, None] * grad
        best = np.minimum(best, objectives(beta))
    return best


def test_criterion_1_solver_vs_subgradient_oracle():
    started = time.time()
    rng = make_rng(1001)
    instances = []
    fits = []
    for _ in range(50):
        n = int(rng.integers(5, 21))
        p = int(rng.integers(2, 21))
        X = rng.standard_normal((n, p))
        beta = np.zeros(p)
        beta[: max(1, p // 3)] = rng.standard_normal(max(1, p // 3))
        y = X @ beta + 0.4 * rng.standard_normal(n)
        data = Dataset(X, y)
        tau = float(rng.uniform(0.3, 2.0))
        lam = float(rng.uniform(0.0, 0.1))
        instances.append((data, tau, lam))
        cfg = HuberConfig(tau=tau, lam=lam, weights=WeightSpec(b=BIG_B))
        fits.append((fit_huber(data, cfg), data, cfg))
    oracle = _batched_subgradient_oracle(instances)
    gaps = np.array([est.objective_final for est, _, _ in fits]) - oracle
    kkts = np.array([est.kkt_residual for est, _, _ in fits])
    elapsed = time.time() - started
    ok = bool(np.all(gaps <= 1e-6) and np.all(kkts <= 1e-8) and elapsed < 10.0)
    _report(1, "solver vs subgradient oracle", ok,
            f"max objective gap {gaps.max():.2e} <= 1e-6, max kkt {kkts.max():.2e} <= 1e-8",
            started)
    assert np.all(gaps <= 1e-6)
    assert np.all(kkts <= 1e-8)
    assert elapsed < 10.0


def test_criterion_2_least_squares_reduction():
    started = time.time()
    rng = make_rng(1002)
    worst = 0.0
    for _ in range(10):
        n = int(rng.integers(12, 30))
        p = int(rng.integers(2, 9))
        X = rng.standard_normal((n, p))
        y = X @ rng.standard_normal(p) + 0.5 * rng.standard_normal(n)
        data = Dataset(X, y)
        cfg = HuberConfig(tau=10.0 * float(np.abs(y).max()), lam=0.0, weights=WeightSpec(b=BIG_B))
        est = fit_huber(data, cfg)
        ols = np.linalg.solve(X.T @ X, X.T @ y)
        worst = max(worst, float(np.abs(est.beta - ols).max()))
    elapsed = time.time() - started
    ok = worst <= 1e-6 and elapsed < 1.0
    _report(2, "least-squares reduction", ok, f"max l_inf gap {worst:.2e} <= 1e-6", started)
    assert worst <= 1e-6
    assert elapsed < 1.0


def test_criterion_3_scale_equivariance():
    started = time.time()
    rng = make_rng(1003)
    X = rng.standard_normal((25, 6))
    beta = np.zeros(6)
    beta[:2] = (1.0, -0.5)
    y = X @ beta + 0.4 * rng.standard_normal(25)
    data = Dataset(X, y)
    solver = dict(lam=0.01, weights=WeightSpec(b=1.4), tol=1e-15, kkt_tol=1e-12,
                  max_iter=200_000)
    base = fit_huber(data, HuberConfig(tau=0.5, **solver)).beta
    worst = 0.0
    for c in (0.5, 3.0):
        est = fit_huber(Dataset(X, c * y), HuberConfig(tau=c * 0.5, **solver))
        worst = max(worst, float(np.abs(est.beta - c * base).max()))
    elapsed = time.time() - started
    ok = worst <= 1e-8 and elapsed < 1.0
    _report(3, "scale equivariance", ok, f"max deviation {worst:.2e} <= 1e-8 for c in {{0.5, 3}}",
            started)
    assert worst <= 1e-8
    assert elapsed < 1.0


def test_criterion_4_selection_rule():
    started = time.time()
    cfg = LepskiConfig(C=1.0, k=1)
    hand = select(
        [(2.0, np.array([10.0, 0.0])), (4.0, np.array([0.0, 0.0])), (8.0, np.array([0.1, 0.0]))],
        cfg, n=100, p=100,
    )
    same = np.array([0.3, -0.7])
    equal = select([(1.0, same), (2.0, same), (4.0, same)], cfg, n=50, p=20)
    ok = hand.j_star == 2 and equal.j_star == 1
    _report(4, "grid selection rule", ok,
            f"hand-enumerated case j*={hand.j_star} (want 2), all-equal j*={equal.j_star} (want 1)",
            started)
    assert hand.j_star == 2
    np.testing.assert_array_equal(hand.beta, [0.0, 0.0])
    assert equal.j_star == 1
    assert time.time() - started < 1.0


def test_criterion_5_debiasing_identity():
    started = time.time()
    rng = make_rng(1005)
    worst = 0.0
    for _ in range(20):
        n = int(rng.integers(10, 40))
        p = int(rng.integers(2, 12))
        X = rng.standard_normal((n, p))
        y = X @ rng.standard_normal(p) + 0.3 * rng.standard_normal(n)
        data = Dataset(X, y)
        beta = rng.standard_normal(p)
        A = rng.standard_normal((p, p))
        theta = A @ A.T / p + np.eye(p)
        est = one_step(data, beta, theta, gaussian_score())
        direct = beta + theta @ X.T @ (y - X @ beta) / n
        worst = max(worst, float(np.abs(est.b_psi - direct).max()))
    elapsed = time.time() - started
    ok = worst <= 1e-10 and elapsed < 1.0
    _report(5, "debiasing identity", ok, f"max deviation {worst:.2e} <= 1e-10", started)
    assert worst <= 1e-10
    assert elapsed < 1.0


def test_criterion_6_precision_solver():
    started = time.time()
    rng = make_rng(1006)

    S3 = None
    inv_gap = 0.0
    for _ in range(3):
        A = rng.standard_normal((6, 6))
        S3 = (A @ A.T / 6 + np.eye(6) / 4)
        est0 = graphical_lasso(S3, 0.0, tol=1e-10)
        inv_gap = max(inv_gap, float(np.abs(est0.theta - np.linalg.inv(S3)).max()))

    ident = graphical_lasso(np.eye(5), 0.3)
    ident_exact = bool(np.array_equal(ident.theta, np.eye(5)))

    max_kkt = 0.0
    for _ in range(20):
        p = int(rng.integers(3, 31))
        A = rng.standard_normal((p, p))
        S = (A @ A.T / p + np.eye(p) / 5)
        est = graphical_lasso(S, 0.1)
        max_kkt = max(max_kkt, kkt_residual(S, est.theta, 0.1))

    S2 = np.array([[1.0, 0.5], [0.5, 1.0]])
    est2 = graphical_lasso(S2, 0.1, tol=1e-10)

    def obj2(a, b, c):
        return (a * S2[0, 0] + c * S2[1, 1] + 2 * b * S2[0, 1]
                - np.log(a * c - b * b) + 0.1 * 2 * np.abs(b))

    ours = obj2(est2.theta[0, 0], est2.theta[0, 1], est2.theta[1, 1])
    a = est2.theta[0, 0] + rng.uniform(-0.5, 0.5, 10**6)
    c = est2.theta[1, 1] + rng.uniform(-0.5, 0.5, 10**6)
    b = est2.theta[0, 1] + rng.uniform(-0.5, 0.5, 10**6)
    mask = (a > 0) & (c > 0) & (a * c - b * b > 1e-12)
    brute = obj2(a[mask], b[mask], c[mask]).min()

    elapsed = time.time() - started
    ok = (inv_gap <= 1e-8 and ident_exact and max_kkt <= 1e-8
          and ours <= brute + 1e-6 and elapsed < 30.0)
    _report(6, "precision-matrix solver", ok,
            f"inverse gap {inv_gap:.1e}, identity fixed point {ident_exact}, "
            f"max kkt {max_kkt:.1e}, 2x2 search gap {ours - brute:.1e}", started)
    assert inv_gap <= 1e-8
    assert ident_exact
    assert max_kkt <= 1e-8
    assert ours <= brute + 1e-6
    assert elapsed < 30.0


def test_criterion_7_efficiency_identity():
    started = time.time()
    v1, v2 = efficiency_identity_check(3)
    rel = abs(v1 - v2) / abs(v1)
    elapsed = time.time() - started
    ok = abs(v1 - 1.5) <= 1e-6 and abs(v2 - 1.5) <= 1e-6 and rel <= 1e-6 and elapsed < 1.0
    _report(7, "efficiency identity", ok, f"v1 = {v1:.9f}, v2 = {v2:.9f}, rel gap {rel:.1e}",
            started)
    assert abs(v1 - 1.5) <= 1e-6
    assert abs(v2 - 1.5) <= 1e-6
    assert rel <= 1e-6
    assert elapsed < 1.0


def test_criterion_8_coverage_reproduction():
    started = time.time()
    spec = ExperimentSpec(scenario="coverage", n_grid=(100,), trials=200, seed=7, p=10, alpha=0.1)
    rep = run_coverage(spec)
    t3_cov = rep.summary["coverage"]["100"]["one_step_t3"]
    gauss_cov = rep.summary["coverage"]["100"]["one_step_gaussian"]

    # undercoverage direction for p = 50 (the paper-style high-dimensional runs)
    spec50 = ExperimentSpec(scenario="coverage", n_grid=(100,), trials=100, seed=7, p=50, alpha=0.1)
    t3_cov50 = run_coverage(spec50).summary["coverage"]["100"]["one_step_t3"]

    elapsed = time.time() - started
    ok = (0.85 <= t3_cov <= 0.95) and (gauss_cov >= t3_cov - 0.05) and (t3_cov50 < 0.90) \
        and elapsed < 300.0
    _report(8, "coverage reproduction", ok,
            f"t3 coverage {t3_cov:.3f} in [0.85, 0.95], gaussian {gauss_cov:.3f} >= t3 - 0.05, "
            f"p=50 direction {t3_cov50:.3f} < 0.90", started)
    assert 0.85 <= t3_cov <= 0.95
    assert gauss_cov >= t3_cov - 0.05
    assert t3_cov50 < 0.90
    assert elapsed < 300.0


def test_criterion_9_consistency_scaling():
    started = time.time()
    ns = (100, 200, 400, 800)
    spec = ExperimentSpec(scenario="fig1", n_grid=ns, trials=10, seed=42)
    rep = run_consistency(spec)
    errs = np.array([rep.summary["mean_l2"][str(n)]["lepski"] for n in ns])
    slope = float(np.polyfit(np.log(ns), np.log(errs), 1)[0])
    decreasing = bool(np.all(np.diff(errs) < 0))
    in_band = -0.8 <= slope <= -0.2
    elapsed = time.time() - started
    ok = decreasing and in_band and elapsed < 600.0
    _report(9, "consistency scaling", ok,
            f"mean l2 errors {np.array2string(errs, precision=4)} strictly decreasing={decreasing}, "
            f"log-log slope {slope:.2f} (band [-0.8, -0.2])", started)
    assert decreasing
    # The slope band presumes the selected-estimate error tracks the
    # sqrt(k log p / n) rate. With the stated constants (C = 20, penalty
    # 0.005*sqrt(log p / n), grid depth 2 n^(1/3)), the selection settles on
    # the smallest grid scale, whose shrinking transition parameter drives the
    # l1-bias term down super-polynomially in n; the measured slope is
    # therefore steeper (more negative) than the band on every seed tried.
    # A fixed transition parameter at three times the true scale reproduces
    # slope -0.50 inside the band, confirming the rate itself; see the
    # companion check below.
    assert in_band, (
        f"log-log slope {slope:.3f} outside [-0.8, -0.2]; errors {errs.tolist()} "
        "(adaptive selection converges faster than the nominal rate at these settings)"
    )
    assert elapsed < 600.0


def test_criterion_9b_rate_check_at_oracle_scale():
    # companion diagnostic: with tau pinned to 3 * sigma_star, the fit error
    # follows the nominal square-root rate
    started = time.time()
    sigma_star = 0.01 * math.sqrt(3.0)
    ns = (100, 200, 400, 800)
    errs = []
    for n in ns:
        per = []
        for trial in range(10):
            from adahuber.experiments import trial_seed

            sim = SimSpec(n, 200, 4, (1.0,) * 4, "gaussian_identity", "student_t(3,0.01)",
                          trial_seed(42, n, trial))
            data = generate(sim)
            est = fit_huber(data, HuberConfig(tau=3 * sigma_star))
            per.append(float(np.linalg.norm(est.beta - data.beta_star)))
        errs.append(np.mean(per))
    slope = float(np.polyfit(np.log(ns), np.log(errs), 1)[0])
    ok = -0.8 <= slope <= -0.2
    _report(9, "rate check at oracle scale", ok, f"log-log slope {slope:.2f} in [-0.8, -0.2]",
            started)
    assert ok


def test_criterion_10_variance_reduction():
    started = time.time()
    spec = ExperimentSpec(scenario="fig1", n_grid=(400,), trials=30, seed=2024)
    rep = run_consistency(spec)
    var_lep = np.array(rep.summary["coord_variance"]["400"]["lepski"])
    var_one = np.array(rep.summary["coord_variance"]["400"]["one_step"])
    reduced = int(np.sum(var_one <= var_lep))
    elapsed = time.time() - started
    ok = reduced >= 3 and elapsed < 600.0
    _report(10, "one-step variance reduction", ok,
            f"one-step variance <= selected-fit variance on {reduced} of 4 nonzero coordinates",
            started)
    assert reduced >= 3
    assert elapsed < 600.0


def test_criterion_11_mom_mad_monte_carlo():
    started = time.time()
    out = run_mom_mad_checks(1000, seed=5)
    elapsed = time.time() - started
    ok = out["mom_ok"] and out["mad_ok"] and elapsed < 120.0
    _report(11, "median-of-means and MAD Monte Carlo", ok,
            f"deviation failure rate {out['mom_failure_rate']:.4f} <= {out['delta'] + 0.02:.3f}, "
            f"MAD diff {out['mad_diff_mean']:.4f} >= {-3 * out['mad_diff_se']:.5f}", started)
    assert out["mom_failure_rate"] <= out["delta"] + 0.02
    assert out["mad_diff_mean"] >= -3 * out["mad_diff_se"]
    assert elapsed < 120.0


def test_criterion_12_cli_determinism(tmp_path):
    started = time.time()
    d1, d2 = str(tmp_path / "run1"), str(tmp_path / "run2")
    args = ["simulate", "--scenario", "fig1", "--trials", "2", "--seed", "1", "--n-grid", "100"]
    rc1 = cli_main(args + ["--out-dir", d1])
    rc2 = cli_main(args + ["--out-dir", d2])
    b1 = open(f"{d1}/fig1_seed1.csv", "rb").read()
    b2 = open(f"{d2}/fig1_seed1.csv", "rb").read()
    elapsed = time.time() - started
    ok = rc1 == 0 and rc2 == 0 and b1 == b2 and len(b1) > 0 and elapsed < 60.0
    _report(12, "simulation determinism", ok,
            f"two seeded runs produced byte-identical CSV ({len(b1)} bytes)", started)
    assert rc1 == 0 and rc2 == 0
    assert b1 == b2 and len(b1) > 0
    assert elapsed < 60.0
