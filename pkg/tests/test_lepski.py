import math

import numpy as np
import pytest

from adahuber.dataset import Dataset, SimSpec, generate
from adahuber.huber import HuberConfig, WeightSpec
from adahuber.lepski import LepskiConfig, SelectionError, adaptive_fit, select
from adahuber.scale import MoMConfig, ScaleGrid


def _cfg(C=1.0, k=1, **kw):
    return LepskiConfig(C=C, k=k, **kw)


def test_select_all_equal_returns_smallest():
    beta = np.array([1.0, 2.0])
    estimates = [(0.5, beta), (1.0, beta), (2.0, beta)]
    res = select(estimates, _cfg(), n=100, p=50)
    assert res.j_star == 1
    np.testing.assert_array_equal(res.beta, beta)
    assert all(c.passed for c in res.comparison_log)


def test_select_single_point_is_vacuous():
    res = select([(1.0, np.array([3.0]))], _cfg(), n=10, p=2)
    assert res.j_star == 1
    assert res.comparison_log == []


def test_select_three_point_hand_example():
    # thresholds with C=1, k=1, n=p=100: sqrt(log(100)/100) = 0.21460...
    root = math.sqrt(math.log(100.0) / 100.0)
    assert root == pytest.approx(0.21460, abs=5e-6)
    estimates = [
        (2.0, np.array([10.0, 0.0])),
        (4.0, np.array([0.0, 0.0])),
        (8.0, np.array([0.1, 0.0])),
    ]
    res = select(estimates, _cfg(C=1.0, k=1), n=100, p=100)
    assert res.j_star == 2
    np.testing.assert_array_equal(res.beta, [0.0, 0.0])
    log = {(c.j, c.i): c for c in res.comparison_log}
    assert set(log) == {(1, 2), (1, 3), (2, 3)}
    assert log[(1, 2)].l2 == pytest.approx(10.0)
    assert log[(1, 2)].l2_threshold == pytest.approx(6 * 4.0 * root)
    assert not log[(1, 2)].passed
    assert log[(2, 3)].l2_threshold == pytest.approx(6 * 8.0 * root)
    assert log[(2, 3)].l1_threshold == pytest.approx(24 * 8.0 * root)
    assert log[(2, 3)].l2_threshold == pytest.approx(10.30, abs=0.01)
    assert log[(2, 3)].l1_threshold == pytest.approx(41.21, abs=0.01)
    assert log[(2, 3)].passed


def test_select_minimality_is_auditable():
    rng = np.random.default_rng(5)
    sigmas = [0.25 * 2.0**j for j in range(6)]
    estimates = [(s, rng.standard_normal(8)) for s in sigmas]
    res = select(estimates, _cfg(C=0.05, k=2), n=200, p=20)
    if res.j_star is not None and res.j_star > 1:
        below = [c for c in res.comparison_log if c.j == res.j_star - 1]
        assert any(not c.passed for c in below)
        assert all(c.passed for c in res.comparison_log if c.j == res.j_star)


def test_select_thresholds_increase_with_sigma():
    estimates = [(2.0**j, np.zeros(3)) for j in range(5)]
    res = select(estimates, _cfg(), n=50, p=10)
    for j in range(1, 5):
        ts = [c.l2_threshold for c in res.comparison_log if c.j == j]
        assert ts == sorted(ts) and len(set(ts)) == len(ts)


def test_select_invariant_under_joint_scaling():
    rng = np.random.default_rng(9)
    sigmas = [0.1 * 2.0**j for j in range(5)]
    betas = [rng.standard_normal(6) * 0.05 * s for s in sigmas]
    base = select(list(zip(sigmas, betas)), _cfg(C=0.5, k=1), n=120, p=30)
    c = 37.5
    scaled = select([(c * s, c * b) for s, b in zip(sigmas, betas)], _cfg(C=0.5, k=1), n=120, p=30)
    assert base.j_star == scaled.j_star


def test_select_validation():
    with pytest.raises(ValueError, match="empty"):
        select([], _cfg(), n=10, p=10)
    with pytest.raises(ValueError, match="increasing"):
        select([(2.0, np.zeros(2)), (1.0, np.zeros(2))], _cfg(), n=10, p=10)
    with pytest.raises(ValueError, match="n >= 2"):
        select([(1.0, np.zeros(2))], _cfg(), n=1, p=10)


def test_select_none_and_fallback():
    # a non-finite estimate at the largest scale can never be selected, and it
    # drags every smaller index down with it
    estimates = [(1.0, np.zeros(2)), (2.0, np.full(2, np.nan))]
    res = select(estimates, _cfg(), n=100, p=10)
    assert res.j_star is None and res.beta is None
    with pytest.warns(RuntimeWarning, match="largest"):
        res2 = select(estimates, _cfg(), n=100, p=10, fallback=True)
    assert res2.j_star == 2 and res2.fallback_used


def test_adaptive_fit_zero_noise_agrees_everywhere():
    spec = SimSpec(n=60, p=8, k=2, beta_values=(1.0, -1.0), error_dist="gaussian(0.0)", seed=3)
    data = generate(spec)
    lep = LepskiConfig(C=20.0, k=2, M=4,
                       huber_template=HuberConfig(lam=1e-10, weights=WeightSpec(b=1e12)))
    res = adaptive_fit(data, lep, MoMConfig(delta=0.05))
    assert res.j_star == 1
    betas = np.array([est.beta for _, est in res.per_grid])
    assert np.max(np.abs(betas - betas[0])) <= 1e-6


def test_adaptive_fit_deterministic():
    spec = SimSpec(n=80, p=10, k=3, beta_values=(1.0, 1.0, 1.0),
                   error_dist="student_t(3,0.05)", seed=21)
    data = generate(spec)
    lep = LepskiConfig(C=20.0, k=3, M=6)
    r1 = adaptive_fit(data, lep, MoMConfig(delta=0.05))
    r2 = adaptive_fit(data, lep, MoMConfig(delta=0.05))
    assert r1.j_star == r2.j_star
    assert [c.to_dict() for c in r1.comparison_log] == [c.to_dict() for c in r2.comparison_log]


def test_adaptive_fit_explicit_grid_and_result_shape():
    spec = SimSpec(n=50, p=6, k=2, beta_values=(2.0, -1.0), error_dist="gaussian(0.1)", seed=12)
    data = generate(spec)
    grid = ScaleGrid.build(sigma_max=4.0, M=3)
    lep = LepskiConfig(C=20.0, k=2, grid=grid)
    res = adaptive_fit(data, lep, MoMConfig())
    assert len(res.per_grid) == 3
    assert len(res.comparison_log) == 3  # all pairs of a 3-point grid
    assert res.j_star is not None
    d = res.to_dict()
    assert set(d) >= {"j_star", "beta", "per_grid", "comparison_log"}
    rows = res.grid_csv_rows()
    assert len(rows) == 3 and all(len(r) == 3 for r in rows)


def test_adaptive_fit_statistical_error_band():
    # heavy-tailed simulation at modest size: selected estimate lands within
    # the C-inflated theoretical radius in every seeded run, and is usually
    # much closer than the crude radius
    n, p, k, C = 200, 50, 4, 20.0
    sigma_star = 0.01 * math.sqrt(3)
    radius = 18.0 * C * sigma_star * math.sqrt(k * math.log(p) / n)
    errs = []
    for seed in range(10):
        spec = SimSpec(n=n, p=p, k=k, beta_values=(1.0,) * k,
                       covariate_dist="gaussian_identity",
                       error_dist="student_t(3,0.01)", seed=1000 + seed)
        data = generate(spec)
        res = adaptive_fit(data, LepskiConfig(C=C, k=k), MoMConfig(delta=0.05))
        errs.append(np.linalg.norm(res.beta - data.beta_star))
    assert max(errs) <= radius
    assert np.mean(errs) <= 0.5


def test_adaptive_fit_selection_error_without_fallback(monkeypatch):
    spec = SimSpec(n=40, p=5, k=1, beta_values=(1.0,), error_dist="gaussian(0.2)", seed=2)
    data = generate(spec)
    lep = LepskiConfig(C=20.0, k=1, M=3)

    import adahuber.lepski as mod

    real_select = mod.select

    def never_selects(estimates, cfg, n, p, fallback=None):
        res = real_select(estimates, cfg, n, p, fallback=False)
        res.j_star = None
        res.beta = None
        return res

    monkeypatch.setattr(mod, "select", never_selects)
    with pytest.raises(SelectionError):
        adaptive_fit(data, lep, MoMConfig())
