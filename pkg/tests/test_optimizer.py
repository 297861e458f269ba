import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qtransport.dynamics import ModelSpec
from qtransport.lattice import build
from qtransport.observables import dwelling_time
from qtransport.optimizer import (
    averaged_dwelling_time,
    decay_rate_peak,
    fit_scaling,
    reinit_estimate,
    scan_family,
    scan_optimal_p,
)


def test_scan_matches_brute_force_minimum():
    model = ModelSpec(build("chain", 10, "end"))
    res = scan_optimal_p(model, tol=1e-6)
    ps = np.linspace(res.p_opt - 0.01, res.p_opt + 0.01, 201)
    t = [dwelling_time(model.with_p(p)) for p in ps]
    assert res.p_opt == pytest.approx(ps[int(np.argmin(t))], abs=1e-4)
    assert res.tbar_opt <= min(t) + 1e-9
    assert not res.flagged


def test_scan_result_csv(tmp_path):
    res = scan_optimal_p(ModelSpec(build("chain", 5, "end")), n_grid=7)
    path = tmp_path / "pscan.csv"
    res.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "p,tbar" and len(lines) == 8


def test_degenerate_range_returns_the_point():
    model = ModelSpec(build("chain", 6, "end"))
    res = scan_optimal_p(model, p_range=(0.0, 0.0))
    assert res.p_opt == 0.0
    assert res.tbar_opt == pytest.approx(dwelling_time(model.with_p(0.0)))


@pytest.mark.parametrize("rng_", [(-0.1, 0.5), (0.3, 0.2), (0.1, 1.0)])
def test_invalid_ranges(rng_):
    with pytest.raises(ValueError):
        scan_optimal_p(ModelSpec(build("chain", 4, "end")), p_range=rng_)


def test_locked_network_scan_avoids_p_zero():
    # t-bar is infinite at p = 0 on the clean 5x5 square; the grid value is inf
    model = ModelSpec(build("square", 5, "corner"))
    res = scan_optimal_p(model, p_range=(0.0, 0.5), n_grid=12)
    assert math.isinf(res.tbar[0])
    assert res.p_opt > 0 and math.isfinite(res.tbar_opt)


def test_averaged_exits_equal_mean_of_tbar():
    lats = build("chain", 5, "all-sites-averaged")
    models = [ModelSpec(l) for l in lats]
    avg = averaged_dwelling_time(models, 0.1)
    assert avg == pytest.approx(np.mean([dwelling_time(m.with_p(0.1)) for m in models]))


def test_flag_on_non_unimodal_grid(monkeypatch):
    import qtransport.optimizer as opt

    wiggly = lambda models, p, *a: math.sin(40 * p) + p
    monkeypatch.setattr(opt, "averaged_dwelling_time", wiggly)
    res = opt.scan_optimal_p(ModelSpec(build("chain", 4, "end")), n_grid=25)
    assert res.flagged
    assert res.p_opt in res.p_grid


def test_scan_family_rectangle_uses_n_by_n_plus_one():
    res = scan_family("rectangle", [3], "corner", n_grid=9, tol=1e-3)
    direct = scan_optimal_p(ModelSpec(build("rectangle", (3, 4), "corner")), n_grid=9, tol=1e-3)
    assert res[3].p_opt == pytest.approx(direct.p_opt)


def test_fit_recovers_exact_law():
    b, c = 1.45, 8.3
    Ns = np.arange(10, 101, 5)
    data = {N: (b / (N + c)) / (1 + b / (N + c)) for N in Ns}
    rep = fit_scaling(data)
    assert rep.b == pytest.approx(b, rel=1e-8)
    assert rep.c == pytest.approx(c, rel=1e-7)
    assert rep.b_linear == pytest.approx(b, rel=1e-8)
    assert np.abs(rep.residuals).max() < 1e-10
    np.testing.assert_allclose(rep.p_opt(Ns), [data[N] for N in Ns], rtol=1e-8)


def test_fit_intervals_cover_truth_under_noise():
    rng = np.random.default_rng(5)
    b, c = 2.0, 5.0
    Ns = np.arange(10, 101, 5).astype(float)
    hits = 0
    trials = 200
    for _ in range(trials):
        y = b / (Ns + c) * (1 + 0.01 * rng.normal(size=Ns.size))
        rep = fit_scaling({N: yy / (1 + yy) for N, yy in zip(Ns, y)})
        hits += rep.ci_b[0] <= b <= rep.ci_b[1]
    # nominal 95%; allow for the linearised covariance and finite trials
    assert 0.88 <= hits / trials <= 0.99


def test_fit_intervals_agree_with_statsmodels_style_formula():
    # compare against an independent computation of J^T J
    from scipy import stats

    Ns = np.array([10.0, 20, 30, 40, 60, 80])
    y = np.array([0.075, 0.049, 0.037, 0.030, 0.021, 0.016])
    rep = fit_scaling({N: v / (1 + v) for N, v in zip(Ns, y)})
    r = y - rep.b / (Ns + rep.c)
    Jm = np.column_stack([1 / (Ns + rep.c), -rep.b / (Ns + rep.c) ** 2])
    s2 = r @ r / (len(Ns) - 2)
    cov = s2 * np.linalg.inv(Jm.T @ Jm)
    half = stats.t.ppf(0.975, len(Ns) - 2) * np.sqrt(np.diag(cov))
    assert rep.ci_b[1] - rep.b == pytest.approx(half[0], rel=1e-4)
    assert rep.ci_c[1] - rep.c == pytest.approx(half[1], rel=1e-4)


def test_fit_needs_three_points_and_valid_p():
    with pytest.raises(ValueError):
        fit_scaling({10: 0.1, 20: 0.05})
    with pytest.raises(ValueError):
        fit_scaling({10: 0.1, 20: 0.0, 30: 0.03})


def test_fit_report_json():
    rep = fit_scaling({10: 0.07, 20: 0.05, 40: 0.03})
    d = rep.to_dict()
    assert set(d) >= {"b", "c", "ci_b", "ci_c", "residuals"}
    assert '"b"' in rep.to_json()


def test_decay_rate_peak_on_synthetic_curve():
    # -ln P / tau = a tau exp(-tau / t0) peaks at tau = t0
    t0 = 12.0
    P = lambda t: math.exp(-(t ** 2) * math.exp(-t / t0) / 50)
    res = decay_rate_peak(P, 60.0)
    assert res.tau_opt == pytest.approx(t0, rel=1e-4)
    assert res.p_est == pytest.approx(1 / (1 + t0))


def test_decay_rate_peak_ignores_left_boundary():
    # gamma is largest at tau -> 0 but also has an interior bump
    P = lambda t: math.exp(-(0.5 + 0.3 * t * math.exp(-((t - 20) / 5) ** 2)))
    res = decay_rate_peak(P, 60.0)
    assert 15 < res.tau_opt < 25


def test_decay_rate_peak_flat_and_monotone():
    flat = decay_rate_peak(lambda t: math.exp(-0.1 * t), 50.0)
    assert flat.degenerate and math.isnan(flat.tau_opt)
    with pytest.raises(ValueError):
        decay_rate_peak(lambda t: math.exp(-math.sqrt(t)), 50.0)


def test_reinit_small_chain_is_consistent_with_window_growth():
    a = reinit_estimate(12, Gamma=3.0)
    b = reinit_estimate(12, Gamma=3.0, window=200.0, n_grid=1000)
    assert a.tau_opt == pytest.approx(b.tau_opt, rel=1e-3)
    with pytest.raises(ValueError):
        reinit_estimate(1)
    with pytest.raises(ValueError):
        reinit_estimate(10, Gamma=0.0)


@settings(max_examples=10, deadline=None)
@given(N=st.integers(6, 14))
def test_p_opt_inside_range_and_below_half(N):
    res = scan_optimal_p(ModelSpec(build("chain", N, "end")), tol=1e-4)
    assert 1e-3 < res.p_opt < 0.5
