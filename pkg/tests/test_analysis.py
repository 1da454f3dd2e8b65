import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from concsketch.analysis import (
    EstimatorStats,
    QuantilesErrorParams,
    ThetaErrorParams,
    adversary_estimates,
    joint_pdf,
    quantiles_adversary_worst_split,
    quantiles_range,
    quantiles_rank_range,
    quantiles_relaxation_error_bound,
    simulate_adversary,
    stats_row,
    strong_choice,
    strong_estimate_stats,
    weak_exact_stats,
    weak_expectation,
    weak_rse_bound,
    worst_split_bruteforce,
)


def test_params_validation():
    with pytest.raises(ValueError):
        ThetaErrorParams(10, 2, 1)
    with pytest.raises(ValueError):
        ThetaErrorParams(10, 5, 5)
    with pytest.raises(ValueError):
        ThetaErrorParams(100, 5, -1)
    with pytest.raises(ValueError):
        QuantilesErrorParams(phi=0.5, n=10, r=2, eps=0.01, i=2, j=1)


def test_weak_expectation():
    assert weak_expectation(ThetaErrorParams(1000, 10, 0)) == 1000
    assert weak_expectation(ThetaErrorParams(2**15, 2**10, 8)) == pytest.approx(32513.7, abs=0.05)
    vals = [weak_expectation(ThetaErrorParams(5000, 64, r)) for r in range(10)]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    assert all(v <= 5000 for v in vals)


def test_weak_rse_bound():
    assert weak_rse_bound(1024, 0) == pytest.approx(0.03128, abs=5e-6)
    assert weak_rse_bound(1024, 8) == pytest.approx(0.03911, abs=5e-6)
    assert weak_rse_bound(102, 10) == pytest.approx(2 / math.sqrt(100))
    with pytest.raises(ValueError):
        weak_rse_bound(2, 0)


def test_weak_exact_stats_match_monte_carlo():
    p = ThetaErrorParams(4096, 64, 4)
    exact = weak_exact_stats(p)
    mc = simulate_adversary(p, "weak", 4000, seed=3)
    assert abs(mc.mean - exact.mean) < 3 * mc.se_mean
    assert abs(mc.rse - exact.rse) < 3 * mc.se_rse


def test_joint_pdf_support():
    p = ThetaErrorParams(50, 5, 2)
    assert joint_pdf(0.3, 0.2, p) == 0.0
    assert joint_pdf(-0.1, 0.2, p) == 0.0
    assert joint_pdf(0.1, 1.2, p) == 0.0
    assert joint_pdf(0.1, 0.12, p) > 0
    arr = joint_pdf(np.array([0.1, 0.3]), np.array([0.12, 0.2]), p)
    assert arr[0] > 0 and arr[1] == 0


def test_joint_pdf_no_overflow_at_scale():
    p = ThetaErrorParams(2**15, 2**10, 8)
    a = 1023 / 2**15
    v = joint_pdf(a, a + 8 / 2**15, p)
    assert np.isfinite(v) and v > 0


def test_joint_pdf_needs_positive_r():
    with pytest.raises(ValueError):
        joint_pdf(0.1, 0.2, ThetaErrorParams(50, 5, 0))


def test_strong_r0_is_sequential():
    p = ThetaErrorParams(4096, 64, 0)
    s = strong_estimate_stats(p)
    assert s.mean == pytest.approx(4096, rel=1e-4)
    exact = weak_exact_stats(p)  # r=0: both are (k-1)/M_(k)
    assert s.rse == pytest.approx(exact.rse, rel=1e-4)


def test_strong_is_worse_than_weak():
    p = ThetaErrorParams(4096, 64, 4)
    strong = strong_estimate_stats(p)
    assert strong.rse > weak_exact_stats(p).rse
    assert strong.rse > strong_estimate_stats(ThetaErrorParams(4096, 64, 0)).rse


def test_strong_choice_picks_further_estimate():
    n, k = 1000, 11
    # (k-1)/m: 0.01 -> 1000 (exact), 0.02 -> 500
    assert strong_choice(0.01, 0.02, n, k) == 500
    assert strong_choice(0.005, 0.0055, n, k) == 2000


def test_adversary_draws_shared():
    p = ThetaErrorParams(2000, 32, 3)
    est = adversary_estimates(p, 500, seed=1)
    n = p.n
    assert np.all(np.abs(est["strong"] - n) >= np.abs(est["weak"] - n))
    assert np.all(np.abs(est["strong"] - n) >= np.abs(est["sequential"] - n))
    assert simulate_adversary(p, "strong", 500, 1).rse >= simulate_adversary(p, "weak", 500, 1).rse


def test_r0_modes_identical():
    p = ThetaErrorParams(2000, 32, 0)
    assert simulate_adversary(p, "weak", 300, 5) == simulate_adversary(p, "strong", 300, 5)


def test_simulation_deterministic_and_validated():
    p = ThetaErrorParams(2000, 32, 3)
    assert simulate_adversary(p, "weak", 100, 9) == simulate_adversary(p, "weak", 100, 9)
    with pytest.raises(ValueError):
        simulate_adversary(p, "medium", 10, 0)
    with pytest.raises(ValueError):
        simulate_adversary(p, "weak", 0, 0)


@pytest.mark.parametrize("mode", ["weak", "strong"])
def test_rse_decomposition(mode):
    # RSE <= sqrt(var)/n + |mean - n|/n, up to Monte-Carlo slack
    p = ThetaErrorParams(4096, 64, 4)
    s = simulate_adversary(p, mode, 3000, seed=11)
    bound = math.sqrt(s.variance) / p.n + abs(s.mean - p.n) / p.n
    assert s.rse <= bound + 3 * s.se_rse


def test_quantiles_range_example():
    lo, hi = quantiles_range(QuantilesErrorParams(phi=0.25, n=1000, r=8, eps=0.01))
    assert (lo, hi) == pytest.approx((246.08, 265.92))


@given(st.floats(0, 1), st.integers(1, 10**6), st.floats(0.001, 0.49))
def test_quantiles_range_r0_is_pac(phi, n, eps):
    lo, hi = quantiles_range(QuantilesErrorParams(phi=phi, n=n, r=0, eps=eps))
    assert lo == pytest.approx(phi * n - eps * n, abs=1e-6 * n)
    assert hi == pytest.approx(phi * n + eps * n, abs=1e-6 * n)


def test_quantiles_range_boundary_half():
    q = QuantilesErrorParams(phi=0.5, n=1000, r=8, eps=0.01)
    lo, hi = quantiles_range(q)
    center = (lo + hi) / 2
    assert center == pytest.approx(0.5 * 1000 + 0.5 * 8)
    alt = 0.5 * 1000 - 0.5 * 8
    assert abs(center - 500) == abs(alt - 500)


def test_rank_range_symmetric_center():
    q = QuantilesErrorParams(phi=0.3, n=1000, r=10, eps=0.02, i=4, j=3)
    lo, hi = quantiles_rank_range(q)
    assert (lo + hi) / 2 == pytest.approx(0.3 * (1000 - 7) + 4)


def test_relaxation_error_bound():
    assert quantiles_relaxation_error_bound(0.01, 0) == 0
    assert quantiles_relaxation_error_bound(0.01, 128) == pytest.approx(126.72)
    for phi in np.linspace(0, 1, 21):
        b = quantiles_relaxation_error_bound(0.01, 128)
        assert b >= ((1 - phi) - 0.01) * 128 and b >= (phi - 0.01) * 128


def test_worst_split_rule():
    assert quantiles_adversary_worst_split(0.3, 8) == (8, 0)
    assert quantiles_adversary_worst_split(0.9, 8) == (0, 8)
    with pytest.raises(ValueError):
        quantiles_adversary_worst_split(1.2, 8)


def test_worst_split_bruteforce_agrees():
    for r in range(21):
        for phi in np.linspace(0, 1, 41):
            split, dev = worst_split_bruteforce(phi, r)
            rule = quantiles_adversary_worst_split(phi, r)
            i, j = rule
            assert abs((1 - phi) * i - phi * j) == pytest.approx(dev)
            if phi != 0.5 and r > 0 and 0 < phi < 1:
                assert split == rule


def test_stats_row_columns():
    p = ThetaErrorParams(100, 5, 1)
    row = stats_row("x", p, EstimatorStats(99.0, 1.0, 0.1), 0.5)
    assert row["mode"] == "x" and row["mean_over_n"] == 0.99 and row["rse_bound"] == 0.5
