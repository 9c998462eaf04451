import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from numpy.testing import assert_allclose

from bpinn_ageing.metrics import (
    aggregate,
    crps,
    crps_gaussian,
    crps_samples,
    metrics_report,
    nll,
    picp,
    score,
)
from bpinn_ageing.fem_oracle import GridSpec
from bpinn_ageing.predictive import PosteriorPredictive

HALF_LOG_2PI = 0.5 * math.log(2 * math.pi)


def crps_by_integration(samples, y):
    """Exact integral of (F_S(z) - 1{z >= y})^2 over the real line."""
    pts = np.sort(np.append(samples, y))
    total = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        mid = 0.5 * (a + b)
        F = np.mean(samples <= mid)
        total += (F - (mid >= y)) ** 2 * (b - a)
    return total


def test_nll_trivial_values():
    m = np.linspace(0, 1, 12).reshape(3, 4)
    one = np.ones_like(m)
    assert_allclose(nll(m, one, m), HALF_LOG_2PI, rtol=1e-14)
    assert_allclose(nll(m, one, m + 1), HALF_LOG_2PI + 0.5, rtol=1e-14)


def test_nll_matches_pointwise_sum():
    rng = np.random.default_rng(0)
    m, y = rng.standard_normal((2, 30, 20))
    s = rng.uniform(0.1, 2, (30, 20))
    direct = sum(
        -math.log(math.exp(-((y[i, j] - m[i, j]) ** 2) / (2 * s[i, j] ** 2)) / math.sqrt(2 * math.pi * s[i, j] ** 2))
        for i in range(30)
        for j in range(20)
    ) / 600
    assert_allclose(nll(m, s, y), direct, rtol=1e-12)


def test_nll_floor_keeps_zero_std_finite():
    assert math.isfinite(nll([0.0], [0.0], [1.0]))


def test_nll_minimised_at_absolute_error():
    err = 0.37
    grid = np.linspace(0.01, 2, 20000)
    vals = [nll(0.0, s, err) for s in grid]
    assert abs(grid[int(np.argmin(vals))] - err) < 2e-4


def test_crps_perfect_forecast_is_zero():
    assert crps(np.full((10, 3), 2.5), np.full(3, 2.5)) == 0.0


def test_crps_gaussian_closed_form_at_zero():
    assert_allclose(crps_gaussian(0, 1, 0), 2 * math.exp(0) / math.sqrt(2 * math.pi) - 1 / math.sqrt(math.pi))
    assert abs(float(crps_gaussian(0, 1, 0)) - 0.23357) < 1e-3  # exact value 0.233695
    assert_allclose(crps_gaussian(0, 3.0, 0), 3 * crps_gaussian(0, 1, 0), rtol=1e-14)


def test_crps_sample_estimate_within_tolerance():
    x = np.random.default_rng(0).standard_normal(1000)
    assert abs(crps(x, 0.0) - 0.23357) <= 1e-2


def test_crps_error_halves_with_four_times_samples():
    rng = np.random.default_rng(1)
    exact = float(crps_gaussian(0, 1, 0))

    def rms_error(S):
        est = crps_samples(rng.standard_normal((S, 400)), np.zeros(400))
        return np.sqrt(np.mean((est - exact) ** 2))

    ratio = rms_error(250) / rms_error(1000)
    assert 1.6 <= ratio <= 2.5


def test_crps_two_point_ensemble():
    s = np.array([-1.0, 1.0])
    assert crps(s, 0.0) == 0.5
    assert crps_by_integration(s, 0.0) == 0.5
    assert crps(s, 0.0, fair=True) == 0.0


@given(
    arrays(np.float64, st.integers(2, 12), elements=st.floats(-5, 5)),
    st.floats(-6, 6),
)
@settings(max_examples=100, deadline=None)
def test_crps_equals_empirical_cdf_integral(samples, y):
    assert_allclose(crps(samples, y), crps_by_integration(samples, y), rtol=1e-9, atol=1e-12)


def test_crps_rejects_single_sample():
    with pytest.raises(ValueError):
        crps(np.zeros((1, 3)), np.zeros(3))


def test_picp_trivial_cases():
    y = np.linspace(-1, 1, 10)
    assert picp(y - 1e9, y + 1e9, y) == 1.0
    assert picp(y + 1, y + 1, y) == 0.0
    lo = np.where(np.arange(10) % 2 == 0, y - 0.1, y + 0.1)
    assert picp(lo, lo + 0.2, y) == 0.5
    with pytest.raises(ValueError):
        picp(y + 1, y, y)


@given(
    arrays(np.float64, 20, elements=st.floats(-3, 3)),
    arrays(np.float64, 20, elements=st.floats(0, 1)),
    arrays(np.float64, 20, elements=st.floats(0, 1)),
)
@settings(max_examples=100, deadline=None)
def test_picp_monotone_under_widening(y, half, extra):
    narrow = picp(-half, half, y)
    wide = picp(-half - extra, half + extra, y)
    assert wide >= narrow


def test_score_on_posterior_predictive():
    g = GridSpec(4, 5)
    rng = np.random.default_rng(2)
    samples = rng.standard_normal((50, 4, 5))
    p = PosteriorPredictive.from_samples(g, samples)
    ref = np.zeros((4, 5))
    s = score(p, ref)
    assert set(s) == {"PICP", "CRPS", "NLL"}
    assert s["CRPS"] == crps(samples, ref)
    assert s["NLL"] == nll(p.mean, p.std, ref)
    with pytest.raises(ValueError):
        score(p, np.zeros((3, 5)))


def test_single_seed_has_zero_std():
    agg = aggregate([{"PICP": 0.9, "CRPS": 0.1, "NLL": -1.0}])
    assert all(std == 0.0 for _, std in agg.values())
    with pytest.raises(ValueError):
        aggregate([])


def test_report_layout_and_records():
    per_seed = [{"PICP": p, "CRPS": 0.1 * p, "NLL": -p} for p in (0.8, 0.9, 1.0)]
    rep = metrics_report([({"prior": "laplace", "neurons": 50}, per_seed)])
    header = rep.to_table().splitlines()[0]
    for col in ("PICP (↑)", "CRPS (↓)", "NLL (↓)"):
        assert col in header
    assert "95%" in rep.to_table()
    recs = rep.to_records()
    assert [r["metric"] for r in recs] == ["PICP", "CRPS", "NLL"]
    assert recs[0]["prior"] == "laplace" and recs[0]["n_seeds"] == 3
    assert_allclose(recs[0]["mean"], 0.9)
    assert_allclose(recs[0]["std"], np.std([0.8, 0.9, 1.0]))
    assert rep.to_jsonl() == rep.to_jsonl()
