from __future__ import annotations

import math

import numpy as np
import pandas as pd
import pytest
import statsmodels.api as sm
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from cryptoap.characteristics import (BY_NAME, CATEGORIES, CHARACTERISTIC_NAMES, CHARACTERISTICS,
                                      CharacteristicContext, CharacteristicEngine, delta_log, distribution_change,
                                      illiquidity, industry_momentum, linear_quantile, min_obs, names_in,
                                      regression_stats, turnover, var_shortfall, write_dictionary)

floats = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def test_registry_shape():
    assert len(CHARACTERISTICS) == 63
    assert len(set(CHARACTERISTIC_NAMES)) == 63
    assert {s.category for s in CHARACTERISTICS} == set(CATEGORIES)
    assert sum(len(names_in(c)) for c in CATEGORIES) == 63
    assert BY_NAME["return_tm60"].window_days == 60


def test_write_dictionary(tmp_path):
    d = pd.read_csv(write_dictionary(tmp_path / "c.csv"))
    assert list(d["name"]) == list(CHARACTERISTIC_NAMES)


@given(st.lists(floats, min_size=1, max_size=60), st.floats(0, 1))
@settings(max_examples=200, deadline=None)
def test_linear_quantile_matches_numpy(xs, q):
    assert linear_quantile(np.array(xs), q) == pytest.approx(np.quantile(xs, q, method="linear"), abs=1e-9)


def test_var_shortfall_known_values():
    r = np.arange(1, 21, dtype=float)  # 5% quantile at rank 1.95
    var, es = var_shortfall(r)
    assert var == pytest.approx(1.95)
    assert es == 1.0
    assert math.isnan(var_shortfall(np.ones(5))[1])
    assert all(math.isnan(v) for v in var_shortfall(np.array([np.nan])))


def test_regression_stats_against_statsmodels():
    rng = np.random.default_rng(3)
    x = rng.normal(0, 0.01, 200)
    y = 0.001 + 1.3 * x + rng.normal(0, 0.005, 200)
    s = regression_stats(y, x, 7, floor=10)
    fit = sm.OLS(y, sm.add_constant(x)).fit()
    assert_allclose([s.alpha, s.beta], fit.params, rtol=1e-10)
    assert s.ivol == pytest.approx(np.std(fit.resid, ddof=1), rel=1e-10)
    quad = sm.OLS(y, np.column_stack([np.ones(200), x, x * x])).fit()
    assert s.coskew == pytest.approx(quad.params[2], rel=1e-8)
    xd, yd = np.minimum(x, 0), np.minimum(y, 0)
    assert s.beta_down == pytest.approx(sm.OLS(yd, sm.add_constant(xd)).fit().params[1], rel=1e-10)


def test_regression_stats_degenerate():
    assert math.isnan(regression_stats(np.ones(50), np.ones(50), 7, floor=10).beta)
    assert math.isnan(regression_stats(np.arange(5.0), np.arange(5.0), 7).beta)  # below the floor
    s = regression_stats(2 * np.arange(40.0), np.arange(40.0), 7, floor=10)
    assert s.beta == pytest.approx(2.0) and s.ivol == 0.0


def test_small_kernels():
    assert min_obs(168) == 24 and min_obs(24 * 90) == 216
    assert illiquidity(np.array([0.01, 0.03]), np.array([100.0, 300.0])) == pytest.approx(0.02 / 200)
    assert math.isnan(illiquidity(np.array([0.1]), np.array([0.0])))
    assert turnover(50.0, 1000.0) == 0.05 and math.isnan(turnover(1.0, 0.0))
    assert delta_log(math.e, 1.0) == pytest.approx(1.0)
    assert math.isnan(delta_log(0.0, 1.0))
    lv = np.array([[1.0, 2.0], [2.0, 2.0], [3.0, 1.0]])
    assert distribution_change(lv) == pytest.approx(8.0 / 3.0)
    assert math.isnan(distribution_change(np.ones((3, 2))))


def test_industry_momentum_includes_self():
    out = industry_momentum(np.array([0.1, 0.3, -0.2, np.nan]), np.array([1.0, 3.0, 2.0, 5.0]),
                            np.array(["a", "a", "b", "a"], dtype=object))
    assert_allclose(out, [0.25, 0.25, -0.2, 0.25])


def _context(hours=24 * 100, n=3, seed=0):
    rng = np.random.default_rng(seed)
    idx = pd.date_range("2021-01-01", periods=hours, freq="h", tz="UTC")
    price = 100 * np.exp(np.cumsum(rng.normal(0, 0.01, (hours, n)), axis=0))
    vol = rng.uniform(0, 1000, (hours, n))
    cap = np.full((hours, n), 1e9)
    days = pd.date_range(idx[0], idx[-1].floor("D"), freq="D")
    return CharacteristicContext(idx, [f"A{i}" for i in range(n)], price, vol, cap, np.zeros(hours),
                                 rng.normal(0, 0.01, hours), days)


def test_engine_momentum_and_volume():
    ctx = _context()
    b = 24 * 95
    members = np.array([0, 2])
    out = CharacteristicEngine().compute_week(ctx, b, members)
    assert set(out) == set(CHARACTERISTIC_NAMES)
    for d in (7, 30, 90):
        assert_allclose(out[f"return_tm{d}"], ctx.price[b - 1, members] / ctx.price[b - 1 - 24 * d, members] - 1)
    assert_allclose(out["return_tm30_tm14"], out["return_tm30"] - out["return_tm14"])
    assert_allclose(out["volume_sum_tm7"], ctx.volume[b - 168:b, members].sum(axis=0))
    r = ctx.excess_returns[b - 168:b, members]
    assert_allclose(out["vol_tm7"], r.std(axis=0, ddof=1))
    assert_allclose(out["price"], ctx.price[b - 1, members])
    # no feeds in this context
    assert np.isnan(out["social_volume"]).all()


def test_engine_short_history_is_absent():
    ctx = _context(hours=24 * 20)
    out = CharacteristicEngine().compute_week(ctx, 24 * 10, np.array([0]))
    assert np.isnan(out["return_tm30"]).all() and np.isfinite(out["return_tm7"]).all()


def test_engine_rejects_unknown():
    with pytest.raises(ValueError, match="unknown"):
        CharacteristicEngine(("return_tm7", "astrology"))
