from __future__ import annotations

import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from cryptoap.factors import (assign_quintiles, is_monotone, quintile_breaks, quintile_matrix, sort_all,
                              sort_characteristic, summarize, weighted_quintile_returns, write_sorts)
from cryptoap.synthetic import SyntheticPanelConfig, generate_synthetic_panel


def test_seven_asset_labels():
    assert quintile_breaks(7) == [2, 3, 5, 6]
    assert assign_quintiles(np.arange(7.0)).tolist() == [1, 1, 2, 3, 3, 4, 5]


def test_ties_follow_asset_id():
    vals = np.array([1.0, 1.0, 1.0, 1.0, 1.0, 1.0])
    ids = ["F", "E", "D", "C", "B", "A"]
    # ranks go to A..F in that order
    assert assign_quintiles(vals, ids).tolist() == [5, 4, 3, 2, 1, 1]


def test_absent_and_too_few():
    out = assign_quintiles(np.array([np.nan, 3.0, 1.0, 2.0, 5.0, 4.0]))
    assert out.tolist() == [0, 3, 1, 2, 5, 4]
    with pytest.raises(ValueError):
        assign_quintiles(np.array([1.0, 2.0, np.nan, 3.0, 4.0]))


@given(st.lists(st.one_of(st.integers(0, 6).map(float), st.just(math.nan)), min_size=5, max_size=40))
@settings(max_examples=200, deadline=None)
def test_matrix_agrees_with_single_row(row):
    v = np.array(row)
    sortable = np.isfinite(v)
    got = quintile_matrix(v[None, :], sortable[None, :])[0]
    if sortable.sum() < 5:
        assert (got == 0).all()
    else:
        assert got.tolist() == assign_quintiles(v).tolist()
        # sizes never differ by more than one
        sizes = np.bincount(got[got > 0], minlength=6)[1:]
        assert sizes.max() - sizes.min() <= 1


def test_weighted_quintile_returns():
    labels = np.array([[1, 1, 5, 0]])
    out = weighted_quintile_returns(labels, np.array([[0.1, 0.3, -0.2, 9.0]]), np.array([[1.0, 3.0, 2.0, 5.0]]))
    assert out[0, 0] == pytest.approx(0.25) and out[0, 4] == pytest.approx(-0.2)
    assert np.isnan(out[0, 1:4]).all()


def test_summarize_and_monotone():
    idx = pd.date_range("2021-01-04", periods=10, freq="7D", tz="UTC")
    rng = np.random.default_rng(0)
    q = pd.DataFrame({f"q{k}": 0.01 * k + rng.normal(0, 0.001, 10) for k in range(1, 6)}, index=idx)
    s = summarize("x", q, hac=True)
    ls = q["q5"] - q["q1"]
    assert s.means[-1] == pytest.approx(ls.mean())
    assert s.t_stats[-1] == pytest.approx(ls.mean() / (ls.std(ddof=1) / math.sqrt(10)))
    assert s.monotone and s.weeks_used == 10 and np.isfinite(s.hac_t)
    assert is_monotone([5, 4, 3, 2, 1]) and not is_monotone([1, 2, 2, 3, 4])
    with pytest.raises(ValueError):
        summarize("x", q.iloc[:5])


@pytest.fixture(scope="module")
def planted():
    return generate_synthetic_panel(SyntheticPanelConfig(n_assets=60, n_weeks=120, premia={"sig": 0.02},
                                                         n_placebo=2), seed=3)


def test_planted_premium_recovered(planted):
    s = sort_characteristic(planted, "sig")
    assert s.means[-1] == pytest.approx(0.02, abs=3 * s.means[-1] / s.t_stats[-1])
    assert s.monotone


def test_sort_all_threads_and_writer(planted, tmp_path):
    a = sort_all(planted)
    b = sort_all(planted, workers=3)
    assert [r.characteristic for r in a] == ["sig", "placebo_00", "placebo_01"]
    for x, y in zip(a, b):
        assert_allclose(x.means, y.means)
    df = pd.read_csv(write_sorts(a, tmp_path / "sorts.csv"))
    assert df["ls_mean"].iloc[0] == pytest.approx(a[0].means[-1], rel=1e-9)
    assert df["monotone"].iloc[0] == 1


def test_sort_skips_thin_weeks(planted):
    f = planted.frame.copy()
    thin = f["week_start"] == f["week_start"].iloc[0]
    f.loc[thin & (f["asset_id"] > "A03"), "sig"] = np.nan
    from dataclasses import replace
    s = sort_characteristic(replace(planted, frame=f), "sig")
    assert len(s.skipped_weeks) == 1 and s.weeks_used == 119
