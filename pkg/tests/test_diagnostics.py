from __future__ import annotations

import numpy as np
import pandas as pd
import pytest
import statsmodels.api as sm
from numpy.testing import assert_allclose

from cryptoap import diagnostics as dg
from cryptoap import metrics
from cryptoap.panel import HORIZONS, Panel, fill_missing, return_column


@pytest.fixture(scope="module")
def panel(small_panel):
    return fill_missing(small_panel)


def test_groups_follow_categories(panel):
    g = dg.groups(panel)
    assert list(g)[0] == "onchain"
    assert sum(len(v) for v in g.values()) == len(panel.characteristic_names)
    assert dg.category_of("nonexistent") == dg.OTHER


def test_signal_regression_against_statsmodels(panel):
    res = dg.signal_regression(panel, "return_tm14", 7, lags=3)
    f = panel.frame.sort_values(["asset_id", "week_start"], kind="stable")
    x = dg.standardize(f["return_tm14"].to_numpy(float))
    y = f[return_column(7)].to_numpy(float)
    ok = np.isfinite(x) & np.isfinite(y)
    ref = sm.OLS(y[ok], sm.add_constant(x[ok])).fit(cov_type="HAC", cov_kwds={"maxlags": 3, "use_correction": False})
    assert_allclose(res.coefficients, ref.params, rtol=1e-10)
    assert_allclose(res.se, ref.bse, rtol=1e-10)


def test_signal_table_shape(panel, tmp_path):
    names = panel.characteristic_names[:4]
    t = dg.signal_table(panel, names)
    assert list(t.columns) == dg.SIGNAL_HEADER
    assert len(t) == 4 * len(HORIZONS)
    back = pd.read_csv(dg.write_signal(t, tmp_path / "s.csv"))
    assert len(back) == len(t)


def test_standardize():
    z = dg.standardize(np.array([1.0, 2.0, 3.0, np.nan]))
    assert_allclose(z[:3], [-1.0, 0.0, 1.0]) and np.isnan(z[3])
    assert np.isnan(dg.standardize(np.ones(4))).all()


def test_pca_and_correlation(panel, tmp_path):
    loadings, corr = dg.pca_table(panel)
    assert set(loadings["category"]) <= set(dg.groups(panel))
    assert (loadings["explained_ratio"].between(0, 1)).all()
    assert_allclose(np.diag(corr.to_numpy()), 1.0)
    names = dg.groups(panel)["momentum"]
    c = dg.correlation_table(panel, names)
    assert "pc1" in c.columns
    df = pd.read_csv(dg.write_pca(loadings, corr, tmp_path / "pca.csv"))
    assert set(df["table"]) == {"loading", "pc_correlation"}


def test_mi_by_year_marks_thin_years():
    rng = np.random.default_rng(0)
    weeks = pd.to_datetime(["2020-12-28"] * 10 + ["2021-01-04"] * 100, utc=True)
    f = pd.DataFrame({"week_start": weeks, "asset_id": [f"a{i}" for i in range(110)], "market_cap_usd": 1.0,
                      return_column(7): rng.normal(size=110), "x": rng.normal(size=110)})
    t = dg.mi_by_year(Panel(f, ("x",)))
    assert t["year"].tolist() == ["2020", "2021", "all"]
    assert np.isnan(t["mi_nats"].iloc[0]) and t["n_pairs"].tolist() == [10, 100, 110]
    assert t["mi_nats"].iloc[2] == pytest.approx(metrics.mutual_information(f["x"], f[return_column(7)]))


def test_performance_table(panel, small_synthetic, tmp_path):
    s = dg.performance_series(panel, small_synthetic)
    assert s.columns[0] == "cmkt" and "nasdaq" in s and "blend_nasdaq_60" in s
    assert_allclose(s["blend_nasdaq_60"], 0.6 * s["nasdaq"] + 0.4 * s["cmkt"])
    t = dg.performance_table(s)
    summary = t.loc[t["table"] == "summary"]
    assert set(summary["statistic"]) == set(dg.PERF_STATS)
    assert dg.write_perf(t, tmp_path / "perf.csv").exists()
