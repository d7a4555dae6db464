"""Panel diagnostics: univariate signal regressions, correlations, PCA, MI and performance tables."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
import pandas as pd

from . import metrics
from ._io import write_frame, write_table
from .characteristics import BY_NAME, CATEGORIES
from .ingest import Dataset
from .panel import HORIZONS, Panel, cmkt, return_column, weekly_excess_return

OTHER = "other"


def category_of(name: str) -> str:
    spec = BY_NAME.get(name)
    return spec.category if spec is not None else OTHER


def groups(p: Panel) -> dict[str, list[str]]:
    """Panel characteristics grouped by category, in registry order."""
    out: dict[str, list[str]] = {}
    for c in p.characteristic_names:
        out.setdefault(category_of(c), []).append(c)
    order = [*CATEGORIES, OTHER]
    return {k: out[k] for k in order if k in out}


def standardize(x) -> np.ndarray:
    x = np.asarray(x, float)
    ok = np.isfinite(x)
    sd = x[ok].std(ddof=1) if ok.sum() > 1 else math.nan
    if not np.isfinite(sd) or sd == 0:
        return np.full_like(x, np.nan)
    return (x - x[ok].mean()) / sd


# ---------------------------------------------------------------------------
# univariate signal regressions

SIGNAL_HEADER = ["characteristic", "category", "horizon", "coefficient", "se", "t", "stars", "r_squared",
                 "n_obs", "lags"]


def signal_regression(p: Panel, name: str, horizon: int, lags: int | None = None) -> metrics.RegressionResult:
    """Pooled OLS of the ``horizon``-day excess return on a constant and the
    standardized characteristic, with Bartlett HAC errors.

    Rows are ordered by asset then week so the kernel sees each asset's series
    contiguously.
    """
    f = p.frame.sort_values(["asset_id", "week_start"], kind="stable")
    x = standardize(f[name].to_numpy(float))
    y = f[return_column(horizon)].to_numpy(float)
    ok = np.isfinite(x) & np.isfinite(y)
    if ok.sum() < 3:
        raise ValueError(f"{name}: too few observations at horizon {horizon}")
    return metrics.ols_hac(y[ok], metrics.add_constant(x[ok]), lags)


def signal_table(p: Panel, names=None, horizons=HORIZONS, lags: int | None = None) -> pd.DataFrame:
    names = list(p.characteristic_names if names is None else names)
    rows = []
    for c in names:
        for h in horizons:
            try:
                res = signal_regression(p, c, h, lags)
            except (ValueError, np.linalg.LinAlgError):
                rows.append([c, category_of(c), h, math.nan, math.nan, math.nan, "", math.nan, 0, None])
                continue
            t = float(res.t_stats[1])
            rows.append([c, category_of(c), h, float(res.coefficients[1]), float(res.se[1]), t,
                         metrics.significance_stars(t), res.r_squared, res.n_obs, res.lags_used])
    return pd.DataFrame(rows, columns=SIGNAL_HEADER)


# ---------------------------------------------------------------------------
# correlations and principal components

def complete_block(p: Panel, names) -> pd.DataFrame:
    block = p.frame[list(names)].astype(float)
    return block.loc[np.isfinite(block.to_numpy()).all(axis=1)]


def usable_columns(block: pd.DataFrame) -> list[str]:
    sd = block.std(ddof=1)
    return [c for c in block.columns if np.isfinite(sd[c]) and sd[c] > 0]


def pca_table(p: Panel) -> tuple[pd.DataFrame, pd.DataFrame]:
    """Per category: loadings and explained ratio of the first component, and
    the correlation matrix among categories' first-component scores.

    Constant characteristics are left out of a group's component.
    """
    rows, scores = [], {}
    full = p.frame
    for cat, names in groups(p).items():
        block = complete_block(p, names)
        cols = usable_columns(block)
        if len(cols) < 2 or len(block) < 2:
            continue
        pc = metrics.first_pc(block[cols])
        for c, load in zip(cols, pc.loadings):
            rows.append([cat, c, float(load), pc.explained_variance_ratio, len(block)])
        s = pd.Series(np.nan, index=full.index)
        s.loc[block.index] = pc.scores
        scores[cat] = s
    loadings = pd.DataFrame(rows, columns=["category", "characteristic", "loading", "explained_ratio", "n_obs"])
    cats = list(scores)
    corr = metrics.pearson_matrix(pd.DataFrame(scores)) if cats else pd.DataFrame()
    return loadings, corr


def correlation_table(p: Panel, names) -> pd.DataFrame:
    """Pearson matrix of standardized characteristics plus their first component."""
    block = complete_block(p, names)
    cols = usable_columns(block)
    z = pd.DataFrame({c: standardize(block[c].to_numpy(float)) for c in cols}, index=block.index)
    if len(cols) >= 2 and len(block) >= 2:
        z["pc1"] = metrics.first_pc(block[cols]).scores
    return metrics.pearson_matrix(z)


def write_pca(loadings: pd.DataFrame, corr: pd.DataFrame, path) -> Path:
    """One long table: ``loading`` rows and ``pc_correlation`` rows."""
    rows = [["loading", r.category, r.characteristic, r.loading, r.explained_ratio, r.n_obs]
            for r in loadings.itertuples(index=False)]
    for a in corr.index:
        for b in corr.columns:
            rows.append(["pc_correlation", a, b, corr.loc[a, b], None, None])
    return write_table(path, ["table", "row", "column", "value", "explained_ratio", "n_obs"], rows)


# ---------------------------------------------------------------------------
# mutual information

MI_HEADER = ["characteristic", "category", "year", "mi_nats", "n_pairs"]


def mi_by_year(p: Panel, names=None, horizon: int = 7) -> pd.DataFrame:
    """MI between each characteristic and the forward return, per calendar year and overall."""
    names = list(p.characteristic_names if names is None else names)
    f = p.frame
    years = f["week_start"].dt.year
    y = f[return_column(horizon)].to_numpy(float)
    rows = []
    for c in names:
        x = f[c].to_numpy(float)
        for label, mask in [*((str(yr), (years == yr).to_numpy()) for yr in sorted(years.unique())),
                            ("all", np.ones(len(f), dtype=bool))]:
            ok = mask & np.isfinite(x) & np.isfinite(y)
            n = int(ok.sum())
            mi = metrics.mutual_information(x[ok], y[ok]) if n >= metrics.MI_MIN_PAIRS else math.nan
            rows.append([c, category_of(c), label, mi, n])
    return pd.DataFrame(rows, columns=MI_HEADER)


# ---------------------------------------------------------------------------
# performance

def reference_weekly_excess(d: Dataset, name: str, weeks: pd.DatetimeIndex) -> pd.Series:
    """Weekly forward excess return of a reference price series on the panel weeks."""
    level = d.reference_series(name).dropna().sort_index()
    rf = d.reference_series("risk_free_1m") if "risk_free_1m" in set(d.reference["name"]) else pd.Series(
        dtype=float)
    grid = weeks.append(pd.DatetimeIndex([weeks[-1] + pd.Timedelta(days=7)]))
    pos = level.index.searchsorted(grid, side="right") - 1
    px = pd.Series(np.where(pos >= 0, level.to_numpy(float)[np.clip(pos, 0, None)], np.nan), index=grid)
    return weekly_excess_return(px, rf, 7).reindex(weeks).rename(name)


def asset_weekly_excess(p: Panel, asset_id: str) -> pd.Series:
    return p.wide(return_column(7))[asset_id].rename(asset_id)


def largest_assets(p: Panel, k: int = 2) -> list[str]:
    mean_cap = p.frame.groupby("asset_id")["market_cap_usd"].mean()
    return list(mean_cap.sort_values(ascending=False, kind="stable").index[:k])


PERF_STATS = ("mean_ann", "vol_ann", "sharpe_ann", "geometric_ann", "skew", "kurtosis", "pct_positive", "n_obs")


def performance_series(p: Panel, d: Dataset | None = None, blend_weight: float = 0.6) -> pd.DataFrame:
    """Weekly excess returns of CMKT, the two largest assets and, when available,
    the Nasdaq and a weekly-rebalanced Nasdaq/CMKT blend."""
    m = cmkt(p)
    cols = {"cmkt": m}
    for a in largest_assets(p):
        cols[a] = asset_weekly_excess(p, a).reindex(m.index)
    if d is not None and len(d.reference) and "nasdaq" in set(d.reference["name"]):
        nq = reference_weekly_excess(d, "nasdaq", pd.DatetimeIndex(m.index))
        cols["nasdaq"] = nq
        cols[f"blend_nasdaq_{round(blend_weight * 100)}"] = metrics.blend(nq, m.rename("nasdaq").set_axis(nq.index),
                                                                          blend_weight)
    return pd.DataFrame(cols)


def performance_table(series: pd.DataFrame) -> pd.DataFrame:
    """Long table with ``summary`` and ``correlation`` sections."""
    rows = []
    for name in series.columns:
        r = series[name].to_numpy(float)
        try:
            st = metrics.perf_stats(r)
        except ValueError:
            continue
        for k in PERF_STATS:
            rows.append(["summary", name, k, getattr(st, k)])
    corr = metrics.pearson_matrix(series)
    for a in corr.index:
        for b in corr.columns:
            rows.append(["correlation", a, b, corr.loc[a, b]])
    return pd.DataFrame(rows, columns=["table", "series", "statistic", "value"])


def write_signal(table: pd.DataFrame, path) -> Path:
    return write_frame(path, table[SIGNAL_HEADER])


def write_mi(table: pd.DataFrame, path) -> Path:
    return write_frame(path, table[MI_HEADER])


def write_perf(table: pd.DataFrame, path) -> Path:
    return write_frame(path, table)
