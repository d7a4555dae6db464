"""Weekly quintile sorts, value-weighted portfolio returns and long-short summaries."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from . import metrics
from ._io import write_table
from .panel import Panel, return_column

N_QUINTILES = 5
MIN_SORTABLE = 5
MIN_WEEKS = 8


def quintile_breaks(n: int) -> list[int]:
    """Upper rank of quintiles 1..4 under the ceiling rule, ``ceil(n k / 5)``."""
    return [(n * k + N_QUINTILES - 1) // N_QUINTILES for k in range(1, N_QUINTILES)]


def assign_quintiles(values, asset_ids=None) -> np.ndarray:
    """Labels 1..5 (1 = smallest) for one week's cross-section; 0 where absent.

    Ties keep the lexicographic order of ``asset_ids`` (array order when omitted).

    Raises
    ------
    ValueError
        Fewer than five non-absent values.
    """
    v = np.asarray(values, float)
    ok = np.flatnonzero(np.isfinite(v))
    if ok.size < MIN_SORTABLE:
        raise ValueError(f"need at least {MIN_SORTABLE} sortable assets, got {ok.size}")
    if asset_ids is not None:
        ids = np.asarray(asset_ids, dtype=object)[ok]
        ok = ok[np.argsort(ids, kind="stable")]
    order = ok[np.argsort(v[ok], kind="stable")]
    ranks = np.arange(1, ok.size + 1)
    labels = np.ones(ok.size, dtype=int)
    for b in quintile_breaks(ok.size):
        labels += ranks > b
    out = np.zeros(v.size, dtype=int)
    out[order] = labels
    return out


def quintile_matrix(values: np.ndarray, sortable: np.ndarray) -> np.ndarray:
    """Row-wise :func:`assign_quintiles` for a ``weeks x assets`` matrix.

    Columns must already be in lexicographic asset order. Rows with fewer than
    five sortable cells are all zero.
    """
    T, n = values.shape
    v = np.where(sortable, values, np.inf)
    order = np.argsort(v, axis=1, kind="stable")
    counts = sortable.sum(axis=1)
    ranks = np.arange(1, n + 1)[None, :]
    sorted_labels = np.ones((T, n), dtype=int)
    for k in range(1, N_QUINTILES):
        sorted_labels += ranks > ((counts * k + N_QUINTILES - 1) // N_QUINTILES)[:, None]
    sorted_labels[ranks > counts[:, None]] = 0
    labels = np.zeros((T, n), dtype=int)
    np.put_along_axis(labels, order, sorted_labels, axis=1)
    labels[counts < MIN_SORTABLE] = 0
    return labels


def weighted_quintile_returns(labels: np.ndarray, returns: np.ndarray, caps: np.ndarray) -> np.ndarray:
    """``weeks x 5`` cap-weighted mean returns; NaN for empty quintile-weeks."""
    T = labels.shape[0]
    out = np.full((T, N_QUINTILES), np.nan)
    r = np.nan_to_num(returns)
    for q in range(1, N_QUINTILES + 1):
        w = np.where(labels == q, caps, 0.0)
        tot = w.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            out[:, q - 1] = np.where(tot > 0, (w * r).sum(axis=1) / tot, np.nan)
    return out


def portfolio_returns(p: Panel, labels: pd.DataFrame, horizon: int = 7) -> pd.DataFrame:
    """Five value-weighted series from ``weeks x assets`` labels, caps at formation."""
    r = p.wide(return_column(horizon)).reindex(index=labels.index, columns=labels.columns)
    cap = p.wide("market_cap_usd").reindex(index=labels.index, columns=labels.columns)
    out = weighted_quintile_returns(labels.to_numpy(int), r.to_numpy(float), cap.fillna(0.0).to_numpy(float))
    return pd.DataFrame(out, index=labels.index, columns=[f"q{q}" for q in range(1, N_QUINTILES + 1)])


@dataclass(frozen=True)
class SortResult:
    characteristic: str
    quintile_returns: pd.DataFrame  # weeks x q1..q5
    long_short: pd.Series
    means: np.ndarray  # q1..q5, 5-1
    t_stats: np.ndarray
    sharpe_ann: float
    monotone: bool
    weeks_used: int
    skipped_weeks: tuple = field(default_factory=tuple)
    hac_t: float = math.nan


def _t_stat(x: np.ndarray) -> tuple[float, float]:
    x = x[np.isfinite(x)]
    if x.size < 2:
        return math.nan, math.nan
    m, sd = x.mean(), x.std(ddof=1)
    return float(m), (float(m / (sd / math.sqrt(x.size))) if sd > 0 else math.nan)


def is_monotone(means) -> bool:
    d = np.diff(np.asarray(means, float))
    return bool((d > 0).all() or (d < 0).all())


def summarize(characteristic: str, qret: pd.DataFrame, skipped=(), hac: bool = False) -> SortResult:
    """Time-series means, plain t-statistics, Sharpe and monotone flag of a sort."""
    qret = qret.dropna(how="all")
    ls = (qret["q5"] - qret["q1"]).rename("long_short")
    if ls.notna().sum() < MIN_WEEKS:
        raise ValueError(f"{characteristic}: fewer than {MIN_WEEKS} usable weeks")
    means, ts = [], []
    for col in [*qret.columns, None]:
        x = (ls if col is None else qret[col]).to_numpy(float)
        m, t = _t_stat(x)
        means.append(m)
        ts.append(t)
    x = ls.dropna().to_numpy(float)
    sd = x.std(ddof=1)
    sharpe = float(x.mean() / sd * math.sqrt(metrics.WEEKS_PER_YEAR)) if sd > 0 else math.nan
    hac_t = math.nan
    if hac and sd > 0:
        res = metrics.ols_hac(x, np.ones((x.size, 1)))
        hac_t = float(res.t_stats[0])
    return SortResult(characteristic, qret, ls, np.array(means), np.array(ts), sharpe,
                      is_monotone(means[:N_QUINTILES]), int(ls.notna().sum()), tuple(skipped), hac_t)


def _sort_frame(vals: pd.DataFrame, R: np.ndarray, C: np.ndarray, name: str, hac: bool) -> SortResult:
    V = vals.to_numpy(float)
    sortable = np.isfinite(V) & np.isfinite(R) & np.isfinite(C) & (C > 0)
    labels = quintile_matrix(V, sortable)
    skipped = tuple(vals.index[sortable.sum(axis=1) < MIN_SORTABLE])
    q = weighted_quintile_returns(labels, R, np.where(sortable, C, 0.0))
    qret = pd.DataFrame(q, index=vals.index, columns=[f"q{k}" for k in range(1, N_QUINTILES + 1)])
    return summarize(name, qret, skipped, hac)


def _base(p: Panel, horizon: int):
    r = p.wide(return_column(horizon))
    cap = p.wide("market_cap_usd").reindex_like(r)
    return r, cap


def sort_characteristic(p: Panel, name: str, horizon: int = 7, hac: bool = False) -> SortResult:
    """Weekly quintile sort on ``name``.

    Sortable assets have the characteristic, the forward return and a positive cap.
    """
    r, cap = _base(p, horizon)
    vals = p.wide(name).reindex_like(r)
    return _sort_frame(vals, r.to_numpy(float), cap.to_numpy(float), name, hac)


def sort_all(p: Panel, names=None, horizon: int = 7, workers: int = 1, hac: bool = False) -> list[SortResult]:
    """Sort every characteristic; those with too few usable weeks are left out."""
    names = list(p.characteristic_names if names is None else names)
    r, cap = _base(p, horizon)
    R, C = r.to_numpy(float), cap.to_numpy(float)

    def one(c):
        try:
            return _sort_frame(p.wide(c).reindex_like(r), R, C, c, hac)
        except ValueError:
            return None

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            res = list(pool.map(one, names))
    else:
        res = [one(c) for c in names]
    return [x for x in res if x is not None]


SORT_HEADER = ["characteristic", "q1_mean", "q2_mean", "q3_mean", "q4_mean", "q5_mean", "ls_mean",
               "q1_t", "q2_t", "q3_t", "q4_t", "q5_t", "ls_t", "stars", "sharpe_ann", "monotone",
               "weeks_used", "weeks_skipped"]


def write_sorts(results: list[SortResult], path) -> Path:
    rows = [[r.characteristic, *r.means, *r.t_stats, metrics.significance_stars(r.t_stats[-1]),
             r.sharpe_ann, r.monotone, r.weeks_used, len(r.skipped_weeks)] for r in results]
    return write_table(path, SORT_HEADER, rows)
