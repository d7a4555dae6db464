"""Two-pass Fama-MacBeth estimation of an observable factor's risk premium."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from . import metrics
from ._io import write_table

MIN_HISTORY_DAYS = 200
TWO_YEARS_DAYS = 730
MIN_PERIODS = 8


def factor_innovations(levels: pd.Series, dates=None) -> pd.Series:
    """First differences of a level series, optionally sampled on ``dates`` first.

    When ``dates`` is given the level is taken as the last observation at or
    before each date; a date with no fresh observation since the previous date
    leaves an absent innovation on both edges of the gap.
    """
    s = levels.dropna().sort_index()
    if len(s) < 2:
        raise ValueError("need at least two observations to difference")
    if dates is None:
        return s.diff().iloc[1:]
    dates = pd.DatetimeIndex(dates)
    pos = s.index.searchsorted(dates, side="right") - 1
    vals = np.where(pos >= 0, s.to_numpy(float)[np.clip(pos, 0, None)], np.nan)
    # a repeated source index means the date fell in a gap: no new information
    stale = np.zeros(len(dates), dtype=bool)
    stale[1:] = pos[1:] == pos[:-1]
    vals[stale] = np.nan
    out = pd.Series(vals, index=dates).diff()
    return out.iloc[1:]


@dataclass(frozen=True)
class BetaEstimate:
    asset_id: str
    loadings: np.ndarray  # one per factor, intercept excluded
    se: np.ndarray
    alpha: float
    n_obs: int


def estimate_betas(asset_returns: pd.DataFrame, factors: pd.DataFrame, min_history_days: int = MIN_HISTORY_DAYS,
                   ) -> dict[str, BetaEstimate]:
    """Full-sample time-series loadings of each asset on ``factors`` (plus a constant).

    ``asset_returns`` is ``periods x assets``. History is the calendar span from
    an asset's first to last non-absent return inclusive of one period, so a
    weekly series of 29 observations covers 203 days.

    Raises
    ------
    ValueError
        When no asset meets the history floor.
    """
    fac = factors.reindex(asset_returns.index)
    period = _period_days(asset_returns.index)
    out = {}
    for a in asset_returns.columns:
        r = asset_returns[a]
        ok = r.notna() & fac.notna().all(axis=1)
        if ok.sum() <= fac.shape[1] + 1:
            continue
        idx = r.index[ok]
        span = (idx[-1] - idx[0]).days + period
        if span < min_history_days:
            continue
        X = metrics.add_constant(fac.loc[ok].to_numpy(float))
        try:
            res = metrics.ols(r.loc[ok].to_numpy(float), X)
        except metrics.RankDeficientError:
            continue
        out[a] = BetaEstimate(a, res.coefficients[1:], res.se[1:], float(res.coefficients[0]), res.n_obs)
    if not out:
        raise ValueError(f"no asset has {min_history_days} days of history")
    return out


def _period_days(index) -> int:
    if len(index) < 2:
        return 0
    return int(pd.Series(index).diff().dt.days.median())


@dataclass(frozen=True)
class FMBResult:
    names: tuple[str, ...]  # "const" then factor names
    lam: np.ndarray
    se: np.ndarray
    t: np.ndarray
    lambdas: pd.DataFrame  # per-period slopes
    betas: dict = field(default_factory=dict)
    periods_used: int = 0
    assets_used: int = 0
    skipped_periods: tuple = ()


def fama_macbeth(panel_returns: pd.DataFrame, betas, factor_names=None, min_periods: int = MIN_PERIODS
                 ) -> FMBResult:
    """Cross-sectional regression of returns on ``(1, beta)`` each period, averaged.

    ``panel_returns`` is ``periods x assets``; ``betas`` maps asset to a loading
    vector (or :class:`BetaEstimate`), or is an ``assets x factors`` frame.
    ``min_periods`` guards against short samples; pass 1 to allow the degenerate
    single-period case, whose SE is absent.
    """
    B = _beta_frame(betas, factor_names)
    assets = [a for a in B.index if a in panel_returns.columns]
    if len(assets) < 2:
        raise ValueError("need betas for at least two assets")
    B = B.loc[assets]
    R = panel_returns[assets]
    k = B.shape[1]
    Bm = B.to_numpy(float)
    Rm = R.to_numpy(float)
    ok_all = np.isfinite(Rm)
    # periods sharing a missingness pattern share one design matrix
    patterns: dict[bytes, list[int]] = {}
    for i, ok in enumerate(ok_all):
        patterns.setdefault(ok.tobytes(), []).append(i)
    coef = np.full((len(R), k + 1), np.nan)
    used_assets = set()
    for idx in patterns.values():
        ok = ok_all[idx[0]]
        if ok.sum() <= k + 1:
            continue
        X = metrics.add_constant(Bm[ok])
        if np.linalg.matrix_rank(X) < k + 1:
            continue
        coef[idx] = np.linalg.lstsq(X, Rm[np.ix_(idx, np.flatnonzero(ok))].T, rcond=None)[0].T
        used_assets.update(np.asarray(assets)[ok])
    good = np.isfinite(coef).all(axis=1)
    rows = list(coef[good])
    used = list(R.index[good])
    skipped = list(R.index[~good])
    if not rows:
        raise ValueError("every period was skipped (collinear or too few assets)")
    if len(rows) < min_periods:
        raise ValueError(f"need at least {min_periods} usable periods, got {len(rows)}")
    names = ("const", *B.columns)
    lambdas = pd.DataFrame(np.vstack(rows), index=pd.Index(used, name=R.index.name), columns=names)
    T = len(rows)
    lam = lambdas.mean().to_numpy()
    if T > 1:
        se = lambdas.std(ddof=1).to_numpy() / math.sqrt(T)
    else:
        se = np.full(k + 1, np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        t_stat = np.where(se > 0, lam / se, np.nan)
    return FMBResult(names, lam, se, t_stat, lambdas, B.to_dict("index"), T, len(used_assets), tuple(skipped))


def _beta_frame(betas, factor_names) -> pd.DataFrame:
    if isinstance(betas, pd.DataFrame):
        return betas.astype(float)
    if isinstance(betas, pd.Series):
        return betas.astype(float).to_frame(factor_names[0] if factor_names else "beta")
    vecs = {a: np.atleast_1d(getattr(b, "loadings", b)).astype(float) for a, b in betas.items()}
    k = len(next(iter(vecs.values())))
    names = list(factor_names) if factor_names else [f"beta_{i}" for i in range(k)]
    return pd.DataFrame.from_dict(vecs, orient="index", columns=names)


def to_monthly(weekly_returns: pd.DataFrame) -> pd.DataFrame:
    """Compound weekly returns into calendar months (by week start), absent if any week is."""
    idx = pd.DatetimeIndex(weekly_returns.index)
    key = (idx.tz_localize(None) if idx.tz is not None else idx).to_period("M")
    g = (1.0 + weekly_returns).groupby(key)
    out = g.prod(min_count=1) - 1.0
    out[g.count() < g.size().to_numpy()[:, None]] = np.nan
    out.index = out.index.to_timestamp().tz_localize(idx.tz)
    return out


def inflation_premium(asset_returns: pd.DataFrame, expected_inflation: pd.Series, market: pd.Series,
                      min_history_days: int = MIN_HISTORY_DAYS, min_periods: int = MIN_PERIODS) -> FMBResult:
    """Premium on expected-inflation innovations controlling for the crypto market."""
    dates = pd.DatetimeIndex(asset_returns.index)
    step = pd.Timedelta(days=_period_days(dates))
    # returns are forward-looking from each date, so pair them with the change over the same period
    innov = factor_innovations(expected_inflation, dates.append(pd.DatetimeIndex([dates[-1] + step])))
    innov = pd.Series(innov.to_numpy(), index=dates, name="inflation")
    factors = pd.concat([innov, market.reindex(dates).rename("cmkt")], axis=1)
    b = estimate_betas(asset_returns, factors, min_history_days)
    return fama_macbeth(asset_returns, b, ["inflation", "cmkt"], min_periods)


FMB_HEADER = ["factor", "lambda", "se", "t", "periods_used", "assets_used"]


def write_fmb(result: FMBResult, path) -> Path:
    rows = [[n, result.lam[i], result.se[i], result.t[i], result.periods_used, result.assets_used]
            for i, n in enumerate(result.names)]
    return write_table(path, FMB_HEADER, rows)
