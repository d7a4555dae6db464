"""Asset characteristics: the 63-name dictionary, the numeric kernels behind
them, and an engine that evaluates every characteristic for a set of
(week, asset) cells over shared hourly/daily arrays."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from scipy import stats

CATEGORIES = ("onchain", "exchange", "social", "momentum", "microstructure", "financial")


@dataclass(frozen=True)
class CharacteristicSpec:
    name: str
    label: str
    category: str
    window_days: int
    source: str  # derived-from-returns | derived-from-feed | raw-feed
    formula: str


def _spec(name, label, category, window, source, formula):
    return CharacteristicSpec(name, label, category, window, source, formula)


CHARACTERISTICS: tuple[CharacteristicSpec, ...] = (
    # onchain
    _spec("tx_volume_tm7", "Tx Volume Tm7", "onchain", 7, "raw-feed", "sum of tx_volume over trailing 7 days"),
    _spec("active_addresses_tm7", "Active Addresses Tm7", "onchain", 7, "raw-feed",
          "sum of active_addresses over trailing 7 days"),
    _spec("delta_log_new_addresses_tm14_tm7", "Delta Log New Addresses Tm14-Tm7", "onchain", 14, "derived-from-feed",
          "log(new_addresses days t-7..t-1) - log(new_addresses days t-14..t-8)"),
    _spec("new_addresses_tm7", "New Addresses Tm7", "onchain", 7, "raw-feed",
          "sum of new_addresses over trailing 7 days"),
    _spec("total_addresses", "Total Addresses", "onchain", 7, "raw-feed", "latest total_addresses"),
    _spec("circulation_tm7", "Circulation Tm7", "onchain", 7, "raw-feed", "sum of circulation over trailing 7 days"),
    _spec("age_destroyed", "Age Destroyed", "onchain", 7, "raw-feed", "sum of age_destroyed over trailing 7 days"),
    _spec("delta_flow_distribution_tm7", "Delta Flow Distribution Tm7", "onchain", 7, "derived-from-feed",
          "sum of flow_* over week / sum over flow_* of |daily first differences| over week"),
    _spec("delta_holders_distribution_tm7", "Delta Holders Distribution Tm7", "onchain", 7, "derived-from-feed",
          "sum of holders_* over week / sum over holders_* of |daily first differences| over week"),
    _spec("pct_supply_in_profit", "% Supply in Profit", "onchain", 7, "raw-feed", "latest pct_supply_in_profit"),
    # exchange
    _spec("pct_circ_supply_cex", "% Circ. Supply CEX", "exchange", 7, "raw-feed", "latest pct_supply_cex"),
    _spec("pct_circ_supply_dex", "% Circ. Supply DEX", "exchange", 7, "raw-feed", "latest pct_supply_dex"),
    _spec("pct_circ_supply_defi", "% Circ. Supply Defi", "exchange", 7, "raw-feed", "latest pct_supply_defi"),
    _spec("pct_circ_supply_traders", "% Circ. Supply Traders", "exchange", 7, "raw-feed",
          "latest pct_supply_traders"),
    _spec("exchange_inflow", "Exchange Inflow", "exchange", 7, "raw-feed",
          "sum of exchange_inflow over trailing 7 days"),
    _spec("exchange_outflow", "Exchange Outflow", "exchange", 7, "raw-feed",
          "sum of exchange_outflow over trailing 7 days"),
    _spec("num_trading_pairs", "Number of Trading Pairs", "exchange", 7, "raw-feed", "latest num_trading_pairs"),
    # social
    _spec("social_volume", "Social Volume", "social", 7, "raw-feed", "sum of social_volume over trailing 7 days"),
    _spec("social_volume_reddit", "Social Volume Reddit", "social", 7, "raw-feed",
          "sum of social_volume_reddit over trailing 7 days"),
    _spec("social_volume_twitter", "Social Volume Twitter", "social", 7, "raw-feed",
          "sum of social_volume_twitter over trailing 7 days"),
    _spec("sentiment_pos_reddit", "Sentiment Pos. Reddit", "social", 7, "raw-feed",
          "sum of sentiment_pos_reddit over trailing 7 days"),
    _spec("sentiment_pos_twitter", "Sentiment Pos. Twitter", "social", 7, "raw-feed",
          "sum of sentiment_pos_twitter over trailing 7 days"),
    _spec("sentiment_neg_reddit", "Sentiment Neg. Reddit", "social", 7, "raw-feed",
          "sum of sentiment_neg_reddit over trailing 7 days"),
    _spec("sentiment_neg_twitter", "Sentiment Neg. Twitter", "social", 7, "raw-feed",
          "sum of sentiment_neg_twitter over trailing 7 days"),
    _spec("developer_activity", "Developer Activity", "social", 7, "raw-feed",
          "sum of developer_activity over trailing 7 days"),
    _spec("vc_owned", "VC Owned", "social", 0, "raw-feed", "1 if asset metadata vc_owned else 0"),
    # momentum
    _spec("return_tm7", "Return Tm7", "momentum", 7, "derived-from-returns", "P(t)/P(t-7d) - 1"),
    _spec("return_tm14", "Return Tm14", "momentum", 14, "derived-from-returns", "P(t)/P(t-14d) - 1"),
    _spec("return_tm30", "Return Tm30", "momentum", 30, "derived-from-returns", "P(t)/P(t-30d) - 1"),
    _spec("return_tm60", "Return Tm60", "momentum", 60, "derived-from-returns", "P(t)/P(t-60d) - 1"),
    _spec("return_tm90", "Return Tm90", "momentum", 90, "derived-from-returns", "P(t)/P(t-90d) - 1"),
    _spec("return_tm14_tm7", "Return Tm14-Tm7", "momentum", 14, "derived-from-returns",
          "Return Tm14 - Return Tm7"),
    _spec("return_tm30_tm14", "Return Tm30-Tm14", "momentum", 30, "derived-from-returns",
          "Return Tm30 - Return Tm14"),
    _spec("return_tm90_tm30", "Return Tm90-Tm30", "momentum", 90, "derived-from-returns",
          "Return Tm90 - Return Tm30"),
    _spec("return_from_ath", "Return from ATH", "momentum", 0, "derived-from-returns",
          "P(t)/max(P up to t) - 1"),
    _spec("return_from_atl", "Return from ATL", "momentum", 0, "derived-from-returns",
          "P(t)/min(P up to t) - 1"),
    _spec("return_industry_tm30", "Return Industry Tm30", "momentum", 30, "derived-from-returns",
          "cap-weighted Return Tm30 of panel members in the same industry (asset included)"),
    _spec("return_industry_tm60", "Return Industry Tm60", "momentum", 60, "derived-from-returns",
          "cap-weighted Return Tm60 of panel members in the same industry (asset included)"),
    # microstructure
    _spec("trades_sum_tm7", "Trades Sum Tm7", "microstructure", 7, "raw-feed", "sum of trades over trailing 7 days"),
    _spec("volume_sum_tm7", "Volume Sum Tm7", "microstructure", 7, "derived-from-returns",
          "sum of hourly USD volume over trailing 168 hours"),
    _spec("spread_bps", "Spread Bps", "microstructure", 7, "raw-feed", "latest spread_bps"),
    _spec("ask_size", "Ask Size", "microstructure", 7, "raw-feed", "latest ask_size"),
    _spec("bid_size", "Bid Size", "microstructure", 7, "raw-feed", "latest bid_size"),
    _spec("illiq_tm7", "Illiq Tm7", "microstructure", 7, "derived-from-returns",
          "mean |hourly return| / mean hourly USD volume over trailing 168 hours"),
    _spec("turnover_tm7", "Turnover Tm7", "microstructure", 7, "derived-from-feed",
          "sum of hourly volume in native units over trailing 168 hours / circulating_supply"),
    # financial
    _spec("price", "Price", "financial", 0, "derived-from-returns", "VWAP price at week start"),
    _spec("size", "Size", "financial", 0, "derived-from-returns", "free-float market cap at week start"),
    _spec("mvrv", "MVRV", "financial", 7, "raw-feed", "latest mvrv"),
    _spec("alpha_tm7", "Alpha Tm7", "financial", 7, "derived-from-returns", "intercept of OLS r_i ~ 1 + r_cmkt"),
    _spec("alpha_tm30", "Alpha Tm30", "financial", 30, "derived-from-returns", "intercept of OLS r_i ~ 1 + r_cmkt"),
    _spec("beta_tm7", "Beta Tm7", "financial", 7, "derived-from-returns", "slope of OLS r_i ~ 1 + r_cmkt"),
    _spec("beta_tm30", "Beta Tm30", "financial", 30, "derived-from-returns", "slope of OLS r_i ~ 1 + r_cmkt"),
    _spec("beta_downside_tm30", "Beta Downside Tm30", "financial", 30, "derived-from-returns",
          "slope of OLS min(r_i,0) ~ 1 + min(r_cmkt,0)"),
    _spec("coskew_tm30", "Coskew Tm30", "financial", 30, "derived-from-returns",
          "coefficient on r_cmkt^2 in OLS r_i ~ 1 + r_cmkt + r_cmkt^2"),
    _spec("iskew_tm30", "ISkew Tm30", "financial", 30, "derived-from-returns",
          "adjusted sample skewness of residuals of OLS r_i ~ 1 + r_cmkt + r_cmkt^2"),
    _spec("shortfall5_tm7", "Shortfall 5% Tm7", "financial", 7, "derived-from-returns",
          "mean of hourly excess returns strictly below VaR 5%"),
    _spec("var5_tm7", "VaR 5% Tm7", "financial", 7, "derived-from-returns",
          "5% quantile of hourly excess returns (linear interpolation at rank 1+(n-1)q)"),
    _spec("vol_tm7", "Vol Tm7", "financial", 7, "derived-from-returns", "std of hourly excess returns"),
    _spec("vol_tm30", "Vol Tm30", "financial", 30, "derived-from-returns", "std of hourly excess returns"),
    _spec("vol_tm90", "Vol Tm90", "financial", 90, "derived-from-returns", "std of hourly excess returns"),
    _spec("ivol_tm7", "Ivol Tm7", "financial", 7, "derived-from-returns", "std of residuals of OLS r_i ~ 1 + r_cmkt"),
    _spec("ivol_tm30", "Ivol Tm30", "financial", 30, "derived-from-returns",
          "std of residuals of OLS r_i ~ 1 + r_cmkt"),
    _spec("ivol_tm90", "Ivol Tm90", "financial", 90, "derived-from-returns",
          "std of residuals of OLS r_i ~ 1 + r_cmkt"),
)

CHARACTERISTIC_NAMES: tuple[str, ...] = tuple(s.name for s in CHARACTERISTICS)
BY_NAME = {s.name: s for s in CHARACTERISTICS}


def names_in(category: str) -> list[str]:
    return [s.name for s in CHARACTERISTICS if s.category == category]


def write_dictionary(path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["name", "category", "window", "source", "formula"])
        for s in CHARACTERISTICS:
            w.writerow([s.name, s.category, s.window_days, s.source, s.formula])
    return path


# ---------------------------------------------------------------------------
# kernels

def linear_quantile(x: np.ndarray, q: float) -> float:
    """Quantile by linear interpolation between order statistics at rank 1+(n-1)q."""
    x = np.sort(np.asarray(x, float))
    n = x.size
    if n == 0:
        return math.nan
    h = (n - 1) * q
    lo = int(math.floor(h))
    hi = min(lo + 1, n - 1)
    return float(x[lo] + (h - lo) * (x[hi] - x[lo]))


def var_shortfall(returns: np.ndarray, q: float = 0.05) -> tuple[float, float]:
    """Return ``(VaR, shortfall)``; shortfall is NaN when no return lies strictly below VaR."""
    r = np.asarray(returns, float)
    r = r[np.isfinite(r)]
    if r.size == 0:
        return math.nan, math.nan
    var = linear_quantile(r, q)
    tail = r[r < var]
    return var, (float(tail.mean()) if tail.size else math.nan)


def min_obs(window_hours: int) -> int:
    return max(24, math.ceil(0.1 * window_hours))


@dataclass(frozen=True)
class RollingRegressionStats:
    alpha: float
    beta: float
    beta_down: float
    coskew: float
    iskew: float
    ivol: float
    window_days: int
    n_obs: int


_ABSENT = math.nan


def _lstsq(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray] | None:
    coef, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < X.shape[1]:
        return None
    return coef, y - X @ coef


def regression_stats(r_asset: np.ndarray, r_mkt: np.ndarray, window_days: int,
                     floor: int | None = None) -> RollingRegressionStats:
    """Market-model statistics for one window of hourly excess returns.

    Pairs with a non-finite side are dropped. Anything that cannot be estimated
    (too few pairs, flat market, flat residuals for skewness) is NaN.
    """
    r_asset = np.asarray(r_asset, float)
    r_mkt = np.asarray(r_mkt, float)
    ok = np.isfinite(r_asset) & np.isfinite(r_mkt)
    y, x = r_asset[ok], r_mkt[ok]
    n = int(y.size)
    floor = min_obs(window_days * 24) if floor is None else floor
    nan = RollingRegressionStats(_ABSENT, _ABSENT, _ABSENT, _ABSENT, _ABSENT, _ABSENT, window_days, n)
    if n < floor or n < 3 or np.ptp(x) == 0.0:
        return nan
    ones = np.ones(n)
    fit = _lstsq(np.column_stack([ones, x]), y)
    if fit is None:
        return nan
    (alpha, beta), resid = fit
    ivol = float(np.std(resid, ddof=1))
    scale = max(float(np.std(y, ddof=1)), float(np.abs(y).max()), 1e-300)
    if ivol <= 1e-12 * scale:
        ivol = 0.0

    yd, xd = np.minimum(y, 0.0), np.minimum(x, 0.0)
    beta_down = _ABSENT
    if np.ptp(xd) > 0:
        fit_d = _lstsq(np.column_stack([ones, xd]), yd)
        if fit_d is not None:
            beta_down = float(fit_d[0][1])

    coskew, iskew = _ABSENT, _ABSENT
    fit_q = _lstsq(np.column_stack([ones, x, x * x]), y)
    if fit_q is not None:
        coskew = float(fit_q[0][2])
        res_q = fit_q[1]
        if np.std(res_q, ddof=1) > 1e-12 * scale and n >= 3:
            iskew = float(stats.skew(res_q, bias=False))
    return RollingRegressionStats(float(alpha), float(beta), beta_down, coskew, iskew, ivol, window_days, n)


def illiquidity(abs_returns: np.ndarray, dollar_volume: np.ndarray) -> float:
    """Mean absolute hourly return over mean hourly dollar volume; NaN on zero volume."""
    a = np.asarray(abs_returns, float)
    v = np.asarray(dollar_volume, float)
    a, v = a[np.isfinite(a)], v[np.isfinite(v)]
    if a.size == 0 or v.size == 0:
        return math.nan
    mv = v.mean()
    if not mv > 0:
        return math.nan
    return float(np.abs(a).mean() / mv)


def turnover(native_volume: float, circulating_supply: float) -> float:
    if not (np.isfinite(native_volume) and np.isfinite(circulating_supply)) or circulating_supply <= 0:
        return math.nan
    return float(native_volume / circulating_supply)


def delta_log(recent: float, prior: float) -> float:
    """``log(recent) - log(prior)``; NaN when either count is non-positive or absent."""
    if not (np.isfinite(recent) and np.isfinite(prior)) or recent <= 0 or prior <= 0:
        return math.nan
    return float(math.log(recent) - math.log(prior))


def distribution_change(levels: np.ndarray) -> float:
    """Ratio of the total over the week to the total absolute first difference.

    ``levels`` is ``(days, variables)``; the first row is the day before the
    window and only feeds the first difference. NaN when the denominator is 0.
    """
    levels = np.asarray(levels, float)
    if levels.ndim != 2 or levels.shape[0] < 2 or not np.isfinite(levels).all():
        return math.nan
    numerator = levels[1:].sum()
    denominator = np.abs(np.diff(levels, axis=0)).sum()
    return ratio(numerator, denominator)


def ratio(numerator: float, denominator: float) -> float:
    if not (np.isfinite(numerator) and np.isfinite(denominator)) or denominator == 0:
        return math.nan
    return float(numerator / denominator)


def industry_momentum(returns: np.ndarray, caps: np.ndarray, industries: np.ndarray) -> np.ndarray:
    """Cap-weighted mean return of each asset's industry, the asset itself included."""
    returns = np.asarray(returns, float)
    caps = np.asarray(caps, float)
    industries = np.asarray(industries, dtype=object)
    out = np.full(returns.shape, np.nan)
    ok = np.isfinite(returns) & np.isfinite(caps) & (caps > 0)
    for ind in set(industries[ok]):
        grp = ok & (industries == ind)
        w = caps[grp]
        val = float(np.dot(w, returns[grp]) / w.sum())
        out[industries == ind] = val
    return out


# ---------------------------------------------------------------------------
# engine

@dataclass
class CharacteristicContext:
    """Aligned arrays shared by every cell.

    ``price``, ``volume``, ``cap``: ``(hours, assets)``; ``rf_hourly`` and
    ``cmkt_hourly``: ``(hours,)`` excess-return inputs; ``feeds``: feed name ->
    ``(days, assets)`` with ``days[0]`` equal to ``hours[0]`` floored to a day.
    """

    hours: pd.DatetimeIndex
    assets: list[str]
    price: np.ndarray
    volume: np.ndarray
    cap: np.ndarray
    rf_hourly: np.ndarray
    cmkt_hourly: np.ndarray
    days: pd.DatetimeIndex
    feeds: dict = field(default_factory=dict)
    industry: np.ndarray | None = None
    vc_owned: np.ndarray | None = None

    def __post_init__(self):
        with np.errstate(invalid="ignore", divide="ignore"):
            simple = np.full_like(self.price, np.nan)
            simple[1:] = self.price[1:] / self.price[:-1] - 1.0
        self.simple_returns = simple
        self.excess_returns = simple - self.rf_hourly[:, None]
        filled = np.where(np.isfinite(self.price), self.price, np.nan)
        self.ath = np.fmax.accumulate(filled, axis=0)
        self.atl = np.fmin.accumulate(filled, axis=0)


class CharacteristicEngine:
    """Evaluates characteristics for ``(boundary hour, member assets)`` cells.

    A week starting at hour index ``b`` sees candles ``[.., b)``: the boundary
    price is the last candle before the week, ``price[b - 1]``.
    """

    def __init__(self, names: tuple[str, ...] = CHARACTERISTIC_NAMES):
        unknown = set(names) - set(BY_NAME)
        if unknown:
            raise ValueError(f"unknown characteristics {sorted(unknown)}")
        self.names = tuple(names)

    def compute_week(self, ctx: CharacteristicContext, b: int, members: np.ndarray) -> dict[str, np.ndarray]:
        """Values for column indices ``members`` at boundary hour ``b``."""
        out = {name: np.full(members.size, np.nan) for name in self.names}
        p_idx = b - 1
        if p_idx < 0:
            return out
        price = ctx.price
        p_now = price[p_idx, members]

        def trailing(days):
            j = p_idx - 24 * days
            if j < 0:
                return np.full(members.size, np.nan)
            with np.errstate(invalid="ignore", divide="ignore"):
                return p_now / price[j, members] - 1.0

        rets = {d: trailing(d) for d in (7, 14, 30, 60, 90)}
        for d in (7, 14, 30, 60, 90):
            out[f"return_tm{d}"] = rets[d]
        out["return_tm14_tm7"] = rets[14] - rets[7]
        out["return_tm30_tm14"] = rets[30] - rets[14]
        out["return_tm90_tm30"] = rets[90] - rets[30]
        with np.errstate(invalid="ignore", divide="ignore"):
            out["return_from_ath"] = p_now / ctx.ath[p_idx, members] - 1.0
            out["return_from_atl"] = p_now / ctx.atl[p_idx, members] - 1.0
        cap_now = ctx.cap[p_idx, members]
        if ctx.industry is not None:
            ind = ctx.industry[members]
            out["return_industry_tm30"] = industry_momentum(rets[30], cap_now, ind)
            out["return_industry_tm60"] = industry_momentum(rets[60], cap_now, ind)
        out["price"] = p_now.copy()
        out["size"] = cap_now.copy()
        if ctx.vc_owned is not None:
            out["vc_owned"] = ctx.vc_owned[members].astype(float)

        self._financial(ctx, b, members, out)
        self._microstructure(ctx, b, members, out)
        self._feeds(ctx, b, members, out)
        return {k: out[k] for k in self.names}

    def _financial(self, ctx, b, members, out):
        wanted = {"alpha_tm7", "alpha_tm30", "beta_tm7", "beta_tm30", "beta_downside_tm30", "coskew_tm30",
                  "iskew_tm30", "ivol_tm7", "ivol_tm30", "ivol_tm90", "var5_tm7", "shortfall5_tm7",
                  "vol_tm7", "vol_tm30", "vol_tm90"}
        if not wanted & set(self.names):
            return
        for days in (7, 30, 90):
            W = 24 * days
            lo = b - W
            if lo < 1:
                continue
            rm = ctx.cmkt_hourly[lo:b]
            block = ctx.excess_returns[lo:b, members]
            floor = min_obs(W)
            regress = any(n in self.names for n in (f"alpha_tm{days}", f"beta_tm{days}", f"ivol_tm{days}",
                                                     "beta_downside_tm30", "coskew_tm30", "iskew_tm30"))
            for k in range(members.size):
                ri = block[:, k]
                finite = ri[np.isfinite(ri)]
                if finite.size >= floor and finite.size >= 2:
                    out[f"vol_tm{days}"][k] = float(np.std(finite, ddof=1))
                if days == 7 and finite.size >= floor:
                    v, s = var_shortfall(finite)
                    out["var5_tm7"][k] = v
                    out["shortfall5_tm7"][k] = s
                if not regress:
                    continue
                st = regression_stats(ri, rm, days, floor)
                out[f"ivol_tm{days}"][k] = st.ivol
                if days in (7, 30):
                    out[f"alpha_tm{days}"][k] = st.alpha
                    out[f"beta_tm{days}"][k] = st.beta
                if days == 30:
                    out["beta_downside_tm30"][k] = st.beta_down
                    out["coskew_tm30"][k] = st.coskew
                    out["iskew_tm30"][k] = st.iskew

    def _microstructure(self, ctx, b, members, out):
        lo = b - 168
        if lo < 1:
            return
        vol = ctx.volume[lo:b, members]
        px = ctx.price[lo:b, members]
        absr = np.abs(ctx.simple_returns[lo:b, members])
        supply = self._feed_last(ctx, "circulating_supply", b, members)
        for k in range(members.size):
            v = vol[:, k]
            has = np.isfinite(v)
            if not has.any():
                continue
            out["volume_sum_tm7"][k] = float(v[has].sum())
            out["illiq_tm7"][k] = illiquidity(absr[:, k], v[has]) if (v[has] > 0).any() else math.nan
            with np.errstate(invalid="ignore", divide="ignore"):
                native = np.nansum(v / px[:, k])
            out["turnover_tm7"][k] = turnover(native, supply[k])

    # feeds -----------------------------------------------------------------

    @staticmethod
    def _day_index(ctx, b) -> int:
        boundary = ctx.hours[0] + pd.Timedelta(hours=b)
        return int((boundary.floor("D") - ctx.days[0]).days)

    @classmethod
    def _window(cls, ctx, name, b, members, days=7, offset=0):
        cube = ctx.feeds.get(name)
        if cube is None:
            return None
        end = cls._day_index(ctx, b) - offset
        lo = end - days
        if lo < 0:
            return None
        return cube[lo:end, members]

    @classmethod
    def _feed_sum(cls, ctx, name, b, members, offset=0):
        win = cls._window(ctx, name, b, members, offset=offset)
        if win is None:
            return np.full(members.size, np.nan)
        count = np.isfinite(win).sum(axis=0)
        with np.errstate(invalid="ignore"):
            total = np.nanmean(win, axis=0) * win.shape[0] if win.size else np.full(members.size, np.nan)
        full = np.nansum(win, axis=0)
        return np.where(count == win.shape[0], full, np.where(count > 0, total, np.nan))

    @classmethod
    def _feed_last(cls, ctx, name, b, members):
        win = cls._window(ctx, name, b, members)
        if win is None:
            return np.full(members.size, np.nan)
        out = np.full(members.size, np.nan)
        for k in range(members.size):
            col = win[:, k]
            idx = np.flatnonzero(np.isfinite(col))
            if idx.size:
                out[k] = col[idx[-1]]
        return out

    def _feeds(self, ctx, b, members, out):
        sums = {
            "tx_volume_tm7": "tx_volume", "active_addresses_tm7": "active_addresses",
            "new_addresses_tm7": "new_addresses", "circulation_tm7": "circulation",
            "age_destroyed": "age_destroyed", "exchange_inflow": "exchange_inflow",
            "exchange_outflow": "exchange_outflow", "social_volume": "social_volume",
            "social_volume_reddit": "social_volume_reddit", "social_volume_twitter": "social_volume_twitter",
            "sentiment_pos_reddit": "sentiment_pos_reddit", "sentiment_pos_twitter": "sentiment_pos_twitter",
            "sentiment_neg_reddit": "sentiment_neg_reddit", "sentiment_neg_twitter": "sentiment_neg_twitter",
            "developer_activity": "developer_activity", "trades_sum_tm7": "trades",
        }
        lasts = {
            "total_addresses": "total_addresses", "pct_supply_in_profit": "pct_supply_in_profit",
            "pct_circ_supply_cex": "pct_supply_cex", "pct_circ_supply_dex": "pct_supply_dex",
            "pct_circ_supply_defi": "pct_supply_defi", "pct_circ_supply_traders": "pct_supply_traders",
            "num_trading_pairs": "num_trading_pairs", "spread_bps": "spread_bps", "ask_size": "ask_size",
            "bid_size": "bid_size", "mvrv": "mvrv",
        }
        for col, feed in sums.items():
            if col in out:
                out[col] = self._feed_sum(ctx, feed, b, members)
        for col, feed in lasts.items():
            if col in out:
                out[col] = self._feed_last(ctx, feed, b, members)
        if "delta_log_new_addresses_tm14_tm7" in out:
            recent = self._feed_sum(ctx, "new_addresses", b, members)
            prior = self._feed_sum(ctx, "new_addresses", b, members, offset=7)
            out["delta_log_new_addresses_tm14_tm7"] = np.array(
                [delta_log(r, p) for r, p in zip(recent, prior)])
        for col, prefix in (("delta_flow_distribution_tm7", "flow_"),
                            ("delta_holders_distribution_tm7", "holders_")):
            if col not in out:
                continue
            names = sorted(n for n in ctx.feeds if n.startswith(prefix))
            wins = [self._window(ctx, n, b, members, days=8) for n in names]
            if not names or any(w is None for w in wins):
                continue
            for k in range(members.size):
                levels = np.column_stack([w[:, k] for w in wins])
                out[col][k] = distribution_change(levels)
