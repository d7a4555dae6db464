"""Weekly asset panel built from hourly bars and the monthly universe."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

from ._io import write_frame
from .characteristics import CharacteristicContext, CharacteristicEngine
from .ingest import Dataset
from .universe import UniverseSnapshot, to_month

HORIZONS = (0, 7, 14, 30, 90)
DAYS_PER_YEAR = 365
CAP_FILL_HOURS = 168


def return_column(h: int) -> str:
    return f"excess_return_fwd_{h}"


RETURN_COLUMNS = tuple(return_column(h) for h in HORIZONS)


@dataclass(frozen=True)
class PanelRow:
    week_start: pd.Timestamp
    asset_id: str
    excess_return_fwd: dict
    market_cap_usd: float
    characteristics: dict


@dataclass(frozen=True, eq=False)
class Panel:
    """Weekly panel. ``frame`` holds one row per (week_start, asset_id) with
    ``market_cap_usd``, one ``excess_return_fwd_<h>`` column per horizon and one
    column per characteristic; it is sorted by week then asset."""

    frame: pd.DataFrame
    characteristic_names: tuple[str, ...]
    universe: tuple[UniverseSnapshot, ...] = ()
    dropped: tuple[str, ...] = ()
    manifest: dict = field(default_factory=dict)

    @property
    def weeks(self) -> pd.DatetimeIndex:
        return pd.DatetimeIndex(self.frame["week_start"].unique()).sort_values()

    @property
    def assets(self) -> list[str]:
        return sorted(self.frame["asset_id"].unique())

    def __len__(self) -> int:
        return len(self.frame)

    def rows(self):
        for rec in self.frame.to_dict("records"):
            yield PanelRow(
                rec["week_start"], rec["asset_id"],
                {h: rec[return_column(h)] for h in HORIZONS}, rec["market_cap_usd"],
                {c: rec[c] for c in self.characteristic_names},
            )

    def wide(self, column: str) -> pd.DataFrame:
        """``weeks x assets`` matrix of one column (assets in lexicographic order)."""
        w = self.frame.pivot(index="week_start", columns="asset_id", values=column)
        return w.reindex(columns=sorted(w.columns))


# ---------------------------------------------------------------------------
# small kernels

def vwap_price(prices, volumes) -> float:
    """Volume-weighted mean price; plain mean when every volume is zero."""
    p = np.asarray(prices, float)
    v = np.asarray(volumes, float)
    if p.size == 0:
        raise ValueError("vwap of an empty set")
    if p.shape != v.shape:
        raise ValueError("prices and volumes differ in length")
    if (v < 0).any():
        raise ValueError("negative volume")
    tot = v.sum()
    if tot > 0:
        return float(np.dot(p, v) / tot)
    return float(p.mean())


def rf_return(annual_rate, days: float):
    """Risk-free return over ``days`` calendar days, compounding a 365-day annual rate."""
    return (1.0 + np.asarray(annual_rate, float)) ** (days / DAYS_PER_YEAR) - 1.0


def excess_return(p0: float, p1: float, annual_rf: float, days: float) -> float:
    if not (np.isfinite(p0) and np.isfinite(p1)) or p0 <= 0:
        return math.nan
    return float(p1 / p0 - 1.0 - rf_return(annual_rf, days))


def weekly_excess_return(prices: pd.Series, rf: pd.Series, horizon: int) -> pd.Series:
    """Excess return at each boundary of ``prices`` (a weekly boundary-price series).

    ``horizon > 0``: ``P(t+h)/P(t) - 1`` less the risk-free return over ``h`` days.
    ``horizon == 0``: the contemporaneous week, ``P(t)/P(t-7d) - 1`` less one
    week of risk-free. ``rf`` holds annual rates; the value in force at the
    start of the holding period is used. Missing endpoints give NaN.
    """
    if horizon not in HORIZONS:
        raise ValueError(f"horizon must be one of {HORIZONS}")
    idx = prices.index
    rf = rf.sort_index()
    lookup = prices.to_dict()
    out = pd.Series(np.nan, index=idx, dtype=float)
    for t in idx:
        if horizon == 0:
            t0, t1, days = t - pd.Timedelta(days=7), t, 7
        else:
            t0, t1, days = t, t + pd.Timedelta(days=horizon), horizon
        known = rf.loc[:t0]
        r = float(known.iloc[-1]) if len(known) else 0.0
        out[t] = excess_return(lookup.get(t0, math.nan), lookup.get(t1, math.nan), r, days)
    return out


# ---------------------------------------------------------------------------
# hourly grid

@dataclass
class HourlyGrid:
    hours: pd.DatetimeIndex
    assets: list[str]
    price: np.ndarray
    volume: np.ndarray
    cap: np.ndarray
    rf_annual: np.ndarray

    @property
    def rf_hourly(self) -> np.ndarray:
        return rf_return(self.rf_annual, 1.0 / 24.0)

    def index_of(self, t: pd.Timestamp) -> int:
        return int((t - self.hours[0]) // pd.Timedelta(hours=1))


def hourly_grid(d: Dataset) -> HourlyGrid:
    bars = d.bars
    assets = d.assets
    hours = pd.date_range(bars["timestamp"].min(), bars["timestamp"].max(), freq="h")
    H, N = len(hours), len(assets)
    col = pd.Index(assets).get_indexer(bars["asset_id"])
    row = ((bars["timestamp"] - hours[0]) // pd.Timedelta(hours=1)).to_numpy(np.int64)
    p = bars["mid_price"].to_numpy(float)
    v = bars["volume_usd"].to_numpy(float)
    c = bars["market_cap_usd"].to_numpy(float)

    pv = np.zeros((H, N)); vv = np.zeros((H, N)); ps = np.zeros((H, N)); cnt = np.zeros((H, N))
    np.add.at(pv, (row, col), p * v)
    np.add.at(vv, (row, col), v)
    np.add.at(ps, (row, col), p)
    np.add.at(cnt, (row, col), 1.0)
    has = cnt > 0
    price = np.full((H, N), np.nan)
    with np.errstate(invalid="ignore", divide="ignore"):
        price[has] = np.where(vv[has] > 0, pv[has] / vv[has], ps[has] / cnt[has])
    volume = np.where(has, vv, np.nan)

    cs = np.zeros((H, N)); cc = np.zeros((H, N))
    okc = np.isfinite(c)
    np.add.at(cs, (row[okc], col[okc]), c[okc])
    np.add.at(cc, (row[okc], col[okc]), 1.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        cap_raw = np.where(cc > 0, cs / cc, np.nan)
    cap = pd.DataFrame(cap_raw).ffill(limit=CAP_FILL_HOURS).to_numpy()

    rf = d.reference_series("risk_free_1m") if len(d.reference) else pd.Series(dtype=float)
    if len(rf):
        rf_h = rf.reindex(rf.index.union(hours)).ffill().reindex(hours).to_numpy(float)
        rf_h = np.where(np.isfinite(rf_h), rf_h, rf.iloc[0])
    else:
        rf_h = np.zeros(H)
    return HourlyGrid(hours, assets, price, volume, cap, rf_h)


def feed_cubes(d: Dataset, assets: list[str], days: pd.DatetimeIndex) -> dict[str, np.ndarray]:
    feeds = d.feeds
    out = {}
    if not len(feeds):
        return out
    day = feeds["timestamp"].dt.floor("D")
    row = ((day - days[0]) // pd.Timedelta(days=1)).to_numpy(np.int64)
    col = pd.Index(assets).get_indexer(feeds["asset_id"])
    ok = (row >= 0) & (row < len(days)) & (col >= 0)
    for name in sorted(feeds["feed_name"].unique()):
        sel = ok & (feeds["feed_name"] == name).to_numpy()
        cube = np.full((len(days), len(assets)), np.nan)
        cube[row[sel], col[sel]] = feeds["value"].to_numpy(float)[sel]
        out[name] = cube
    return out


def week_starts(d: Dataset, anchor=None) -> pd.DatetimeIndex:
    """Weekly boundaries: 7-day steps from ``anchor`` (default: first UTC Monday on/after the data start)."""
    start = d.bars["timestamp"].min()
    end = d.bars["timestamp"].max()
    if anchor is None:
        day = start.floor("D")
        if day < start:
            day += pd.Timedelta(days=1)
        anchor = day + pd.Timedelta(days=(7 - day.weekday()) % 7)
    else:
        anchor = pd.Timestamp(anchor)
        anchor = anchor.tz_localize("UTC") if anchor.tzinfo is None else anchor.tz_convert("UTC")
    return pd.date_range(anchor, end, freq="7D")


def _members_by_month(universe) -> dict[pd.Period, tuple[str, ...]]:
    return {to_month(s.effective_month): s.members for s in universe}


def hourly_membership(grid: HourlyGrid, universe) -> np.ndarray:
    """``(hours, assets)`` mask of the snapshot in force each hour.

    Hours before the first (after the last) snapshot use the first (last) one so
    trailing windows at the panel edges still have a market return.
    """
    by_month = _members_by_month(universe)
    months = sorted(by_month)
    col = {a: i for i, a in enumerate(grid.assets)}
    hour_month = grid.hours.tz_localize(None).to_period("M")
    mask = np.zeros((len(grid.hours), len(grid.assets)), bool)
    for m in pd.unique(hour_month):
        if m in by_month:
            key = m
        elif m < months[0]:
            key = months[0]
        elif m > months[-1]:
            key = months[-1]
        else:
            key = max(k for k in months if k <= m)
        rows = hour_month == m
        cols = [col[a] for a in by_month[key] if a in col]
        if cols:
            mask[np.ix_(rows, cols)] = True
    return mask


def hourly_cmkt(grid: HourlyGrid, membership: np.ndarray) -> np.ndarray:
    """Value-weighted hourly excess return of the members, weights = caps one hour earlier."""
    H = len(grid.hours)
    out = np.full(H, np.nan)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = grid.price[1:] / grid.price[:-1] - 1.0 - grid.rf_hourly[1:, None]
    w = grid.cap[:-1]
    ok = membership[1:] & np.isfinite(r) & np.isfinite(w) & (w > 0)
    ws = np.where(ok, w, 0.0)
    tot = ws.sum(axis=1)
    num = (ws * np.where(ok, r, 0.0)).sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        out[1:] = np.where(tot > 0, num / tot, np.nan)
    return out


def build_context(d: Dataset, grid: HourlyGrid, universe) -> CharacteristicContext:
    membership = hourly_membership(grid, universe)
    days = pd.date_range(grid.hours[0].floor("D"), grid.hours[-1].floor("D"), freq="D")
    meta = d.meta.set_index("asset_id") if len(d.meta) else None
    industry = vc = None
    if meta is not None:
        industry = np.array([meta["industry"].get(a, f"_unknown_{a}") for a in grid.assets], dtype=object)
        vc = np.array([bool(meta["vc_owned"].get(a, False)) for a in grid.assets])
    return CharacteristicContext(
        hours=grid.hours, assets=grid.assets, price=grid.price, volume=grid.volume, cap=grid.cap,
        rf_hourly=grid.rf_hourly, cmkt_hourly=hourly_cmkt(grid, membership), days=days,
        feeds=feed_cubes(d, grid.assets, days), industry=industry, vc_owned=vc,
    )


def build_panel(d: Dataset, universe, chars: CharacteristicEngine | None = None, anchor=None,
                workers: int = 1) -> Panel:
    """Rows for every (week, member) with all horizons and characteristics.

    Each asset's characteristic windows read its full price history, so an
    asset re-entering the universe carries its pre-exit data.
    """
    universe = tuple(universe)
    if not universe:
        raise ValueError("universe series is empty")
    engine = chars or CharacteristicEngine()
    grid = hourly_grid(d)
    ctx = build_context(d, grid, universe)
    by_month = _members_by_month(universe)
    col = {a: i for i, a in enumerate(grid.assets)}

    cells = []
    for t in week_starts(d, anchor):
        m = pd.Period(t.tz_localize(None), freq="M")
        if m not in by_month:
            continue
        b = grid.index_of(t)
        if b < 1:
            continue
        members = np.array(sorted(col[a] for a in by_month[m] if a in col), dtype=int)
        if members.size:
            cells.append((t, b, members))

    def one(cell):
        t, b, members = cell
        values = engine.compute_week(ctx, b, members)
        H = len(grid.hours)
        rf_now = grid.rf_annual[b - 1]
        cols = {}
        for h in HORIZONS:
            if h == 0:
                j0, j1, days = b - 1 - 168, b - 1, 7
                rf_h = grid.rf_annual[j0] if j0 >= 0 else rf_now
            else:
                j0, j1, days, rf_h = b - 1, b - 1 + 24 * h, h, rf_now
            if j0 < 0 or j1 >= H:
                cols[return_column(h)] = np.full(members.size, np.nan)
                continue
            with np.errstate(invalid="ignore", divide="ignore"):
                cols[return_column(h)] = grid.price[j1, members] / grid.price[j0, members] - 1.0 - rf_return(rf_h, days)
        frame = pd.DataFrame({
            "week_start": t,
            "asset_id": [grid.assets[i] for i in members],
            "market_cap_usd": grid.cap[b - 1, members],
            **cols,
            **values,
        })
        return frame

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(one, cells))
    else:
        parts = [one(c) for c in cells]
    names = tuple(engine.names)
    if parts:
        frame = pd.concat(parts, ignore_index=True)
    else:
        frame = pd.DataFrame(columns=["week_start", "asset_id", "market_cap_usd", *RETURN_COLUMNS, *names])
    frame = frame.loc[frame["market_cap_usd"] > 0].reset_index(drop=True)
    frame = frame.sort_values(["week_start", "asset_id"], kind="mergesort").reset_index(drop=True)
    return Panel(frame=frame, characteristic_names=names, universe=universe)


def fill_missing(p: Panel) -> Panel:
    """Drop any characteristic that is missing for a majority of members in some
    week; fill remaining gaps with that week's cross-sectional median."""
    frame = p.frame.copy()
    keep, dropped = [], list(p.dropped)
    week = frame["week_start"]
    for c in p.characteristic_names:
        miss = frame[c].isna()
        frac = miss.groupby(week).mean()
        if (frac > 0.5).any():
            dropped.append(c)
            frame = frame.drop(columns=c)
            continue
        keep.append(c)
        if miss.any():
            med = frame[c].groupby(week).transform("median")
            frame[c] = frame[c].where(~miss, med)
    return replace(p, frame=frame, characteristic_names=tuple(keep), dropped=tuple(dropped))


def cmkt_weights(p: Panel, horizon: int = 7) -> pd.Series:
    f = p.frame
    r = f[return_column(horizon)]
    cap = f["market_cap_usd"]
    ok = r.notna() & cap.notna() & (cap > 0)
    w = cap.where(ok, 0.0)
    tot = w.groupby(f["week_start"]).transform("sum")
    return (w / tot).where(ok)


def cmkt(p: Panel, horizon: int = 7) -> pd.Series:
    """Value-weighted excess return of the panel per week (weights = caps at week start)."""
    f = p.frame
    r = f[return_column(horizon)]
    cap = f["market_cap_usd"]
    has_r = r.notna()
    out = {}
    for t, idx in f.groupby("week_start").groups.items():
        sel = has_r.loc[idx]
        if not sel.any():
            continue
        c = cap.loc[idx][sel].to_numpy(float)
        c = np.where(np.isfinite(c) & (c > 0), c, 0.0)
        tot = c.sum()
        if tot <= 0:
            raise ValueError(f"week {t.date()} has zero total market cap")
        out[t] = float(np.dot(c / tot, r.loc[idx][sel].to_numpy(float)))
    s = pd.Series(out, dtype=float, name="cmkt").sort_index()
    s.index.name = "week_start"
    return s


def write_panel(p: Panel, path) -> Path:
    cols = ["week_start", "asset_id", "market_cap_usd", *RETURN_COLUMNS, *p.characteristic_names]
    return write_frame(path, p.frame[cols])


def read_panel(path) -> Panel:
    frame = pd.read_csv(path)
    frame["week_start"] = pd.to_datetime(frame["week_start"], utc=True)
    frame["asset_id"] = frame["asset_id"].astype(str)
    fixed = {"week_start", "asset_id", "market_cap_usd", *RETURN_COLUMNS}
    names = tuple(c for c in frame.columns if c not in fixed)
    return Panel(frame=frame, characteristic_names=names)
