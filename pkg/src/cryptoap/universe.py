"""Rolling tradable universe, rebuilt on the first day of each month."""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .ingest import Dataset

US_EXCHANGES = frozenset({"binance_us", "bitstamp", "coinbase", "crypto_com", "ftx_us", "gemini", "kraken",
                          "kucoin"})

CRITERIA = ("history", "listed_market", "not_stable_or_synthetic", "market_cap", "nonzero_volume",
            "median_volume")

CAP_FILL = pd.Timedelta(days=7)
CAP_WINDOW_DAYS = 91


@dataclass(frozen=True)
class InclusionCriteria:
    trailing_weeks: int = 12
    min_median_weekly_volume_usd: float = 500_000.0
    mcap_floor_bps_of_total: float = 1.0
    quote_whitelist: frozenset = frozenset({"USD", "USDC", "USDT"})
    exchange_whitelist: frozenset = US_EXCHANGES
    require_nonzero_volume_all_weeks: bool = True

    def __post_init__(self):
        if self.trailing_weeks < 1:
            raise ValueError("trailing_weeks must be >= 1")
        if self.min_median_weekly_volume_usd <= 0 or self.mcap_floor_bps_of_total <= 0:
            raise ValueError("thresholds must be positive")
        object.__setattr__(self, "quote_whitelist", frozenset(q.upper() for q in self.quote_whitelist))
        object.__setattr__(self, "exchange_whitelist", frozenset(self.exchange_whitelist))


@dataclass(frozen=True)
class UniverseSnapshot:
    effective_month: pd.Period
    members: tuple[str, ...]
    diagnostics: dict = field(default_factory=dict)  # asset -> {criterion: bool}
    values: dict = field(default_factory=dict)  # asset -> {criterion: measured value}

    @property
    def first_day(self) -> pd.Timestamp:
        return month_start(self.effective_month)

    def __contains__(self, asset_id: str) -> bool:
        return asset_id in self.members


def to_month(month) -> pd.Period:
    if isinstance(month, pd.Period):
        return month.asfreq("M")
    return pd.Period(str(month)[:7], freq="M")


def month_start(month) -> pd.Timestamp:
    return to_month(month).start_time.tz_localize("UTC")


class CapIndex:
    """Latest known free-float cap per asset, forward-filled for at most seven days."""

    def __init__(self, bars: pd.DataFrame):
        caps = bars.loc[bars["market_cap_usd"].notna(), ["asset_id", "timestamp", "market_cap_usd"]]
        caps = caps.groupby(["asset_id", "timestamp"], sort=True)["market_cap_usd"].mean()
        self._series: dict[str, tuple[np.ndarray, np.ndarray]] = {}
        for asset, s in caps.groupby(level=0, sort=True):
            ts = s.index.get_level_values(1).asi8
            self._series[asset] = (ts, s.to_numpy(float))

    @property
    def assets(self) -> list[str]:
        return list(self._series)

    def at(self, asset: str, times: pd.DatetimeIndex) -> np.ndarray:
        out = np.full(len(times), np.nan)
        if asset not in self._series:
            return out
        ts, vals = self._series[asset]
        t = times.asi8
        idx = np.searchsorted(ts, t, side="right") - 1
        ok = idx >= 0
        fresh = np.zeros_like(ok)
        fresh[ok] = (t[ok] - ts[idx[ok]]) <= CAP_FILL.value
        out[fresh] = vals[idx[fresh]]
        return out

    def matrix(self, assets: list[str], times: pd.DatetimeIndex) -> np.ndarray:
        return np.column_stack([self.at(a, times) for a in assets]) if assets else np.empty((len(times), 0))


def total_market_cap(d: Dataset, t) -> float:
    """Sum of the latest known caps of every asset at ``t`` (seven-day fill)."""
    t = pd.Timestamp(t)
    t = t.tz_localize("UTC") if t.tzinfo is None else t.tz_convert("UTC")
    idx = CapIndex(d.bars)
    if not idx.assets:
        raise ValueError("dataset has no market caps")
    vals = idx.matrix(idx.assets, pd.DatetimeIndex([t]))[0]
    if not np.isfinite(vals).any():
        raise ValueError(f"no market caps at or before {t.isoformat()}")
    return float(np.nansum(vals))


class UniverseBuilder:
    """Shares the daily aggregates between snapshots of one dataset."""

    def __init__(self, d: Dataset, criteria: InclusionCriteria | None = None):
        self.d = d
        self.c = criteria or InclusionCriteria()
        bars = d.bars
        self.assets = d.assets
        self.data_start = bars["timestamp"].min().floor("D")
        self.data_end = bars["timestamp"].max()
        self.first_bar = bars.groupby("asset_id")["timestamp"].min()
        on_whitelist = bars["exchange_id"].isin(self.c.exchange_whitelist)
        vb = bars.loc[on_whitelist]
        day = vb["timestamp"].dt.floor("D")
        self.daily_volume = (vb.groupby([day, vb["asset_id"]])["volume_usd"].sum()
                             .unstack("asset_id").reindex(columns=self.assets).fillna(0.0))
        self.daily_volume.index = pd.DatetimeIndex(self.daily_volume.index)
        self.caps = CapIndex(bars)
        meta = d.meta.set_index("asset_id") if len(d.meta) else None
        self.meta = meta

    def _daily_cap(self, first: pd.Timestamp, last: pd.Timestamp) -> np.ndarray:
        days = pd.date_range(first, last, freq="D")
        # cap on day D is the latest known value at D 23:00
        return self.caps.matrix(self.assets, days + pd.Timedelta(hours=23))

    def _volume_block(self, lo: pd.Timestamp, hi: pd.Timestamp) -> np.ndarray:
        dv = self.daily_volume
        mask = (dv.index >= lo) & (dv.index < hi)
        return dv.loc[mask].sum(axis=0).to_numpy(float)

    def snapshot(self, month) -> UniverseSnapshot:
        c = self.c
        m = to_month(month)
        first = month_start(m)
        span = pd.Timedelta(days=7 * c.trailing_weeks)
        if first < self.data_start + span:
            raise ValueError(f"{m} precedes data start {self.data_start.date()} + {c.trailing_weeks} weeks")

        n = len(self.assets)
        blocks = np.vstack([self._volume_block(first - pd.Timedelta(days=7 * (j + 1)),
                                               first - pd.Timedelta(days=7 * j))
                            for j in range(c.trailing_weeks)])
        median_vol = np.median(blocks, axis=0)
        nonzero = (blocks > 0).all(axis=0)

        cap_days = self._daily_cap(first - pd.Timedelta(days=CAP_WINDOW_DAYS), first - pd.Timedelta(days=1))
        cap_days = np.nan_to_num(cap_days, nan=0.0)
        asset_avg = cap_days.mean(axis=0)
        total_avg = cap_days.sum(axis=1).mean()

        diagnostics, values, members = {}, {}, []
        for i, a in enumerate(self.assets):
            fb = self.first_bar.get(a)
            history = fb is not None and fb <= first - span
            listed, stable_ok = False, False
            if self.meta is not None and a in self.meta.index:
                row = self.meta.loc[a]
                listed = any(e in c.exchange_whitelist and q.upper() in c.quote_whitelist
                             for e, q in row["listed_markets"])
                stable_ok = not (bool(row["is_stablecoin"]) or bool(row["is_synthetic"]))
            # compare without dividing so the 1bp boundary stays exact
            cap_ok = bool(asset_avg[i] * 10_000.0 > total_avg * c.mcap_floor_bps_of_total)
            vol_ok = bool(nonzero[i]) if c.require_nonzero_volume_all_weeks else True
            med_ok = bool(median_vol[i] > c.min_median_weekly_volume_usd)
            diag = {"history": bool(history), "listed_market": listed, "not_stable_or_synthetic": stable_ok,
                    "market_cap": cap_ok, "nonzero_volume": vol_ok, "median_volume": med_ok}
            diagnostics[a] = diag
            values[a] = {
                "history": None if fb is None else fb.isoformat(),
                "listed_market": None,
                "not_stable_or_synthetic": None,
                "market_cap": float(asset_avg[i] / total_avg * 10_000.0) if total_avg > 0 else None,
                "nonzero_volume": float(blocks[:, i].min()),
                "median_volume": float(median_vol[i]),
            }
            if all(diag.values()):
                members.append(a)
        return UniverseSnapshot(m, tuple(sorted(members)), diagnostics, values)


def build_snapshot(d: Dataset, month, c: InclusionCriteria | None = None) -> UniverseSnapshot:
    return UniverseBuilder(d, c).snapshot(month)


def month_range(first, last) -> list[pd.Period]:
    return list(pd.period_range(to_month(first), to_month(last), freq="M"))


def build_universe_series(d: Dataset, months, c: InclusionCriteria | None = None,
                          workers: int = 1) -> list[UniverseSnapshot]:
    """One snapshot per month in ``months`` (an iterable or a ``(first, last)`` pair)."""
    if isinstance(months, tuple) and len(months) == 2:
        months = month_range(*months)
    months = [to_month(m) for m in months]
    if not months:
        raise ValueError("empty month range")
    builder = UniverseBuilder(d, c)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(builder.snapshot, months))
    return [builder.snapshot(m) for m in months]


def first_eligible_month(d: Dataset, c: InclusionCriteria | None = None, extra_days: int = 0) -> pd.Period:
    c = c or InclusionCriteria()
    earliest = d.bars["timestamp"].min().floor("D") + pd.Timedelta(days=7 * c.trailing_weeks + extra_days)
    m = pd.Period(earliest.tz_localize(None), freq="M")
    if month_start(m) < earliest:
        m += 1
    return m


def write_universe(snapshots: list[UniverseSnapshot], directory) -> tuple[Path, Path]:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    members_path, diag_path = out / "universe.csv", out / "universe_diag.csv"
    with open(members_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["effective_month", "asset_id"])
        for s in snapshots:
            for a in s.members:
                w.writerow([str(s.effective_month), a])
    with open(diag_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["effective_month", "asset_id", "criterion", "pass", "value"])
        for s in snapshots:
            for a in sorted(s.diagnostics):
                for crit in CRITERIA:
                    v = s.values.get(a, {}).get(crit)
                    v = "" if v is None else (f"{v:.10g}" if isinstance(v, float) else str(v))
                    w.writerow([str(s.effective_month), a, crit, int(s.diagnostics[a][crit]), v])
    return members_path, diag_path
