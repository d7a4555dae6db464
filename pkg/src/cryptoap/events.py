"""Event study of daily changes around event dates with placebo-bootstrap errors."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from ._io import write_table
from .ingest import Dataset
from .metrics import rng_for

DEFAULT_WINDOW = 7
DEFAULT_B = 10_000
ROBUSTNESS_WINDOWS = (2, 7, 14)

# event-table series -> feed name; "return" and "trading_volume" come from the bars
EVENT_SERIES = {
    "return": None,
    "trading_volume": None,
    "active_addresses": "active_addresses",
    "developer_activity": "developer_activity",
    "social_volume": "social_volume",
    "miner_hash_rate": "miner_hash_rate",
}


@dataclass(frozen=True)
class EventStudySpec:
    series: dict  # name -> daily level Series (for "return": the daily price)
    event_dates: tuple
    window_days: int = DEFAULT_WINDOW
    bootstrap_B: int = DEFAULT_B
    seed: int = 0

    def __post_init__(self):
        if self.window_days < 1:
            raise ValueError("window_days must be >= 1")
        if self.bootstrap_B < 100:
            raise ValueError("bootstrap_B must be at least 100")
        object.__setattr__(self, "event_dates", tuple(_day(d) for d in self.event_dates))


@dataclass(frozen=True)
class EventEstimate:
    series: str
    window: int
    estimate: float
    bootstrap_se: float
    n_events_used: int
    dropped: tuple = field(default_factory=tuple)

    @property
    def t(self) -> float:
        return self.estimate / self.bootstrap_se if self.bootstrap_se > 0 else math.nan


def _day(d) -> pd.Timestamp:
    t = pd.Timestamp(d)
    t = t.tz_localize("UTC") if t.tzinfo is None else t.tz_convert("UTC")
    return t.normalize()


def daily_changes(levels: pd.Series, kind: str = "diff") -> pd.Series:
    """Change on day ``d`` relative to day ``d-1`` over a gap-free daily calendar.

    ``kind="return"`` gives simple returns; anything else gives first differences.
    """
    s = levels.sort_index()
    idx = pd.DatetimeIndex(s.index)
    full = pd.date_range(idx.min(), idx.max(), freq="D")
    s = s.reindex(full)
    return (s.pct_change(fill_method=None) if kind == "return" else s.diff()).iloc[1:]


def per_day_effects(changes: np.ndarray, w: int) -> np.ndarray:
    """Effect of a hypothetical event on each day: mean over ``+1..+w`` minus ``-w..-1``.

    ``changes[i]`` is the change on day ``i``. Days without full windows, or
    whose windows contain an absent change, are NaN.
    """
    x = np.asarray(changes, float)
    n = x.size
    out = np.full(n, np.nan)
    if n < 2 * w + 1:
        return out
    bad = ~np.isfinite(x)
    c = np.concatenate([[0.0], np.cumsum(np.where(bad, 0.0, x))])
    cb = np.concatenate([[0], np.cumsum(bad)])
    i = np.arange(w, n - w)
    post = c[i + w + 1] - c[i + 1]
    pre = c[i] - c[i - w]
    gaps = (cb[i + w + 1] - cb[i + 1]) + (cb[i] - cb[i - w])
    out[i] = np.where(gaps == 0, (post - pre) / w, np.nan)
    return out


def _positions(index: pd.DatetimeIndex, events) -> tuple[np.ndarray, list]:
    pos, dropped = [], []
    for e in events:
        k = index.get_indexer([_day(e)])[0]
        (pos if k >= 0 else dropped).append(k if k >= 0 else e)
    return np.asarray(pos, dtype=int), dropped


def event_effect(changes: pd.Series, events, w: int = DEFAULT_WINDOW) -> tuple[float, int, tuple]:
    """Mean over events of the post-minus-pre difference of average daily changes.

    Returns ``(estimate, n_events_used, dropped_events)``. Events without ``w``
    full days on both sides are dropped.

    Raises
    ------
    ValueError
        When every event is dropped.
    """
    idx = pd.DatetimeIndex(changes.index)
    eff = per_day_effects(changes.to_numpy(float), w)
    pos, dropped = _positions(idx, events)
    vals = eff[pos] if pos.size else np.empty(0)
    ok = np.isfinite(vals)
    dropped = tuple(dropped) + tuple(idx[pos[~ok]])
    if not ok.any():
        raise ValueError(f"no event has {w} full days of changes on both sides")
    return float(vals[ok].mean()), int(ok.sum()), dropped


def placebo_draws(changes: pd.Series, n_events: int, w: int, B: int, seed: int, tag: str = "events"
                  ) -> np.ndarray:
    """Row ``b`` holds the day positions of the ``b``-th placebo event set."""
    eff = per_day_effects(changes.to_numpy(float), w)
    eligible = np.flatnonzero(np.isfinite(eff))
    if eligible.size == 0:
        raise ValueError("no eligible placebo days")
    rng = rng_for(seed, f"{tag}:w{w}")
    return eligible[rng.integers(0, eligible.size, size=(B, n_events))]


def event_bootstrap_se(changes: pd.Series, n_events: int, w: int = DEFAULT_WINDOW, B: int = DEFAULT_B,
                       seed: int = 0, draws: np.ndarray | None = None) -> float:
    """Std of the event effect over ``B`` sets of ``n_events`` placebo dates.

    Dates are drawn uniformly with replacement from days with full windows.
    Passing ``draws`` from :func:`placebo_draws` reuses one date set across
    several series.
    """
    if B < 100:
        raise ValueError("B must be at least 100")
    if n_events < 1:
        raise ValueError("n_events must be positive")
    eff = per_day_effects(changes.to_numpy(float), w)
    if draws is None:
        draws = placebo_draws(changes, n_events, w, B, seed)
    stat = eff[draws]
    # a draw landing on a day this series cannot evaluate uses the days it can
    with np.errstate(invalid="ignore"):
        means = np.nanmean(stat, axis=1)
    means = means[np.isfinite(means)]
    if means.size < 2:
        raise ValueError("no eligible placebo days")
    return float(means.std(ddof=1))


def run_event_study(spec: EventStudySpec, windows=None) -> list[EventEstimate]:
    """Estimates per series and window; placebo dates are shared across series."""
    windows = (spec.window_days,) if windows is None else tuple(windows)
    changes = {name: daily_changes(s, "return" if name == "return" else "diff") for name, s in spec.series.items()}
    if not changes:
        raise ValueError("no series to study")
    # one calendar for the joint placebo draw
    calendar = pd.DatetimeIndex(sorted(set().union(*[set(c.index) for c in changes.values()])))
    aligned = {k: c.reindex(calendar) for k, c in changes.items()}
    # eligibility from the union calendar; per-series gaps are handled inside the SE
    base = pd.Series(np.zeros(len(calendar)), index=calendar)
    out = []
    for w in windows:
        any_ok = False
        for name, ch in aligned.items():
            try:
                est, used, dropped = event_effect(ch, spec.event_dates, w)
            except ValueError:
                out.append(EventEstimate(name, w, math.nan, math.nan, 0, spec.event_dates))
                continue
            any_ok = True
            draws = placebo_draws(base, used, w, spec.bootstrap_B, spec.seed, f"events:n{used}")
            se = event_bootstrap_se(ch, used, w, spec.bootstrap_B, draws=draws)
            out.append(EventEstimate(name, w, est, se, used, dropped))
        if not any_ok:
            raise ValueError(f"window {w} leaves no usable event in any series")
    return out


def robustness_windows(spec: EventStudySpec, windows=ROBUSTNESS_WINDOWS) -> pd.DataFrame:
    rows = run_event_study(spec, windows)
    return pd.DataFrame([(r.series, r.window, r.estimate, r.bootstrap_se, r.n_events_used) for r in rows],
                        columns=["series", "window", "estimate", "bootstrap_se", "n_events_used"])


def daily_series(d: Dataset, asset_id: str) -> dict[str, pd.Series]:
    """Daily levels for the event table: closing price, USD volume and daily feeds.

    The closing price is the volume-weighted mean across exchanges of the last
    hourly bar of each day.
    """
    bars = d.bars.loc[d.bars["asset_id"] == asset_id]
    if bars.empty:
        raise ValueError(f"no bars for asset {asset_id!r}")
    day = bars["timestamp"].dt.floor("D")
    last = bars.loc[bars["timestamp"] == bars.groupby(day)["timestamp"].transform("max")]
    lday = last["timestamp"].dt.floor("D")
    vol = last["volume_usd"].to_numpy(float)
    px = last["mid_price"].to_numpy(float)
    g = pd.DataFrame({"day": lday.to_numpy(), "pv": px * vol, "v": vol, "p": px}).groupby("day")
    num, den, plain = g["pv"].sum(), g["v"].sum(), g["p"].mean()
    close = (num / den).where(den > 0, plain)
    out = {"return": close.rename("return"),
           "trading_volume": bars.groupby(day)["volume_usd"].sum().rename("trading_volume")}
    feeds = d.feeds.loc[d.feeds["asset_id"] == asset_id]
    for name, feed in EVENT_SERIES.items():
        if feed is None:
            continue
        f = feeds.loc[feeds["feed_name"] == feed]
        if f.empty:
            continue
        out[name] = f.groupby(f["timestamp"].dt.floor("D"))["value"].sum(min_count=1).rename(name)
    for s in out.values():
        s.index = pd.DatetimeIndex(s.index)
    return out


def read_events(path) -> pd.DataFrame:
    ev = pd.read_csv(path, dtype=str)
    missing = {"name", "date"} - set(ev.columns)
    if missing:
        raise ValueError(f"{path}: missing column(s) {sorted(missing)}")
    ev["date"] = pd.to_datetime(ev["date"], utc=True)
    return ev


EVENTS_HEADER = ["series", "window", "estimate", "bootstrap_se", "n_events_used"]


def write_events(results: list[EventEstimate], path) -> Path:
    return write_table(path, EVENTS_HEADER,
                       [[r.series, r.window, r.estimate, r.bootstrap_se, r.n_events_used] for r in results])
