"""Seeded synthetic data for desk-scale verification.

Two generators live here:

* :func:`generate_synthetic` produces raw inputs (hourly bars on several
  exchanges, daily feeds, metadata, reference series) that go through the
  whole pipeline. Hourly asset returns follow
  ``r = alpha + beta * r_mkt + drift + sigma * eps`` where ``drift`` carries the
  planted momentum premia.
* :func:`generate_synthetic_panel` skips the hourly layer and draws a weekly
  panel directly, which is what the large Monte-Carlo recovery checks use.
"""

from __future__ import annotations

import hashlib
import json
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.signal import lfilter

from .ingest import FEED_DICTIONARY, Dataset, make_dataset, write_dataset

MIN_WEEKS = 12
HOURS_PER_WEEK = 168

# planted momentum characteristic -> look-back in days
PLANTABLE = {"return_tm7": 7, "return_tm14": 14, "return_tm30": 30, "return_tm60": 60, "return_tm90": 90}

DEFAULT_EXCHANGES = ("coinbase", "kraken", "gemini")


def root_rng(seed: int, tag: str = "root") -> np.random.Generator:
    """Independent stream for ``(seed, tag)``; the only way randomness is drawn."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(tag.encode())]))


def quintile_steps(values: np.ndarray) -> np.ndarray:
    """Map values to ``(q - 3) / 4`` with q the 1..5 quintile, NaN stays NaN.

    Ranks split at ``ceil(n k / 5)``; ties keep array order.
    """
    out = np.full(values.shape, np.nan)
    ok = np.flatnonzero(np.isfinite(values))
    n = ok.size
    if n < 5:
        return out
    order = ok[np.argsort(values[ok], kind="stable")]
    ranks = np.arange(1, n + 1)
    q = np.ones(n, dtype=int)
    for k in range(1, 5):
        q += ranks > -(-n * k // 5)
    out[order] = (q - 3) / 4.0
    return out


@dataclass
class SyntheticConfig:
    n_assets: int = 20
    start: str = "2019-01-07"
    weeks: int = 104
    exchanges: tuple = DEFAULT_EXCHANGES
    market_mu_hourly: float = 0.0
    market_vol_hourly: float = 0.006
    alpha_hourly: float = 0.0
    betas: tuple | None = None
    beta_range: tuple = (0.5, 1.5)
    idio_vol_hourly: float = 0.008
    premia: dict = field(default_factory=dict)
    weekly_volume_range: tuple = (2e5, 5e7)
    volume_growth_weekly: float = 0.0
    volume_noise: float = 0.5
    cap_range: tuple = (5e7, 5e10)
    n_stablecoins: int = 1
    n_synthetic: int = 0
    industries: tuple = ("currency", "smart_contract", "defi", "exchange")
    feed_missing_rate: float = 0.0
    with_feeds: bool = True
    risk_free_annual: float = 0.02
    n_events: int = 5

    def validate(self) -> None:
        if self.weeks <= MIN_WEEKS:
            raise ValueError(
                f"synthetic range of {self.weeks} weeks leaves no month with {MIN_WEEKS} trailing weeks")
        if self.n_assets < 1:
            raise ValueError("n_assets must be positive")
        if self.n_stablecoins + self.n_synthetic > self.n_assets:
            raise ValueError("more stablecoins/synthetics than assets")
        if self.betas is not None and len(self.betas) != self.n_assets:
            raise ValueError("betas must have one entry per asset")
        unknown = set(self.premia) - set(PLANTABLE)
        if unknown:
            raise ValueError(f"cannot plant premium on {sorted(unknown)}; choose from {sorted(PLANTABLE)}")
        if not self.exchanges:
            raise ValueError("need at least one exchange")

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True, default=list)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class SyntheticDataset(Dataset):
    manifest: dict = field(default_factory=dict)
    events: pd.DataFrame = field(default_factory=lambda: pd.DataFrame(columns=["name", "date"]))


def _asset_ids(n: int) -> list[str]:
    width = max(2, len(str(n - 1)))
    return [f"A{i:0{width}d}" for i in range(n)]


def _ar1(rng: np.random.Generator, n: int, k: int, phi: float, sigma: float) -> np.ndarray:
    shocks = rng.normal(0.0, sigma, size=(n, k))
    return lfilter([1.0], [1.0, -phi], shocks, axis=0)


def generate_synthetic(config: SyntheticConfig | None = None, seed: int = 0) -> SyntheticDataset:
    """Draw a full raw dataset; a pure function of ``(config, seed)``."""
    cfg = config or SyntheticConfig()
    cfg.validate()
    rng = root_rng(seed, "synthetic")
    n = cfg.n_assets
    ids = _asset_ids(n)
    H = cfg.weeks * HOURS_PER_WEEK
    start = pd.Timestamp(cfg.start, tz="UTC").floor("D")
    hours = start + pd.to_timedelta(np.arange(H), unit="h")

    kinds = np.array(["crypto"] * n, dtype=object)
    stable_idx = list(range(n - cfg.n_stablecoins, n))
    synth_idx = list(range(n - cfg.n_stablecoins - cfg.n_synthetic, n - cfg.n_stablecoins))
    kinds[stable_idx] = "stable"
    kinds[synth_idx] = "synthetic"
    crypto = np.flatnonzero(kinds == "crypto")

    if cfg.betas is not None:
        betas = np.asarray(cfg.betas, float)
    else:
        betas = rng.uniform(cfg.beta_range[0], cfg.beta_range[1], size=n)
    betas = np.where(kinds == "stable", 0.0, betas)
    p0 = np.exp(rng.uniform(np.log(0.5), np.log(2000.0), size=n))
    p0[kinds == "stable"] = 1.0
    cap0 = np.exp(rng.uniform(np.log(cfg.cap_range[0]), np.log(cfg.cap_range[1]), size=n))
    weekly_vol = np.exp(rng.uniform(np.log(cfg.weekly_volume_range[0]), np.log(cfg.weekly_volume_range[1]), size=n))
    weekly_vol[kinds == "stable"] = cfg.weekly_volume_range[1]

    g = rng.normal(cfg.market_mu_hourly, cfg.market_vol_hourly, size=H)
    r_mkt = np.expm1(g)
    eps = rng.normal(0.0, 1.0, size=(H, n))

    base = cfg.alpha_hourly + r_mkt[:, None] * betas[None, :] + cfg.idio_vol_hourly * eps
    base[:, kinds == "stable"] = 1e-4 * eps[:, kinds == "stable"]
    if len(synth_idx):
        # wrapped asset: tracks the first crypto asset
        base[:, synth_idx] = base[:, [crypto[0]]]
        p0[synth_idx] = p0[crypto[0]]

    prices = np.empty((H, n))
    prev = p0.copy()
    for w in range(cfg.weeks):
        lo, hi = w * HOURS_PER_WEEK, (w + 1) * HOURS_PER_WEEK
        block = base[lo:hi].copy()
        for name, lam in cfg.premia.items():
            lag = PLANTABLE[name] * 24
            if lo - 1 - lag < 0:
                continue
            signal = np.full(n, np.nan)
            signal[crypto] = prices[lo - 1, crypto] / prices[lo - 1 - lag, crypto] - 1.0
            step = np.nan_to_num(quintile_steps(signal))
            block += lam * step[None, :] / HOURS_PER_WEEK
        prices[lo:hi] = prev[None, :] * np.cumprod(1.0 + block, axis=0)
        prev = prices[hi - 1]

    supply = cap0 / p0
    caps = prices * supply[None, :]

    growth = (1.0 + cfg.volume_growth_weekly) ** (np.arange(H) // HOURS_PER_WEEK)
    noise = np.exp(rng.normal(0.0, cfg.volume_noise, size=(H, n)) - cfg.volume_noise ** 2 / 2)
    hourly_volume = (weekly_vol[None, :] / HOURS_PER_WEEK) * growth[:, None] * noise

    ex = list(cfg.exchanges)
    n_ex = len(ex)
    listed = rng.random((n, n_ex)) < 0.7
    listed[np.arange(n), rng.integers(0, n_ex, size=n)] = True
    shares = rng.dirichlet(np.ones(n_ex), size=n) * listed
    shares /= shares.sum(axis=1, keepdims=True)

    frames = []
    for j, exch in enumerate(ex):
        cols = np.flatnonzero(listed[:, j])
        if cols.size == 0:
            continue
        frames.append(pd.DataFrame({
            "timestamp": np.repeat(hours.values, cols.size),
            "asset_id": np.tile(np.array(ids, dtype=object)[cols], H),
            "exchange_id": exch,
            "mid_price": prices[:, cols].ravel(),
            "volume_usd": (hourly_volume[:, cols] * shares[cols, j][None, :]).ravel(),
            "market_cap_usd": caps[:, cols].ravel(),
        }))
    bars = pd.concat(frames, ignore_index=True)
    bars["timestamp"] = pd.to_datetime(bars["timestamp"], utc=True)

    quotes = ["USD", "USDT", "USDC"]
    industries = [cfg.industries[i % len(cfg.industries)] for i in rng.permutation(n)]
    vc = rng.random(n) < 0.4
    meta = pd.DataFrame({
        "asset_id": ids,
        "is_stablecoin": kinds == "stable",
        "is_synthetic": kinds == "synthetic",
        "industry": ["stablecoin" if k == "stable" else ind for k, ind in zip(kinds, industries)],
        "usage": ["payments" if k != "crypto" else ("store_of_value" if i % 2 else "platform")
                  for i, k in enumerate(kinds)],
        "listed_markets": [frozenset((ex[j], quotes[(i + j) % 3]) for j in np.flatnonzero(listed[i]))
                           for i in range(n)],
        "vc_owned": vc,
    })

    days = cfg.weeks * 7
    dates = start + pd.to_timedelta(np.arange(days), unit="D")
    feeds = _synthetic_feeds(rng, cfg, ids, dates, supply, kinds) if cfg.with_feeds else None
    reference = _synthetic_reference(rng, cfg, dates, r_mkt)

    dataset = make_dataset(bars, feeds, meta, reference)

    margin = 15
    choices = np.sort(rng.choice(np.arange(margin, days - margin), size=min(cfg.n_events, max(days - 2 * margin, 0)),
                                 replace=False))
    events = pd.DataFrame({"name": [f"event_{i + 1}" for i in range(len(choices))],
                           "date": [d.strftime("%Y-%m-%d") for d in dates[choices]]})

    manifest = {
        "seed": int(seed),
        "config_hash": cfg.digest(),
        "n_assets": n,
        "start": start.strftime("%Y-%m-%d"),
        "weeks": cfg.weeks,
        "market_mu_hourly": cfg.market_mu_hourly,
        "market_vol_hourly": cfg.market_vol_hourly,
        "alpha_hourly": cfg.alpha_hourly,
        "idio_vol_hourly": cfg.idio_vol_hourly,
        "volume_growth_weekly": cfg.volume_growth_weekly,
    }
    for name, lam in sorted(cfg.premia.items()):
        manifest[f"premium.{name}"] = lam
    for i, a in enumerate(ids):
        manifest[f"beta.{a}"] = float(betas[i])
        manifest[f"kind.{a}"] = str(kinds[i])
        manifest[f"median_weekly_volume.{a}"] = float(weekly_vol[i])
    return SyntheticDataset(dataset.bars, dataset.feeds, dataset.meta, dataset.reference,
                            manifest=manifest, events=events)


def _synthetic_feeds(rng, cfg, ids, dates, supply, kinds) -> pd.DataFrame:
    n, days = len(ids), len(dates)
    frames = []
    for name in sorted(FEED_DICTIONARY):
        kind = FEED_DICTIONARY[name]
        level = _ar1(rng, days, n, 0.9, 0.2)
        if name.startswith("pct_"):
            vals = 100.0 / (1.0 + np.exp(-(rng.normal(0, 1, size=n)[None, :] + level)))
        elif name == "circulating_supply":
            vals = supply[None, :] * (1.0 + 0.0005 * np.arange(days))[:, None]
        elif name == "mvrv":
            vals = np.exp(np.log(1.5) + level)
        elif name in ("spread_bps",):
            vals = np.exp(np.log(10.0) + 0.5 * level)
        elif name == "total_addresses":
            vals = np.exp(rng.uniform(10, 16, size=n))[None, :] * np.cumprod(1.0 + 0.001 * np.exp(level), axis=0)
        elif name in ("utxo_median_age", "miner_hash_rate"):
            vals = np.exp(rng.uniform(3, 6, size=n)[None, :] + np.cumsum(0.02 * level, axis=0) / 10)
        else:
            vals = np.exp(rng.uniform(np.log(50), np.log(1e5), size=n)[None, :] + level)
        if kind == "daily":
            keep = np.zeros(n, bool)
            keep[0] = True
        else:
            keep = kinds != "stable"
        cols = np.flatnonzero(keep)
        if cols.size == 0:
            continue
        if name in ("num_trading_pairs", "trades", "new_addresses", "active_addresses"):
            vals = np.round(vals)
        frames.append(pd.DataFrame({
            "timestamp": np.repeat(dates.values, cols.size),
            "asset_id": np.tile(np.array(ids, dtype=object)[cols], days),
            "feed_name": name,
            "value": vals[:, cols].ravel(),
        }))
    feeds = pd.concat(frames, ignore_index=True)
    if cfg.feed_missing_rate > 0:
        drop = rng.random(len(feeds)) < cfg.feed_missing_rate
        feeds = feeds.loc[~drop]
    feeds["timestamp"] = pd.to_datetime(feeds["timestamp"], utc=True)
    return feeds


def _synthetic_reference(rng, cfg, dates, r_mkt) -> pd.DataFrame:
    days = len(dates)
    daily_mkt = np.add.reduceat(np.log1p(r_mkt), np.arange(0, len(r_mkt), 24))[:days]
    rf = np.clip(cfg.risk_free_annual + _ar1(rng, days, 1, 0.99, 0.0005)[:, 0], 0.0, None)
    frames = [pd.DataFrame({"name": "risk_free_1m", "timestamp": dates, "value": rf})]
    for name, vol, rho, drift in (("nasdaq", 0.015, 0.3, 0.0004), ("sp500", 0.011, 0.25, 0.0003),
                                  ("gold", 0.009, 0.05, 0.0001)):
        z = rng.normal(0, 1, size=days)
        mkt_z = (daily_mkt - daily_mkt.mean()) / (daily_mkt.std() or 1.0)
        ret = drift + vol * (rho * mkt_z + np.sqrt(1 - rho ** 2) * z)
        frames.append(pd.DataFrame({"name": name, "timestamp": dates, "value": 1000.0 * np.exp(np.cumsum(ret))}))
    infl = 2.5 + _ar1(rng, days, 1, 0.995, 0.02)[:, 0]
    frames.append(pd.DataFrame({"name": "expected_inflation_1y", "timestamp": dates, "value": infl}))
    ref = pd.concat(frames, ignore_index=True)
    ref["timestamp"] = pd.to_datetime(ref["timestamp"], utc=True)
    return ref


def format_manifest(manifest: dict) -> str:
    lines = []
    for k, v in manifest.items():
        if isinstance(v, float):
            v = repr(v)
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"


def parse_manifest(text: str) -> dict:
    out: dict = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        value = value.strip()
        try:
            out[key.strip()] = int(value)
        except ValueError:
            try:
                out[key.strip()] = float(value)
            except ValueError:
                out[key.strip()] = value
    return out


def write_synthetic(sd: SyntheticDataset, directory) -> dict[str, Path]:
    paths = write_dataset(sd, directory)
    out = Path(directory)
    paths["manifest"] = out / "manifest.txt"
    paths["manifest"].write_text(format_manifest(sd.manifest), encoding="utf-8")
    paths["events"] = out / "events_input.csv"
    sd.events.to_csv(paths["events"], index=False, lineterminator="\n")
    return paths


# ---------------------------------------------------------------------------
# weekly panel DGP

@dataclass
class SyntheticPanelConfig:
    n_assets: int = 100
    n_weeks: int = 260
    premia: dict = field(default_factory=dict)
    n_placebo: int = 0
    market_mu_weekly: float = 0.0
    market_vol_weekly: float = 0.05
    beta_range: tuple = (0.8, 1.2)
    idio_vol_weekly: float = 0.04
    log_cap_sd: float = 1.0
    start: str = "2018-01-01"


def generate_synthetic_panel(config: SyntheticPanelConfig | None = None, seed: int = 0):
    """Weekly panel with planted quintile premia on named characteristics.

    Each characteristic is i.i.d. standard normal per asset-week. A planted
    premium ``lam`` adds ``lam * (q - 3) / 4`` to the following week's excess
    return, so the top-minus-bottom quintile spread is ``lam`` in expectation.
    Placebo characteristics ``placebo_00..`` carry no premium. Horizons beyond
    two weeks compound whole weeks (30 days -> 4 weeks, 90 days -> 13 weeks).
    """
    from .panel import HORIZONS, Panel, return_column

    cfg = config or SyntheticPanelConfig()
    rng = root_rng(seed, "synthetic_panel")
    n, T = cfg.n_assets, cfg.n_weeks
    ids = _asset_ids(n)
    names = list(cfg.premia) + [f"placebo_{i:02d}" for i in range(cfg.n_placebo)]
    chars = {c: rng.normal(0.0, 1.0, size=(T, n)) for c in names}
    betas = rng.uniform(cfg.beta_range[0], cfg.beta_range[1], size=n)
    mkt = rng.normal(cfg.market_mu_weekly, cfg.market_vol_weekly, size=T)
    caps = np.exp(rng.normal(20.0, cfg.log_cap_sd, size=n))[None, :] * np.exp(
        np.cumsum(rng.normal(0.0, 0.02, size=(T, n)), axis=0))
    fwd = betas[None, :] * mkt[:, None] + cfg.idio_vol_weekly * rng.normal(0.0, 1.0, size=(T, n))
    for c, lam in cfg.premia.items():
        steps = np.vstack([quintile_steps(row) for row in chars[c]])
        fwd += lam * steps
    weeks = pd.Timestamp(cfg.start, tz="UTC") + pd.to_timedelta(7 * np.arange(T), unit="D")

    def compound(k: int) -> np.ndarray:
        out = np.full((T, n), np.nan)
        growth = np.vstack([np.ones(n), np.cumprod(1.0 + fwd, axis=0)])
        out[: T - k + 1] = growth[k:] / growth[: T - k + 1] - 1.0
        return out

    cols = {
        "week_start": np.repeat(weeks.values, n),
        "asset_id": np.tile(np.array(ids, dtype=object), T),
        "market_cap_usd": caps.ravel(),
    }
    prev = np.vstack([np.full(n, np.nan), fwd[:-1]])
    per_h = {0: prev, 7: fwd, 14: compound(2), 30: compound(4), 90: compound(13)}
    for h in HORIZONS:
        cols[return_column(h)] = per_h[h].ravel()
    for c in names:
        cols[c] = chars[c].ravel()
    frame = pd.DataFrame(cols)
    frame["week_start"] = pd.to_datetime(frame["week_start"], utc=True)
    manifest = {"seed": int(seed), **{f"premium.{k}": v for k, v in cfg.premia.items()},
                **{f"beta.{a}": float(b) for a, b in zip(ids, betas)}}
    return Panel(frame=frame, characteristic_names=tuple(names), universe=(), manifest=manifest)


# ---------------------------------------------------------------------------
# factor-premium DGP

@dataclass
class SyntheticFactorConfig:
    n_assets: int = 100
    n_periods: int = 260
    premium: float = 0.0031
    beta_range: tuple = (0.0, 2.0)
    factor_vol: float = 0.02
    idio_vol: float = 0.02
    start: str = "2018-01-01"
    period_days: int = 7


def generate_factor_returns(config: SyntheticFactorConfig | None = None, seed: int = 0):
    """Returns ``r = beta * (premium + f) + e`` with one observable factor ``f``.

    Returns
    -------
    returns : DataFrame
        ``periods x assets`` excess returns.
    factor : Series
        The factor innovation ``f`` per period.
    betas : Series
        True loadings drawn uniformly from ``beta_range``.
    """
    cfg = config or SyntheticFactorConfig()
    rng = root_rng(seed, "synthetic_factor")
    ids = _asset_ids(cfg.n_assets)
    dates = pd.Timestamp(cfg.start, tz="UTC") + pd.to_timedelta(cfg.period_days * np.arange(cfg.n_periods),
                                                                  unit="D")
    betas = rng.uniform(cfg.beta_range[0], cfg.beta_range[1], size=cfg.n_assets)
    f = rng.normal(0.0, cfg.factor_vol, size=cfg.n_periods)
    e = rng.normal(0.0, cfg.idio_vol, size=(cfg.n_periods, cfg.n_assets))
    r = (cfg.premium + f)[:, None] * betas[None, :] + e
    return (pd.DataFrame(r, index=dates, columns=ids), pd.Series(f, index=dates, name="factor"),
            pd.Series(betas, index=ids, name="beta"))


# ---------------------------------------------------------------------------
# event DGP

def generate_event_series(n_days: int = 2000, n_events: int = 5, jump_sd: float = 5.0, window: int = 7,
                          sigma: float = 1.0, seed: int = 0):
    """Random walk whose daily increments shift by ``jump_sd * sigma`` on days
    ``+1..+window`` after each event, so the planted effect is ``jump_sd * sigma``.

    Events sit at least ``2 * window`` days from either end. Returns the level
    series and the event dates.
    """
    rng = root_rng(seed, "synthetic_events")
    steps = rng.normal(0.0, sigma, size=n_days)
    pos = np.sort(rng.choice(np.arange(2 * window, n_days - 2 * window), size=n_events, replace=False))
    for e in pos:
        steps[e + 1:e + 1 + window] += jump_sd * sigma
    dates = pd.date_range("2016-01-01", periods=n_days, freq="D", tz="UTC")
    return pd.Series(np.cumsum(steps), index=dates, name="level"), tuple(dates[pos])
