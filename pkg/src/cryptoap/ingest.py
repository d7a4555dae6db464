"""Raw input layer: hourly bars, daily feeds, asset metadata and reference series.

All four inputs live in plain CSV files (UTF-8, header row, RFC-4180 quoting)::

    bars.csv       timestamp,asset_id,exchange_id,mid_price,volume_usd,market_cap_usd
    feeds.csv      timestamp,asset_id,feed_name,value
    meta.csv       asset_id,is_stablecoin,is_synthetic,industry,usage,listed_markets,vc_owned
    reference.csv  name,timestamp,value

``listed_markets`` is a ``;``-separated list of ``exchange:QUOTE`` pairs and the
flag columns hold ``0``/``1``. Absent values are empty fields. Timestamps are
ISO-8601 and interpreted in UTC.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
import pandas as pd

BAR_COLUMNS = ["timestamp", "asset_id", "exchange_id", "mid_price", "volume_usd", "market_cap_usd"]
FEED_COLUMNS = ["timestamp", "asset_id", "feed_name", "value"]
META_COLUMNS = ["asset_id", "is_stablecoin", "is_synthetic", "industry", "usage", "listed_markets", "vc_owned"]
REFERENCE_COLUMNS = ["name", "timestamp", "value"]

SCHEMA = {
    "bars": BAR_COLUMNS,
    "feeds": FEED_COLUMNS,
    "meta": META_COLUMNS,
    "reference": REFERENCE_COLUMNS,
}

# feed name -> how a trailing week is aggregated by the characteristic engine.
#   sum   : total over the trailing seven days
#   last  : most recent value inside the trailing seven days
#   flow / holders : inputs of the distribution-change ratios
#   daily : display/event-study series, never aggregated into a characteristic
FEED_DICTIONARY: dict[str, str] = {
    "tx_volume": "sum",
    "active_addresses": "sum",
    "new_addresses": "sum",
    "total_addresses": "last",
    "circulation": "sum",
    "age_destroyed": "sum",
    "flow_cex": "flow",
    "flow_dex": "flow",
    "flow_defi": "flow",
    "flow_whales": "flow",
    "holders_small": "holders",
    "holders_medium": "holders",
    "holders_large": "holders",
    "holders_whale": "holders",
    "pct_supply_in_profit": "last",
    "pct_supply_cex": "last",
    "pct_supply_dex": "last",
    "pct_supply_defi": "last",
    "pct_supply_traders": "last",
    "exchange_inflow": "sum",
    "exchange_outflow": "sum",
    "num_trading_pairs": "last",
    "social_volume": "sum",
    "social_volume_reddit": "sum",
    "social_volume_twitter": "sum",
    "sentiment_pos_reddit": "sum",
    "sentiment_pos_twitter": "sum",
    "sentiment_neg_reddit": "sum",
    "sentiment_neg_twitter": "sum",
    "developer_activity": "sum",
    "trades": "sum",
    "spread_bps": "last",
    "ask_size": "last",
    "bid_size": "last",
    "circulating_supply": "last",
    "mvrv": "last",
    "utxo_median_age": "daily",
    "miner_hash_rate": "daily",
}

REFERENCE_NAMES = ("risk_free_1m", "nasdaq", "sp500", "gold", "expected_inflation_1y")


class DataError(ValueError):
    """A row of an input file violates the documented layout."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None,
                 column: str | None = None):
        self.path = path
        self.line = line
        self.column = column
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


class DuplicateKeyError(DataError):
    """Two rows share a primary key."""


@dataclass(frozen=True)
class HourlyBar:
    timestamp: pd.Timestamp
    asset_id: str
    exchange_id: str
    mid_price: float
    volume_usd: float
    market_cap_usd: float | None = None


@dataclass(frozen=True)
class AssetMeta:
    asset_id: str
    is_stablecoin: bool
    is_synthetic: bool
    industry: str
    usage: str
    listed_markets: frozenset
    vc_owned: bool


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable bundle of the four raw inputs, each a pandas frame.

    Frames are sorted by ``(asset_id, timestamp)`` (``(name, timestamp)`` for
    references) and must not be mutated after construction.
    """

    bars: pd.DataFrame
    feeds: pd.DataFrame = field(default_factory=lambda: _empty(FEED_COLUMNS))
    meta: pd.DataFrame = field(default_factory=lambda: _empty(META_COLUMNS))
    reference: pd.DataFrame = field(default_factory=lambda: _empty(REFERENCE_COLUMNS))

    @property
    def assets(self) -> list[str]:
        return sorted(set(self.bars["asset_id"]) | set(self.meta["asset_id"]))

    @property
    def start(self) -> pd.Timestamp:
        return self.bars["timestamp"].min()

    @property
    def end(self) -> pd.Timestamp:
        return self.bars["timestamp"].max()

    def asset_meta(self, asset_id: str) -> AssetMeta:
        row = self.meta.loc[self.meta["asset_id"] == asset_id]
        if row.empty:
            raise KeyError(asset_id)
        r = row.iloc[0]
        return AssetMeta(r.asset_id, bool(r.is_stablecoin), bool(r.is_synthetic), r.industry,
                         r.usage, frozenset(r.listed_markets), bool(r.vc_owned))

    def reference_series(self, name: str) -> pd.Series:
        ref = self.reference.loc[self.reference["name"] == name]
        return pd.Series(ref["value"].to_numpy(), index=pd.DatetimeIndex(ref["timestamp"]), name=name)

    def equals(self, other: "Dataset") -> bool:
        for attr in ("bars", "feeds", "meta", "reference"):
            a, b = getattr(self, attr), getattr(other, attr)
            if not a.reset_index(drop=True).equals(b.reset_index(drop=True)):
                return False
        return True


def _empty(columns: list[str]) -> pd.DataFrame:
    frame = pd.DataFrame({c: pd.Series(dtype=object) for c in columns})
    if "timestamp" in frame:
        frame["timestamp"] = pd.Series(dtype="datetime64[ns, UTC]")
    for c in ("mid_price", "volume_usd", "market_cap_usd", "value"):
        if c in frame:
            frame[c] = pd.Series(dtype=float)
    return frame


# ---------------------------------------------------------------------------
# loading

def _read_raw(path: Path, columns: list[str]) -> pd.DataFrame:
    if not path.exists():
        raise FileNotFoundError(str(path))
    raw = pd.read_csv(path, dtype=str, keep_default_na=False, na_filter=False, encoding="utf-8")
    missing = [c for c in columns if c not in raw.columns]
    if missing:
        raise DataError("missing header column", path=str(path), line=1, column=missing[0])
    return raw[columns]


def _line(idx: int) -> int:
    # header is line 1
    return int(idx) + 2


def _parse_timestamps(raw: pd.Series, path: Path, column: str = "timestamp") -> pd.Series:
    ts = pd.to_datetime(raw, utc=True, errors="coerce", format="ISO8601")
    bad = ts.isna()
    if bad.any():
        i = int(np.flatnonzero(bad.to_numpy())[0])
        raise DataError(f"unparseable timestamp {raw.iloc[i]!r}", str(path), _line(i), column)
    return ts


def _parse_float(raw: pd.Series, path: Path, column: str, *, allow_empty: bool,
                 lower: float | None = None, strict: bool = False) -> pd.Series:
    empty = raw.str.strip() == ""
    vals = pd.to_numeric(raw.where(~empty, "nan"), errors="coerce")
    bad = vals.isna() & ~empty
    if not allow_empty:
        bad |= empty
    bad |= np.isinf(vals.to_numpy(dtype=float))
    if lower is not None:
        v = vals.to_numpy(dtype=float)
        with np.errstate(invalid="ignore"):
            bad |= (v <= lower) if strict else (v < lower)
    if bad.any():
        i = int(np.flatnonzero(bad.to_numpy())[0])
        raise DataError(f"invalid value {raw.iloc[i]!r}", str(path), _line(i), column)
    # to_numeric can be off by an ulp; float() round-trips repr exactly
    return raw.where(~empty, "nan").astype(float)


def _parse_flag(raw: pd.Series, path: Path, column: str) -> pd.Series:
    norm = raw.str.strip().str.lower()
    ok = norm.isin(["0", "1", "true", "false"])
    if not ok.all():
        i = int(np.flatnonzero(~ok.to_numpy())[0])
        raise DataError(f"invalid flag {raw.iloc[i]!r}", str(path), _line(i), column)
    return norm.isin(["1", "true"])


def _check_nonempty(raw: pd.Series, path: Path, column: str) -> None:
    bad = raw.str.strip() == ""
    if bad.any():
        i = int(np.flatnonzero(bad.to_numpy())[0])
        raise DataError("empty field", str(path), _line(i), column)


def _check_duplicates(frame: pd.DataFrame, keys: list[str], path: Path | None) -> None:
    dup = frame.duplicated(subset=keys, keep="first")
    if dup.any():
        i = int(np.flatnonzero(dup.to_numpy())[0])
        key = tuple(frame.iloc[i][k] for k in keys)
        key = tuple(k.isoformat() if isinstance(k, pd.Timestamp) else k for k in key)
        raise DuplicateKeyError(f"duplicate key {key}", None if path is None else str(path),
                                None if path is None else _line(i))


def parse_markets(text: str) -> frozenset:
    out = set()
    for part in filter(None, (p.strip() for p in text.split(";"))):
        exch, _, quote = part.partition(":")
        if not exch or not quote:
            raise ValueError(f"bad market {part!r}")
        out.add((exch.strip(), quote.strip().upper()))
    return frozenset(out)


def format_markets(markets: Iterable) -> str:
    return ";".join(f"{e}:{q}" for e, q in sorted(markets))


def load_bars(path: str | os.PathLike) -> pd.DataFrame:
    path = Path(path)
    raw = _read_raw(path, BAR_COLUMNS)
    ts = _parse_timestamps(raw["timestamp"], path)
    whole = (ts.dt.minute == 0) & (ts.dt.second == 0) & (ts.dt.microsecond == 0) & (ts.dt.nanosecond == 0)
    if not whole.all():
        i = int(np.flatnonzero(~whole.to_numpy())[0])
        raise DataError("timestamp is not a whole hour", str(path), _line(i), "timestamp")
    _check_nonempty(raw["asset_id"], path, "asset_id")
    _check_nonempty(raw["exchange_id"], path, "exchange_id")
    bars = pd.DataFrame({
        "timestamp": ts,
        "asset_id": raw["asset_id"].str.strip(),
        "exchange_id": raw["exchange_id"].str.strip(),
        "mid_price": _parse_float(raw["mid_price"], path, "mid_price", allow_empty=False, lower=0.0, strict=True),
        "volume_usd": _parse_float(raw["volume_usd"], path, "volume_usd", allow_empty=False, lower=0.0),
        "market_cap_usd": _parse_float(raw["market_cap_usd"], path, "market_cap_usd", allow_empty=True, lower=0.0),
    })
    _check_duplicates(bars, ["timestamp", "asset_id", "exchange_id"], path)
    return _sort(bars, ["asset_id", "timestamp", "exchange_id"])


def load_feeds(path: str | os.PathLike) -> pd.DataFrame:
    path = Path(path)
    raw = _read_raw(path, FEED_COLUMNS)
    ts = _parse_timestamps(raw["timestamp"], path)
    _check_nonempty(raw["asset_id"], path, "asset_id")
    names = raw["feed_name"].str.strip()
    unknown = ~names.isin(list(FEED_DICTIONARY))
    if unknown.any():
        i = int(np.flatnonzero(unknown.to_numpy())[0])
        raise DataError(f"unknown feed {names.iloc[i]!r}", str(path), _line(i), "feed_name")
    feeds = pd.DataFrame({
        "timestamp": ts,
        "asset_id": raw["asset_id"].str.strip(),
        "feed_name": names,
        "value": _parse_float(raw["value"], path, "value", allow_empty=True),
    })
    _check_duplicates(feeds, ["timestamp", "asset_id", "feed_name"], path)
    return _sort(feeds, ["asset_id", "timestamp", "feed_name"])


def load_meta(path: str | os.PathLike) -> pd.DataFrame:
    path = Path(path)
    raw = _read_raw(path, META_COLUMNS)
    for c in ("asset_id", "industry", "usage"):
        _check_nonempty(raw[c], path, c)
    markets = []
    for i, text in enumerate(raw["listed_markets"]):
        try:
            markets.append(parse_markets(text))
        except ValueError as exc:
            raise DataError(str(exc), str(path), _line(i), "listed_markets") from None
    meta = pd.DataFrame({
        "asset_id": raw["asset_id"].str.strip(),
        "is_stablecoin": _parse_flag(raw["is_stablecoin"], path, "is_stablecoin"),
        "is_synthetic": _parse_flag(raw["is_synthetic"], path, "is_synthetic"),
        "industry": raw["industry"].str.strip(),
        "usage": raw["usage"].str.strip(),
        "listed_markets": pd.Series(markets, dtype=object),
        "vc_owned": _parse_flag(raw["vc_owned"], path, "vc_owned"),
    })
    _check_duplicates(meta, ["asset_id"], path)
    return _sort(meta, ["asset_id"])


def load_reference(path: str | os.PathLike) -> pd.DataFrame:
    path = Path(path)
    raw = _read_raw(path, REFERENCE_COLUMNS)
    _check_nonempty(raw["name"], path, "name")
    ref = pd.DataFrame({
        "name": raw["name"].str.strip(),
        "timestamp": _parse_timestamps(raw["timestamp"], path),
        "value": _parse_float(raw["value"], path, "value", allow_empty=False),
    })
    _check_duplicates(ref, ["name", "timestamp"], path)
    return _sort(ref, ["name", "timestamp"])


def _sort(frame: pd.DataFrame, keys: list[str]) -> pd.DataFrame:
    return frame.sort_values(keys, kind="mergesort").reset_index(drop=True)


def resolve_paths(paths: str | os.PathLike | Mapping[str, str | os.PathLike]) -> dict[str, Path]:
    """Map a data directory (or an explicit mapping) onto the four file roles.

    A role may be stored gzip-compressed as ``<role>.csv.gz``.
    """
    if isinstance(paths, Mapping):
        return {k: Path(v) for k, v in paths.items() if v is not None}
    root = Path(paths)
    if not root.exists():
        raise FileNotFoundError(str(root))
    out = {}
    for role in SCHEMA:
        for candidate in (root / f"{role}.csv", root / f"{role}.csv.gz"):
            if candidate.exists():
                out[role] = candidate
                break
    return out


def load_dataset(paths, schema: Mapping[str, list[str]] = SCHEMA) -> Dataset:
    """Load and validate a dataset from a directory or a ``{role: path}`` mapping.

    ``bars`` is required; ``feeds``, ``meta`` and ``reference`` default to empty.
    Raises :class:`DataError` naming file, line and column for a malformed row,
    :class:`DuplicateKeyError` for a repeated primary key and
    :class:`FileNotFoundError` for a missing path.
    """
    files = resolve_paths(paths)
    unknown = set(files) - set(schema)
    if unknown:
        raise ValueError(f"unknown dataset role(s): {sorted(unknown)}")
    if "bars" not in files:
        raise FileNotFoundError("bars.csv")
    loaders = {"bars": load_bars, "feeds": load_feeds, "meta": load_meta, "reference": load_reference}
    parts = {role: loaders[role](p) for role, p in files.items()}
    return Dataset(**parts)


# ---------------------------------------------------------------------------
# writing

def _fmt_float(values: np.ndarray) -> list[str]:
    return ["" if not np.isfinite(v) else repr(float(v)) for v in values]


def _fmt_ts(ts: pd.Series, daily_ok: bool) -> list[str]:
    if daily_ok and len(ts) and (ts == ts.dt.normalize()).all():
        return list(ts.dt.strftime("%Y-%m-%d"))
    return list(ts.dt.strftime("%Y-%m-%dT%H:%M:%SZ"))


def _write_rows(path: Path, header: list[str], columns: list[list[str]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(zip(*columns))


def write_dataset(d: Dataset, directory: str | os.PathLike) -> dict[str, Path]:
    """Serialize ``d`` into the four CSV layouts; inverse of :func:`load_dataset`."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    paths = {role: out / f"{role}.csv" for role in SCHEMA}
    b = d.bars
    _write_rows(paths["bars"], BAR_COLUMNS, [
        _fmt_ts(b["timestamp"], False), list(b["asset_id"]), list(b["exchange_id"]),
        _fmt_float(b["mid_price"].to_numpy(float)), _fmt_float(b["volume_usd"].to_numpy(float)),
        _fmt_float(b["market_cap_usd"].to_numpy(float)),
    ])
    f = d.feeds
    _write_rows(paths["feeds"], FEED_COLUMNS, [
        _fmt_ts(f["timestamp"], True), list(f["asset_id"]), list(f["feed_name"]),
        _fmt_float(f["value"].to_numpy(float)),
    ])
    m = d.meta
    flag = lambda s: ["1" if v else "0" for v in s]  # noqa: E731
    _write_rows(paths["meta"], META_COLUMNS, [
        list(m["asset_id"]), flag(m["is_stablecoin"]), flag(m["is_synthetic"]), list(m["industry"]),
        list(m["usage"]), [format_markets(x) for x in m["listed_markets"]], flag(m["vc_owned"]),
    ])
    r = d.reference
    _write_rows(paths["reference"], REFERENCE_COLUMNS, [
        list(r["name"]), _fmt_ts(r["timestamp"], True), _fmt_float(r["value"].to_numpy(float)),
    ])
    return paths


def make_dataset(bars: pd.DataFrame, feeds: pd.DataFrame | None = None, meta: pd.DataFrame | None = None,
                 reference: pd.DataFrame | None = None) -> Dataset:
    """Build a Dataset from in-memory frames, applying the same checks as the loaders."""
    bars = bars.copy()
    bars["timestamp"] = pd.to_datetime(bars["timestamp"], utc=True)
    if "market_cap_usd" not in bars:
        bars["market_cap_usd"] = np.nan
    bars = bars[BAR_COLUMNS].astype({"mid_price": float, "volume_usd": float, "market_cap_usd": float})
    if (bars["timestamp"] != bars["timestamp"].dt.floor("h")).any():
        raise DataError("timestamp is not a whole hour", column="timestamp")
    if not (np.isfinite(bars["mid_price"]) & (bars["mid_price"] > 0)).all():
        raise DataError("mid_price must be finite and positive", column="mid_price")
    if not (np.isfinite(bars["volume_usd"]) & (bars["volume_usd"] >= 0)).all():
        raise DataError("volume_usd must be finite and non-negative", column="volume_usd")
    if (bars["market_cap_usd"] < 0).any():
        raise DataError("market_cap_usd must be non-negative", column="market_cap_usd")
    _check_duplicates(bars, ["timestamp", "asset_id", "exchange_id"], None)
    parts = {"bars": _sort(bars, ["asset_id", "timestamp", "exchange_id"])}
    if feeds is not None:
        feeds = feeds.copy()
        feeds["timestamp"] = pd.to_datetime(feeds["timestamp"], utc=True)
        feeds = feeds[FEED_COLUMNS].astype({"value": float})
        unknown = set(feeds["feed_name"]) - set(FEED_DICTIONARY)
        if unknown:
            raise DataError(f"unknown feed {sorted(unknown)[0]!r}", column="feed_name")
        _check_duplicates(feeds, ["timestamp", "asset_id", "feed_name"], None)
        parts["feeds"] = _sort(feeds, ["asset_id", "timestamp", "feed_name"])
    if meta is not None:
        meta = meta.copy()
        meta["listed_markets"] = [frozenset(x) if not isinstance(x, str) else parse_markets(x)
                                  for x in meta["listed_markets"]]
        for c in ("is_stablecoin", "is_synthetic", "vc_owned"):
            meta[c] = meta[c].astype(bool)
        meta = meta[META_COLUMNS]
        _check_duplicates(meta, ["asset_id"], None)
        parts["meta"] = _sort(meta, ["asset_id"])
    if reference is not None:
        reference = reference.copy()
        reference["timestamp"] = pd.to_datetime(reference["timestamp"], utc=True)
        reference = reference[REFERENCE_COLUMNS].astype({"value": float})
        _check_duplicates(reference, ["name", "timestamp"], None)
        parts["reference"] = _sort(reference, ["name", "timestamp"])
    return Dataset(**parts)


def average_providers(*frames: pd.DataFrame, weights: Iterable[float] | None = None) -> pd.DataFrame:
    """Combine the same bar layout from several data vendors into one frame.

    Numeric columns are weight-averaged per ``(timestamp, asset_id, exchange_id)``
    over the providers that report the key (equal weights by default).
    """
    if not frames:
        raise ValueError("need at least one frame")
    w = np.ones(len(frames)) if weights is None else np.asarray(list(weights), float)
    if len(w) != len(frames) or (w <= 0).any():
        raise ValueError("one positive weight per provider required")
    stacked = []
    for frame, wt in zip(frames, w):
        part = frame[BAR_COLUMNS].copy()
        part["_w"] = wt
        stacked.append(part)
    allb = pd.concat(stacked, ignore_index=True)
    keys = ["timestamp", "asset_id", "exchange_id"]
    out = allb[keys].drop_duplicates().set_index(keys)
    for col in ("mid_price", "volume_usd", "market_cap_usd"):
        has = allb[col].notna()
        num = (allb[col].where(has, 0.0) * allb["_w"]).groupby([allb[k] for k in keys]).sum()
        den = allb["_w"].where(has, 0.0).groupby([allb[k] for k in keys]).sum()
        out[col] = (num / den.replace(0.0, np.nan)).reindex(out.index)
    return _sort(out.reset_index(), ["asset_id", "timestamp", "exchange_id"])


# ---------------------------------------------------------------------------
# validation report

@dataclass(frozen=True)
class Issue:
    kind: str
    asset_id: str | None
    timestamp: pd.Timestamp | None
    detail: str = ""


@dataclass
class ValidationReport:
    issues: list[Issue] = field(default_factory=list)

    def __bool__(self) -> bool:
        return bool(self.issues)

    def __len__(self) -> int:
        return len(self.issues)

    @property
    def clean(self) -> bool:
        return not self.issues

    def of_kind(self, kind: str) -> list[Issue]:
        return [i for i in self.issues if i.kind == kind]


def validate_dataset(d: Dataset) -> ValidationReport:
    """Report coverage gaps, non-monotone timestamps and bad values. Never raises."""
    issues: list[Issue] = []
    bars = d.bars
    for asset, g in bars.groupby("asset_id", sort=True):
        ts = g["timestamp"]
        diffs = ts.diff().dropna()
        back = diffs < pd.Timedelta(0)
        for pos in np.flatnonzero(back.to_numpy()):
            issues.append(Issue("non_monotone_timestamp", asset, ts.iloc[pos + 1]))
        hours = pd.DatetimeIndex(ts.unique()).sort_values()
        full = pd.date_range(hours[0], hours[-1], freq="h")
        for h in full.difference(hours):
            issues.append(Issue("coverage_gap", asset, h))
        for col, strict in (("mid_price", True), ("volume_usd", False), ("market_cap_usd", False)):
            v = g[col].to_numpy(float)
            with np.errstate(invalid="ignore"):
                bad = (v <= 0) if strict else (v < 0)
            if col == "mid_price":
                bad |= ~np.isfinite(v)
            for pos in np.flatnonzero(bad):
                issues.append(Issue("negative_value", asset, ts.iloc[pos], col))
    feeds = d.feeds
    if len(feeds):
        nan = feeds["value"].isna().to_numpy()
        for pos in np.flatnonzero(nan):
            r = feeds.iloc[pos]
            issues.append(Issue("missing_feed_value", r.asset_id, r.timestamp, r.feed_name))
        for (asset, name), g in feeds.groupby(["asset_id", "feed_name"], sort=True):
            back = g["timestamp"].diff() <= pd.Timedelta(0)
            for pos in np.flatnonzero(back.to_numpy()):
                issues.append(Issue("non_monotone_timestamp", asset, g["timestamp"].iloc[pos], name))
    ref = d.reference
    if len(ref):
        for name, g in ref.groupby("name", sort=True):
            back = g["timestamp"].diff() <= pd.Timedelta(0)
            for pos in np.flatnonzero(back.to_numpy()):
                issues.append(Issue("non_monotone_timestamp", None, g["timestamp"].iloc[pos], name))
    return ValidationReport(issues)
