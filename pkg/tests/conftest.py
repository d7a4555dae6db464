"""Shared fixtures: a small synthetic dataset and a hand-built universe scenario."""

from __future__ import annotations

import numpy as np
import pandas as pd
import pytest

from cryptoap.ingest import make_dataset
from cryptoap.synthetic import SyntheticConfig, generate_synthetic

# ---------------------------------------------------------------------------
# crafted ten-asset universe
#
# Data runs hourly from 2020-01-01. The daily cap total is held at exactly 1e10
# by shrinking U0 whenever another cap appears or grows. Volume is booked once
# a day at 12:00 on the listed exchange.
#
#   U0  large, always passes
#   U1  always passes
#   U2  stablecoin
#   U3  synthetic
#   U4  only listed on a non-US exchange, trades there
#   U5  first bar 2020-04-01: short history until July
#   U6  cap exactly 1bp of total until 2020-07-01, then 2bp
#   U7  weekly volume exactly $500,000 until 2020-07-01, then $1,000,000
#   U8  $1,000/day from 2020-06-06 to 2020-07-24: out in August only
#   U9  no volume 2020-06-03..2020-06-16: out July to September

START = pd.Timestamp("2020-01-01", tz="UTC")
END = pd.Timestamp("2020-11-15", tz="UTC")
TOTAL_CAP = 1e10
CRAFTED_MONTHS = ["2020-05", "2020-06", "2020-07", "2020-08", "2020-09", "2020-10"]

# membership derived by hand from the rules and the scenario above
CRAFTED_EXPECTED = {
    "2020-05": ["U0", "U1", "U8", "U9"],
    "2020-06": ["U0", "U1", "U8", "U9"],
    "2020-07": ["U0", "U1", "U5", "U8"],
    "2020-08": ["U0", "U1", "U5", "U6"],
    "2020-09": ["U0", "U1", "U5", "U6", "U7", "U8"],
    "2020-10": ["U0", "U1", "U5", "U6", "U7", "U8", "U9"],
}

# 7-day cycle of integer daily volumes summing to exactly 500,000
HALF_MILLION_CYCLE = np.array([71429, 71429, 71429, 71429, 71428, 71428, 71428], dtype=float)


def _crafted_daily(days: pd.DatetimeIndex):
    n = len(days)
    caps = {a: np.full(n, c) for a, c in
            {"U1": 5e8, "U2": 1e8, "U3": 1e8, "U4": 1e8, "U6": 1e6, "U7": 1e8, "U8": 1e8, "U9": 1e8}.items()}
    caps["U5"] = np.where(days >= pd.Timestamp("2020-04-01", tz="UTC"), 2e8, np.nan)
    after_jul = days >= pd.Timestamp("2020-07-01", tz="UTC")
    caps["U6"] = np.where(after_jul, 2e6, 1e6)
    others = sum(np.nan_to_num(c) for c in caps.values())
    caps["U0"] = TOTAL_CAP - others

    vol = {a: np.full(n, 1e6) for a in caps}
    vol["U7"] = HALF_MILLION_CYCLE[np.arange(n) % 7] * np.where(after_jul, 2.0, 1.0)
    low = (days >= pd.Timestamp("2020-06-06", tz="UTC")) & (days < pd.Timestamp("2020-07-25", tz="UTC"))
    vol["U8"] = np.where(low, 1000.0, 1e6)
    dead = (days >= pd.Timestamp("2020-06-03", tz="UTC")) & (days < pd.Timestamp("2020-06-17", tz="UTC"))
    vol["U9"] = np.where(dead, 0.0, 1e6)
    return caps, vol


def crafted_universe_dataset(seed: int = 11):
    hours = pd.date_range(START, END, freq="h", inclusive="left")
    days = pd.date_range(START, END, freq="D", inclusive="left")
    caps, vol = _crafted_daily(days)
    rng = np.random.default_rng(seed)
    day_of_hour = (hours.normalize() - START).days.to_numpy()
    frames = []
    for a in sorted(caps):
        price = 100.0 * np.exp(np.cumsum(rng.normal(0.0, 0.005, size=len(hours))))
        cap = caps[a][day_of_hour]
        v = np.where(hours.hour == 12, vol[a][day_of_hour], 0.0)
        keep = np.isfinite(cap)
        frames.append(pd.DataFrame({
            "timestamp": hours[keep], "asset_id": a, "exchange_id": "binance" if a == "U4" else "coinbase",
            "mid_price": price[keep], "volume_usd": v[keep], "market_cap_usd": cap[keep],
        }))
    meta = pd.DataFrame({
        "asset_id": sorted(caps),
        "is_stablecoin": [a == "U2" for a in sorted(caps)],
        "is_synthetic": [a == "U3" for a in sorted(caps)],
        "industry": ["currency" if i % 2 else "defi" for i in range(len(caps))],
        "usage": "payments",
        "listed_markets": ["binance:USDT" if a == "U4" else "coinbase:USD" for a in sorted(caps)],
        "vc_owned": False,
    })
    reference = pd.DataFrame({"name": "risk_free_1m", "timestamp": days, "value": 0.01})
    return make_dataset(pd.concat(frames, ignore_index=True), None, meta, reference)


@pytest.fixture(scope="session")
def crafted():
    return crafted_universe_dataset()


@pytest.fixture(scope="session")
def small_synthetic():
    cfg = SyntheticConfig(n_assets=8, weeks=40, exchanges=("coinbase", "kraken"), premia={"return_tm14": 0.01})
    return generate_synthetic(cfg, seed=7)


@pytest.fixture(scope="session")
def small_panel(small_synthetic):
    from cryptoap.panel import build_panel
    from cryptoap.universe import build_universe_series, first_eligible_month

    d = small_synthetic
    first = first_eligible_month(d, extra_days=92)
    last = pd.Period(d.end.tz_localize(None), freq="M")
    return build_panel(d, build_universe_series(d, (first, last)))


# ---------------------------------------------------------------------------
# one summary line per acceptance criterion

def _criteria_lines(config) -> list:
    if not hasattr(config, "_criteria_lines"):
        config._criteria_lines = []
    return config._criteria_lines


@pytest.fixture
def report(request):
    """``report(number, title, ok, detail)`` prints and records a pass/fail line."""
    def record(number: int, title: str, ok: bool, detail: str = "") -> bool:
        line = f"criterion {number} {'PASS' if ok else 'FAIL'} {title}: {detail}"
        print(line)
        _criteria_lines(request.config).append((number, line))
        return ok
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = _criteria_lines(config)
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
