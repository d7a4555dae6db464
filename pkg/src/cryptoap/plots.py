"""PNG figures rendered from computed results; never feeds back into any table."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from . import metrics  # noqa: E402

DPI = 120


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    # fixed metadata keeps repeated renders identical
    fig.savefig(path, dpi=DPI, metadata={"Software": None})
    plt.close(fig)
    return path


def cumulative_returns(series: pd.DataFrame, path) -> Path:
    fig, ax = plt.subplots(figsize=(7, 4))
    growth = (1.0 + series.fillna(0.0)).cumprod() - 1.0
    for c in growth.columns:
        ax.plot(growth.index, growth[c], label=str(c), lw=1.2)
    ax.axhline(0.0, color="0.6", lw=0.8)
    ax.set_ylabel("cumulative excess return")
    ax.legend(fontsize=8, frameon=False)
    return _save(fig, Path(path))


def risk_return(series: pd.DataFrame, path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 4))
    for c in series.columns:
        try:
            st = metrics.perf_stats(series[c].to_numpy(float))
        except ValueError:
            continue
        ax.scatter(st.vol_ann, st.geometric_ann, s=25)
        ax.annotate(str(c), (st.vol_ann, st.geometric_ann), fontsize=8, xytext=(3, 3), textcoords="offset points")
    ax.set_xlabel("annualized volatility")
    ax.set_ylabel("annualized geometric return")
    return _save(fig, Path(path))


def long_short(sorts, path, top: int = 20) -> Path:
    rows = sorted(sorts, key=lambda r: -abs(r.t_stats[-1]) if np.isfinite(r.t_stats[-1]) else 0.0)[:top]
    fig, ax = plt.subplots(figsize=(7, max(2.5, 0.25 * len(rows) + 1)))
    names = [r.characteristic for r in rows][::-1]
    vals = [r.means[-1] for r in rows][::-1]
    ax.barh(names, vals, color=["tab:blue" if v >= 0 else "tab:red" for v in vals])
    ax.axvline(0.0, color="0.4", lw=0.8)
    ax.set_xlabel("mean weekly 5-1 excess return")
    ax.tick_params(axis="y", labelsize=7)
    return _save(fig, Path(path))


def mutual_information(table: pd.DataFrame, path) -> Path:
    t = table.loc[table["year"] == "all"].dropna(subset=["mi_nats"]).sort_values("mi_nats")
    fig, ax = plt.subplots(figsize=(7, max(2.5, 0.18 * len(t) + 1)))
    ax.barh(t["characteristic"], t["mi_nats"], color="tab:purple")
    ax.set_xlabel("mutual information (nats)")
    ax.tick_params(axis="y", labelsize=6)
    return _save(fig, Path(path))


def event_study(results, path) -> Path:
    frame = pd.DataFrame([(r.series, r.window, r.t) for r in results], columns=["series", "window", "t"])
    wide = frame.pivot(index="series", columns="window", values="t")
    fig, ax = plt.subplots(figsize=(7, 3.5))
    x = np.arange(len(wide))
    width = 0.8 / max(len(wide.columns), 1)
    for i, w in enumerate(wide.columns):
        ax.bar(x + i * width, wide[w], width, label=f"{w}-day window")
    ax.axhline(1.96, color="0.5", ls="--", lw=0.8)
    ax.axhline(-1.96, color="0.5", ls="--", lw=0.8)
    ax.set_xticks(x + width * (len(wide.columns) - 1) / 2, wide.index, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("estimate / bootstrap SE")
    ax.legend(fontsize=8, frameon=False)
    return _save(fig, Path(path))


def render_all(out_dir, results: dict) -> list[Path]:
    """Render whatever figures the available stage results support into ``out_dir/figures``."""
    fig_dir = Path(out_dir) / "figures"
    written = []
    if "perf_series" in results:
        written.append(cumulative_returns(results["perf_series"], fig_dir / "cumulative_returns.png"))
        written.append(risk_return(results["perf_series"], fig_dir / "risk_return.png"))
    if results.get("sorts"):
        written.append(long_short(results["sorts"], fig_dir / "long_short.png"))
    if "mi" in results:
        written.append(mutual_information(results["mi"], fig_dir / "mutual_information.png"))
    if results.get("events"):
        written.append(event_study(results["events"], fig_dir / "event_study.png"))
    return written
