"""Command-line entry point: ``cryptoap <command> [options]``.

Exit status is 0 on success, 1 when a stage fails at run time and 2 for usage
or configuration errors (including missing input paths). Failures print one
line to stderr of the form ``cryptoap: error: stage=<stage> kind=<kind> message=<text>``.
"""

from __future__ import annotations

import argparse
import hashlib
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import pandas as pd

from . import __version__

COMMANDS = ("synth", "universe", "panel", "sorts", "signal", "mi", "pca", "fmb", "events", "pipeline")
FIXTURE = "fixture"

# config key -> (parser, default); None default means "derived at run time"
_BOOL = {"1": True, "true": True, "yes": True, "on": True, "0": False, "false": False, "no": False, "off": False}


def _bool(text: str) -> bool:
    try:
        return _BOOL[text.strip().lower()]
    except KeyError:
        raise ValueError(f"not a boolean: {text!r}") from None


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.replace(";", ",").split(",") if x.strip())


def _strs(text: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in text.replace(";", ",").split(",") if x.strip())


def _premia(text: str) -> dict:
    out = {}
    for part in _strs(text):
        name, sep, value = part.partition(":")
        if not sep:
            raise ValueError(f"premium {part!r} is not name:value")
        out[name.strip()] = float(value)
    return out


KEYS = {
    "data": (str, None),
    "out": (str, "out"),
    "seed": (int, 0),
    "from": (str, None),
    "to": (str, None),
    "threads": (int, 1),
    "figures": (_bool, False),
    "panel": (str, None),
    # universe criteria
    "trailing_weeks": (int, 12),
    "min_median_weekly_volume_usd": (float, 500_000.0),
    "mcap_floor_bps_of_total": (float, 1.0),
    # synthetic data
    "n_assets": (int, 20),
    "weeks": (int, 104),
    "start": (str, "2019-01-07"),
    "exchanges": (_strs, ("coinbase", "kraken", "gemini")),
    "premia": (_premia, {}),
    "n_events": (int, 5),
    "n_stablecoins": (int, 1),
    "with_feeds": (_bool, True),
    "feed_missing_rate": (float, 0.0),
    # sorts and signal
    "sort_hac": (_bool, False),
    "nw_lags": (int, None),
    # risk premia
    "fmb_min_history_days": (int, 200),
    "fmb_frequency": (str, "weekly"),
    # events
    "events_file": (str, None),
    "event_asset": (str, None),
    "event_window": (int, 7),
    "event_windows": (_ints, (2, 7, 14)),
    "bootstrap_b": (int, 10_000),
}

# keys that never change output bytes, so they stay out of the config hash
_UNHASHED = {"out", "threads", "figures"}


class UsageError(Exception):
    """Bad command line or configuration; exit status 2."""


class StageError(Exception):
    def __init__(self, stage: str, exc: BaseException):
        super().__init__(str(exc))
        self.stage = stage
        self.exc = exc


@dataclass
class RunConfig:
    command: str
    values: dict
    dry_run: bool = False
    sources: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    @property
    def out(self) -> Path:
        return Path(self.values["out"])

    def digest(self) -> str:
        items = sorted((k, v) for k, v in self.values.items() if k not in _UNHASHED)
        blob = "\n".join(f"{k}={_canon(v)}" for k, v in items)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _canon(v) -> str:
    if isinstance(v, dict):
        return ",".join(f"{k}:{v[k]!r}" for k in sorted(v))
    if isinstance(v, (tuple, list)):
        return ",".join(str(x) for x in v)
    return repr(v)


def parse_config_file(path) -> dict[str, str]:
    """Read ``key = value`` lines; ``#`` starts a comment, blank lines are ignored."""
    p = Path(path)
    if not p.exists():
        raise UsageError(f"config file not found: {p}")
    out = {}
    for i, line in enumerate(p.read_text(encoding="utf-8").splitlines(), start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        key, sep, value = text.partition("=")
        if not sep or not key.strip():
            raise UsageError(f"{p}:{i}: expected 'key = value'")
        key = key.strip().replace("-", "_")
        if key not in KEYS:
            raise UsageError(f"{p}:{i}: unknown key {key!r}")
        out[key] = value.strip()
    return out


def resolve_config(command: str, file_values: dict[str, str], flag_values: dict, dry_run: bool = False
                   ) -> RunConfig:
    """Defaults, then the config file, then flags."""
    values, sources = {}, {}
    for key, (conv, default) in KEYS.items():
        values[key], sources[key] = default, "default"
        if key in file_values:
            try:
                values[key] = conv(file_values[key])
            except ValueError as e:
                raise UsageError(f"config key {key!r}: {e}") from None
            sources[key] = "file"
        if flag_values.get(key) is not None:
            raw = flag_values[key]
            try:
                values[key] = conv(raw) if isinstance(raw, str) and conv is not str else raw
            except ValueError as e:
                raise UsageError(f"--{key}: {e}") from None
            sources[key] = "flag"
    if values["threads"] < 1:
        raise UsageError("threads must be >= 1")
    if values["fmb_frequency"] not in ("weekly", "monthly"):
        raise UsageError("fmb_frequency must be 'weekly' or 'monthly'")
    for key in ("from", "to"):
        if values[key] is not None:
            try:
                pd.Period(str(values[key])[:7], freq="M")
            except ValueError:
                raise UsageError(f"--{key}: not a date: {values[key]!r}") from None
    return RunConfig(command, values, dry_run, sources)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cryptoap", description="Cross-sectional crypto asset pricing pipeline.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command")
    helps = {
        "synth": "write a seeded synthetic dataset",
        "universe": "build monthly universe snapshots",
        "panel": "build the weekly panel and characteristics",
        "sorts": "quintile portfolio sorts per characteristic",
        "signal": "univariate panel regressions at every horizon",
        "mi": "mutual information of characteristics with forward returns by year",
        "pca": "first principal component per characteristic category",
        "fmb": "Fama-MacBeth inflation risk premium",
        "events": "event study with placebo-bootstrap errors",
        "pipeline": "run every stage and write all tables",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", metavar="PATH", help="key = value configuration file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", metavar="DIR")
        p.add_argument("--from", dest="from_", metavar="DATE", help="first universe month")
        p.add_argument("--to", metavar="DATE", help="last universe month")
        p.add_argument("--dry-run", action="store_true", help="validate configuration and inputs only")
        p.add_argument("--threads", type=int)
        p.add_argument("--figures", action="store_true", default=None, help="also render PNG figures")
        if name != "synth":
            p.add_argument("--data", metavar="DIR", help=f"dataset directory, or '{FIXTURE}' for the bundled one")
        if name in ("sorts", "signal", "mi", "pca"):
            p.add_argument("--panel", metavar="PATH", help="reuse an existing panel.csv")
    return parser


# ---------------------------------------------------------------------------
# stages

def fixture_dir() -> Path:
    return Path(str(resources.files("cryptoap") / "data" / FIXTURE))


def data_dir(cfg: RunConfig) -> Path:
    raw = cfg["data"]
    if raw is None:
        raise UsageError("no dataset given (use --data DIR or data = DIR)")
    path = fixture_dir() if raw == FIXTURE else Path(raw)
    if not path.exists():
        raise UsageError(f"data path not found: {path}")
    if not any((path / f"bars{ext}").exists() for ext in (".csv", ".csv.gz")):
        raise UsageError(f"data path has no bars.csv: {path}")
    return path


def _digest_files(paths) -> str:
    h = hashlib.sha256()
    for p in sorted(Path(x) for x in paths):
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return h.hexdigest()[:16]


class Runner:
    """Lazily computed stage results shared between commands of one run."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.written: list[Path] = []
        self.notes: dict[str, str] = {}
        self._cache: dict = {}

    def stage(self, name, fn):
        if name not in self._cache:
            try:
                self._cache[name] = fn()
            except (UsageError, StageError):
                raise
            except FileNotFoundError as e:
                raise UsageError(f"path not found: {e.filename or e}") from None
            except Exception as e:  # noqa: BLE001 - every stage failure maps to one error line
                raise StageError(name, e) from e
        return self._cache[name]

    def emit(self, path: Path) -> None:
        self.written.append(Path(path))

    # inputs ------------------------------------------------------------

    @property
    def data_path(self) -> Path:
        return data_dir(self.cfg)

    @property
    def dataset(self):
        from .ingest import load_dataset, resolve_paths

        def load():
            files = resolve_paths(self.data_path)
            self.notes["data_digest"] = _digest_files(files.values())
            return load_dataset(files)

        return self.stage("ingest", load)

    @property
    def criteria(self):
        from .universe import InclusionCriteria
        c = self.cfg
        return InclusionCriteria(trailing_weeks=c["trailing_weeks"],
                                 min_median_weekly_volume_usd=c["min_median_weekly_volume_usd"],
                                 mcap_floor_bps_of_total=c["mcap_floor_bps_of_total"])

    def months(self):
        from .universe import first_eligible_month, to_month
        d = self.dataset
        first = self.cfg["from"]
        first = to_month(first) if first else first_eligible_month(d, self.criteria, extra_days=HISTORY_DAYS)
        last = self.cfg["to"]
        last = to_month(last) if last else to_month(d.end.tz_localize(None))
        if last < first:
            raise ValueError(f"empty month range {first}..{last}")
        return first, last

    @property
    def universe(self):
        from .universe import build_universe_series

        return self.stage("universe", lambda: build_universe_series(
            self.dataset, self.months(), self.criteria, workers=self.cfg["threads"]))

    @property
    def panel(self):
        def build():
            from .panel import build_panel, fill_missing, read_panel
            if self.cfg["panel"] and self.cfg.command in ("sorts", "signal", "mi", "pca"):
                path = Path(self.cfg["panel"])
                if not path.exists():
                    raise UsageError(f"panel file not found: {path}")
                return read_panel(path)
            raw = build_panel(self.dataset, self.universe, workers=self.cfg["threads"])
            if len(raw) == 0:
                raise ValueError("panel is empty (no universe members in range)")
            return fill_missing(raw)

        return self.stage("panel", build)


# extra days of price history required before the first universe month, so the
# longest characteristic window (90 days plus the boundary bar) is complete
HISTORY_DAYS = 92


def _write(r: Runner, name: str, writer, *args) -> Path:
    path = r.cfg.out / name
    writer(*args, path)
    r.emit(path)
    return path


def _synth_config(c: RunConfig):
    from .synthetic import SyntheticConfig
    sc = SyntheticConfig(n_assets=c["n_assets"], start=c["start"], weeks=c["weeks"], exchanges=c["exchanges"],
                         premia=dict(c["premia"]), n_stablecoins=c["n_stablecoins"], with_feeds=c["with_feeds"],
                         feed_missing_rate=c["feed_missing_rate"], n_events=c["n_events"])
    try:
        sc.validate()
    except ValueError as e:
        raise UsageError(str(e)) from None
    return sc


def do_synth(r: Runner) -> None:
    from .synthetic import generate_synthetic, write_synthetic
    c = r.cfg
    sc = r.stage("synth_config", lambda: _synth_config(c))
    sd = r.stage("synth", lambda: generate_synthetic(sc, c["seed"]))
    for p in write_synthetic(sd, c.out).values():
        r.emit(p)


def do_universe(r: Runner) -> None:
    from .universe import write_universe
    for p in write_universe(r.universe, r.cfg.out):
        r.emit(p)


def do_panel(r: Runner) -> None:
    from .characteristics import write_dictionary
    from .panel import write_panel
    p = r.panel
    _write(r, "panel.csv", write_panel, p)
    _write(r, "characteristics.csv", write_dictionary)
    r.notes["characteristics_kept"] = str(len(p.characteristic_names))
    r.notes["characteristics_dropped"] = ",".join(p.dropped) or "none"


def do_sorts(r: Runner) -> None:
    from .factors import sort_all, write_sorts
    res = r.stage("sorts", lambda: sort_all(r.panel, workers=r.cfg["threads"], hac=r.cfg["sort_hac"]))
    _write(r, "sorts.csv", write_sorts, res)


def do_signal(r: Runner) -> None:
    from .diagnostics import signal_table, write_signal
    t = r.stage("signal", lambda: signal_table(r.panel, lags=r.cfg["nw_lags"]))
    _write(r, "signal.csv", write_signal, t)


def do_mi(r: Runner) -> None:
    from .diagnostics import mi_by_year, write_mi
    t = r.stage("mi", lambda: mi_by_year(r.panel))
    _write(r, "mi_by_year.csv", write_mi, t)


def do_pca(r: Runner) -> None:
    from .diagnostics import pca_table, write_pca
    loadings, corr = r.stage("pca", lambda: pca_table(r.panel))
    _write(r, "pca.csv", write_pca, loadings, corr)


def do_fmb(r: Runner) -> None:
    from .panel import cmkt, return_column
    from .riskpremia import inflation_premium, to_monthly, write_fmb

    def run():
        p, d = r.panel, r.dataset
        rets = p.wide(return_column(7))
        mkt = cmkt(p).reindex(rets.index)
        if r.cfg["fmb_frequency"] == "monthly":
            rets = to_monthly(rets)
            mkt = to_monthly(mkt.to_frame())["cmkt"]
        if "expected_inflation_1y" not in set(d.reference["name"]):
            raise ValueError("reference series 'expected_inflation_1y' is missing")
        return inflation_premium(rets, d.reference_series("expected_inflation_1y"), mkt,
                                 r.cfg["fmb_min_history_days"])

    _write(r, "fmb.csv", write_fmb, r.stage("fmb", run))


def _events_path(r: Runner) -> Path | None:
    if r.cfg["events_file"]:
        return Path(r.cfg["events_file"])
    p = r.data_path / "events_input.csv"
    return p if p.exists() else None


def do_events(r: Runner, required: bool = True) -> None:
    from .diagnostics import largest_assets
    from .events import EventStudySpec, daily_series, read_events, run_event_study, write_events
    path = _events_path(r)
    if path is None or not path.exists():
        if required:
            raise UsageError(f"events file not found: {path or r.data_path / 'events_input.csv'}")
        r.notes["events"] = "skipped (no events_input.csv)"
        return

    def run():
        c = r.cfg
        asset = c["event_asset"] or largest_assets(r.panel, 1)[0]
        ev = read_events(path)
        spec = EventStudySpec(daily_series(r.dataset, asset), tuple(ev["date"]), c["event_window"],
                              c["bootstrap_b"], c["seed"])
        windows = sorted(set(c["event_windows"]) | {c["event_window"]})
        r.notes["event_asset"] = asset
        return run_event_study(spec, windows)

    _write(r, "events.csv", write_events, r.stage("events", run))


def do_perf(r: Runner):
    from .diagnostics import performance_series, performance_table, write_perf
    series = r.stage("perf_series", lambda: performance_series(r.panel, r.dataset))
    _write(r, "perf.csv", write_perf, r.stage("perf", lambda: performance_table(series)))
    return series


def do_pipeline(r: Runner) -> None:
    do_universe(r)
    do_panel(r)
    do_sorts(r)
    do_signal(r)
    do_mi(r)
    do_pca(r)
    do_fmb(r)
    do_events(r, required=False)
    do_perf(r)


HANDLERS = {
    "synth": do_synth, "universe": do_universe, "panel": do_panel, "sorts": do_sorts, "signal": do_signal,
    "mi": do_mi, "pca": do_pca, "fmb": do_fmb, "events": do_events, "pipeline": do_pipeline,
}


def validate_inputs(r: Runner) -> None:
    """Checks a dry run performs: configuration, dataset presence and month range."""
    c = r.cfg
    if c.command == "synth":
        r.stage("synth_config", lambda: _synth_config(c))
        return
    if c["panel"] and c.command in ("sorts", "signal", "mi", "pca"):
        if not Path(c["panel"]).exists():
            raise UsageError(f"panel file not found: {c['panel']}")
        return
    r.data_path  # noqa: B018 - raises when missing
    if c.command == "events":
        path = _events_path(r)
        if path is None or not path.exists():
            raise UsageError(f"events file not found: {path or r.data_path / 'events_input.csv'}")


def write_manifest(r: Runner) -> Path:
    c = r.cfg
    path = c.out / "run_manifest.txt"
    lines = [f"command = {c.command}", f"version = {__version__}", f"seed = {c['seed']}",
             f"config_hash = {c.digest()}"]
    lines += [f"{k} = {v}" for k, v in sorted(r.notes.items())]
    lines += [f"output = {p.name}" for p in sorted(set(r.written))]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def render_figures(r: Runner) -> None:
    from . import plots
    for p in plots.render_all(r.cfg.out, r._cache):
        r.emit(p)


def run(cfg: RunConfig) -> Runner:
    r = Runner(cfg)
    validate_inputs(r)
    if cfg.dry_run:
        return r
    cfg.out.mkdir(parents=True, exist_ok=True)
    HANDLERS[cfg.command](r)
    if cfg["figures"]:
        try:
            render_figures(r)
        except Exception as e:  # noqa: BLE001
            raise StageError("figures", e) from e
    write_manifest(r)
    return r


def _one_line(text: str) -> str:
    return " ".join(str(text).split())


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        print("cryptoap: error: stage=cli kind=usage message=no command given", file=sys.stderr)
        return 2
    flags = {"seed": args.seed, "out": args.out, "from": args.from_, "to": args.to, "threads": args.threads,
             "figures": args.figures, "data": getattr(args, "data", None), "panel": getattr(args, "panel", None)}
    try:
        file_values = parse_config_file(args.config) if args.config else {}
        cfg = resolve_config(args.command, file_values, flags, args.dry_run)
        r = run(cfg)
    except UsageError as e:
        print(f"cryptoap: error: stage=config kind=usage message={_one_line(e)}", file=sys.stderr)
        return 2
    except StageError as e:
        kind = type(e.exc).__name__
        print(f"cryptoap: error: stage={e.stage} kind={kind} message={_one_line(e)}", file=sys.stderr)
        return 1
    if not cfg.dry_run:
        for p in r.written:
            print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
