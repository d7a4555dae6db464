from __future__ import annotations

import pandas as pd
import pytest

from cryptoap import cli


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    code = cli.main(["synth", "--seed", "7", "--out", str(out), "--config", str(_cfg(out, "n_assets = 8\nweeks = 40\n"
                                                                                        "exchanges = coinbase, kraken\n"))])
    assert code == 0
    return out


def _cfg(tmp, text):
    p = tmp.parent / f"{tmp.name}.cfg"
    p.write_text(text)
    return p


def error_line(capsys):
    err = capsys.readouterr().err.strip().splitlines()
    return err[-1]


def test_synth_writes_dataset(synth_dir):
    names = {p.name for p in synth_dir.iterdir()}
    assert {"bars.csv.gz", "run_manifest.txt"} <= names or {"bars.csv", "run_manifest.txt"} <= names
    manifest = (synth_dir / "run_manifest.txt").read_text()
    assert "command = synth" in manifest and "seed = 7" in manifest


def test_no_command_and_bad_command(capsys):
    assert cli.main([]) == 2
    assert "stage=cli kind=usage" in error_line(capsys)
    assert cli.main(["nonsense"]) == 2


def test_missing_data_is_usage_error(tmp_path, capsys):
    assert cli.main(["universe", "--data", str(tmp_path / "nope"), "--out", str(tmp_path / "o")]) == 2
    line = error_line(capsys)
    assert line.startswith("cryptoap: error: stage=config kind=usage message=data path not found")
    assert cli.main(["universe", "--out", str(tmp_path / "o")]) == 2


def test_dry_run_writes_nothing(synth_dir, tmp_path, capsys):
    out = tmp_path / "o"
    assert cli.main(["pipeline", "--data", str(synth_dir), "--out", str(out), "--dry-run"]) == 0
    assert not out.exists() and capsys.readouterr().out == ""


def test_too_few_weeks_rejected(tmp_path, capsys):
    cfg = _cfg(tmp_path, "weeks = 12\n")
    assert cli.main(["synth", "--config", str(cfg), "--out", str(tmp_path / "o"), "--dry-run"]) == 2
    assert "kind=usage" in error_line(capsys)


def test_universe_month_before_data_fails(synth_dir, tmp_path, capsys):
    code = cli.main(["universe", "--data", str(synth_dir), "--out", str(tmp_path / "o"), "--from", "2010-01"])
    assert code == 1
    line = error_line(capsys)
    assert line.startswith("cryptoap: error: stage=universe kind=ValueError message=")
    assert "\n" not in line


def test_config_file_parsing(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("# comment\nseed = 3  # trailing\n\nnw-lags = 4\npremia = return_tm14:0.01; size_mcap:0\n")
    vals = cli.parse_config_file(p)
    assert vals == {"seed": "3", "nw_lags": "4", "premia": "return_tm14:0.01; size_mcap:0"}
    cfg = cli.resolve_config("sorts", vals, {"seed": 9})
    assert cfg["seed"] == 9 and cfg.sources["seed"] == "flag"
    assert cfg["nw_lags"] == 4 and cfg.sources["nw_lags"] == "file"
    assert cfg["premia"] == {"return_tm14": 0.01, "size_mcap": 0.0}
    assert cfg["threads"] == 1 and cfg.sources["threads"] == "default"


@pytest.mark.parametrize("text, match", [("seed 3\n", "expected"), ("colour = red\n", "unknown key"),
                                         ("seed = x\n", "seed"), ("threads = 0\n", "threads"),
                                         ("fmb_frequency = daily\n", "fmb_frequency"), ("from = soon\n", "date")])
def test_config_errors(tmp_path, text, match):
    p = tmp_path / "bad.cfg"
    p.write_text(text)
    with pytest.raises(cli.UsageError, match=match):
        cli.resolve_config("universe", cli.parse_config_file(p), {})
    with pytest.raises(cli.UsageError, match="not found"):
        cli.parse_config_file(tmp_path / "missing.cfg")


def test_digest_ignores_output_only_keys():
    a = cli.resolve_config("pipeline", {}, {"out": "x", "threads": 4, "figures": True})
    b = cli.resolve_config("pipeline", {}, {})
    c = cli.resolve_config("pipeline", {}, {"seed": 1})
    assert a.digest() == b.digest() != c.digest()


def test_pipeline_with_figures(synth_dir, tmp_path, capsys):
    out = tmp_path / "o"
    # the short synthetic sample needs a lower beta history floor
    cfg = _cfg(tmp_path, "bootstrap_b = 200\nfmb_min_history_days = 56\n")
    assert cli.main(["pipeline", "--data", str(synth_dir), "--out", str(out), "--config", str(cfg),
                     "--figures"]) == 0
    printed = capsys.readouterr().out.split()
    pngs = sorted((out / "figures").glob("*.png"))
    assert len(pngs) == 5 and all(p.stat().st_size > 0 for p in pngs)
    assert all(str(p) in printed for p in pngs)
    for name in ("universe.csv", "panel.csv", "sorts.csv", "signal.csv", "fmb.csv", "events.csv", "perf.csv"):
        assert (out / name).exists(), name
    manifest = (out / "run_manifest.txt").read_text().splitlines()
    assert "output = events.csv" in manifest and any(x.startswith("data_digest = ") for x in manifest)
    # figures never change the tables
    out2 = tmp_path / "o2"
    assert cli.main(["pipeline", "--data", str(synth_dir), "--out", str(out2), "--config", str(cfg)]) == 0
    assert not (out2 / "figures").exists()
    for name in ("sorts.csv", "events.csv", "perf.csv"):
        assert (out / name).read_bytes() == (out2 / name).read_bytes()

    # a later command reuses the written panel; its 10-digit values shift sorts only in the last digits
    out3 = tmp_path / "o3"
    assert cli.main(["sorts", "--panel", str(out / "panel.csv"), "--out", str(out3)]) == 0
    pd.testing.assert_frame_equal(pd.read_csv(out3 / "sorts.csv"), pd.read_csv(out / "sorts.csv"), rtol=1e-6)


def test_events_requires_file(synth_dir, tmp_path, capsys):
    cfg = _cfg(tmp_path, f"events_file = {tmp_path / 'none.csv'}\n")
    assert cli.main(["events", "--data", str(synth_dir), "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "events file not found" in error_line(capsys)
