"""Regenerate the bundled fixture under src/cryptoap/data/fixture.

Values are rounded to 8 significant digits and the two large tables are
gzip-compressed with a zero timestamp, so reruns produce identical bytes.
"""

from __future__ import annotations

import gzip
import sys
from pathlib import Path

import numpy as np

from cryptoap.synthetic import SyntheticConfig, generate_synthetic, write_synthetic

CONFIG = SyntheticConfig(n_assets=10, weeks=72, exchanges=("coinbase",), premia={"return_tm14": 0.01})
SEED = 7
ROUNDED = {"bars": ["mid_price", "volume_usd", "market_cap_usd"], "feeds": ["value"], "reference": ["value"]}


def _round(values: np.ndarray) -> np.ndarray:
    return np.array([float(f"{x:.8g}") if np.isfinite(x) else x for x in values])


def main(target: str | None = None) -> None:
    out = Path(target) if target else Path(__file__).resolve().parents[1] / "src" / "cryptoap" / "data" / "fixture"
    sd = generate_synthetic(CONFIG, SEED)
    for role, cols in ROUNDED.items():
        frame = getattr(sd, role)
        for c in cols:
            frame[c] = _round(frame[c].to_numpy(float))
    paths = write_synthetic(sd, out)
    for role in ("bars", "feeds"):
        raw = paths[role]
        with open(raw, "rb") as src, open(f"{raw}.gz", "wb") as fh:
            with gzip.GzipFile(filename="", mode="wb", fileobj=fh, compresslevel=9, mtime=0) as gz:
                gz.write(src.read())
        raw.unlink()
    print(out)


if __name__ == "__main__":
    main(*sys.argv[1:])
