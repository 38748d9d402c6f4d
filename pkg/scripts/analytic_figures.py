"""Evaluate every analytic preset into CSV tables under OUTDIR/<preset>/."""
import argparse
import time
from pathlib import Path

from fringecorr.io import load_config, preset_names, write_table
from fringecorr.pipeline import analytic_from_config

ap = argparse.ArgumentParser()
ap.add_argument("outdir", nargs="?", default="out/analytic")
args = ap.parse_args()

for name in preset_names():
    cfg = load_config(name)
    if cfg.get("kind") != "analytic":
        continue
    t0 = time.perf_counter()
    tables = analytic_from_config(cfg)
    d = Path(args.outdir) / name
    d.mkdir(parents=True, exist_ok=True)
    for key, tab in tables.items():
        write_table(d / f"{key}.csv", tab)
    print(f"{name:6s} {len(tables)} tables  {time.perf_counter() - t0:.2f}s")
    if "summary" in tables:
        for k, v in tables["summary"].items():
            print(f"       {k} = {[float(x) for x in v]}")
