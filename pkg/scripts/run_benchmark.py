"""Generate the benchmark corpus, train all presets, and build the report.

    python3 scripts/run_benchmark.py [--out runs/benchmark] [--data data/benchmark]

Runs emp / replay_kd / plain over the 5 task permutations from
configs/benchmark.cfg. Expect roughly 10-15 minutes.
"""

import argparse
import os
import sys
import tempfile

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from memprompt.cli import main
from memprompt.config import load_config, render_config

CFG = os.path.join(os.path.dirname(__file__), "..", "configs", "benchmark.cfg")


def config_with_data_dir(data_dir, base=CFG):
    """Copy the benchmark config with run.data_dir pointed at data_dir."""
    cfg = load_config(base)
    cfg.run.data_dir = data_dir
    fd, path = tempfile.mkstemp(suffix=".cfg", prefix="memprompt-")
    with os.fdopen(fd, "w") as fh:
        fh.write(render_config(cfg))
    return path


def run(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="runs/benchmark")
    ap.add_argument("--data", default="data/benchmark")
    args = ap.parse_args(argv)

    cfg = config_with_data_dir(args.data)
    rc = main(["gen-data", "--config", cfg, "--out", args.data])
    if rc:
        return rc
    rc = main(["run", "--config", cfg, "--out", args.out])
    if rc:
        return rc
    return main(["report", "--out", args.out])


if __name__ == "__main__":
    sys.exit(run())
