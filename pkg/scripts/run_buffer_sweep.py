"""Sweep the replay buffer size for the full method.

    python3 scripts/run_buffer_sweep.py [--out runs/buffer] [--data data/benchmark]

Produces report/buffer_curve.csv with mean final-stage F1 per buffer size.
"""

import argparse
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from memprompt.cli import main
from run_benchmark import config_with_data_dir


def run(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="runs/buffer")
    ap.add_argument("--data", default="data/benchmark")
    args = ap.parse_args(argv)

    cfg = config_with_data_dir(args.data)
    if not os.path.isfile(os.path.join(args.data, "corpus.jsonl")):
        rc = main(["gen-data", "--config", cfg, "--out", args.data])
        if rc:
            return rc
    rc = main(["run", "--config", cfg, "--out", args.out,
               "--ablation", "emp", "--sweep-buffer"])
    if rc:
        return rc
    return main(["report", "--out", args.out])


if __name__ == "__main__":
    sys.exit(run())
