"""Run the four ablations of the full method over all permutations.

    python3 scripts/run_ablations.py [--out runs/ablations] [--data data/benchmark]

Reuses the corpus from run_benchmark.py if it exists (same config, same
seed, so the bytes are identical either way).
"""

import argparse
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from memprompt.cli import main
from run_benchmark import config_with_data_dir

ABLATIONS = ("no_einit", "no_epo", "no_kd", "discrete")


def run(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="runs/ablations")
    ap.add_argument("--data", default="data/benchmark")
    args = ap.parse_args(argv)

    cfg = config_with_data_dir(args.data)
    if not os.path.isfile(os.path.join(args.data, "corpus.jsonl")):
        rc = main(["gen-data", "--config", cfg, "--out", args.data])
        if rc:
            return rc
    for name in ABLATIONS:
        rc = main(["run", "--config", cfg, "--out", args.out,
                   "--ablation", name])
        if rc:
            return rc
    return main(["report", "--out", args.out])


if __name__ == "__main__":
    sys.exit(run())
