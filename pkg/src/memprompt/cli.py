"""Command-line entry points.

    memprompt gen-data --config cfg --out data/
    memprompt run      --config cfg --out runs/  [--seed N] [--sweep-buffer]
                       [--ablation NAME]
    memprompt report   --out runs/

``gen-data`` writes the synthetic corpus plus ontology/lexicon/synonym files.
``run`` trains every requested preset over every permutation seed and writes
one directory per run with metrics.csv, loss_log.csv and checkpoint.json.
``report`` aggregates the metrics CSVs under a run directory into summary
tables. Set MEMPROMPT_LOG=debug|info|warning to control verbosity.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import traceback
from dataclasses import replace

from .checkpoint import save_checkpoint
from .config import ConfigError, ExperimentConfig, load_config, render_config
from .data import build_task_stream, gen_synthetic, load_corpus, load_ontology, \
    write_corpus_dir
from .encoder import EncoderConfig, FrozenEncoder, load_embedding_lexicon
from .metrics import load_metrics_csv, permutation_average, save_loss_log, \
    save_metrics_csv
from .training import LifelongTrainer, config_for_preset

log = logging.getLogger("memprompt")


def _setup_logging():
    level = os.environ.get("MEMPROMPT_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _load_experiment(args) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if args.config:
        cfg = load_config(args.config, cfg)
    return cfg.validate()


# ---------------------------------------------------------------------------


def cmd_gen_data(args) -> int:
    cfg = _load_experiment(args)
    if args.seed is not None:
        cfg.gen.seed = args.seed
    out = args.out or cfg.run.data_dir
    corpus = gen_synthetic(cfg.gen)
    write_corpus_dir(out, corpus)
    with open(os.path.join(out, "manifest.cfg"), "w") as fh:
        fh.write(render_config(cfg))
    n_train = sum(1 for i in corpus.instances if i.split == "train")
    print(f"wrote {len(corpus.instances)} sentences "
          f"({n_train} train) for {len(corpus.ontology)} types to {out}")
    return 0


# ---------------------------------------------------------------------------


def _load_data(cfg: ExperimentConfig):
    data_dir = cfg.run.data_dir
    instances, _ = load_corpus(os.path.join(data_dir, "corpus.jsonl"))
    ontology = load_ontology(os.path.join(data_dir, "ontology.txt"))
    lexicon = load_embedding_lexicon(os.path.join(data_dir, "lexicon.txt"),
                                     expected_dim=cfg.encoder.embedding_dim)
    synonyms = {}
    syn_path = os.path.join(data_dir, "synonyms.txt")
    if os.path.exists(syn_path):
        with open(syn_path) as fh:
            for line in fh:
                parts = line.split()
                if len(parts) >= 2:
                    synonyms[parts[0]] = parts[1]
    return instances, ontology, lexicon, synonyms


def _build_encoder(cfg: ExperimentConfig, vocab, lexicon) -> FrozenEncoder:
    enc_cfg = EncoderConfig(
        vocab_size=len(vocab),
        embedding_dim=cfg.encoder.embedding_dim,
        num_layers=cfg.encoder.num_layers,
        num_heads=cfg.encoder.num_heads,
        feedforward_dim=cfg.encoder.feedforward_dim,
        max_sequence_length=cfg.encoder.max_sequence_length,
        seed=cfg.encoder.seed,
    )
    token_embeddings = None
    if cfg.run.use_lexicon_embeddings:
        token_embeddings = {i: lexicon[w] for i, w in enumerate(vocab)
                            if w in lexicon}
    return FrozenEncoder(enc_cfg, token_embeddings)


def run_single(cfg: ExperimentConfig, encoder, instances, ontology, lexicon,
               synonyms, preset: str, perm_seed: int,
               buffer_size: int | None = None):
    """Train one preset on one task permutation; returns (trainer, metrics)."""
    stream = build_task_stream(instances, ontology, cfg.run.n_tasks, perm_seed)
    tconf = config_for_preset(cfg.train, preset)
    if buffer_size is not None:
        tconf = replace(tconf, buffer_size=buffer_size)
    tconf = replace(tconf, seed=tconf.seed + perm_seed)
    trainer = LifelongTrainer(encoder, tconf, lexicon=lexicon, synonyms=synonyms)
    run = trainer.run_stream(stream)
    return trainer, run


def cmd_run(args) -> int:
    cfg = _load_experiment(args)
    out_root = args.out or "runs"
    os.makedirs(out_root, exist_ok=True)

    presets = list(cfg.run.presets)
    if args.ablation:
        presets = [args.ablation]
    seeds = [args.seed] if args.seed is not None else list(cfg.run.permutation_seeds)
    buffers = list(cfg.run.sweep_buffer_sizes) if args.sweep_buffer else [None]

    instances, ontology, lexicon, synonyms = _load_data(cfg)
    vocab_path = os.path.join(cfg.run.data_dir, "lexicon.txt")
    with open(vocab_path) as fh:
        vocab = [line.split()[0] for line in fh if line.strip()]
    encoder = _build_encoder(cfg, vocab, lexicon)

    with open(os.path.join(out_root, "manifest.cfg"), "w") as fh:
        fh.write(render_config(cfg))

    failures = []
    for preset in presets:
        for buf in buffers:
            label = preset if buf is None else f"{preset}_m{buf}"
            for seed in seeds:
                run_dir = os.path.join(out_root, label, f"seed{seed}")
                os.makedirs(run_dir, exist_ok=True)
                try:
                    trainer, run = run_single(cfg, encoder, instances, ontology,
                                              lexicon, synonyms, preset, seed,
                                              buffer_size=buf)
                    save_metrics_csv(os.path.join(run_dir, "metrics.csv"), run)
                    save_loss_log(os.path.join(run_dir, "loss_log.csv"),
                                  run.loss_log)
                    save_checkpoint(os.path.join(run_dir, "checkpoint.json"),
                                    trainer, len(run.stages))
                    print(f"{label} seed {seed}: "
                          f"final micro-F1 {run.final_f1():.4f}")
                except Exception as exc:  # keep going; record the failure
                    log.error("run %s seed %d failed: %s", label, seed, exc)
                    failures.append((label, seed, exc))
                    with open(os.path.join(out_root, "failures.txt"), "a") as fh:
                        fh.write(f"{label} seed {seed}: {exc}\n")
                        fh.write(traceback.format_exc() + "\n")
    if failures:
        print(f"{len(failures)} run(s) failed; see "
              f"{os.path.join(out_root, 'failures.txt')}", file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------------------


def _collect_runs(out_root):
    """Find <label>/<seedN>/metrics.csv under a run directory.

    Returns (found, gaps): gaps are seed directories with no metrics file.
    """
    found = {}
    gaps = []
    for label in sorted(os.listdir(out_root)):
        label_dir = os.path.join(out_root, label)
        if not os.path.isdir(label_dir) or label == "report":
            continue
        per_seed = []
        for seed_name in sorted(os.listdir(label_dir)):
            if not os.path.isdir(os.path.join(label_dir, seed_name)):
                continue
            path = os.path.join(label_dir, seed_name, "metrics.csv")
            if os.path.isfile(path):
                per_seed.append((seed_name, load_metrics_csv(path)))
            else:
                gaps.append(f"{label}/{seed_name}: no metrics.csv")
        if per_seed:
            found[label] = per_seed
    return found, gaps


def _stage_gaps(found):
    """Seeds whose metrics stop short of the label's full stage count."""
    gaps = []
    for label, runs in found.items():
        expected = max(len(rows) for _, rows in runs)
        for seed_name, rows in runs:
            if len(rows) < expected:
                gaps.append(f"{label}/{seed_name}: stages 1-{len(rows)} "
                            f"of {expected}")
    return gaps


def _fmt(x):
    return "" if x is None else repr(round(float(x), 6))


def cmd_report(args) -> int:
    out_root = args.out or "runs"
    found, gaps = _collect_runs(out_root)
    if not found:
        print(f"no metrics.csv files under {out_root}", file=sys.stderr)
        return 1
    gaps += _stage_gaps(found)
    if gaps:
        print("incomplete runs:", file=sys.stderr)
        for gap in gaps:
            print(f"  {gap}", file=sys.stderr)
        return 1
    report_dir = os.path.join(out_root, "report")
    os.makedirs(report_dir, exist_ok=True)

    class _Stage:
        def __init__(self, row):
            self.stage = row["stage"]
            self.precision = row["precision"]
            self.recall = row["recall"]
            self.f1 = row["f1"]
            self.old_f1 = row["old_f1"]
            self.new_f1 = row["new_f1"]

    class _Run:
        def __init__(self, rows):
            self.stages = [_Stage(r) for r in rows]

    table_path = os.path.join(report_dir, "summary.csv")
    with open(table_path, "w") as fh:
        n_stages = max(len(rows) for runs in found.values() for _, rows in runs)
        fh.write("label,n_seeds," +
                 ",".join(f"stage{i}_f1" for i in range(1, n_stages + 1)) + "\n")
        for label, runs in found.items():
            avg = permutation_average([_Run(rows) for _, rows in runs])
            cells = [_fmt(row["f1"]) for row in avg]
            cells += [""] * (n_stages - len(cells))
            fh.write(f"{label},{len(runs)}," + ",".join(cells) + "\n")

    with open(os.path.join(report_dir, "old_new.csv"), "w") as fh:
        fh.write("label,stage,f1,old_f1,new_f1\n")
        for label, runs in found.items():
            avg = permutation_average([_Run(rows) for _, rows in runs])
            for row in avg:
                fh.write(f"{label},{row['stage']},{_fmt(row['f1'])},"
                         f"{_fmt(row['old_f1'])},{_fmt(row['new_f1'])}\n")

    sweep = {label: runs for label, runs in found.items() if "_m" in label}
    if sweep:
        with open(os.path.join(report_dir, "buffer_curve.csv"), "w") as fh:
            fh.write("label,buffer_size,final_f1\n")
            for label, runs in sweep.items():
                size = label.rsplit("_m", 1)[1]
                avg = permutation_average([_Run(rows) for _, rows in runs])
                fh.write(f"{label},{size},{_fmt(avg[-1]['f1'])}\n")

    print(f"report written to {report_dir}")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="memprompt",
        description="Lifelong event detection with episodic memory prompts.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="override the seed")

    p_gen = sub.add_parser("gen-data", help="generate the synthetic corpus")
    common(p_gen)

    p_run = sub.add_parser("run", help="train presets over task permutations")
    common(p_run)
    p_run.add_argument("--sweep-buffer", action="store_true",
                       help="repeat each preset across run.sweep_buffer_sizes")
    p_run.add_argument("--ablation", metavar="NAME",
                       help="run a single named preset instead of run.presets")

    p_rep = sub.add_parser("report", help="aggregate metrics CSVs")
    common(p_rep)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    handler = {"gen-data": cmd_gen_data, "run": cmd_run, "report": cmd_report}
    try:
        return handler[args.command](args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
