"""Micro-F1 scoring for class-incremental event detection.

The test split is never filtered: at stage t the model has seen types O_t,
and a gold mention of a not-yet-seen type counts as a negative (the only
correct call is Other). A span counts as predicted-positive whenever the
model says anything but Other, and as a true positive only when that call
matches a seen gold type exactly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

from .prompts import OTHER


def _f1(tp, pred_pos, gold_pos):
    p = tp / pred_pos if pred_pos else 0.0
    r = tp / gold_pos if gold_pos else 0.0
    f = 2 * p * r / (p + r) if (p + r) > 0 else 0.0
    return p, r, f


def micro_f1(predictions, gold, seen_types):
    """Pooled precision/recall/F1 over all spans.

    predictions and gold map the same keys to label strings; a gold key
    missing from predictions is a contract error.
    """
    seen = set(seen_types)
    tp = pred_pos = gold_pos = 0
    for key, g in gold.items():
        if key not in predictions:
            raise ValueError(f"no prediction for span {key!r}")
        pred = predictions[key]
        if pred != OTHER:
            pred_pos += 1
        if g != OTHER and g in seen:
            gold_pos += 1
            if pred == g:
                tp += 1
    return _f1(tp, pred_pos, gold_pos)


def per_type_f1(predictions, gold, types):
    """One-vs-rest F1 per type (0.0 when the type never appears)."""
    out = {}
    for c in types:
        tp = fp = fn = 0
        for key, g in gold.items():
            pred = predictions[key]
            if pred == c and g == c:
                tp += 1
            elif pred == c:
                fp += 1
            elif g == c:
                fn += 1
        _, _, out[c] = _f1(tp, tp + fp, tp + fn)
    return out


def group_f1(predictions, gold, group):
    """Micro-F1 restricted to one group of types.

    Returns None when the gold data has no mention of any type in the group,
    so an empty old set reports as absent rather than zero.
    """
    grp = set(group)
    tp = fp = fn = 0
    gold_count = 0
    for key, g in gold.items():
        pred = predictions[key]
        if g in grp:
            gold_count += 1
            if pred == g:
                tp += 1
            else:
                fn += 1
        elif pred in grp:
            fp += 1
    if gold_count == 0:
        return None
    _, _, f = _f1(tp, tp + fp, tp + fn)
    return f


@dataclass
class StageMetrics:
    stage: int
    seen_types: list[str]
    new_types: list[str]
    precision: float
    recall: float
    f1: float
    old_f1: float | None
    new_f1: float | None
    per_type: dict[str, float] = field(default_factory=dict)


@dataclass
class LossRow:
    step: int
    l_c: float
    l_er: float
    l_pd: float
    l_fd: float
    total: float


@dataclass
class RunMetrics:
    stages: list[StageMetrics]
    loss_log: list[LossRow]

    def final_f1(self):
        return self.stages[-1].f1


def collect_predictions(model, instances):
    """Run the model over every span; returns (predictions, gold) keyed by
    (sentence index, span index)."""
    predictions, gold = {}, {}
    names = model.class_names
    for i, inst in enumerate(instances):
        if not inst.spans:
            continue
        spans = [(s.start, s.end) for s in inst.spans]
        preds = model.predict(inst.tokens, spans)
        for j, (span, pred) in enumerate(zip(inst.spans, preds)):
            predictions[(i, j)] = names[pred.predicted_class]
            gold[(i, j)] = span.label
    return predictions, gold


def evaluate_stage(model, test_instances, stage, old_types, new_types):
    seen = list(old_types) + list(new_types)
    predictions, gold = collect_predictions(model, test_instances)
    p, r, f = micro_f1(predictions, gold, seen)
    return StageMetrics(
        stage=stage,
        seen_types=seen,
        new_types=list(new_types),
        precision=p, recall=r, f1=f,
        old_f1=group_f1(predictions, gold, old_types) if old_types else None,
        new_f1=group_f1(predictions, gold, new_types),
        per_type=per_type_f1(predictions, gold, seen),
    )


def dev_f1(model, dev_instances, seen_types):
    """Micro-F1 on a task's dev view, for early stopping."""
    predictions, gold = collect_predictions(model, dev_instances)
    return micro_f1(predictions, gold, seen_types)[2]


def permutation_average(runs):
    """Mean per-stage metrics across runs of the same length.

    old/new F1 averages skip absent (None) values; a slot that is None in
    every run stays None.
    """
    if not runs:
        raise ValueError("no runs to average")
    n_stages = len(runs[0].stages)
    for r in runs:
        if len(r.stages) != n_stages:
            raise ValueError("runs have different stage counts")
    out = []
    for s in range(n_stages):
        stages = [r.stages[s] for r in runs]
        row = {
            "stage": stages[0].stage,
            "precision": sum(x.precision for x in stages) / len(stages),
            "recall": sum(x.recall for x in stages) / len(stages),
            "f1": sum(x.f1 for x in stages) / len(stages),
        }
        for name in ("old_f1", "new_f1"):
            vals = [getattr(x, name) for x in stages if getattr(x, name) is not None]
            row[name] = sum(vals) / len(vals) if vals else None
        out.append(row)
    return out


# ---------------------------------------------------------------------------
# CSV artifacts. Floats are written with repr() so rereading them round-trips
# to the same bits and identical runs produce identical files.

def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)

METRICS_COLUMNS = ["stage", "split", "seen_type_count", "precision", "recall",
                   "f1", "old_f1", "new_f1"]


def save_metrics_csv(path, run: RunMetrics):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(METRICS_COLUMNS)
        for s in run.stages:
            w.writerow([_fmt(v) for v in
                        (s.stage, "test", len(s.seen_types), s.precision,
                         s.recall, s.f1, s.old_f1, s.new_f1)])


def load_metrics_csv(path):
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != METRICS_COLUMNS:
            raise ValueError(f"{path}: unexpected header {header}")
        for lineno, raw in enumerate(reader, 2):
            if len(raw) != len(METRICS_COLUMNS):
                raise ValueError(f"{path}:{lineno}: wrong column count")
            try:
                rows.append({
                    "stage": int(raw[0]),
                    "split": raw[1],
                    "seen_type_count": int(raw[2]),
                    "precision": float(raw[3]),
                    "recall": float(raw[4]),
                    "f1": float(raw[5]),
                    "old_f1": float(raw[6]) if raw[6] else None,
                    "new_f1": float(raw[7]) if raw[7] else None,
                })
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return rows


def save_loss_log(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "l_c", "l_er", "l_pd", "l_fd", "total"])
        for r in rows:
            w.writerow([r.step] + [_fmt(v) for v in
                                   (r.l_c, r.l_er, r.l_pd, r.l_fd, r.total)])
