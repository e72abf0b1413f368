"""Corpus I/O, task-stream construction, and the synthetic benchmark generator.

Corpus files are JSONL, one sentence per line:

    {"tokens": [4, 17, 9], "spans": [[0, 1, "quake"]], "split": "train"}

Span offsets are inclusive token indices. The reserved label "Other" marks
non-trigger spans; every other label is an event type.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .prompts import OTHER


class ParseError(ValueError):
    """Structurally malformed corpus line."""


class DataError(ValueError):
    """Well-formed record with invalid content (bad span bounds etc.)."""


@dataclass(frozen=True)
class Span:
    start: int
    end: int  # inclusive
    label: str


@dataclass
class Instance:
    tokens: list[int]
    spans: list[Span]
    split: str = "train"


def save_corpus(path, instances):
    with open(path, "w") as fh:
        for inst in instances:
            rec = {"tokens": list(inst.tokens),
                   "spans": [[s.start, s.end, s.label] for s in inst.spans],
                   "split": inst.split}
            fh.write(json.dumps(rec) + "\n")


def load_corpus(path):
    """Read a JSONL corpus. Returns (instances, ontology).

    The ontology lists event-type names (label != Other) in order of first
    appearance.
    """
    instances = []
    ontology: list[str] = []
    seen = set()
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: bad JSON ({exc})") from None
            if not isinstance(rec, dict) or "tokens" not in rec or "spans" not in rec:
                raise ParseError(f"{path}:{lineno}: record needs 'tokens' and 'spans'")
            tokens = rec["tokens"]
            if (not isinstance(tokens, list)
                    or any(not isinstance(t, int) or t < 0 for t in tokens)):
                raise ParseError(f"{path}:{lineno}: tokens must be non-negative ints")
            spans = []
            for raw in rec["spans"]:
                if (not isinstance(raw, (list, tuple)) or len(raw) != 3
                        or not isinstance(raw[0], int) or not isinstance(raw[1], int)
                        or not isinstance(raw[2], str)):
                    raise ParseError(f"{path}:{lineno}: span must be [start, end, label]")
                i, j, label = raw
                if i < 0 or j < i or j >= len(tokens):
                    raise DataError(f"{path}:{lineno}: span [{i}, {j}] out of bounds "
                                    f"for {len(tokens)} tokens")
                spans.append(Span(i, j, label))
                if label != OTHER and label not in seen:
                    seen.add(label)
                    ontology.append(label)
            split = rec.get("split", "train")
            if split not in ("train", "dev", "test"):
                raise DataError(f"{path}:{lineno}: unknown split {split!r}")
            instances.append(Instance(tokens, spans, split))
    return instances, ontology


def load_ontology(path):
    names = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            name = line.strip()
            if not name:
                continue
            if name == OTHER:
                raise DataError(f"{path}:{lineno}: {OTHER!r} is reserved")
            if name in names:
                raise DataError(f"{path}:{lineno}: duplicate type {name!r}")
            names.append(name)
    return names


def save_ontology(path, names):
    with open(path, "w") as fh:
        for name in names:
            fh.write(name + "\n")


# ---------------------------------------------------------------------------
# Task stream

@dataclass
class Task:
    types: list[str]
    train: list[Instance]
    dev: list[Instance]


@dataclass
class TaskStream:
    tasks: list[Task]
    test: list[Instance]
    ontology: list[str]
    permutation_seed: int

    @property
    def n_tasks(self):
        return len(self.tasks)


def partition_types(ontology, n_tasks: int, permutation_seed: int) -> list[list[str]]:
    """Shuffle the ontology and chunk it into n_tasks near-equal groups.

    With N types and T tasks the first N % T groups get one extra type, so
    sizes differ by at most one.
    """
    if n_tasks <= 0:
        raise ValueError(f"n_tasks must be positive, got {n_tasks}")
    if n_tasks > len(ontology):
        raise ValueError(f"cannot split {len(ontology)} types into {n_tasks} tasks")
    rng = np.random.default_rng(permutation_seed)
    order = [ontology[i] for i in rng.permutation(len(ontology))]
    base, extra = divmod(len(ontology), n_tasks)
    groups = []
    pos = 0
    for t in range(n_tasks):
        size = base + (1 if t < extra else 0)
        groups.append(order[pos:pos + size])
        pos += size
    return groups


def build_task_stream(instances, ontology, n_tasks, permutation_seed) -> TaskStream:
    """Split a corpus into a class-incremental task sequence.

    Each task's train/dev view keeps only sentences mentioning at least one
    of that task's types, and inside those sentences drops spans whose gold
    label belongs to a different task. Other spans stay as negatives. The
    test split is shared across all stages, untouched.
    """
    groups = partition_types(ontology, n_tasks, permutation_seed)
    known = set(ontology) | {OTHER}
    for inst in instances:
        for s in inst.spans:
            if s.label not in known:
                raise DataError(f"label {s.label!r} missing from ontology")

    tasks = []
    for types in groups:
        allowed = set(types)
        train, dev = [], []
        for inst in instances:
            if inst.split == "test":
                continue
            if not any(s.label in allowed for s in inst.spans):
                continue
            kept = [s for s in inst.spans if s.label in allowed or s.label == OTHER]
            view = Instance(inst.tokens, kept, inst.split)
            (train if inst.split == "train" else dev).append(view)
        tasks.append(Task(types, train, dev))
    test = [inst for inst in instances if inst.split == "test"]
    return TaskStream(tasks, test, ontology, permutation_seed)


# ---------------------------------------------------------------------------
# Synthetic benchmark

@dataclass
class GenParams:
    """Knobs for the synthetic event-detection corpus."""
    n_types: int = 10
    train_per_type: int = 200
    dev_per_type: int = 20
    test_per_type: int = 25
    vocab_size: int = 240
    embedding_dim: int = 32
    seed: int = 7
    min_len: int = 8
    max_len: int = 12
    sig_tokens_per_type: int = 4
    noise: float = 0.1        # train-only chance a trigger surfaces with off-type tokens
    mix_prob: float = 0.3     # chance a sentence carries a second type's trigger
    ambig: float = 0.0        # paired-type chance of an ambiguous trigger surface
    sig_scale: float = 0.5    # embedding norm scale for signature tokens
    filler_scale: float = 0.02
    jitter: float = 0.25      # within-type token spread, relative to sig_scale
    name_offset: float = 0.25  # type-name displacement from its cluster center


@dataclass
class SyntheticCorpus:
    instances: list[Instance]
    ontology: list[str]
    vocab: list[str]                      # index -> word
    lexicon: dict[str, np.ndarray]        # word -> embedding
    synonyms: dict[str, str]              # OOV type name -> in-lexicon word
    params: GenParams = field(repr=False, default=None)

    def token_embeddings(self) -> dict[int, np.ndarray]:
        return {i: self.lexicon[w] for i, w in enumerate(self.vocab)}


def _place_span(rng, taken, length, span_len, tries=25):
    for _ in range(tries):
        start = int(rng.integers(0, length - span_len + 1))
        cells = range(start, start + span_len)
        if all(c not in taken for c in cells):
            taken.update(cells)
            return start
    return None


def gen_synthetic(params: GenParams) -> SyntheticCorpus:
    """Build a fully synthetic corpus with per-type signature vocabularies.

    Each event type owns a small disjoint set of signature tokens whose
    embeddings cluster around a type centroid; sentences are filler tokens
    with one or two trigger spans written in signature tokens, plus labeled
    Other spans over plain filler. A noise rate swaps a training trigger's
    surface tokens for another type's (dev and test stay clean), and a mix
    rate adds a second trigger of a different type, so types are learnable
    but not trivially separable.

    Types are paired off, and each pair shares a pool of ambiguous surface
    tokens embedded between the two centroids. With probability ``ambig`` a
    trigger uses the shared pool instead of its private signature, in which
    case a context token from the true type's own context cluster is dropped
    elsewhere in the sentence: the span surface alone cannot resolve the
    pair, the sentence can.

    Type names cycle through three shapes so prompt initialization sees
    every case: a single lexicon word, a two-word phrase, and an
    out-of-lexicon code with a synonym entry.
    """
    p = params
    # per type: 2 name tokens, private trigger surfaces, 2 context tokens
    block = p.sig_tokens_per_type + 4
    n_pairs = p.n_types // 2
    sig_total = p.n_types * block + n_pairs * p.sig_tokens_per_type
    if p.vocab_size < sig_total + 20:
        raise ValueError(f"vocab_size {p.vocab_size} too small for {p.n_types} types "
                         f"({sig_total} name+signature+context tokens + filler)")
    if p.min_len < 4 or p.max_len < p.min_len:
        raise ValueError(f"bad sentence length range [{p.min_len}, {p.max_len}]")
    rng = np.random.default_rng(p.seed)

    vocab = [f"w{i:03d}" for i in range(p.vocab_size)]
    lexicon: dict[str, np.ndarray] = {}
    centroids = []
    for k in range(p.n_types):
        c = rng.normal(0.0, p.sig_scale, p.embedding_dim)
        centroids.append(c)
        # two dedicated name tokens: near the cluster but displaced, the way
        # a type's name relates to its triggers without being one of them
        for t in range(2):
            tok = k * block + t
            lexicon[vocab[tok]] = c + rng.normal(
                0.0, p.name_offset * p.sig_scale, p.embedding_dim)
        for t in range(p.sig_tokens_per_type):
            tok = k * block + 2 + t
            lexicon[vocab[tok]] = c + rng.normal(0.0, p.jitter * p.sig_scale,
                                                 p.embedding_dim)
        # context tokens live in their own cluster, unrelated to the type
        # centroid, so surface similarity alone cannot exploit them
        ctx_c = rng.normal(0.0, p.sig_scale, p.embedding_dim)
        for t in range(2):
            tok = k * block + 2 + p.sig_tokens_per_type + t
            lexicon[vocab[tok]] = ctx_c + rng.normal(
                0.0, p.jitter * p.sig_scale, p.embedding_dim)
    # shared ambiguous surfaces sit between the two centroids of each pair
    amb_base = p.n_types * block
    for j in range(n_pairs):
        mid = (centroids[2 * j] + centroids[2 * j + 1]) / 2.0
        for t in range(p.sig_tokens_per_type):
            tok = amb_base + j * p.sig_tokens_per_type + t
            lexicon[vocab[tok]] = mid + rng.normal(0.0, p.jitter * p.sig_scale,
                                                   p.embedding_dim)
    for tok in range(sig_total, p.vocab_size):
        lexicon[vocab[tok]] = rng.normal(0.0, p.filler_scale, p.embedding_dim)

    ontology = []
    synonyms: dict[str, str] = {}
    for k in range(p.n_types):
        first = vocab[k * block]
        second = vocab[k * block + 1]
        shape = k % 3
        if shape == 0:
            name = first
        elif shape == 1:
            name = f"{first} {second}"
        else:
            name = f"x{k:02d}"
            synonyms[name] = first
        ontology.append(name)

    sig_ids = [list(range(k * block + 2, k * block + 2 + p.sig_tokens_per_type))
               for k in range(p.n_types)]
    ctx_ids = [list(range(k * block + 2 + p.sig_tokens_per_type,
                          k * block + block))
               for k in range(p.n_types)]
    amb_ids = [list(range(amb_base + j * p.sig_tokens_per_type,
                          amb_base + (j + 1) * p.sig_tokens_per_type))
               for j in range(n_pairs)]
    filler_lo, filler_hi = sig_total, p.vocab_size

    def write_trigger(tokens, taken, pool, label_k):
        """Place one trigger span with surface tokens drawn from pool."""
        span_len = 1 if rng.random() < 0.7 else 2
        start = _place_span(rng, taken, len(tokens), span_len)
        if start is None:
            return None
        for off in range(span_len):
            tokens[start + off] = int(rng.choice(pool))
        return Span(start, start + span_len - 1, ontology[label_k])

    def add_trigger(tokens, taken, type_k, split):
        """One trigger for type_k: noisy surface (train only), ambiguous
        shared surface plus a context token, or the private signature."""
        noisy = rng.random() < p.noise
        ambiguous = rng.random() < p.ambig
        partner = type_k ^ 1
        if split == "train" and noisy:
            wrong = int(rng.integers(p.n_types - 1))
            if wrong >= type_k:
                wrong += 1
            return write_trigger(tokens, taken, sig_ids[wrong], type_k)
        if ambiguous and partner < p.n_types:
            s = write_trigger(tokens, taken, amb_ids[type_k // 2], type_k)
            if s is not None:
                pos = _place_span(rng, taken, len(tokens), 1)
                if pos is not None:
                    tokens[pos] = int(rng.choice(ctx_ids[type_k]))
            return s
        return write_trigger(tokens, taken, sig_ids[type_k], type_k)

    def make_sentence(k, split):
        length = int(rng.integers(p.min_len, p.max_len + 1))
        tokens = [int(t) for t in rng.integers(filler_lo, filler_hi, length)]
        taken: set[int] = set()
        spans = []

        s = add_trigger(tokens, taken, k, split)
        if s is not None:
            spans.append(s)
        if rng.random() < p.mix_prob:
            other_k = int(rng.integers(p.n_types - 1))
            if other_k >= k:
                other_k += 1
            s = add_trigger(tokens, taken, other_k, split)
            if s is not None:
                spans.append(s)
        for _ in range(int(rng.integers(1, 3))):
            start = _place_span(rng, taken, length, 1)
            if start is not None:
                spans.append(Span(start, start, OTHER))
        spans.sort(key=lambda s: s.start)
        return Instance(tokens, spans, split)

    instances = []
    for split, per_type in (("train", p.train_per_type), ("dev", p.dev_per_type),
                            ("test", p.test_per_type)):
        for k in range(p.n_types):
            for _ in range(per_type):
                instances.append(make_sentence(k, split))

    # shuffle so no split is grouped by type on disk
    order = rng.permutation(len(instances))
    instances = [instances[i] for i in order]
    return SyntheticCorpus(instances, ontology, vocab, lexicon, synonyms, p)


def save_lexicon(path, vocab, lexicon):
    with open(path, "w") as fh:
        for word in vocab:
            vec = lexicon[word]
            fh.write(word + " " + " ".join(repr(float(v)) for v in vec) + "\n")


def save_synonyms(path, synonyms):
    with open(path, "w") as fh:
        for name, word in synonyms.items():
            fh.write(f"{name} {word}\n")


def write_corpus_dir(out_dir, corpus: SyntheticCorpus):
    """Write corpus.jsonl, ontology.txt, lexicon.txt, synonyms.txt."""
    import os
    os.makedirs(out_dir, exist_ok=True)
    save_corpus(os.path.join(out_dir, "corpus.jsonl"), corpus.instances)
    save_ontology(os.path.join(out_dir, "ontology.txt"), corpus.ontology)
    save_lexicon(os.path.join(out_dir, "lexicon.txt"), corpus.vocab, corpus.lexicon)
    save_synonyms(os.path.join(out_dir, "synonyms.txt"), corpus.synonyms)
