"""Unsupervised STS scoring over partitions and the frozen-feature probe harness.

STS scoring correlates per-pair cosine similarity with gold scores; reports
carry Spearman and Pearson x100 per subset plus an ALL row computed on the
pooled pairs (never by averaging subset scores).  The probe harness trains a
logistic-regression classifier on frozen embeddings with k-fold
cross-validation and reports mean accuracy.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import Partition, StsPair, concat_subsets
from .encoder import EmbeddingProvider
from .errors import DegenerateScoresError, InvalidInputError, ParseError
from .numstat import cosine, make_rng, pearson, spearman
from .objectives import Adam


# ---------------------------------------------------------------------------
# STS scoring
# ---------------------------------------------------------------------------

@dataclass
class SubsetScore:
    label: str
    n: int
    spearman_x100: float | None
    pearson_x100: float | None
    note: str = ""
    per_seed: dict[str, list[float]] | None = None


@dataclass
class StsReport:
    provider: str
    partition: str
    entries: list[SubsetScore]
    seeds: list[int] = field(default_factory=list)

    @property
    def n_seeds(self) -> int:
        return max(1, len(self.seeds))

    def entry(self, label: str) -> SubsetScore:
        for e in self.entries:
            if e.label == label:
                return e
        raise KeyError(label)

    def to_json_dict(self) -> dict:
        return {
            "provider": self.provider,
            "partition": self.partition,
            "seeds": list(self.seeds),
            "n_seeds": self.n_seeds,
            "subsets": [
                {
                    "label": e.label,
                    "n": e.n,
                    "spearman_x100": e.spearman_x100,
                    "pearson_x100": e.pearson_x100,
                    "note": e.note,
                    "per_seed": e.per_seed,
                }
                for e in self.entries
            ],
        }

    def to_markdown(self) -> str:
        """Aligned table with scores x100 printed to 2 decimals."""
        headers = ["subset", "n", "spearman_x100", "pearson_x100", "note"]
        rows = [
            [e.label, str(e.n), _fmt(e.spearman_x100), _fmt(e.pearson_x100), e.note]
            for e in self.entries
        ]
        title = f"provider: {self.provider} | partition: {self.partition} | mean of {self.n_seeds} seed(s)"
        return title + "\n\n" + _markdown_table(headers, rows)


def _fmt(value: float | None) -> str:
    return "-" if value is None else f"{value:.2f}"


def _markdown_table(headers: list[str], rows: list[list[str]]) -> str:
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h)
              for i, h in enumerate(headers)]
    def line(cells):
        return "| " + " | ".join(c.ljust(w) for c, w in zip(cells, widths)) + " |"
    sep = "|" + "|".join("-" * (w + 2) for w in widths) + "|"
    return "\n".join([line(headers), sep, *(line(r) for r in rows)]) + "\n"


def eval_sts(provider: EmbeddingProvider, pairs: list[StsPair]) -> tuple[float, float]:
    """(spearman, pearson) between per-pair cosine similarity and gold scores."""
    if len(pairs) < 2:
        raise InvalidInputError("STS evaluation needs at least 2 pairs")
    cache: dict[str, np.ndarray] = {}

    def emb(sentence: str) -> np.ndarray:
        if sentence not in cache:
            cache[sentence] = provider.embed(sentence)
        return cache[sentence]

    scores = [cosine(emb(p.sentence1), emb(p.sentence2)) for p in pairs]
    gold = [p.gold for p in pairs]
    return spearman(scores, gold), pearson(scores, gold)


def eval_sts_partitioned(provider: EmbeddingProvider, partition: Partition,
                         seed: int | None = None) -> StsReport:
    """Score every subset plus the pooled concatenation ("ALL").

    Subsets that are too small or have zero score variance are flagged in the
    report instead of aborting the whole evaluation.
    """
    entries = []
    for label, pairs in partition.subsets:
        entries.append(_scored_entry(provider, label, pairs))
    pooled = concat_subsets(partition)
    entries.append(_scored_entry(provider, "ALL", pooled))
    seeds = [] if seed is None else [seed]
    return StsReport(provider=provider.name, partition=partition.name,
                     entries=entries, seeds=seeds)


def _scored_entry(provider, label, pairs) -> SubsetScore:
    if len(pairs) < 2:
        return SubsetScore(label, len(pairs), None, None, note="too few pairs")
    try:
        rho, r = eval_sts(provider, pairs)
    except DegenerateScoresError:
        return SubsetScore(label, len(pairs), None, None, note="zero score variance")
    return SubsetScore(label, len(pairs), 100.0 * rho, 100.0 * r)


def aggregate_seeds(reports: list[StsReport]) -> StsReport:
    """Cell-wise arithmetic mean of same-shaped reports, keeping raw per-seed values."""
    if not reports:
        raise InvalidInputError("no reports to aggregate")
    first = reports[0]
    labels = [e.label for e in first.entries]
    for rep in reports[1:]:
        if [e.label for e in rep.entries] != labels:
            raise InvalidInputError("reports do not share subset structure")
        if [e.n for e in rep.entries] != [e.n for e in first.entries]:
            raise InvalidInputError("reports do not share subset sizes")
    entries = []
    for i, label in enumerate(labels):
        cells = [rep.entries[i] for rep in reports]
        spearmen = [c.spearman_x100 for c in cells]
        pearsons = [c.pearson_x100 for c in cells]
        if any(v is None for v in spearmen + pearsons):
            note = "; ".join(sorted({c.note for c in cells if c.note}))
            entries.append(SubsetScore(label, first.entries[i].n, None, None, note=note))
            continue
        entries.append(SubsetScore(
            label, first.entries[i].n,
            sum(spearmen) / len(spearmen), sum(pearsons) / len(pearsons),
            per_seed={"spearman_x100": spearmen, "pearson_x100": pearsons},
        ))
    seeds = [s for rep in reports for s in rep.seeds]
    names = list(dict.fromkeys(rep.provider for rep in reports))
    provider = names[0] if len(names) == 1 else (
        ", ".join(names) if len(names) <= 3 else f"{names[0]} (+{len(names) - 1} more)")
    return StsReport(provider=provider, partition=first.partition,
                     entries=entries, seeds=seeds)


# ---------------------------------------------------------------------------
# probe harness
# ---------------------------------------------------------------------------

@dataclass
class ProbeTask:
    name: str
    examples: list[tuple[str, str]]  # (sentence, class label)

    def __post_init__(self):
        if len(self.class_labels()) < 2:
            raise InvalidInputError(f"probe task {self.name!r} needs at least 2 classes")

    def class_labels(self) -> list[str]:
        return sorted({label for _, label in self.examples})

    def label_indices(self) -> np.ndarray:
        index = {label: i for i, label in enumerate(self.class_labels())}
        return np.array([index[label] for _, label in self.examples], dtype=np.int64)


@dataclass
class ProbeConfig:
    folds: int = 10
    batch_size: int = 64
    epochs: int = 4
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.folds < 2:
            raise InvalidInputError("cross-validation needs at least 2 folds")


def load_probe_task(path, name: str | None = None) -> ProbeTask:
    """Parse a 2-column probe file: ``label \\t sentence`` per line."""
    path = Path(path)
    examples = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != 2:
                raise ParseError(path, line_no, f"expected 2 tab-separated columns, got {len(cols)}")
            label, text = cols
            if not text:
                raise ParseError(path, line_no, "empty sentence")
            examples.append((text, label))
    return ProbeTask(name=name or path.stem, examples=examples)


def kfold_split(n: int, k: int, rng: np.random.Generator) -> list[np.ndarray]:
    """k disjoint covering index sets with sizes differing by at most 1."""
    if k < 2:
        raise InvalidInputError("k must be >= 2")
    if n < k:
        raise InvalidInputError(f"cannot make {k} folds from {n} items")
    return list(np.array_split(rng.permutation(n), k))


class LogRegModel:
    """Multinomial logistic regression over frozen feature vectors."""

    def __init__(self, n_classes: int, dim: int):
        self.W = np.zeros((n_classes, dim))
        self.b = np.zeros(n_classes)

    def logits(self, features: np.ndarray) -> np.ndarray:
        return features @ self.W.T + self.b

    def predict(self, features: np.ndarray) -> np.ndarray:
        return self.logits(features).argmax(axis=1)


def _logreg_loss_and_grads(model: LogRegModel, X: np.ndarray, y: np.ndarray):
    logits = model.logits(X)
    logits = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(logits)
    probs = e / e.sum(axis=1, keepdims=True)
    m = X.shape[0]
    loss = float(-np.log(np.maximum(probs[np.arange(m), y], 1e-300)).mean())
    g = probs
    g[np.arange(m), y] -= 1.0
    return loss, {"W": g.T @ X / m, "b": g.mean(axis=0)}


def train_logreg(features: np.ndarray, labels: np.ndarray, config: ProbeConfig,
                 n_classes: int | None = None, seed: int | None = None) -> LogRegModel:
    """Minibatch-Adam softmax regression on frozen features, zero-initialized."""
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise InvalidInputError("features and labels disagree in shape")
    present = np.unique(y)
    if present.size < 2:
        raise InvalidInputError("training data contains a single class")
    n_classes = n_classes or int(y.max()) + 1
    model = LogRegModel(n_classes, X.shape[1])
    optimizer = Adam({"W": model.W, "b": model.b}, config.beta1, config.beta2, config.eps)
    rng = make_rng(config.seed if seed is None else seed)
    n = X.shape[0]
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            _, grads = _logreg_loss_and_grads(model, X[idx], y[idx])
            optimizer.step(grads, config.lr)
    return model


def eval_probe(provider: EmbeddingProvider, task: ProbeTask, config: ProbeConfig) -> float:
    """k-fold cross-validation accuracy of a probe over frozen embeddings."""
    n = len(task.examples)
    labels = task.label_indices()
    counts = np.bincount(labels)
    if counts.min() < config.folds:
        raise InvalidInputError(
            f"every class needs >= {config.folds} examples for {config.folds}-fold CV")
    cache: dict[str, np.ndarray] = {}
    feats = []
    for text, _ in task.examples:
        if text not in cache:
            cache[text] = provider.embed(text)
        feats.append(cache[text])
    X = np.stack(feats)
    rng = make_rng(config.seed)
    folds = kfold_split(n, config.folds, rng)
    fold_seeds = rng.integers(0, 2**63 - 1, size=config.folds)
    correct = 0
    for fold, fold_seed in zip(folds, fold_seeds):
        train_mask = np.ones(n, dtype=bool)
        train_mask[fold] = False
        model = train_logreg(X[train_mask], labels[train_mask], config,
                             n_classes=int(labels.max()) + 1, seed=int(fold_seed))
        predictions = model.predict(X[fold])
        correct += int((predictions == labels[fold]).sum())
    return correct / n


def probe_results_to_markdown(results: dict[str, float]) -> str:
    """Accuracy table, values x100 to 2 decimals."""
    headers = ["task", "accuracy_x100"]
    rows = [[name, f"{100.0 * acc:.2f}"] for name, acc in results.items()]
    return _markdown_table(headers, rows)
