"""Evaluation metrics: precision/recall/F1 (macro and micro), the alpha
score with its forgiveness-rate parameters, label cardinality/density and
pairwise co-occurrence matrices."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .model import ALLERGENS, Allergen, LabelSet, N_ALLERGENS, allergen_index


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            self.tp + other.tp, self.tn + other.tn,
            self.fp + other.fp, self.fn + other.fn,
        )

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


@dataclass(frozen=True)
class MetricTriple:
    """Precision/recall/F1 with a flag marking any 0/0 convention hit."""

    precision: float
    recall: float
    f1: float
    degenerate: bool = False


def precision_recall_f1(c: ConfusionCounts) -> MetricTriple:
    """Standard metrics from one confusion count; 0/0 is defined as 0 and flagged."""
    degenerate = False
    if c.tp + c.fp > 0:
        pr = c.tp / (c.tp + c.fp)
    else:
        pr, degenerate = 0.0, True
    if c.tp + c.fn > 0:
        re = c.tp / (c.tp + c.fn)
    else:
        re, degenerate = 0.0, True
    if pr + re > 0:
        f1 = 2 * pr * re / (pr + re)
    else:
        f1, degenerate = 0.0, True
    return MetricTriple(pr, re, f1, degenerate)


def confusion(y_true: LabelSet, y_pred: LabelSet) -> dict[Allergen, ConfusionCounts]:
    """Per-allergen confusion contribution of a single example."""
    out = {}
    for a in ALLERGENS:
        in_true, in_pred = a in y_true, a in y_pred
        out[a] = ConfusionCounts(
            tp=int(in_true and in_pred),
            tn=int(not in_true and not in_pred),
            fp=int(not in_true and in_pred),
            fn=int(in_true and not in_pred),
        )
    return out


def confusion_dataset(
    y_true: Sequence[LabelSet], y_pred: Sequence[LabelSet]
) -> dict[Allergen, ConfusionCounts]:
    """Per-allergen confusion counts pooled over a dataset."""
    if len(y_true) != len(y_pred):
        raise ValueError("y_true and y_pred must have equal length")
    tp = np.zeros(N_ALLERGENS, dtype=int)
    tn = np.zeros(N_ALLERGENS, dtype=int)
    fp = np.zeros(N_ALLERGENS, dtype=int)
    fn = np.zeros(N_ALLERGENS, dtype=int)
    for yt, yp in zip(y_true, y_pred):
        for i, a in enumerate(ALLERGENS):
            in_true, in_pred = a in yt, a in yp
            if in_true and in_pred:
                tp[i] += 1
            elif in_true:
                fn[i] += 1
            elif in_pred:
                fp[i] += 1
            else:
                tn[i] += 1
    return {
        a: ConfusionCounts(int(tp[i]), int(tn[i]), int(fp[i]), int(fn[i]))
        for i, a in enumerate(ALLERGENS)
    }


def aggregate(per_label: Sequence[ConfusionCounts], mode: str) -> MetricTriple:
    """Aggregate per-label counts: 'macro' averages the per-label metrics
    (degenerate labels enter as 0), 'micro' computes metrics of the summed counts."""
    if not per_label:
        raise ValueError("need at least one label")
    if mode == "macro":
        triples = [precision_recall_f1(c) for c in per_label]
        k = len(triples)
        return MetricTriple(
            sum(t.precision for t in triples) / k,
            sum(t.recall for t in triples) / k,
            sum(t.f1 for t in triples) / k,
            any(t.degenerate for t in triples),
        )
    if mode == "micro":
        pooled = ConfusionCounts()
        for c in per_label:
            pooled = pooled + c
        return precision_recall_f1(pooled)
    raise ValueError(f"mode must be 'macro' or 'micro', got {mode!r}")


def two_class_counts(c: ConfusionCounts) -> tuple[ConfusionCounts, ConfusionCounts]:
    """View a binary confusion as two one-vs-rest labels (positive, negative).

    Macro/micro aggregation over this pair is how per-allergen tables report
    their macro and micro columns; the micro triple collapses to accuracy.
    """
    negative = ConfusionCounts(tp=c.tn, tn=c.tp, fp=c.fn, fn=c.fp)
    return c, negative


@dataclass(frozen=True)
class AlphaParams:
    """Parameters of the alpha score: forgiveness rate alpha, false-negative
    weight beta and false-positive weight gamma."""

    alpha: float = 7.0
    beta: float = 0.33
    gamma: float = 1.0

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if not 0 <= self.beta <= 1:
            raise ValueError("beta must be in [0, 1]")
        if not 0 <= self.gamma <= 1:
            raise ValueError("gamma must be in [0, 1]")


DEFAULT_ALPHA_PARAMS = AlphaParams()


def alpha_score(y_true: LabelSet, y_pred: LabelSet, params: AlphaParams = DEFAULT_ALPHA_PARAMS) -> float:
    """Per-example alpha score in [0, 1].

    (1 - (beta*|FN| + gamma*|FP|) / |Y u P|) ** alpha. The empty-empty case
    (both sets empty) is defined as a perfect 1.0. A zero bracket scores 0
    for every alpha, so at alpha=0 the score is 1 unless all predictions
    are wrong under full weights.
    """
    fn = len(y_true - y_pred)
    fp = len(y_pred - y_true)
    union = len(y_true | y_pred)
    if union == 0:
        return 1.0
    bracket = 1.0 - (params.beta * fn + params.gamma * fp) / union
    if bracket <= 0.0:
        return 0.0
    return bracket ** params.alpha


@dataclass(frozen=True)
class AlphaSummary:
    mean: float
    n_examples: int
    empty_empty_count: int


def alpha_score_dataset(
    y_true: Sequence[LabelSet], y_pred: Sequence[LabelSet],
    params: AlphaParams = DEFAULT_ALPHA_PARAMS,
) -> AlphaSummary:
    """Arithmetic mean of per-example alpha scores; counts empty-empty cases."""
    if len(y_true) != len(y_pred):
        raise ValueError("y_true and y_pred must have equal length")
    if not y_true:
        raise ValueError("empty dataset")
    total = 0.0
    empty_empty = 0
    for yt, yp in zip(y_true, y_pred):
        if not yt and not yp:
            empty_empty += 1
        total += alpha_score(yt, yp, params)
    return AlphaSummary(total / len(y_true), len(y_true), empty_empty)


@dataclass(frozen=True)
class DatasetLabelStats:
    label_cardinality: float
    label_density: float
    density_defined: bool
    per_allergen_counts: dict[Allergen, int]
    n_examples: int
    labels_present: LabelSet


def label_stats(dataset: Sequence[LabelSet]) -> DatasetLabelStats:
    """Label cardinality (mean labels per example) and density (cardinality
    normalized by the number of labels present anywhere in the dataset)."""
    if not dataset:
        raise ValueError("empty dataset")
    n = len(dataset)
    counts = {a: 0 for a in ALLERGENS}
    total_labels = 0
    present: set[Allergen] = set()
    for labels in dataset:
        total_labels += len(labels)
        for a in labels:
            counts[a] += 1
            present.add(a)
    cardinality = total_labels / n
    if present:
        density = cardinality / len(present)
        defined = True
    else:
        density = 0.0
        defined = False
    return DatasetLabelStats(cardinality, density, defined, counts, n, frozenset(present))


@dataclass(frozen=True)
class CooccurrenceMatrices:
    """Absolute pair counts plus the row-relative percentage view.

    absolute[i][j] = number of items exhibiting both i and j; the diagonal
    holds per-category counts. relative divides row i by absolute[i][i];
    rows with a zero diagonal are emitted as 0 and listed in undefined_rows.
    """

    absolute: np.ndarray
    relative: np.ndarray
    undefined_rows: tuple[int, ...]


def pairwise_cooccurrence(index_sets: Iterable[Iterable[int]], size: int) -> CooccurrenceMatrices:
    absolute = np.zeros((size, size), dtype=int)
    for idxs in index_sets:
        members = sorted(set(idxs))
        for i in members:
            for j in members:
                absolute[i, j] += 1
    relative = np.zeros((size, size), dtype=float)
    undefined = []
    for i in range(size):
        diag = absolute[i, i]
        if diag > 0:
            relative[i, :] = absolute[i, :] / diag
        else:
            undefined.append(i)
    return CooccurrenceMatrices(absolute, relative, tuple(undefined))


def allergen_cooccurrence(dataset: Sequence[LabelSet]) -> CooccurrenceMatrices:
    """14x14 co-occurrence of allergen labels over a dataset."""
    return pairwise_cooccurrence(
        ([allergen_index(a) for a in labels] for labels in dataset), N_ALLERGENS
    )


@dataclass(frozen=True)
class LabelEvaluation:
    """Full metric panel for one binary label over a dataset."""

    counts: ConfusionCounts
    positive: MetricTriple        # metrics of the positive class
    macro: MetricTriple           # averaged over {positive, negative} classes
    micro: MetricTriple           # pooled over both classes (= accuracy)
    alpha: float                  # mean single-label alpha score


def _evaluate_counts(c: ConfusionCounts, params: AlphaParams) -> LabelEvaluation:
    pos, neg = two_class_counts(c)
    # Single-label alpha: tp/tn are exact predictions (score 1), fn scores
    # (1-beta)^alpha, fp scores (1-gamma)^alpha, union size 1 in both cases.
    fn_score = alpha_score(frozenset([ALLERGENS[0]]), frozenset(), params)
    fp_score = alpha_score(frozenset(), frozenset([ALLERGENS[0]]), params)
    n = c.total
    alpha = (c.tp + c.tn + c.fn * fn_score + c.fp * fp_score) / n if n else 0.0
    return LabelEvaluation(
        counts=c,
        positive=precision_recall_f1(c),
        macro=aggregate([pos, neg], "macro"),
        micro=aggregate([pos, neg], "micro"),
        alpha=alpha,
    )


def evaluate_binary(
    y_true: Sequence[bool], y_pred: Sequence[bool],
    params: AlphaParams = DEFAULT_ALPHA_PARAMS,
) -> LabelEvaluation:
    """Evaluate a single binary labelling task (e.g. 'contains any allergen')."""
    if len(y_true) != len(y_pred):
        raise ValueError("y_true and y_pred must have equal length")
    tp = sum(1 for t, p in zip(y_true, y_pred) if t and p)
    tn = sum(1 for t, p in zip(y_true, y_pred) if not t and not p)
    fp = sum(1 for t, p in zip(y_true, y_pred) if not t and p)
    fn = sum(1 for t, p in zip(y_true, y_pred) if t and not p)
    return _evaluate_counts(ConfusionCounts(tp, tn, fp, fn), params)


@dataclass(frozen=True)
class MultilabelEvaluation:
    per_allergen: dict[Allergen, LabelEvaluation]
    macro: MetricTriple           # across the 14 allergen labels
    micro: MetricTriple
    alpha: AlphaSummary           # full label-set alpha
    n_examples: int


def evaluate_multilabel(
    y_true: Sequence[LabelSet], y_pred: Sequence[LabelSet],
    params: AlphaParams = DEFAULT_ALPHA_PARAMS,
) -> MultilabelEvaluation:
    """Evaluate predicted label sets against truth across all 14 allergens."""
    counts = confusion_dataset(y_true, y_pred)
    per_allergen = {a: _evaluate_counts(c, params) for a, c in counts.items()}
    per_label = [counts[a] for a in ALLERGENS]
    return MultilabelEvaluation(
        per_allergen=per_allergen,
        macro=aggregate(per_label, "macro"),
        micro=aggregate(per_label, "micro"),
        alpha=alpha_score_dataset(y_true, y_pred, params),
        n_examples=len(y_true),
    )
