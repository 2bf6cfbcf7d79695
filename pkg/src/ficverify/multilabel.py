"""Multi-label composition of binary classifiers: binary relevance and
classifier chains with given, randomly permuted or optimized label orders."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Hashable, Sequence, Union

import numpy as np

from .learners import ARCH_LOGISTIC, BinaryModel, TrainConfig, predict_proba, predict_proba_many, train
from .metrics import AlphaParams, DEFAULT_ALPHA_PARAMS, LabelEvaluation, MultilabelEvaluation, evaluate_multilabel
from .model import ALLERGENS, Allergen, LabelSet, allergen_index
from .textprep import SparseVector

DEFAULT_THRESHOLD = 0.5

# Fixed chain order tuned for label dependency, starting from the least
# dependent allergen.
OPTIMIZED_CHAIN_ORDER: tuple[Allergen, ...] = (
    Allergen.GLUTEN, Allergen.MOLLUSCS, Allergen.CRUSTACEANS, Allergen.LUPINE,
    Allergen.SESAME, Allergen.PEANUTS, Allergen.SULPHUR, Allergen.CELERY,
    Allergen.EGGS, Allergen.NUTS, Allergen.MILK, Allergen.FISH,
    Allergen.MUSTARD, Allergen.SOYBEANS,
)


@dataclass(frozen=True)
class GivenOrder:
    order: tuple[Allergen, ...]


@dataclass(frozen=True)
class RandomPermutations:
    count: int
    seed: int

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("count must be >= 1")


@dataclass(frozen=True)
class OptimizedFixed:
    pass


ChainOrderStrategy = Union[GivenOrder, RandomPermutations, OptimizedFixed]


def resolve_orders(strategy: ChainOrderStrategy) -> list[tuple[Allergen, ...]]:
    """Expand a strategy into the concrete list of chain orders to run."""
    if isinstance(strategy, GivenOrder):
        return [tuple(strategy.order)]
    if isinstance(strategy, OptimizedFixed):
        return [OPTIMIZED_CHAIN_ORDER]
    if isinstance(strategy, RandomPermutations):
        rng = np.random.default_rng(strategy.seed)
        return [
            tuple(ALLERGENS[i] for i in rng.permutation(len(ALLERGENS)))
            for _ in range(strategy.count)
        ]
    raise TypeError(f"unknown strategy: {strategy!r}")


def _validate_order(order: Sequence[Allergen]) -> tuple[Allergen, ...]:
    order = tuple(order)
    if not order:
        raise ValueError("chain order must not be empty")
    if len(set(order)) != len(order):
        raise ValueError("chain order must not repeat allergens")
    for a in order:
        if not isinstance(a, Allergen):
            raise TypeError(f"chain order entries must be Allergen, got {a!r}")
    return order


def augment(x: SparseVector, bits: Sequence[int]) -> SparseVector:
    """Append 0/1 chain-augmentation features after the base dimensions."""
    indices = list(x.indices)
    weights = list(x.weights)
    for j, bit in enumerate(bits):
        if bit:
            indices.append(x.dim + j)
            weights.append(1.0)
    return SparseVector(
        dim=x.dim + len(bits), indices=tuple(indices), weights=tuple(weights), mode=x.mode
    )


@dataclass
class BinaryRelevanceModel:
    """One independent binary classifier per allergen (14 in canonical order)."""

    models: dict[Allergen, BinaryModel]
    vocab_fingerprint: str = ""
    thresholds: dict[Allergen, float] = None

    def __post_init__(self):
        if set(self.models) != set(ALLERGENS):
            raise ValueError("binary relevance needs exactly one model per allergen")
        if self.thresholds is None:
            self.thresholds = {a: DEFAULT_THRESHOLD for a in ALLERGENS}


def train_binary_relevance(
    corpus: Sequence[tuple[SparseVector, LabelSet]],
    cfg: TrainConfig,
    arch: str = ARCH_LOGISTIC,
    vocab_fingerprint: str = "",
) -> BinaryRelevanceModel:
    """Train the 14 per-allergen problems independently.

    Model i trains with seed cfg.seed + i (canonical order), so results do
    not depend on any training interleaving.
    """
    if not corpus:
        raise ValueError("empty corpus")
    models = {}
    for i, a in enumerate(ALLERGENS):
        data = [(x, a in labels) for x, labels in corpus]
        try:
            models[a] = train(data, replace(cfg, seed=cfg.seed + i), arch, vocab_fingerprint)
        except Exception as exc:
            raise type(exc)(f"[{a.value}] {exc}") from exc
    return BinaryRelevanceModel(models=models, vocab_fingerprint=vocab_fingerprint)


def predict_binary_relevance(
    m: BinaryRelevanceModel, x: SparseVector
) -> tuple[LabelSet, dict[Allergen, float]]:
    """Thresholded per-allergen probabilities combined into one label set."""
    probs = {a: predict_proba(m.models[a], x) for a in ALLERGENS}
    labels = frozenset(a for a in ALLERGENS if probs[a] >= m.thresholds[a])
    return labels, probs


def predict_binary_relevance_many(
    m: BinaryRelevanceModel, xs: Sequence[SparseVector]
) -> tuple[list[LabelSet], np.ndarray]:
    """Batch prediction; probability matrix is (n_examples, 14)."""
    probs = np.zeros((len(xs), len(ALLERGENS)))
    for i, a in enumerate(ALLERGENS):
        probs[:, i] = predict_proba_many(m.models[a], xs)
    labels = [
        frozenset(a for i, a in enumerate(ALLERGENS) if probs[row, i] >= m.thresholds[a])
        for row in range(len(xs))
    ]
    return labels, probs


@dataclass
class ChainModel:
    """Sequential classifiers where position i consumes the earlier
    positions' 0/1 predictions as extra features (input dim = base + i)."""

    order: tuple[Allergen, ...]
    models: list[BinaryModel]
    base_dim: int
    vocab_fingerprint: str = ""
    thresholds: dict[Allergen, float] = None

    def __post_init__(self):
        if self.thresholds is None:
            self.thresholds = {a: DEFAULT_THRESHOLD for a in self.order}


def train_chain(
    corpus: Sequence[tuple[SparseVector, LabelSet]],
    cfg: TrainConfig,
    order: Sequence[Allergen],
    arch: str = ARCH_LOGISTIC,
    vocab_fingerprint: str = "",
) -> ChainModel:
    """Train a classifier chain with teacher forcing: position i sees the
    TRUE labels of the earlier positions; inference feeds predictions."""
    if not corpus:
        raise ValueError("empty corpus")
    order = _validate_order(order)
    base_dim = corpus[0][0].dim
    true_bits = [
        [1 if a in labels else 0 for a in order] for _, labels in corpus
    ]
    models: list[BinaryModel] = []
    for i, a in enumerate(order):
        data = [
            (augment(x, bits[:i]), a in labels)
            for (x, labels), bits in zip(corpus, true_bits)
        ]
        try:
            models.append(train(data, replace(cfg, seed=cfg.seed + i), arch, vocab_fingerprint))
        except Exception as exc:
            raise type(exc)(f"[position {i}, {a.value}] {exc}") from exc
    return ChainModel(order=order, models=models, base_dim=base_dim, vocab_fingerprint=vocab_fingerprint)


def predict_chain(m: ChainModel, x: SparseVector) -> tuple[LabelSet, dict[Allergen, float]]:
    """Sequential inference feeding each position the thresholded 0/1
    predictions of the earlier ones."""
    if x.dim != m.base_dim:
        raise ValueError(f"input dimension {x.dim} != chain base dimension {m.base_dim}")
    bits: list[int] = []
    probs: dict[Allergen, float] = {}
    for i, a in enumerate(m.order):
        p = predict_proba(m.models[i], augment(x, bits))
        probs[a] = p
        bits.append(1 if p >= m.thresholds[a] else 0)
    labels = frozenset(a for a in m.order if probs[a] >= m.thresholds[a])
    return labels, probs


def predict_chain_many(
    m: ChainModel, xs: Sequence[SparseVector]
) -> tuple[list[LabelSet], np.ndarray]:
    """Batch chain inference; probability matrix columns follow chain order."""
    n = len(xs)
    probs = np.zeros((n, len(m.order)))
    bits = np.zeros((n, len(m.order)))
    for i, a in enumerate(m.order):
        augmented = [augment(x, bits[row, :i].astype(int).tolist()) for row, x in enumerate(xs)]
        p = predict_proba_many(m.models[i], augmented)
        probs[:, i] = p
        bits[:, i] = (p >= m.thresholds[a]).astype(float)
    labels = [
        frozenset(a for i, a in enumerate(m.order) if bits[row, i] > 0)
        for row in range(n)
    ]
    return labels, probs


def stratified_split(
    strata: Sequence[Hashable], test_fraction: float, seed: int
) -> tuple[list[int], list[int]]:
    """Deterministic per-stratum split; strata iterate in first-appearance order.

    The fractional test quota carries over between strata, so the overall
    fraction holds even when most strata are singletons (the usual case for
    label-powerset strata over 14 labels).
    """
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must be in (0, 1)")
    by_stratum: dict[Hashable, list[int]] = {}
    for i, key in enumerate(strata):
        by_stratum.setdefault(key, []).append(i)
    rng = np.random.default_rng(seed)
    train_idx: list[int] = []
    test_idx: list[int] = []
    carry = 0.0
    for members in by_stratum.values():
        shuffled = [members[j] for j in rng.permutation(len(members))]
        desired = len(members) * test_fraction + carry
        n_test = int(np.floor(desired + 1e-9))
        carry = desired - n_test
        test_idx.extend(shuffled[:n_test])
        train_idx.extend(shuffled[n_test:])
    return sorted(train_idx), sorted(test_idx)


def _metric_row(ev: LabelEvaluation) -> dict[str, float]:
    return {
        "tp": float(ev.counts.tp), "tn": float(ev.counts.tn),
        "fp": float(ev.counts.fp), "fn": float(ev.counts.fn),
        "precision": ev.positive.precision, "recall": ev.positive.recall, "f1": ev.positive.f1,
        "pr_macro": ev.macro.precision, "re_macro": ev.macro.recall, "f1_macro": ev.macro.f1,
        "pr_micro": ev.micro.precision, "re_micro": ev.micro.recall, "f1_micro": ev.micro.f1,
        "alpha": ev.alpha,
    }


def _overall_row(ev: MultilabelEvaluation) -> dict[str, float]:
    return {
        "pr_macro": ev.macro.precision, "re_macro": ev.macro.recall, "f1_macro": ev.macro.f1,
        "pr_micro": ev.micro.precision, "re_micro": ev.micro.recall, "f1_micro": ev.micro.f1,
        "alpha": ev.alpha.mean,
    }


@dataclass
class OrderExperimentReport:
    """Chain-order experiment results: every metric averaged arithmetically
    per allergen across the runs, with the exact orders and seeds recorded."""

    strategy: str
    orders: tuple[tuple[str, ...], ...]
    train_seed: int
    split_seed: int
    test_fraction: float
    n_runs: int
    per_allergen: dict[Allergen, dict[str, float]]
    overall: dict[str, float]


def run_chain_orders(
    corpus: Sequence[tuple[SparseVector, LabelSet]],
    cfg: TrainConfig,
    orders: Sequence[Sequence[Allergen]],
    arch: str = ARCH_LOGISTIC,
    test_fraction: float = 0.2,
    split_seed: int | None = None,
    alpha_params: AlphaParams = DEFAULT_ALPHA_PARAMS,
    strategy_name: str = "given",
) -> OrderExperimentReport:
    """Train and evaluate one chain per order on a shared stratified split."""
    if split_seed is None:
        split_seed = cfg.seed
    from .model import labels_to_bits  # local import to avoid a wide module surface

    strata = [labels_to_bits(labels) for _, labels in corpus]
    train_idx, test_idx = stratified_split(strata, test_fraction, split_seed)
    train_part = [corpus[i] for i in train_idx]
    test_part = [corpus[i] for i in test_idx]
    if not train_part or not test_part:
        raise ValueError("split produced an empty partition")
    y_true = [labels for _, labels in test_part]
    xs = [x for x, _ in test_part]

    sums: dict[Allergen, dict[str, float]] = {a: {} for a in ALLERGENS}
    overall_sum: dict[str, float] = {}
    for order in orders:
        chain = train_chain(train_part, cfg, order, arch)
        y_pred, _ = predict_chain_many(chain, xs)
        ev = evaluate_multilabel(y_true, y_pred, alpha_params)
        for a in ALLERGENS:
            row = _metric_row(ev.per_allergen[a])
            for key, value in row.items():
                sums[a][key] = sums[a].get(key, 0.0) + value
        for key, value in _overall_row(ev).items():
            overall_sum[key] = overall_sum.get(key, 0.0) + value

    k = len(orders)
    return OrderExperimentReport(
        strategy=strategy_name,
        orders=tuple(tuple(a.value for a in order) for order in orders),
        train_seed=cfg.seed,
        split_seed=split_seed,
        test_fraction=test_fraction,
        n_runs=k,
        per_allergen={a: {key: v / k for key, v in sums[a].items()} for a in ALLERGENS},
        overall={key: v / k for key, v in overall_sum.items()},
    )


def run_order_experiment(
    corpus: Sequence[tuple[SparseVector, LabelSet]],
    cfg: TrainConfig,
    strategy: ChainOrderStrategy,
    arch: str = ARCH_LOGISTIC,
    test_fraction: float = 0.2,
    split_seed: int | None = None,
    alpha_params: AlphaParams = DEFAULT_ALPHA_PARAMS,
) -> OrderExperimentReport:
    """Resolve the order strategy and average chain metrics across its runs."""
    orders = resolve_orders(strategy)
    name = type(strategy).__name__
    return run_chain_orders(
        corpus, cfg, orders, arch, test_fraction, split_seed, alpha_params, strategy_name=name
    )
