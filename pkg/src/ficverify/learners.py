"""Binary probabilistic classifiers over sparse document vectors.

Two architectures: plain logistic regression and a feed-forward net with
hidden layers of 100 and 30 ReLU units and a sigmoid output. Training is
mini-batch gradient descent on weighted binary cross-entropy, fully
deterministic given the seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .textprep import SparseVector

ARCH_LOGISTIC = "logistic"
ARCH_MLP = "mlp_n_100_30"
HIDDEN_UNITS = (100, 30)

MODEL_FORMAT_VERSION = 1

_PROB_CLIP = 1e-12
_PRIOR_CLIP = 1e-6


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.5
    epochs: int = 200
    batch_size: int = 32
    l2_penalty: float = 0.0
    seed: int = 0
    class_weighting: bool = False
    early_stop_patience: int = 0   # 0 disables early stopping
    shuffle: bool = True

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.l2_penalty < 0:
            raise ValueError("l2_penalty must be >= 0")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "l2_penalty": self.l2_penalty,
            "seed": self.seed,
            "class_weighting": self.class_weighting,
            "early_stop_patience": self.early_stop_patience,
            "shuffle": self.shuffle,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        return cls(**data)


@dataclass
class BinaryModel:
    """Trained classifier: layer weights plus training metadata.

    Degenerate models (single-class training data) skip gradient training
    and predict a constant clipped class prior.
    """

    arch: str
    input_dim: int
    layers: list[tuple[np.ndarray, np.ndarray]]
    config: TrainConfig
    vocab_fingerprint: str = ""
    degenerate: bool = False
    constant: float | None = None
    loss_history: list[float] = field(default_factory=list)


def _layer_sizes(arch: str, input_dim: int) -> list[int]:
    if arch == ARCH_LOGISTIC:
        return [input_dim, 1]
    if arch == ARCH_MLP:
        return [input_dim, *HIDDEN_UNITS, 1]
    raise ValueError(f"unknown architecture: {arch!r}")


def init_layers(arch: str, input_dim: int, rng: np.random.Generator) -> list[tuple[np.ndarray, np.ndarray]]:
    """Seeded uniform init in +-sqrt(6/(fan_in+fan_out)); zero biases."""
    sizes = _layer_sizes(arch, input_dim)
    layers = []
    for fan_in, fan_out in zip(sizes, sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        b = np.zeros(fan_out)
        layers.append((w, b))
    return layers


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def forward(layers: Sequence[tuple[np.ndarray, np.ndarray]], x: np.ndarray) -> np.ndarray:
    """Probabilities for a batch (n_examples, input_dim) -> (n_examples,)."""
    a = x
    for w, b in layers[:-1]:
        a = np.maximum(a @ w + b, 0.0)
    w, b = layers[-1]
    z = a @ w + b
    return _sigmoid(z)[:, 0]


def loss_and_gradients(
    layers: Sequence[tuple[np.ndarray, np.ndarray]],
    x: np.ndarray,
    y: np.ndarray,
    sample_weights: np.ndarray,
    l2_penalty: float,
) -> tuple[float, list[tuple[np.ndarray, np.ndarray]]]:
    """Weighted cross-entropy (normalized by the weight sum) plus an L2 term
    on the weight matrices, with analytic gradients for every layer."""
    weight_sum = sample_weights.sum()
    if weight_sum <= 0:
        raise ValueError("sample weights must sum to > 0")

    pre: list[np.ndarray] = []
    activations = [x]
    a = x
    for w, b in layers[:-1]:
        z = a @ w + b
        pre.append(z)
        a = np.maximum(z, 0.0)
        activations.append(a)
    w_out, b_out = layers[-1]
    z_out = a @ w_out + b_out
    p = _sigmoid(z_out)[:, 0]

    clipped = np.clip(p, _PROB_CLIP, 1.0 - _PROB_CLIP)
    data_loss = -(sample_weights * (y * np.log(clipped) + (1 - y) * np.log(1 - clipped))).sum() / weight_sum
    reg_loss = 0.5 * l2_penalty * sum(float((w ** 2).sum()) for w, _ in layers)
    loss = float(data_loss + reg_loss)

    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(layers)
    delta = ((p - y) * sample_weights / weight_sum)[:, None]
    grads[-1] = (activations[-1].T @ delta + l2_penalty * w_out, delta.sum(axis=0))
    upstream = delta @ w_out.T
    for k in range(len(layers) - 2, -1, -1):
        delta_k = upstream * (pre[k] > 0)
        grads[k] = (activations[k].T @ delta_k + l2_penalty * layers[k][0], delta_k.sum(axis=0))
        upstream = delta_k @ layers[k][0].T

    return loss, grads


def _to_matrix(data: Sequence[tuple[SparseVector, bool]]) -> tuple[np.ndarray, np.ndarray]:
    if not data:
        raise ValueError("empty training data")
    dim = data[0][0].dim
    x = np.zeros((len(data), dim))
    y = np.zeros(len(data))
    for row, (vec, label) in enumerate(data):
        if vec.dim != dim:
            raise ValueError(f"vector dimension mismatch at row {row}: {vec.dim} != {dim}")
        for i, w in zip(vec.indices, vec.weights):
            x[row, i] = w
        y[row] = 1.0 if label else 0.0
    return x, y


def train(
    data: Sequence[tuple[SparseVector, bool]],
    cfg: TrainConfig,
    arch: str = ARCH_LOGISTIC,
    vocab_fingerprint: str = "",
    sample_weights: Sequence[float] | None = None,
) -> BinaryModel:
    """Train a binary classifier; deterministic for a given config seed.

    Single-class data short-circuits to a degenerate constant-prior model.
    class_weighting scales every positive example by the negative/positive
    count ratio; explicit sample_weights compose with it multiplicatively.
    """
    x, y = _to_matrix(data)
    n, input_dim = x.shape

    weights = np.ones(n) if sample_weights is None else np.asarray(sample_weights, dtype=float)
    if weights.shape != (n,):
        raise ValueError("sample_weights must match the number of examples")

    n_pos = int(y.sum())
    n_neg = n - n_pos
    if n_pos == 0 or n_neg == 0:
        prior = float(np.clip(n_pos / n, _PRIOR_CLIP, 1.0 - _PRIOR_CLIP))
        return BinaryModel(
            arch=arch, input_dim=input_dim, layers=[], config=cfg,
            vocab_fingerprint=vocab_fingerprint, degenerate=True, constant=prior,
        )

    if cfg.class_weighting:
        weights = weights * np.where(y > 0, n_neg / n_pos, 1.0)

    rng = np.random.default_rng(cfg.seed)
    layers = init_layers(arch, input_dim, rng)

    loss_history: list[float] = []
    best_loss = np.inf
    stale_epochs = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(n) if cfg.shuffle else np.arange(n)
        for batch_idx, start in enumerate(range(0, n, cfg.batch_size)):
            batch = order[start:start + cfg.batch_size]
            loss, grads = loss_and_gradients(layers, x[batch], y[batch], weights[batch], cfg.l2_penalty)
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss in epoch {epoch}, batch {batch_idx}")
            layers = [
                (w - cfg.learning_rate * gw, b - cfg.learning_rate * gb)
                for (w, b), (gw, gb) in zip(layers, grads)
            ]
        epoch_loss, _ = loss_and_gradients(layers, x, y, weights, cfg.l2_penalty)
        loss_history.append(epoch_loss)
        if cfg.early_stop_patience > 0:
            if epoch_loss < best_loss - 1e-12:
                best_loss = epoch_loss
                stale_epochs = 0
            else:
                stale_epochs += 1
                if stale_epochs >= cfg.early_stop_patience:
                    break

    return BinaryModel(
        arch=arch, input_dim=input_dim, layers=layers, config=cfg,
        vocab_fingerprint=vocab_fingerprint, loss_history=loss_history,
    )


def predict_proba(model: BinaryModel, x: SparseVector) -> float:
    """Probability of the positive class for one document vector."""
    if x.dim != model.input_dim:
        raise ValueError(f"input dimension {x.dim} != model dimension {model.input_dim}")
    if model.degenerate:
        return model.constant
    return float(forward(model.layers, x.to_dense()[None, :])[0])


def predict_proba_many(model: BinaryModel, xs: Sequence[SparseVector]) -> np.ndarray:
    """Vectorized predict_proba over a batch of document vectors."""
    if not xs:
        return np.zeros(0)
    dense = np.zeros((len(xs), model.input_dim))
    for row, vec in enumerate(xs):
        if vec.dim != model.input_dim:
            raise ValueError(f"input dimension {vec.dim} != model dimension {model.input_dim}")
        for i, w in zip(vec.indices, vec.weights):
            dense[row, i] = w
    if model.degenerate:
        return np.full(len(xs), model.constant)
    return forward(model.layers, dense)


def model_to_dict(model: BinaryModel) -> dict:
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "arch": model.arch,
        "input_dim": model.input_dim,
        "layers": [{"w": w.tolist(), "b": b.tolist()} for w, b in model.layers],
        "config": model.config.to_dict(),
        "vocab_fingerprint": model.vocab_fingerprint,
        "degenerate": model.degenerate,
        "constant": model.constant,
        "loss_history": model.loss_history,
    }


def model_from_dict(data: dict) -> BinaryModel:
    if data.get("format_version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format version: {data.get('format_version')}")
    return BinaryModel(
        arch=data["arch"],
        input_dim=data["input_dim"],
        layers=[(np.asarray(l["w"], dtype=float), np.asarray(l["b"], dtype=float)) for l in data["layers"]],
        config=TrainConfig.from_dict(data["config"]),
        vocab_fingerprint=data["vocab_fingerprint"],
        degenerate=data["degenerate"],
        constant=data["constant"],
        loss_history=list(data["loss_history"]),
    )


def save_model(model: BinaryModel, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(model_to_dict(model), f, sort_keys=True, separators=(",", ":"))


def load_model(path, expected_fingerprint: str | None = None) -> BinaryModel:
    """Load a model dump; refuses a vocabulary fingerprint mismatch."""
    with open(path, encoding="utf-8") as f:
        model = model_from_dict(json.load(f))
    if expected_fingerprint is not None and model.vocab_fingerprint != expected_fingerprint:
        raise ValueError(
            f"vocabulary fingerprint mismatch: model has {model.vocab_fingerprint!r}, "
            f"expected {expected_fingerprint!r}"
        )
    return model
