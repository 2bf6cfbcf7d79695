"""Training and prediction pipelines gluing ingestion, text processing,
learners and metrics together, plus the on-disk model bundle format."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .learners import (
    ARCH_LOGISTIC,
    ARCH_MLP,
    BinaryModel,
    TrainConfig,
    load_model,
    predict_proba,
    save_model,
    train,
)
from .metrics import (
    AlphaParams,
    DEFAULT_ALPHA_PARAMS,
    LabelEvaluation,
    MultilabelEvaluation,
    evaluate_binary,
    evaluate_multilabel,
)
from .model import ALLERGENS, Allergen, LabelSet, ProductRecord, allergen_from_name, labels_to_bits, labels_to_names
from .multilabel import (
    BinaryRelevanceModel,
    ChainModel,
    OPTIMIZED_CHAIN_ORDER,
    predict_binary_relevance,
    predict_binary_relevance_many,
    predict_chain,
    predict_chain_many,
    stratified_split,
    train_binary_relevance,
    train_chain,
)
from .textprep import (
    MODE_BOW,
    MODE_TFIDF,
    SparseVector,
    Vocabulary,
    build_vocabulary,
    dictionary_scan,
    extract_capitalized,
    normalize_ingredients,
    vectorize_bow,
    vectorize_tfidf,
)

TEXT_BOW = "bow"
TEXT_TFIDF = "tfidf"
SOURCE_FULL = "full_list"
SOURCE_CAPS = "caps_only"
MODE_GENERAL = "general"
MODE_SPECIFIC = "specific"
STRATEGY_BR = "br"
STRATEGY_CHAIN = "chain"

BUNDLE_FORMAT_VERSION = 1

# Paper-style labels for report rows.
ALGO_LABELS = {ARCH_LOGISTIC: "LR", ARCH_MLP: "NN"}
TEXT_LABELS = {TEXT_BOW: "BOW", TEXT_TFIDF: "TF-IDF"}


class PipelineError(ValueError):
    pass


@dataclass(frozen=True)
class TextConfig:
    text: str = TEXT_BOW
    min_df: float = 0.01
    source: str = SOURCE_FULL

    def __post_init__(self):
        if self.text not in (TEXT_BOW, TEXT_TFIDF):
            raise ValueError(f"text must be '{TEXT_BOW}' or '{TEXT_TFIDF}'")
        if self.source not in (SOURCE_FULL, SOURCE_CAPS):
            raise ValueError(f"source must be '{SOURCE_FULL}' or '{SOURCE_CAPS}'")

    def to_dict(self) -> dict:
        return {"text": self.text, "min_df": self.min_df, "source": self.source}

    @classmethod
    def from_dict(cls, data: dict) -> "TextConfig":
        return cls(**data)


def tokens_for(record: ProductRecord, source: str) -> list[str]:
    if source == SOURCE_CAPS:
        return extract_capitalized(record.ingredients_raw)
    return normalize_ingredients(record.ingredients_raw)


def vectorize(doc: Sequence[str], vocab: Vocabulary, text: str) -> SparseVector:
    if text == TEXT_TFIDF:
        return vectorize_tfidf(doc, vocab)
    return vectorize_bow(doc, vocab)


@dataclass
class TextDataset:
    """Vectorized corpus over the products that carry ingredient text."""

    records: list[ProductRecord]
    vectors: list[SparseVector]
    labels: list[LabelSet]
    vocab: Vocabulary
    skipped_gtins: list[str]


def build_text_dataset(records: Sequence[ProductRecord], cfg: TextConfig) -> TextDataset:
    """Tokenize, build the vocabulary and vectorize; products without
    ingredient text are excluded (they stay subject to rule checks)."""
    kept, skipped = [], []
    for r in records:
        (kept if r.ingredients_raw.strip() else skipped).append(r)
    if not kept:
        raise PipelineError("no product carries ingredient text")
    docs = [tokens_for(r, cfg.source) for r in kept]
    vocab = build_vocabulary(docs, cfg.min_df)
    vectors = [vectorize(doc, vocab, cfg.text) for doc in docs]
    return TextDataset(
        records=kept,
        vectors=vectors,
        labels=[r.declared_allergens for r in kept],
        vocab=vocab,
        skipped_gtins=[r.gtin for r in skipped],
    )


@dataclass
class Bundle:
    """Persisted predictor: the vocabulary plus one model (general mode),
    fourteen (binary relevance) or a chain."""

    kind: str                      # "general" | "br" | "chain"
    arch: str
    text: TextConfig
    vocab: Vocabulary
    train_config: TrainConfig
    general_model: BinaryModel | None = None
    br_model: BinaryRelevanceModel | None = None
    chain_model: ChainModel | None = None
    general_threshold: float = 0.5

    @property
    def order(self) -> tuple[Allergen, ...] | None:
        return self.chain_model.order if self.chain_model is not None else None


def save_bundle(bundle: Bundle, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    models_dir = directory / "models"
    models_dir.mkdir(exist_ok=True)
    bundle.vocab.save(directory / "vocabulary.json")

    manifest = {
        "format_version": BUNDLE_FORMAT_VERSION,
        "kind": bundle.kind,
        "arch": bundle.arch,
        "text": bundle.text.to_dict(),
        "train_config": bundle.train_config.to_dict(),
        "vocab_fingerprint": bundle.vocab.fingerprint(),
        "order": [a.value for a in bundle.order] if bundle.order else None,
        "general_threshold": bundle.general_threshold,
    }
    if bundle.kind == "general":
        save_model(bundle.general_model, models_dir / "general.json")
    elif bundle.kind == "br":
        manifest["thresholds"] = {a.value: bundle.br_model.thresholds[a] for a in ALLERGENS}
        for i, a in enumerate(ALLERGENS):
            save_model(bundle.br_model.models[a], models_dir / f"{i:02d}_{a.value}.json")
    elif bundle.kind == "chain":
        manifest["thresholds"] = {a.value: bundle.chain_model.thresholds[a] for a in bundle.order}
        for i, a in enumerate(bundle.order):
            save_model(bundle.chain_model.models[i], models_dir / f"{i:02d}_{a.value}.json")
    else:
        raise ValueError(f"unknown bundle kind: {bundle.kind!r}")

    with open(directory / "bundle.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, sort_keys=True, indent=2)
        f.write("\n")


def load_bundle(directory) -> Bundle:
    """Load a bundle directory; refuses on vocabulary fingerprint mismatch."""
    directory = Path(directory)
    with open(directory / "bundle.json", encoding="utf-8") as f:
        manifest = json.load(f)
    if manifest.get("format_version") != BUNDLE_FORMAT_VERSION:
        raise PipelineError(f"unsupported bundle format: {manifest.get('format_version')}")
    vocab = Vocabulary.load(directory / "vocabulary.json")
    fingerprint = vocab.fingerprint()
    if fingerprint != manifest["vocab_fingerprint"]:
        raise PipelineError(
            "bundle vocabulary does not match its manifest fingerprint; refusing to load"
        )
    kind = manifest["kind"]
    text = TextConfig.from_dict(manifest["text"])
    train_config = TrainConfig.from_dict(manifest["train_config"])
    models_dir = directory / "models"

    bundle = Bundle(
        kind=kind, arch=manifest["arch"], text=text, vocab=vocab, train_config=train_config,
        general_threshold=manifest.get("general_threshold", 0.5),
    )
    if kind == "general":
        bundle.general_model = load_model(models_dir / "general.json", expected_fingerprint=fingerprint)
    elif kind == "br":
        thresholds = {
            allergen_from_name(name): t for name, t in manifest["thresholds"].items()
        }
        models = {}
        for i, a in enumerate(ALLERGENS):
            models[a] = load_model(models_dir / f"{i:02d}_{a.value}.json", expected_fingerprint=fingerprint)
        bundle.br_model = BinaryRelevanceModel(
            models=models, vocab_fingerprint=fingerprint, thresholds=thresholds
        )
    elif kind == "chain":
        order = tuple(allergen_from_name(n) for n in manifest["order"])
        thresholds = {
            allergen_from_name(name): t for name, t in manifest["thresholds"].items()
        }
        models = [
            load_model(models_dir / f"{i:02d}_{a.value}.json", expected_fingerprint=fingerprint)
            for i, a in enumerate(order)
        ]
        bundle.chain_model = ChainModel(
            order=order, models=models, base_dim=len(vocab),
            vocab_fingerprint=fingerprint, thresholds=thresholds,
        )
    else:
        raise PipelineError(f"unknown bundle kind: {kind!r}")
    return bundle


@dataclass
class TrainOutcome:
    bundle: Bundle
    dataset: TextDataset
    n_train: int
    n_test: int
    split_seed: int
    evaluation: LabelEvaluation | MultilabelEvaluation


def train_pipeline(
    records: Sequence[ProductRecord],
    mode: str,
    strategy: str,
    text_cfg: TextConfig,
    train_cfg: TrainConfig,
    arch: str = ARCH_MLP,
    test_fraction: float = 0.2,
    min_rows: int = 50,
    alpha_params: AlphaParams = DEFAULT_ALPHA_PARAMS,
    chain_order: Sequence[Allergen] | None = None,
) -> TrainOutcome:
    """Stratified 80/20 split, then train per mode/strategy and evaluate on
    the held-out part."""
    if mode not in (MODE_GENERAL, MODE_SPECIFIC):
        raise PipelineError(f"mode must be '{MODE_GENERAL}' or '{MODE_SPECIFIC}'")
    if strategy not in (STRATEGY_BR, STRATEGY_CHAIN):
        raise PipelineError(f"strategy must be '{STRATEGY_BR}' or '{STRATEGY_CHAIN}'")

    dataset = build_text_dataset(records, text_cfg)
    if len(dataset.records) < min_rows:
        raise PipelineError(
            f"need at least {min_rows} products with ingredient text, got {len(dataset.records)}"
        )

    if mode == MODE_GENERAL:
        strata = [bool(labels) for labels in dataset.labels]
    else:
        strata = [labels_to_bits(labels) for labels in dataset.labels]
    split_seed = train_cfg.seed
    train_idx, test_idx = stratified_split(strata, test_fraction, split_seed)
    if not train_idx or not test_idx:
        raise PipelineError("split produced an empty partition")

    x_train = [dataset.vectors[i] for i in train_idx]
    x_test = [dataset.vectors[i] for i in test_idx]
    y_train = [dataset.labels[i] for i in train_idx]
    y_test = [dataset.labels[i] for i in test_idx]

    bundle = Bundle(
        kind="", arch=arch, text=text_cfg, vocab=dataset.vocab, train_config=train_cfg
    )
    fingerprint = dataset.vocab.fingerprint()

    if mode == MODE_GENERAL:
        flags_train = [bool(labels) for labels in y_train]
        flags_test = [bool(labels) for labels in y_test]
        model = train(
            list(zip(x_train, flags_train)), train_cfg, arch, vocab_fingerprint=fingerprint
        )
        predictions = [predict_proba(model, x) >= bundle.general_threshold for x in x_test]
        evaluation = evaluate_binary(flags_test, predictions, alpha_params)
        bundle.kind = MODE_GENERAL
        bundle.general_model = model
    elif strategy == STRATEGY_BR:
        br = train_binary_relevance(
            list(zip(x_train, y_train)), train_cfg, arch, vocab_fingerprint=fingerprint
        )
        y_pred, _ = predict_binary_relevance_many(br, x_test)
        evaluation = evaluate_multilabel(y_test, y_pred, alpha_params)
        bundle.kind = STRATEGY_BR
        bundle.br_model = br
    else:
        order = tuple(chain_order) if chain_order is not None else OPTIMIZED_CHAIN_ORDER
        chain = train_chain(
            list(zip(x_train, y_train)), train_cfg, order, arch, vocab_fingerprint=fingerprint
        )
        y_pred, _ = predict_chain_many(chain, x_test)
        evaluation = evaluate_multilabel(y_test, y_pred, alpha_params)
        bundle.kind = STRATEGY_CHAIN
        bundle.chain_model = chain

    return TrainOutcome(
        bundle=bundle,
        dataset=dataset,
        n_train=len(train_idx),
        n_test=len(test_idx),
        split_seed=split_seed,
        evaluation=evaluation,
    )


@dataclass
class PredictionRow:
    """Prediction for one product, with per-allergen provenance when a
    signal-word dictionary contributes."""

    gtin: str
    labels: LabelSet
    probabilities: dict[Allergen, float]
    sources: dict[Allergen, str]          # "model" | "dict" | "model+dict"
    any_allergens: bool | None = None     # general mode only
    any_probability: float | None = None

    def to_dict(self) -> dict:
        out = {
            "gtin": self.gtin,
            "predicted": labels_to_names(self.labels),
            "probabilities": {a.value: round(p, 9) for a, p in sorted(
                self.probabilities.items(), key=lambda kv: kv[0].value)},
            "sources": {a.value: s for a, s in sorted(
                self.sources.items(), key=lambda kv: kv[0].value)},
        }
        if self.any_allergens is not None:
            out["any_allergens"] = self.any_allergens
            out["any_probability"] = round(self.any_probability, 9)
        return out


@dataclass
class PredictionResult:
    rows: list[PredictionRow]
    skipped_gtins: list[str]


def predict_products(
    bundle: Bundle,
    records: Sequence[ProductRecord],
    dictionary: Mapping[str, frozenset] | None = None,
) -> PredictionResult:
    """Predict allergens for each product; with a dictionary the output set
    is the union of model predictions and signal-word hits."""
    rows: list[PredictionRow] = []
    skipped: list[str] = []
    for record in records:
        if not record.ingredients_raw.strip():
            skipped.append(record.gtin)
            continue
        doc = tokens_for(record, bundle.text.source)
        x = vectorize(doc, bundle.vocab, bundle.text.text)

        dict_hits: LabelSet = frozenset()
        if dictionary is not None:
            # The scan looks at the normalized full token list regardless of
            # the model's feature source.
            dict_hits = dictionary_scan(normalize_ingredients(record.ingredients_raw), dictionary)

        if bundle.kind == "general":
            p = predict_proba(bundle.general_model, x)
            flag = p >= bundle.general_threshold or bool(dict_hits)
            sources = {a: "dict" for a in dict_hits}
            rows.append(PredictionRow(
                gtin=record.gtin, labels=dict_hits, probabilities={}, sources=sources,
                any_allergens=flag, any_probability=p,
            ))
            continue

        if bundle.kind == "br":
            model_labels, probs = predict_binary_relevance(bundle.br_model, x)
        else:
            model_labels, probs = predict_chain(bundle.chain_model, x)
        combined = model_labels | dict_hits
        sources = {}
        for a in combined:
            in_model, in_dict = a in model_labels, a in dict_hits
            sources[a] = "model+dict" if in_model and in_dict else ("model" if in_model else "dict")
        rows.append(PredictionRow(
            gtin=record.gtin, labels=combined, probabilities=probs, sources=sources,
        ))
    return PredictionResult(rows=rows, skipped_gtins=skipped)
