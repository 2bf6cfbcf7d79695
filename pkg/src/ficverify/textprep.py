"""Ingredient-text processing: normalization, capitalized-ingredient
extraction, document-frequency vocabularies, BOW/TF-IDF vectors and the
signal-word dictionary scan."""

from __future__ import annotations

import hashlib
import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .model import Allergen, LabelSet, allergen_from_name

# Maximal runs of Unicode letters; anything else (digits, punctuation,
# whitespace) separates tokens.
_LETTER_RUN = re.compile(r"[^\W\d_]+", re.UNICODE)

MODE_BOW = "BOW"
MODE_TFIDF = "TFIDF"


def normalize_ingredients(raw: str) -> list[str]:
    """Lowercase and split on every non-letter character."""
    return _LETTER_RUN.findall(raw.lower())


def extract_capitalized(raw: str) -> list[str]:
    """Runs of >= 2 uppercase letters in the raw text, lowercased.

    The length-2 threshold keeps ordinary sentence-initial capitals out;
    duplicates are preserved so BOW counts them.
    """
    runs: list[str] = []
    current: list[str] = []
    for ch in raw:
        if ch.isalpha() and ch.isupper():
            current.append(ch)
        else:
            if len(current) >= 2:
                runs.append("".join(current).lower())
            current = []
    if len(current) >= 2:
        runs.append("".join(current).lower())
    return runs


@dataclass(frozen=True)
class Vocabulary:
    """Tokens kept by a document-frequency threshold, in deterministic order
    (descending document frequency, ties lexicographic)."""

    tokens: tuple[str, ...]
    doc_freqs: tuple[int, ...]
    min_df: float
    document_count: int
    index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.tokens) != len(self.doc_freqs):
            raise ValueError("tokens and doc_freqs must align")
        object.__setattr__(self, "index", {t: i for i, t in enumerate(self.tokens)})

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def fingerprint(self) -> str:
        """Stable digest of the vocabulary content, for model compatibility checks."""
        payload = json.dumps(
            {
                "tokens": list(self.tokens),
                "doc_freqs": list(self.doc_freqs),
                "min_df": self.min_df,
                "document_count": self.document_count,
            },
            sort_keys=True,
            separators=(",", ":"),
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def to_dict(self) -> dict:
        return {
            "tokens": list(self.tokens),
            "doc_freqs": list(self.doc_freqs),
            "min_df": self.min_df,
            "document_count": self.document_count,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Vocabulary":
        return cls(
            tokens=tuple(data["tokens"]),
            doc_freqs=tuple(data["doc_freqs"]),
            min_df=data["min_df"],
            document_count=data["document_count"],
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, sort_keys=True, separators=(",", ":"))

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


def build_vocabulary(corpus: Sequence[Sequence[str]], min_df: float) -> Vocabulary:
    """Keep tokens appearing in at least ceil(min_df * N) documents."""
    if not corpus:
        raise ValueError("empty corpus")
    if not 0 < min_df < 1:
        raise ValueError(f"min_df must be in (0, 1), got {min_df}")
    n = len(corpus)
    df: Counter[str] = Counter()
    for doc in corpus:
        df.update(set(doc))
    threshold = math.ceil(min_df * n)
    kept = [(token, count) for token, count in df.items() if count >= threshold]
    kept.sort(key=lambda tc: (-tc[1], tc[0]))
    return Vocabulary(
        tokens=tuple(t for t, _ in kept),
        doc_freqs=tuple(c for _, c in kept),
        min_df=min_df,
        document_count=n,
    )


@dataclass(frozen=True)
class SparseVector:
    """Sparse document vector over a fixed vocabulary dimension."""

    dim: int
    indices: tuple[int, ...]
    weights: tuple[float, ...]
    mode: str

    def __post_init__(self):
        if len(self.indices) != len(self.weights):
            raise ValueError("indices and weights must align")
        prev = -1
        for i in self.indices:
            if not prev < i < self.dim:
                raise ValueError("indices must be strictly increasing and within bounds")
            prev = i
        for w in self.weights:
            if w < 0:
                raise ValueError("weights must be non-negative")
            if self.mode == MODE_BOW and w != int(w):
                raise ValueError("BOW weights must be integral")

    def to_dense(self) -> np.ndarray:
        dense = np.zeros(self.dim)
        for i, w in zip(self.indices, self.weights):
            dense[i] = w
        return dense

    def weight_sum(self) -> float:
        return sum(self.weights)


def vectorize_bow(doc: Sequence[str], vocab: Vocabulary) -> SparseVector:
    """Raw token counts over the vocabulary; out-of-vocabulary tokens are ignored."""
    counts: Counter[int] = Counter()
    for token in doc:
        idx = vocab.index.get(token)
        if idx is not None:
            counts[idx] += 1
    items = sorted(counts.items())
    return SparseVector(
        dim=len(vocab),
        indices=tuple(i for i, _ in items),
        weights=tuple(float(c) for _, c in items),
        mode=MODE_BOW,
    )


def vectorize_tfidf(
    doc: Sequence[str], vocab: Vocabulary, stats: Sequence[int] | None = None
) -> SparseVector:
    """Smoothed TF-IDF weights, L2-normalized.

    idf(t) = ln((1 + N) / (1 + df(t))) + 1 with N documents at vocabulary
    build time; stats defaults to the vocabulary's own document frequencies.
    """
    doc_freqs = vocab.doc_freqs if stats is None else tuple(stats)
    if len(doc_freqs) != len(vocab):
        raise ValueError("document-frequency stats do not match the vocabulary")
    n = vocab.document_count
    counts: Counter[int] = Counter()
    for token in doc:
        idx = vocab.index.get(token)
        if idx is not None:
            counts[idx] += 1
    items = sorted(counts.items())
    weights = [
        count * (math.log((1 + n) / (1 + doc_freqs[idx])) + 1) for idx, count in items
    ]
    norm = math.sqrt(sum(w * w for w in weights))
    if norm > 0:
        weights = [w / norm for w in weights]
    return SparseVector(
        dim=len(vocab),
        indices=tuple(i for i, _ in items),
        weights=tuple(weights),
        mode=MODE_TFIDF,
    )


def dictionary_scan(doc: Sequence[str], dictionary: Mapping[str, Iterable[Allergen]]) -> LabelSet:
    """Union of the allergen sets of every token matched in the signal dictionary."""
    hits: set[Allergen] = set()
    for token in doc:
        allergens = dictionary.get(token)
        if allergens:
            hits.update(allergens)
    return frozenset(hits)


def load_signal_dictionary(path) -> dict[str, frozenset]:
    """Load a JSON signal-word dictionary {"token": ["Milk", ...]}."""
    with open(path, encoding="utf-8") as f:
        raw = json.load(f)
    if not isinstance(raw, dict):
        raise ValueError("signal dictionary must be a JSON object")
    return {
        token: frozenset(allergen_from_name(name) for name in names)
        for token, names in raw.items()
    }


def _signals(entries: dict[str, str]) -> dict[str, frozenset]:
    return {
        token: frozenset([allergen_from_name(name)]) for token, name in entries.items()
    }


# Small built-in dictionary of unambiguous signal words; user dictionaries
# can extend or replace it.
DEFAULT_SIGNAL_WORDS: Mapping[str, frozenset] = _signals({
    "wheat": "Gluten", "barley": "Gluten", "rye": "Gluten", "oat": "Gluten",
    "oats": "Gluten", "spelt": "Gluten", "malt": "Gluten",
    "shrimp": "Crustaceans", "prawn": "Crustaceans", "crab": "Crustaceans",
    "lobster": "Crustaceans", "crayfish": "Crustaceans",
    "egg": "Eggs", "eggs": "Eggs", "albumin": "Eggs",
    "fish": "Fish", "salmon": "Fish", "trout": "Fish", "tuna": "Fish",
    "cod": "Fish", "anchovy": "Fish", "herring": "Fish",
    "peanut": "Peanuts", "peanuts": "Peanuts",
    "soy": "Soybeans", "soya": "Soybeans", "soybean": "Soybeans", "tofu": "Soybeans",
    "milk": "Milk", "whey": "Milk", "lactose": "Milk", "casein": "Milk",
    "butter": "Milk", "cream": "Milk", "cheese": "Milk", "yoghurt": "Milk",
    "almond": "Nuts", "hazelnut": "Nuts", "walnut": "Nuts", "cashew": "Nuts",
    "pistachio": "Nuts", "pecan": "Nuts", "macadamia": "Nuts",
    "celery": "Celery", "celeriac": "Celery",
    "mustard": "Mustard",
    "sesame": "Sesame", "tahini": "Sesame",
    "sulphite": "Sulphur", "sulfite": "Sulphur", "sulphur": "Sulphur",
    "lupin": "Lupine", "lupine": "Lupine",
    "mussel": "Molluscs", "oyster": "Molluscs", "squid": "Molluscs",
    "snail": "Molluscs", "clam": "Molluscs",
})
