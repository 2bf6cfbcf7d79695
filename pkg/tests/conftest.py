import json

import numpy as np
import pytest

from ficverify.model import ALLERGENS

# One dedicated signal token per allergen; a product's ingredient list
# contains the token iff the allergen is declared, which makes the learning
# problem exactly solvable.
ALLERGEN_TOKEN = {a: f"{a.value.lower()}zutat" for a in ALLERGENS}

NOISE_WORDS = ["water", "salt", "sugar", "aroma", "acid", "starch", "oil", "spice"]

ML_MAPPING = {
    "EAN": "gtin",
    "NAME": "name",
    "ZUTATEN": "ingredients_raw",
    "ALLERGENE": "allergens",
}


def synthetic_allergen_rows(n, seed, p_label=0.25, caps=False):
    """Rows for a corpus where every allergen is implied by its own token.

    With caps=True the allergen tokens appear in capital letters, the way
    allergenic ingredients are highlighted on real labels.
    """
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(n):
        present = [a for a in ALLERGENS if rng.random() < p_label]
        tokens = [ALLERGEN_TOKEN[a].upper() if caps else ALLERGEN_TOKEN[a] for a in present]
        noise = [w for w in NOISE_WORDS if rng.random() < 0.4] or ["water"]
        ingredients = ", ".join(tokens + noise)
        rows.append({
            "EAN": f"40{i:010d}",
            "NAME": f"product {i}",
            "ZUTATEN": ingredients,
            "ALLERGENE": ";".join(a.value for a in present),
        })
    return rows


def write_ml_fixture(tmp_path, n=200, seed=0, p_label=0.25, caps=False):
    """Write the synthetic corpus + mapping, return (products_path, mapping_path)."""
    products = tmp_path / "products.csv"
    rows = synthetic_allergen_rows(n, seed, p_label, caps)
    header = ["EAN", "NAME", "ZUTATEN", "ALLERGENE"]
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(f'"{row[h]}"' for h in header))
    products.write_text("\n".join(lines) + "\n", encoding="utf-8")
    mapping = tmp_path / "mapping.json"
    mapping.write_text(json.dumps(ML_MAPPING), encoding="utf-8")
    return products, mapping


@pytest.fixture
def ml_fixture(tmp_path):
    return write_ml_fixture(tmp_path)
