"""Core data model for FIC product verification.

Nutrient and allergen enumerations, the regulation's energy/reference
constants, nutrient panels and product records. Everything here is an
immutable value type.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping


class Nutrient(Enum):
    """Nutrients of the declaration panel.

    SFA/UFA are sub-components of FAT, SUG/STA of CH; ORG_ACID is kept
    distinct from the fatty-acid sub-components.
    """

    CH = "CH"
    POL = "POL"
    PRO = "PRO"
    FAT = "FAT"
    ALC = "ALC"
    ORG_ACID = "ORG_ACID"
    FIB = "FIB"
    SAL = "SAL"
    SFA = "SFA"
    UFA = "UFA"
    SUG = "SUG"
    STA = "STA"


@dataclass(frozen=True)
class EnergyValue:
    """Energy content of one gram of a nutrient, in kJ and kcal."""

    ev_kj: float
    ev_kcal: float

    @property
    def implicit_factor(self) -> float | None:
        """kJ/kcal ratio implied by the two per-gram values; None for zero-energy nutrients."""
        if self.ev_kcal == 0:
            return None
        return self.ev_kj / self.ev_kcal


# Annex XIV of Regulation (EU) No 1169/2011: energy per gram.
ENERGY_TABLE: Mapping[Nutrient, EnergyValue] = {
    Nutrient.CH: EnergyValue(17, 4),
    Nutrient.POL: EnergyValue(10, 2.4),
    Nutrient.PRO: EnergyValue(17, 4),
    Nutrient.FAT: EnergyValue(37, 9),
    Nutrient.ALC: EnergyValue(29, 7),
    Nutrient.ORG_ACID: EnergyValue(13, 3),
    Nutrient.FIB: EnergyValue(8, 2),
    Nutrient.SAL: EnergyValue(0, 0),
}


@dataclass(frozen=True)
class ReferenceIntake:
    value: float
    unit: str


# Annex XIII: daily reference intakes for an average adult.
REFERENCE_INTAKES: Mapping[str, ReferenceIntake] = {
    "energy_kj": ReferenceIntake(8400, "kJ"),
    "energy_kcal": ReferenceIntake(2000, "kcal"),
    "FAT": ReferenceIntake(70, "g"),
    "SFA": ReferenceIntake(20, "g"),
    "CH": ReferenceIntake(260, "g"),
    "SUG": ReferenceIntake(90, "g"),
    "PRO": ReferenceIntake(50, "g"),
    "SAL": ReferenceIntake(6, "g"),
}


class Allergen(Enum):
    """The 14 allergens of Annex II, in canonical order."""

    GLUTEN = "Gluten"
    CRUSTACEANS = "Crustaceans"
    EGGS = "Eggs"
    FISH = "Fish"
    PEANUTS = "Peanuts"
    SOYBEANS = "Soybeans"
    MILK = "Milk"
    NUTS = "Nuts"
    CELERY = "Celery"
    MUSTARD = "Mustard"
    SESAME = "Sesame"
    SULPHUR = "Sulphur"
    LUPINE = "Lupine"
    MOLLUSCS = "Molluscs"


ALLERGENS: tuple[Allergen, ...] = tuple(Allergen)
N_ALLERGENS = len(ALLERGENS)

_ALLERGEN_INDEX = {a: i for i, a in enumerate(ALLERGENS)}
_ALLERGEN_BY_NAME = {a.value: a for a in ALLERGENS}


def allergen_index(a: Allergen) -> int:
    """Canonical 0..13 index of an allergen (stable across runs)."""
    return _ALLERGEN_INDEX[a]


def allergen_from_index(k: int) -> Allergen:
    """Inverse of allergen_index."""
    return ALLERGENS[k]


def allergen_from_name(name: str) -> Allergen:
    try:
        return _ALLERGEN_BY_NAME[name]
    except KeyError:
        raise ValueError(f"unknown allergen name: {name!r}") from None


# A label set is a plain frozenset of Allergen members; the empty set is a
# valid value (allergen-free product).
LabelSet = frozenset
EMPTY_LABELS: LabelSet = frozenset()


def labels_to_names(labels: LabelSet) -> list[str]:
    """Serialize a label set as names in canonical order."""
    return [a.value for a in ALLERGENS if a in labels]


def labels_from_names(names) -> LabelSet:
    return frozenset(allergen_from_name(n) for n in names)


def labels_to_bits(labels: LabelSet) -> int:
    """Pack a label set into a 14-bit integer (bit k = allergen k present)."""
    bits = 0
    for a in labels:
        bits |= 1 << _ALLERGEN_INDEX[a]
    return bits


def labels_from_bits(bits: int) -> LabelSet:
    if not 0 <= bits < (1 << N_ALLERGENS):
        raise ValueError(f"label bits out of range: {bits}")
    return frozenset(a for i, a in enumerate(ALLERGENS) if bits & (1 << i))


class BasisUnit(Enum):
    PER_100G = "per_100g"
    PER_100ML = "per_100ml"


def _check_quantity(name: str, value: float) -> None:
    if not math.isfinite(value) or value < 0:
        raise ValueError(f"{name} must be finite and >= 0, got {value!r}")


@dataclass(frozen=True)
class NutrientPanel:
    """Declared quantities per 100 g/ml. A missing entry is distinct from zero."""

    quantities: Mapping[Nutrient, float] = field(default_factory=dict)
    energy_kj: float | None = None
    energy_kcal: float | None = None
    basis_unit: BasisUnit = BasisUnit.PER_100G

    def __post_init__(self):
        object.__setattr__(self, "quantities", dict(self.quantities))
        for nutrient, amount in self.quantities.items():
            if not isinstance(nutrient, Nutrient):
                raise TypeError(f"quantity key must be a Nutrient, got {nutrient!r}")
            _check_quantity(nutrient.value, amount)
        if self.energy_kj is not None:
            _check_quantity("energy_kj", self.energy_kj)
        if self.energy_kcal is not None:
            _check_quantity("energy_kcal", self.energy_kcal)

    def get(self, nutrient: Nutrient) -> float | None:
        return self.quantities.get(nutrient)

    def has(self, nutrient: Nutrient) -> bool:
        return nutrient in self.quantities

    def to_dict(self) -> dict:
        return {
            "quantities": {n.value: q for n, q in sorted(self.quantities.items(), key=lambda kv: kv[0].value)},
            "energy_kj": self.energy_kj,
            "energy_kcal": self.energy_kcal,
            "basis_unit": self.basis_unit.value,
        }


@dataclass(frozen=True)
class ProductRecord:
    """One product mapped onto the FIC data model.

    The vitamins/minerals/warnings areas are carried for schema completeness
    only; no rules consume them.
    """

    gtin: str
    name: str = ""
    brand: str = ""
    product_group: str = ""
    net_content: float | None = None
    net_content_unit: str = ""
    portions: int | None = None
    nutrients: NutrientPanel = field(default_factory=NutrientPanel)
    declared_allergens: LabelSet = EMPTY_LABELS
    ingredients_raw: str = ""
    vitamins: Mapping[str, str] = field(default_factory=dict)
    minerals: Mapping[str, str] = field(default_factory=dict)
    warnings: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.gtin:
            raise ValueError("gtin must be non-empty")
        object.__setattr__(self, "declared_allergens", frozenset(self.declared_allergens))
        for area in ("vitamins", "minerals", "warnings"):
            object.__setattr__(self, area, dict(getattr(self, area)))

    def to_dict(self) -> dict:
        return {
            "gtin": self.gtin,
            "name": self.name,
            "brand": self.brand,
            "product_group": self.product_group,
            "net_content": self.net_content,
            "net_content_unit": self.net_content_unit,
            "portions": self.portions,
            "nutrients": self.nutrients.to_dict(),
            "declared_allergens": labels_to_names(self.declared_allergens),
            "ingredients_raw": self.ingredients_raw,
            "vitamins": dict(sorted(self.vitamins.items())),
            "minerals": dict(sorted(self.minerals.items())),
            "warnings": dict(sorted(self.warnings.items())),
        }
