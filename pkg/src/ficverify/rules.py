"""Rule-based consistency checks for FIC nutrient declarations.

Seven error classes: missing kJ/kcal declarations, the kJ/kcal conversion
factor out of tolerance, the energy sum mismatching the declared total,
fatty-acid and sugar sub-components exceeding their basic amounts, and a
per-100g nutrient sum above 100 g.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

from .metrics import CooccurrenceMatrices, pairwise_cooccurrence
from .model import ENERGY_TABLE, BasisUnit, Nutrient, NutrientPanel, ProductRecord

# Physical kJ<->kcal constants. Deliberately not used by the conversion
# check: the per-nutrient factors of the regulation vary between 4.0 and
# 4.33, so a summed declaration can never hit the physical factor exactly.
# Exposed for report annotations only.
KJ_PER_KCAL = 4.1868
KCAL_PER_KJ = 1 / 4.1868

# Nutrients of the basic energy sum; the extended set adds polyols and
# organic acids (and salt, which contributes zero but marks the sum defined).
BASE_ENERGY_NUTRIENTS = (Nutrient.CH, Nutrient.PRO, Nutrient.FAT, Nutrient.ALC, Nutrient.FIB)
EXTENDED_ENERGY_NUTRIENTS = (Nutrient.POL, Nutrient.ORG_ACID, Nutrient.SAL)

# Nutrients whose per-100g quantities may not sum above 100 g.
MASS_SUM_NUTRIENTS = (Nutrient.CH, Nutrient.PRO, Nutrient.FAT, Nutrient.ALC, Nutrient.FIB, Nutrient.SAL)


class ErrorId(Enum):
    MV_KJ = "MV_KJ"   # declaration of energy [kJ] missing
    MV_KC = "MV_KC"   # declaration of energy [kcal] missing
    CE_EN = "CE_EN"   # kJ/kcal conversion factor outside tolerance
    SE_EN = "SE_EN"   # energy sum differs too much from declared total
    VE_FA = "VE_FA"   # more fatty acids than fat
    VE_SU = "VE_SU"   # more sugar than carbohydrates
    VE_IN = "VE_IN"   # more than 100 g of nutrients per 100 g


ERROR_IDS: tuple[ErrorId, ...] = tuple(ErrorId)
_ERROR_INDEX = {e: i for i, e in enumerate(ERROR_IDS)}


@dataclass(frozen=True)
class Finding:
    """One rule violation on one product; observed values are copied in."""

    gtin: str
    error_id: ErrorId
    observed: tuple[tuple[str, float], ...]
    expected: str

    def to_dict(self) -> dict:
        return {
            "gtin": self.gtin,
            "error_id": self.error_id.value,
            "observed": [[symbol, value] for symbol, value in self.observed],
            "expected": self.expected,
        }


@dataclass(frozen=True)
class RuleConfig:
    """Tolerances and bounds of the rule engine.

    conversion_low/high bound the declared kJ/kcal ratio; max_kcal/max_kj cap
    the declared energy; energy_sum_rel_tol is the relative tolerance between
    the declared total and the energy computed from nutrient quantities;
    abs_tol absorbs float noise in the quantity inequalities.
    """

    conversion_low: float = 4.1
    conversion_high: float = 4.3
    max_kcal: float = 900.0
    max_kj: float = 3805.0
    energy_sum_rel_tol: float = 0.05
    include_extended_nutrients: bool = True
    abs_tol: float = 1e-9

    def __post_init__(self):
        if not self.conversion_low < self.conversion_high:
            raise ValueError("conversion_low must be < conversion_high")
        if self.energy_sum_rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError("tolerances must be > 0")

    @classmethod
    def from_dict(cls, data: dict) -> "RuleConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown rule config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "RuleConfig":
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


DEFAULT_RULE_CONFIG = RuleConfig()


def _contributing(cfg: RuleConfig) -> tuple[Nutrient, ...]:
    if cfg.include_extended_nutrients:
        return BASE_ENERGY_NUTRIENTS + EXTENDED_ENERGY_NUTRIENTS
    return BASE_ENERGY_NUTRIENTS


def _energy_sum(panel: NutrientPanel, cfg: RuleConfig, kcal: bool) -> float | None:
    total = 0.0
    any_present = False
    for nutrient in _contributing(cfg):
        amount = panel.get(nutrient)
        if amount is None:
            continue
        any_present = True
        ev = ENERGY_TABLE[nutrient]
        total += amount * (ev.ev_kcal if kcal else ev.ev_kj)
    return total if any_present else None


def compute_energy_kj(panel: NutrientPanel, cfg: RuleConfig = DEFAULT_RULE_CONFIG) -> float | None:
    """Energy in kJ summed from the present nutrient quantities; None when
    no contributing quantity is declared (distinct from a zero sum)."""
    return _energy_sum(panel, cfg, kcal=False)


def compute_energy_kcal(panel: NutrientPanel, cfg: RuleConfig = DEFAULT_RULE_CONFIG) -> float | None:
    """kcal counterpart of compute_energy_kj."""
    return _energy_sum(panel, cfg, kcal=True)


def check_product(product: ProductRecord, cfg: RuleConfig = DEFAULT_RULE_CONFIG) -> list[Finding]:
    """Run all rule checks on one product; each rule reports independently."""
    panel = product.nutrients
    findings: list[Finding] = []

    def add(error_id: ErrorId, observed: Iterable[tuple[str, float]], expected: str) -> None:
        findings.append(Finding(product.gtin, error_id, tuple(observed), expected))

    kj, kcal = panel.energy_kj, panel.energy_kcal

    # Missing declarations: each unit reported on its own, so a product with
    # neither declaration carries both findings.
    if kj is None:
        observed = [] if kcal is None else [("energy_kcal", kcal)]
        add(ErrorId.MV_KJ, observed, "energy declaration in kJ present")
    if kcal is None:
        observed = [] if kj is None else [("energy_kj", kj)]
        add(ErrorId.MV_KC, observed, "energy declaration in kcal present")

    # Conversion factor between the two declared units.
    if kj is not None and kcal is not None and kcal > 0:
        ratio = kj / kcal
        if not cfg.conversion_low <= ratio <= cfg.conversion_high:
            add(
                ErrorId.CE_EN,
                [("energy_kj", kj), ("energy_kcal", kcal), ("ratio", ratio)],
                f"kJ/kcal ratio within [{cfg.conversion_low:g}, {cfg.conversion_high:g}]",
            )

    # Declared total vs the sum over nutrient quantities, in kJ when kJ is
    # declared, otherwise in kcal.
    if kj is not None:
        computed = compute_energy_kj(panel, cfg)
        if computed is not None:
            rel = abs(kj - computed) / max(kj, cfg.abs_tol)
            if rel > cfg.energy_sum_rel_tol:
                add(
                    ErrorId.SE_EN,
                    [("energy_kj", kj), ("computed_kj", computed), ("rel_diff", rel)],
                    f"declared kJ within {cfg.energy_sum_rel_tol:.0%} of nutrient energy sum",
                )
    elif kcal is not None:
        computed = compute_energy_kcal(panel, cfg)
        if computed is not None:
            rel = abs(kcal - computed) / max(kcal, cfg.abs_tol)
            if rel > cfg.energy_sum_rel_tol:
                add(
                    ErrorId.SE_EN,
                    [("energy_kcal", kcal), ("computed_kcal", computed), ("rel_diff", rel)],
                    f"declared kcal within {cfg.energy_sum_rel_tol:.0%} of nutrient energy sum",
                )

    # Maximum total energy; no error class of its own, reported under SE_EN
    # with distinguishing text.
    max_exceeded = []
    if kcal is not None and kcal > cfg.max_kcal + cfg.abs_tol:
        max_exceeded.append(("energy_kcal", kcal))
    if kj is not None and kj > cfg.max_kj + cfg.abs_tol:
        max_exceeded.append(("energy_kj", kj))
    if max_exceeded:
        add(
            ErrorId.SE_EN,
            max_exceeded,
            f"maximum energy {cfg.max_kcal:g} kcal / {cfg.max_kj:g} kJ per 100g",
        )

    # Sub-components may not exceed their basic amounts; skipped when the
    # basic amount is missing.
    fat = panel.get(Nutrient.FAT)
    if fat is not None:
        sfa = panel.get(Nutrient.SFA) or 0.0
        ufa = panel.get(Nutrient.UFA) or 0.0
        if sfa + ufa > fat + cfg.abs_tol:
            add(
                ErrorId.VE_FA,
                [("SFA", sfa), ("UFA", ufa), ("FAT", fat)],
                "SFA + UFA <= FAT",
            )
    ch = panel.get(Nutrient.CH)
    if ch is not None:
        sug = panel.get(Nutrient.SUG)
        if sug is not None and sug > ch + cfg.abs_tol:
            add(ErrorId.VE_SU, [("SUG", sug), ("CH", ch)], "SUG <= CH")

    # Nutrient masses may not sum above 100 g per 100 g (not applicable to
    # per-100ml declarations).
    if panel.basis_unit is BasisUnit.PER_100G:
        present = [(n.value, panel.get(n)) for n in MASS_SUM_NUTRIENTS if panel.has(n)]
        total = sum(v for _, v in present)
        if total > 100.0 + cfg.abs_tol:
            add(
                ErrorId.VE_IN,
                present + [("sum", total)],
                "nutrient quantities sum to <= 100 g per 100 g",
            )

    return findings


def check_dataset(
    products: Sequence[ProductRecord], cfg: RuleConfig = DEFAULT_RULE_CONFIG
) -> list[Finding]:
    """Check every product; findings keep input order, then error-ID order."""
    findings: list[Finding] = []
    for product in products:
        findings.extend(
            sorted(check_product(product, cfg), key=lambda f: _ERROR_INDEX[f.error_id])
        )
    return findings


def error_summary(findings: Iterable[Finding]) -> dict[ErrorId, int]:
    """Number of distinct products exhibiting each error class."""
    products_by_error: dict[ErrorId, set[str]] = {e: set() for e in ERROR_IDS}
    for f in findings:
        products_by_error[f.error_id].add(f.gtin)
    return {e: len(gtins) for e, gtins in products_by_error.items()}


def error_cooccurrence(findings: Iterable[Finding]) -> CooccurrenceMatrices:
    """7x7 pairwise error co-occurrence over products (diagonal = per-error counts)."""
    errors_by_product: dict[str, set[int]] = {}
    for f in findings:
        errors_by_product.setdefault(f.gtin, set()).add(_ERROR_INDEX[f.error_id])
    return pairwise_cooccurrence(errors_by_product.values(), len(ERROR_IDS))
