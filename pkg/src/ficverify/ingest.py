"""Mapping-table driven ingestion of company product files.

External files (CSV with header or JSON-lines) are mapped onto the FIC
data model via a JSON mapping table, so the rule and ML code never sees
company-specific attribute names. Cell-level problems become RowIssues
instead of aborting the batch; absent cells stay missing, never zero.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

from .model import (
    Allergen,
    BasisUnit,
    LabelSet,
    Nutrient,
    NutrientPanel,
    ProductRecord,
    allergen_from_name,
)


class MappingError(ValueError):
    pass


class IngestError(ValueError):
    pass


_PRODUCT_TEXT_FIELDS = {"gtin", "name", "brand", "product_group", "net_content_unit", "ingredients_raw"}
_NUTRIENT_NAMES = {n.value: n for n in Nutrient}
_ALLERGEN_NAMES = {a.value for a in Allergen}
_OPAQUE_AREAS = ("vitamins", "minerals", "warnings")

# Multiplicative factors to grams for quantity columns; energy tags are
# identity markers for readability of mapping files.
UNIT_FACTORS = {"g": 1.0, "mg": 1e-3, "ug": 1e-6, "µg": 1e-6, "kg": 1e3, "kj": 1.0, "kcal": 1.0}

_TRUTHY = {"1", "true", "yes", "y", "x", "ja"}
_FALSY = {"0", "false", "no", "n", "", "nein"}

_ALLERGEN_LIST_SEPARATORS = ";,|"


@dataclass(frozen=True)
class MappingEntry:
    target: str
    unit: str | None = None
    aliases: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class MappingTable:
    """Validated map from external column names to FIC model field paths."""

    entries: Mapping[str, MappingEntry]

    def __post_init__(self):
        by_target: dict[str, str | None] = {}
        for external, entry in self.entries.items():
            _validate_target(entry.target)
            if entry.unit is not None and entry.unit.lower() not in UNIT_FACTORS:
                raise MappingError(f"{external}: unknown unit tag {entry.unit!r}")
            if entry.target in by_target and by_target[entry.target] != entry.unit:
                raise MappingError(
                    f"conflicting unit tags for target {entry.target!r}: "
                    f"{by_target[entry.target]!r} vs {entry.unit!r}"
                )
            by_target[entry.target] = entry.unit

    def __len__(self) -> int:
        return len(self.entries)


def _validate_target(target: str) -> None:
    if target in _PRODUCT_TEXT_FIELDS or target in ("net_content", "portions", "basis_unit", "allergens"):
        return
    head, _, tail = target.partition(".")
    if head == "nutrients":
        if tail in ("energy_kj", "energy_kcal") or tail in _NUTRIENT_NAMES:
            return
        raise MappingError(f"unknown nutrient target: {target!r}")
    if head == "allergens":
        if tail in _ALLERGEN_NAMES:
            return
        raise MappingError(f"unknown allergen target: {target!r}")
    if head in _OPAQUE_AREAS and tail:
        return
    raise MappingError(f"unknown target field: {target!r}")


def load_mapping(path) -> MappingTable:
    """Load a mapping file: {"EXT_NAME": "target.path"} or
    {"EXT_NAME": {"target": ..., "unit": ..., "aliases": {...}}}."""
    try:
        with open(path, encoding="utf-8") as f:
            raw = json.load(f)
    except OSError as exc:
        raise IngestError(f"cannot read mapping file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise MappingError(f"mapping file is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise MappingError("mapping file must be a JSON object")
    entries = {}
    for external, spec in raw.items():
        if isinstance(spec, str):
            entries[external] = MappingEntry(target=spec)
        elif isinstance(spec, dict):
            unknown = set(spec) - {"target", "unit", "aliases"}
            if unknown:
                raise MappingError(f"{external}: unknown mapping keys {sorted(unknown)}")
            if "target" not in spec:
                raise MappingError(f"{external}: mapping entry needs a target")
            entries[external] = MappingEntry(
                target=spec["target"],
                unit=spec.get("unit"),
                aliases=dict(spec.get("aliases", {})),
            )
        else:
            raise MappingError(f"{external}: mapping entry must be a string or object")
    return MappingTable(entries=entries)


@dataclass(frozen=True)
class RowIssue:
    row: int           # 1-based data-row number
    field: str         # external column name
    reason: str
    value: str = ""

    def to_dict(self) -> dict:
        return {"row": self.row, "field": self.field, "reason": self.reason, "value": self.value}


@dataclass
class IngestResult:
    records: list[ProductRecord]
    issues: list[RowIssue]
    ignored_columns: list[str]
    basis_defaulted: bool = False

    @property
    def warnings(self) -> list[str]:
        out = []
        if self.ignored_columns:
            out.append(f"ignored unmapped columns: {', '.join(self.ignored_columns)}")
        if self.basis_defaulted:
            out.append("no basis_unit column mapped; defaulted to per_100g")
        return out


def _parse_number(value: Any) -> float:
    if isinstance(value, bool):
        raise ValueError("boolean where number expected")
    if isinstance(value, (int, float)):
        return float(value)
    text = str(value).strip()
    try:
        return float(text)
    except ValueError:
        # European decimal comma ("13,5") as long as it is unambiguous.
        if text.count(",") == 1 and "." not in text:
            return float(text.replace(",", "."))
        raise


def _parse_bool(value: Any) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in _TRUTHY:
        return True
    if text in _FALSY:
        return False
    raise ValueError(f"not a boolean value: {value!r}")


def _is_missing(value: Any) -> bool:
    return value is None or (isinstance(value, str) and value.strip() == "")


def _split_allergen_list(value: Any) -> list[str]:
    if isinstance(value, list):
        return [str(v).strip() for v in value if str(v).strip()]
    text = str(value)
    for sep in _ALLERGEN_LIST_SEPARATORS[1:]:
        text = text.replace(sep, _ALLERGEN_LIST_SEPARATORS[0])
    return [part.strip() for part in text.split(_ALLERGEN_LIST_SEPARATORS[0]) if part.strip()]


class _RowBuilder:
    """Accumulates one row's mapped cells into a ProductRecord."""

    def __init__(self, row_number: int, issues: list[RowIssue]):
        self.row = row_number
        self.issues = issues
        self.fields: dict[str, Any] = {}
        self.quantities: dict[Nutrient, float] = {}
        self.energy: dict[str, float] = {}
        self.allergens: set[Allergen] = set()
        self.basis: BasisUnit | None = None
        self.areas: dict[str, dict[str, str]] = {area: {} for area in _OPAQUE_AREAS}

    def issue(self, column: str, reason: str, value: Any) -> None:
        self.issues.append(RowIssue(self.row, column, reason, str(value)))

    def apply(self, column: str, entry: MappingEntry, value: Any) -> None:
        if _is_missing(value):
            return
        target = entry.target
        aliased = entry.aliases.get(str(value).strip(), None)

        if target in _PRODUCT_TEXT_FIELDS:
            self.fields[target] = str(value).strip()
            return
        if target == "net_content":
            self._number(column, entry, value, lambda v: self.fields.__setitem__("net_content", v))
            return
        if target == "portions":
            try:
                self.fields["portions"] = int(_parse_number(value))
            except ValueError:
                self.issue(column, "non-integer portion count", value)
            return
        if target == "basis_unit":
            text = aliased if aliased is not None else str(value).strip()
            try:
                self.basis = BasisUnit(text)
            except ValueError:
                self.issue(column, "unknown basis unit", value)
            return
        if target == "allergens":
            for name in _split_allergen_list(value):
                resolved = entry.aliases.get(name, name)
                try:
                    self.allergens.add(allergen_from_name(resolved))
                except ValueError:
                    self.issue(column, "unknown allergen name", name)
            return

        head, _, tail = target.partition(".")
        if head == "nutrients":
            if tail == "energy_kj" or tail == "energy_kcal":
                self._number(column, entry, value, lambda v: self.energy.__setitem__(tail, v))
            else:
                nutrient = _NUTRIENT_NAMES[tail]
                self._number(column, entry, value, lambda v: self.quantities.__setitem__(nutrient, v))
            return
        if head == "allergens":
            try:
                if _parse_bool(aliased if aliased is not None else value):
                    self.allergens.add(allergen_from_name(tail))
            except ValueError:
                self.issue(column, "unparseable allergen flag", value)
            return
        if head in _OPAQUE_AREAS:
            self.areas[head][tail] = str(value).strip()
            return
        raise AssertionError(f"unvalidated target slipped through: {target!r}")

    def _number(self, column: str, entry: MappingEntry, value: Any, store) -> None:
        try:
            number = _parse_number(value)
        except ValueError:
            self.issue(column, "non-numeric value", value)
            return
        if entry.unit is not None:
            number *= UNIT_FACTORS[entry.unit.lower()]
        if number < 0:
            self.issue(column, "negative quantity", value)
            return
        store(number)

    def build(self, default_basis: BasisUnit) -> ProductRecord:
        gtin = self.fields.get("gtin", "")
        if not gtin:
            self.issue("gtin", "missing gtin; synthesized row identity", "")
            gtin = f"row-{self.row}"
        panel = NutrientPanel(
            quantities=self.quantities,
            energy_kj=self.energy.get("energy_kj"),
            energy_kcal=self.energy.get("energy_kcal"),
            basis_unit=self.basis if self.basis is not None else default_basis,
        )
        return ProductRecord(
            gtin=gtin,
            name=self.fields.get("name", ""),
            brand=self.fields.get("brand", ""),
            product_group=self.fields.get("product_group", ""),
            net_content=self.fields.get("net_content"),
            net_content_unit=self.fields.get("net_content_unit", ""),
            portions=self.fields.get("portions"),
            nutrients=panel,
            declared_allergens=frozenset(self.allergens),
            ingredients_raw=self.fields.get("ingredients_raw", ""),
            vitamins=self.areas["vitamins"],
            minerals=self.areas["minerals"],
            warnings=self.areas["warnings"],
        )


def _iter_rows(path: Path, fmt: str, delimiter: str):
    if fmt == "jsonl":
        with open(path, encoding="utf-8") as f:
            for line_no, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                yield line_no, json.loads(line)
    else:
        with open(path, encoding="utf-8", newline="") as f:
            reader = csv.DictReader(f, delimiter=delimiter)
            if reader.fieldnames is None:
                raise IngestError(f"{path}: no header row")
            for row_no, row in enumerate(reader, start=1):
                row.pop(None, None)
                yield row_no, row


def parse_products(
    path,
    mapping: MappingTable,
    delimiter: str = ",",
    fmt: str | None = None,
    default_basis: BasisUnit = BasisUnit.PER_100G,
) -> IngestResult:
    """Parse a CSV (header row) or JSON-lines product file.

    Every data row yields exactly one ProductRecord; unparseable cells are
    reported as RowIssues and left missing. Columns without a mapping entry
    are ignored and listed in the result for auditability.
    """
    path = Path(path)
    if not path.exists():
        raise IngestError(f"no such file: {path}")
    if fmt is None:
        fmt = "jsonl" if path.suffix.lower() in (".jsonl", ".ndjson") else "csv"
    if fmt not in ("csv", "jsonl"):
        raise ValueError(f"fmt must be 'csv' or 'jsonl', got {fmt!r}")

    basis_mapped = any(e.target == "basis_unit" for e in mapping.entries.values())
    issues: list[RowIssue] = []
    records: list[ProductRecord] = []
    seen_columns: dict[str, None] = {}

    try:
        for row_no, row in _iter_rows(path, fmt, delimiter):
            if not isinstance(row, dict):
                raise IngestError(f"{path}:{row_no}: row is not an object")
            builder = _RowBuilder(row_no, issues)
            for column, value in row.items():
                seen_columns.setdefault(column)
                entry = mapping.entries.get(column)
                if entry is None:
                    continue
                builder.apply(column, entry, value)
            records.append(builder.build(default_basis))
    except (json.JSONDecodeError, csv.Error) as exc:
        raise IngestError(f"{path}: cannot parse file: {exc}") from exc
    except OSError as exc:
        raise IngestError(f"{path}: cannot read file: {exc}") from exc

    mapped_seen = [c for c in seen_columns if c in mapping.entries]
    if records and not mapped_seen:
        raise IngestError(f"{path}: no column matches any mapping entry")
    ignored = [c for c in seen_columns if c not in mapping.entries]
    return IngestResult(
        records=records,
        issues=issues,
        ignored_columns=ignored,
        basis_defaulted=not basis_mapped,
    )
