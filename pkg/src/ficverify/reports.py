"""Report writers: findings JSON-lines, summary and matrix CSVs shaped like
the verification tables, appendix-style metric CSVs, heatmap figures and the
run manifest."""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .metrics import CooccurrenceMatrices, LabelEvaluation
from .model import ALLERGENS
from .rules import ERROR_IDS, ErrorId, Finding

__version__ = "0.1.0"

# Column sets are contractual; schema tests pin them.
APPENDIX_COLUMNS = ["Algo", "Vocab", "TextT", "TP", "TN", "FP", "FN", "Pr", "Re", "F1", "Alpha"]
MACRO_MICRO_COLUMNS = [
    "Algo", "Voc", "TT",
    "Pr_macro", "Re_macro", "F1_macro",
    "Pr_micro", "Re_micro", "F1_micro",
    "Alpha",
]
MACRO_MICRO_COLUMNS_SPECIFIC = ["Allergen"] + MACRO_MICRO_COLUMNS

ERROR_HEADER = [e.value for e in ERROR_IDS]
ALLERGEN_HEADER = [a.value for a in ALLERGENS]

# Fixed PNG metadata keeps figure bytes stable across runs.
_PNG_METADATA = {"Software": f"ficverify {__version__}"}


def _fmt(value: float) -> str:
    return f"{value:.6f}"


def write_findings_jsonl(findings: Iterable[Finding], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for finding in findings:
            f.write(json.dumps(finding.to_dict(), sort_keys=True, separators=(",", ":")))
            f.write("\n")


def write_error_summary_csv(summary: Mapping[ErrorId, int], path) -> None:
    """One wide row of per-error product counts, columns in error-ID order."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(ERROR_HEADER)
        writer.writerow([summary.get(e, 0) for e in ERROR_IDS])


def write_matrix_csv(matrix: np.ndarray, header: Sequence[str], path, as_int: bool = False) -> None:
    """Square matrix, header columns in declaration order, rows implicit."""
    n = len(header)
    if matrix.shape != (n, n):
        raise ValueError(f"matrix shape {matrix.shape} does not match header length {n}")
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(list(header))
        for row in matrix:
            writer.writerow([str(int(v)) if as_int else _fmt(v) for v in row])


def write_cooccurrence(matrices: CooccurrenceMatrices, header: Sequence[str], out_dir, stem: str,
                       figures: bool = True, titles: tuple[str, str] | None = None) -> list[Path]:
    """Absolute + relative matrix CSVs with matching heatmap PNGs."""
    out_dir = Path(out_dir)
    paths = []
    abs_csv = out_dir / f"{stem}_absolute.csv"
    rel_csv = out_dir / f"{stem}_relative.csv"
    write_matrix_csv(matrices.absolute, header, abs_csv, as_int=True)
    write_matrix_csv(matrices.relative, header, rel_csv)
    paths += [abs_csv, rel_csv]
    if figures:
        abs_title, rel_title = titles or (
            f"{stem.replace('_', ' ')} (absolute)", f"{stem.replace('_', ' ')} (relative)"
        )
        abs_png = out_dir / f"{stem}_absolute.png"
        rel_png = out_dir / f"{stem}_relative.png"
        render_heatmap(matrices.absolute, header, abs_png, abs_title, percent=False)
        render_heatmap(matrices.relative * 100.0, header, rel_png, rel_title, percent=True)
        paths += [abs_png, rel_png]
    return paths


def render_heatmap(matrix: np.ndarray, labels: Sequence[str], path, title: str, percent: bool) -> None:
    """Annotated co-occurrence heatmap written as PNG."""
    n = len(labels)
    fig, ax = plt.subplots(figsize=(max(6.0, 0.6 * n + 2.0),) * 2)
    im = ax.imshow(matrix, cmap="viridis")
    ax.set_xticks(range(n), labels=list(labels), rotation=45, ha="right", fontsize=8)
    ax.set_yticks(range(n), labels=list(labels), fontsize=8)
    vmax = matrix.max() if matrix.size else 0
    for i in range(n):
        for j in range(n):
            value = matrix[i, j]
            text = f"{value:.0f}" + ("%" if percent else "")
            color = "white" if vmax and value < 0.6 * vmax else "black"
            ax.text(j, i, text, ha="center", va="center", fontsize=6, color=color)
    ax.set_title(title)
    fig.colorbar(im, ax=ax, shrink=0.8)
    fig.tight_layout()
    fig.savefig(path, dpi=150, metadata=_PNG_METADATA)
    plt.close(fig)


def appendix_row(algo: str, vocab_size: int, text_label: str, ev: LabelEvaluation) -> dict:
    """One appendix-shaped metric row; Pr/Re/F1 are positive-class values."""
    return {
        "Algo": algo,
        "Vocab": vocab_size,
        "TextT": text_label,
        "TP": ev.counts.tp,
        "TN": ev.counts.tn,
        "FP": ev.counts.fp,
        "FN": ev.counts.fn,
        "Pr": _fmt(ev.positive.precision),
        "Re": _fmt(ev.positive.recall),
        "F1": _fmt(ev.positive.f1),
        "Alpha": _fmt(ev.alpha),
    }


def macro_micro_row(algo: str, vocab_size: int, text_label: str, ev: LabelEvaluation,
                    allergen: str | None = None) -> dict:
    row = {
        "Algo": algo,
        "Voc": vocab_size,
        "TT": text_label,
        "Pr_macro": _fmt(ev.macro.precision),
        "Re_macro": _fmt(ev.macro.recall),
        "F1_macro": _fmt(ev.macro.f1),
        "Pr_micro": _fmt(ev.micro.precision),
        "Re_micro": _fmt(ev.micro.recall),
        "F1_micro": _fmt(ev.micro.f1),
        "Alpha": _fmt(ev.alpha),
    }
    if allergen is not None:
        row = {"Allergen": allergen, **row}
    return row


def write_csv_rows(rows: Sequence[dict], columns: Sequence[str], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(columns))
        writer.writeheader()
        for row in rows:
            if set(row) != set(columns):
                raise ValueError(f"row keys {sorted(row)} do not match columns {sorted(columns)}")
            writer.writerow(row)


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    """Reproducibility record: two runs with equal manifests (timestamps
    aside) must produce byte-identical reports."""

    command: str
    config: dict
    inputs: dict = field(default_factory=dict)     # path -> sha256
    seeds: dict = field(default_factory=dict)
    tool_version: str = __version__
    started: str = ""
    finished: str = ""

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "config": self.config,
            "inputs": self.inputs,
            "seeds": self.seeds,
            "tool_version": self.tool_version,
            "started": self.started,
            "finished": self.finished,
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, sort_keys=True, indent=2)
            f.write("\n")
