"""Command-line front end: verify / train / predict / stats.

Exit codes: 0 success (verify: no findings), 1 findings present (verify
only), 2 input or configuration error. All randomness flows from --seed;
a JSON config file can pre-set any flag, explicit flags win.
"""

from __future__ import annotations

import argparse
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import pipeline, reports
from .ingest import IngestError, MappingError, load_mapping, parse_products
from .learners import ARCH_LOGISTIC, ARCH_MLP, TrainConfig, TrainingError
from .metrics import allergen_cooccurrence, label_stats
from .model import ALLERGENS, Nutrient
from .pipeline import PipelineError, TextConfig
from .rules import (
    DEFAULT_RULE_CONFIG,
    RuleConfig,
    check_dataset,
    error_cooccurrence,
    error_summary,
)
from .textprep import load_signal_dictionary

_ARCHS = {"logistic": ARCH_LOGISTIC, "mlp": ARCH_MLP}
_DEFAULT_LR = {"logistic": 0.5, "mlp": 0.1}

# Nutrient-distribution report rows, energy first.
_DISTRIBUTION_ROWS = [
    ("ENER_KJ", None), ("ENER_KC", None),
    ("FAT", Nutrient.FAT), ("SFA", Nutrient.SFA), ("CH", Nutrient.CH),
    ("SUG", Nutrient.SUG), ("PRO", Nutrient.PRO), ("SAL", Nutrient.SAL),
    ("FIB", Nutrient.FIB), ("POL", Nutrient.POL), ("STA", Nutrient.STA),
    ("UFA", Nutrient.UFA),
]


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return 2


def _load_config_defaults(argv: list[str]) -> dict:
    """Pre-scan for --config and return its JSON contents as flag defaults."""
    for i, arg in enumerate(argv):
        if arg == "--config" and i + 1 < len(argv):
            with open(argv[i + 1], encoding="utf-8") as f:
                data = json.load(f)
            if not isinstance(data, dict):
                raise IngestError("config file must be a JSON object")
            return {key.replace("-", "_"): value for key, value in data.items()}
        if arg.startswith("--config="):
            with open(arg.split("=", 1)[1], encoding="utf-8") as f:
                data = json.load(f)
            return {key.replace("-", "_"): value for key, value in data.items()}
    return {}


def _merge(args: argparse.Namespace, config: dict, key: str, fallback):
    value = getattr(args, key, None)
    if value is not None:
        return value
    if key in config:
        return config[key]
    return fallback


def _ingest(args, config) -> tuple:
    mapping = load_mapping(args.mapping)
    delimiter = _merge(args, config, "delimiter", ",")
    result = parse_products(args.products, mapping, delimiter=delimiter)
    for warning in result.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    for issue in result.issues:
        print(f"warning: row {issue.row} [{issue.field}]: {issue.reason}", file=sys.stderr)
    return mapping, result


def _manifest(command: str, cfg: dict, inputs: dict, seeds: dict) -> reports.RunManifest:
    digests = {str(p): reports.file_digest(p) for p in inputs.values() if p}
    return reports.RunManifest(
        command=command, config=cfg, inputs=digests, seeds=seeds, started=_now()
    )


def cmd_verify(args, config) -> int:
    out_dir = Path(_merge(args, config, "out_dir", "out"))
    try:
        rules_cfg = RuleConfig.load(args.rules_config) if args.rules_config else DEFAULT_RULE_CONFIG
        mapping, ingested = _ingest(args, config)
    except (IngestError, MappingError, OSError, ValueError) as exc:
        return _fail(str(exc))

    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = _manifest(
        "verify",
        {"rules": rules_cfg.__dict__, "figures": not args.no_figures},
        {"products": args.products, "mapping": args.mapping, "rules_config": args.rules_config},
        {},
    )

    findings = check_dataset(ingested.records, rules_cfg)
    summary = error_summary(findings)
    matrices = error_cooccurrence(findings)

    reports.write_findings_jsonl(findings, out_dir / "findings.jsonl")
    reports.write_error_summary_csv(summary, out_dir / "error_summary.csv")
    reports.write_cooccurrence(
        matrices, reports.ERROR_HEADER, out_dir, "error_cooccurrence",
        figures=not args.no_figures,
        titles=("Pairwise error co-occurrence (absolute)", "Pairwise error co-occurrence [%]"),
    )
    manifest.finished = _now()
    manifest.save(out_dir / "manifest.json")

    checked = len(ingested.records)
    flagged = len({f.gtin for f in findings})
    print(f"checked {checked} products: {len(findings)} findings on {flagged} products")
    return 1 if findings else 0


def cmd_stats(args, config) -> int:
    out_dir = Path(_merge(args, config, "out_dir", "out"))
    try:
        mapping, ingested = _ingest(args, config)
    except (IngestError, MappingError, OSError, ValueError) as exc:
        return _fail(str(exc))
    records = ingested.records
    if not records:
        return _fail("no products ingested")

    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = _manifest(
        "stats", {"figures": not args.no_figures},
        {"products": args.products, "mapping": args.mapping}, {},
    )

    # Products with a value greater than 0 (zero declarations do not count).
    rows = []
    for label, nutrient in _DISTRIBUTION_ROWS:
        if label == "ENER_KJ":
            count = sum(1 for r in records if (r.nutrients.energy_kj or 0) > 0)
        elif label == "ENER_KC":
            count = sum(1 for r in records if (r.nutrients.energy_kcal or 0) > 0)
        else:
            count = sum(1 for r in records if (r.nutrients.get(nutrient) or 0) > 0)
        rows.append({"Value": label, "Products": count})
    reports.write_csv_rows(rows, ["Value", "Products"], out_dir / "nutrient_distribution.csv")

    label_sets = [r.declared_allergens for r in records]
    stats = label_stats(label_sets)
    allergen_rows = [
        {"Allergen": a.value, "Products": stats.per_allergen_counts[a]} for a in ALLERGENS
    ]
    reports.write_csv_rows(allergen_rows, ["Allergen", "Products"], out_dir / "allergen_distribution.csv")

    with open(out_dir / "label_stats.json", "w", encoding="utf-8") as f:
        json.dump(
            {
                "n_products": stats.n_examples,
                "label_cardinality": stats.label_cardinality,
                "label_density": stats.label_density,
                "density_defined": stats.density_defined,
                "labels_present": sorted(a.value for a in stats.labels_present),
            },
            f, sort_keys=True, indent=2,
        )
        f.write("\n")

    matrices = allergen_cooccurrence(label_sets)
    reports.write_cooccurrence(
        matrices, reports.ALLERGEN_HEADER, out_dir, "allergen_cooccurrence",
        figures=not args.no_figures,
        titles=("Pairwise allergen occurrence (absolute)", "Pairwise allergen occurrence [%]"),
    )
    manifest.finished = _now()
    manifest.save(out_dir / "manifest.json")
    print(
        f"{stats.n_examples} products, label cardinality {stats.label_cardinality:.4f}, "
        f"label density {stats.label_density:.4f}"
    )
    return 0


def cmd_train(args, config) -> int:
    out_dir = Path(_merge(args, config, "out_dir", "out"))
    seed = int(_merge(args, config, "seed", 0))
    arch_name = _merge(args, config, "arch", "mlp")
    mode = _merge(args, config, "mode", pipeline.MODE_SPECIFIC)
    strategy = _merge(args, config, "strategy", pipeline.STRATEGY_BR)
    text = _merge(args, config, "text", pipeline.TEXT_BOW)
    min_df = float(_merge(args, config, "min_df", 0.01))
    source = _merge(args, config, "source", pipeline.SOURCE_FULL)
    min_rows = int(_merge(args, config, "min_rows", 50))
    epochs = int(_merge(args, config, "epochs", 200))
    batch_size = int(_merge(args, config, "batch_size", 32))
    learning_rate = _merge(args, config, "learning_rate", None)
    l2_penalty = float(_merge(args, config, "l2_penalty", 0.0))
    test_fraction = float(_merge(args, config, "test_fraction", 0.2))

    if arch_name not in _ARCHS:
        return _fail(f"unknown arch {arch_name!r}; choose from {sorted(_ARCHS)}")
    if learning_rate is None:
        learning_rate = _DEFAULT_LR[arch_name]

    try:
        text_cfg = TextConfig(text=text, min_df=min_df, source=source)
        train_cfg = TrainConfig(
            learning_rate=float(learning_rate), epochs=epochs, batch_size=batch_size,
            l2_penalty=l2_penalty, seed=seed, class_weighting=bool(args.class_weighting),
        )
        mapping, ingested = _ingest(args, config)
        outcome = pipeline.train_pipeline(
            ingested.records, mode, strategy, text_cfg, train_cfg,
            arch=_ARCHS[arch_name], test_fraction=test_fraction, min_rows=min_rows,
        )
    except (IngestError, MappingError, PipelineError, TrainingError, OSError, ValueError) as exc:
        return _fail(str(exc))

    out_dir.mkdir(parents=True, exist_ok=True)
    pipeline.save_bundle(outcome.bundle, out_dir / "model")

    algo = pipeline.ALGO_LABELS[_ARCHS[arch_name]]
    text_label = pipeline.TEXT_LABELS[text]
    vocab_size = len(outcome.bundle.vocab)

    if mode == pipeline.MODE_GENERAL:
        ev = outcome.evaluation
        reports.write_csv_rows(
            [reports.appendix_row(algo, vocab_size, text_label, ev)],
            reports.APPENDIX_COLUMNS, out_dir / "metrics_appendix.csv",
        )
        reports.write_csv_rows(
            [reports.macro_micro_row(algo, vocab_size, text_label, ev)],
            reports.MACRO_MICRO_COLUMNS, out_dir / "metrics_macromicro.csv",
        )
        headline = f"micro-F1 {ev.micro.f1:.4f}, alpha {ev.alpha:.4f}"
        seeds = {"seed": seed, "split_seed": outcome.split_seed}
    else:
        ev = outcome.evaluation
        mm_rows = []
        for a in ALLERGENS:
            label_ev = ev.per_allergen[a]
            reports.write_csv_rows(
                [reports.appendix_row(algo, vocab_size, text_label, label_ev)],
                reports.APPENDIX_COLUMNS, out_dir / f"metrics_appendix_{a.value}.csv",
            )
            mm_rows.append(
                reports.macro_micro_row(algo, vocab_size, text_label, label_ev, allergen=a.value)
            )
        reports.write_csv_rows(
            mm_rows, reports.MACRO_MICRO_COLUMNS_SPECIFIC, out_dir / "metrics_macromicro.csv"
        )
        headline = (
            f"micro-F1 {ev.micro.f1:.4f}, macro-F1 {ev.macro.f1:.4f}, alpha {ev.alpha.mean:.4f}"
        )
        if strategy == pipeline.STRATEGY_BR:
            seeds = {"seed": seed, "split_seed": outcome.split_seed,
                     "model_seeds": {a.value: seed + i for i, a in enumerate(ALLERGENS)}}
        else:
            seeds = {"seed": seed, "split_seed": outcome.split_seed,
                     "model_seeds": {a.value: seed + i for i, a in enumerate(outcome.bundle.order)}}

    manifest = _manifest(
        "train",
        {
            "mode": mode, "strategy": strategy, "arch": arch_name,
            "text": text_cfg.to_dict(), "train": train_cfg.to_dict(),
            "test_fraction": test_fraction, "min_rows": min_rows,
            "vocab_size": vocab_size,
            "appendix_metric_convention": "positive_class",
            "order": [a.value for a in outcome.bundle.order] if outcome.bundle.order else None,
        },
        {"products": args.products, "mapping": args.mapping},
        seeds,
    )
    manifest.finished = _now()
    manifest.save(out_dir / "manifest.json")

    print(
        f"trained {mode}/{strategy} ({algo}, {text_label}, |vocab|={vocab_size}) on "
        f"{outcome.n_train} products, evaluated on {outcome.n_test}: {headline}"
    )
    return 0


def cmd_predict(args, config) -> int:
    out_dir = Path(_merge(args, config, "out_dir", "out"))
    try:
        bundle = pipeline.load_bundle(args.model)
        dictionary = load_signal_dictionary(args.dict) if args.dict else None
        mapping, ingested = _ingest(args, config)
        result = pipeline.predict_products(bundle, ingested.records, dictionary)
    except (IngestError, MappingError, PipelineError, OSError, ValueError) as exc:
        return _fail(str(exc))

    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "predictions.jsonl", "w", encoding="utf-8") as f:
        for row in result.rows:
            f.write(json.dumps(row.to_dict(), sort_keys=True, separators=(",", ":")))
            f.write("\n")
    for gtin in result.skipped_gtins:
        print(f"notice: {gtin}: no ingredient text, skipped", file=sys.stderr)

    manifest = _manifest(
        "predict",
        {"model": str(args.model), "hybrid": args.dict is not None},
        {"products": args.products, "mapping": args.mapping, "dict": args.dict},
        {},
    )
    manifest.finished = _now()
    manifest.save(out_dir / "manifest.json")
    print(f"predicted {len(result.rows)} products ({len(result.skipped_gtins)} skipped)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ficverify",
        description="Nutrient-declaration consistency checks and allergen prediction "
                    "for packaged-food product data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--products", required=True, help="product file (CSV or JSON-lines)")
        p.add_argument("--mapping", required=True, help="mapping table (JSON)")
        p.add_argument("--config", help="JSON config file; explicit flags win")
        p.add_argument("--out-dir", dest="out_dir", help="report directory (default: out)")
        p.add_argument("--delimiter", help="CSV delimiter (default: ,)")

    p = sub.add_parser("verify", help="run the nutrient consistency rules")
    common(p)
    p.add_argument("--rules-config", dest="rules_config", help="rule tolerances (JSON)")
    p.add_argument("--no-figures", action="store_true", help="skip heatmap rendering")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("stats", help="dataset distribution statistics")
    common(p)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("train", help="train an allergen predictor")
    common(p)
    p.add_argument("--mode", choices=["general", "specific"])
    p.add_argument("--strategy", choices=["br", "chain"])
    p.add_argument("--text", choices=["bow", "tfidf"])
    p.add_argument("--min-df", dest="min_df", type=float)
    p.add_argument("--source", choices=["full_list", "caps_only"])
    p.add_argument("--arch", choices=sorted(_ARCHS))
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--l2-penalty", dest="l2_penalty", type=float)
    p.add_argument("--class-weighting", dest="class_weighting", action="store_true")
    p.add_argument("--min-rows", dest="min_rows", type=int)
    p.add_argument("--test-fraction", dest="test_fraction", type=float)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict allergens with a trained bundle")
    common(p)
    p.add_argument("--model", required=True, help="model bundle directory")
    p.add_argument("--dict", help="signal-word dictionary (JSON) for hybrid predictions")
    p.set_defaults(func=cmd_predict)

    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    try:
        config = _load_config_defaults(argv)
    except (OSError, json.JSONDecodeError, IngestError) as exc:
        return _fail(f"cannot load config: {exc}")
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args, config)


if __name__ == "__main__":
    sys.exit(main())
