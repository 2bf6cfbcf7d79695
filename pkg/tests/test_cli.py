import csv
import json
from pathlib import Path

import pytest

from ficverify.cli import main

from conftest import write_ml_fixture

DATA = Path(__file__).parent / "data"


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.reader(f))


def write_clean_fixture(tmp_path):
    products = tmp_path / "clean.csv"
    products.write_text(
        "EAN,ENER_KJ,ENER_KC,CH,SUG,PRO,FAT,SFA,UFA,FIB,SAL\n"
        "1000000000001,1391,331,60,20,10,5,2,1,2,\n",
        encoding="utf-8",
    )
    return products


class TestVerify:
    def test_clean_fixture_exits_zero(self, tmp_path):
        products = write_clean_fixture(tmp_path)
        code = main([
            "verify", "--products", str(products),
            "--mapping", str(DATA / "verify_mapping.json"),
            "--out-dir", str(tmp_path / "out"), "--no-figures",
        ])
        assert code == 0
        assert (tmp_path / "out" / "findings.jsonl").read_text() == ""

    def test_findings_exit_one_and_match_golden(self, tmp_path):
        out = tmp_path / "out"
        code = main([
            "verify", "--products", str(DATA / "verify_fixture.csv"),
            "--mapping", str(DATA / "verify_mapping.json"),
            "--out-dir", str(out), "--no-figures",
        ])
        assert code == 1
        assert (out / "findings.jsonl").read_bytes() == (DATA / "golden_findings.jsonl").read_bytes()
        assert (out / "error_summary.csv").read_bytes() == (DATA / "golden_error_summary.csv").read_bytes()

    def test_byte_identical_across_runs_including_figures(self, tmp_path):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            main([
                "verify", "--products", str(DATA / "verify_fixture.csv"),
                "--mapping", str(DATA / "verify_mapping.json"),
                "--out-dir", str(out),
            ])
            outs.append(out)
        for filename in (
            "findings.jsonl", "error_summary.csv",
            "error_cooccurrence_absolute.csv", "error_cooccurrence_relative.csv",
            "error_cooccurrence_absolute.png", "error_cooccurrence_relative.png",
        ):
            assert (outs[0] / filename).read_bytes() == (outs[1] / filename).read_bytes(), filename

    def test_missing_file_exits_two(self, tmp_path):
        code = main([
            "verify", "--products", str(tmp_path / "nope.csv"),
            "--mapping", str(DATA / "verify_mapping.json"),
            "--out-dir", str(tmp_path / "out"),
        ])
        assert code == 2

    def test_bad_rules_config_exits_two(self, tmp_path):
        bad = tmp_path / "rules.json"
        bad.write_text(json.dumps({"conversion_low": 5, "conversion_high": 4}))
        code = main([
            "verify", "--products", str(DATA / "verify_fixture.csv"),
            "--mapping", str(DATA / "verify_mapping.json"),
            "--rules-config", str(bad), "--out-dir", str(tmp_path / "out"),
        ])
        assert code == 2

    def test_manifest_written_with_digests(self, tmp_path):
        out = tmp_path / "out"
        main([
            "verify", "--products", str(DATA / "verify_fixture.csv"),
            "--mapping", str(DATA / "verify_mapping.json"),
            "--out-dir", str(out), "--no-figures",
        ])
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "verify"
        assert len(manifest["inputs"]) == 2
        assert all(len(d) == 64 for d in manifest["inputs"].values())
        assert manifest["started"] and manifest["finished"]


class TestStats:
    def test_greater_than_zero_semantics(self, tmp_path):
        products = tmp_path / "p.csv"
        products.write_text(
            "EAN,FAT,CH\n1,0,10\n2,5,20\n3,5,\n",
            encoding="utf-8",
        )
        mapping = tmp_path / "m.json"
        mapping.write_text(json.dumps({
            "EAN": "gtin", "FAT": "nutrients.FAT", "CH": "nutrients.CH",
        }))
        out = tmp_path / "out"
        code = main([
            "stats", "--products", str(products), "--mapping", str(mapping),
            "--out-dir", str(out), "--no-figures",
        ])
        assert code == 0
        rows = {r[0]: r[1] for r in read_csv(out / "nutrient_distribution.csv")[1:]}
        assert rows["FAT"] == "2"   # the explicit zero does not count
        assert rows["CH"] == "2"    # the missing cell does not count
        assert rows["STA"] == "0"

    def test_allergen_distribution_and_label_stats(self, tmp_path, ml_fixture):
        products, mapping = ml_fixture
        out = tmp_path / "stats_out"
        code = main([
            "stats", "--products", str(products), "--mapping", str(mapping),
            "--out-dir", str(out), "--no-figures",
        ])
        assert code == 0
        rows = read_csv(out / "allergen_distribution.csv")
        assert rows[0] == ["Allergen", "Products"]
        assert len(rows) == 15
        stats = json.loads((out / "label_stats.json").read_text())
        assert stats["n_products"] == 200
        assert stats["density_defined"]
        assert stats["label_cardinality"] == pytest.approx(
            stats["label_density"] * len(stats["labels_present"]), abs=1e-12
        )

    def test_all_empty_labels_flags_density(self, tmp_path):
        products = tmp_path / "p.csv"
        products.write_text("EAN,ZUTATEN\n1,water\n2,salt\n", encoding="utf-8")
        mapping = tmp_path / "m.json"
        mapping.write_text(json.dumps({"EAN": "gtin", "ZUTATEN": "ingredients_raw"}))
        out = tmp_path / "out"
        code = main([
            "stats", "--products", str(products), "--mapping", str(mapping),
            "--out-dir", str(out), "--no-figures",
        ])
        assert code == 0
        stats = json.loads((out / "label_stats.json").read_text())
        assert not stats["density_defined"]
        assert stats["label_density"] == 0.0

    def test_cooccurrence_outputs_with_figures(self, tmp_path, ml_fixture):
        products, mapping = ml_fixture
        out = tmp_path / "out"
        main(["stats", "--products", str(products), "--mapping", str(mapping),
              "--out-dir", str(out)])
        for name in (
            "allergen_cooccurrence_absolute.csv", "allergen_cooccurrence_relative.csv",
            "allergen_cooccurrence_absolute.png", "allergen_cooccurrence_relative.png",
        ):
            assert (out / name).exists(), name
        header = read_csv(out / "allergen_cooccurrence_absolute.csv")[0]
        assert len(header) == 14 and header[0] == "Gluten"


def train_args(products, mapping, out, **overrides):
    args = {
        "mode": "specific", "strategy": "br", "text": "bow", "min-df": "0.01",
        "source": "full_list", "arch": "logistic", "seed": "7", "epochs": "40",
        "min-rows": "50",
    }
    args.update({k.replace("_", "-"): str(v) for k, v in overrides.items()})
    argv = ["train", "--products", str(products), "--mapping", str(mapping),
            "--out-dir", str(out)]
    for key, value in args.items():
        argv += [f"--{key}", value]
    return argv


class TestTrain:
    def test_specific_br_outputs_and_seeds(self, tmp_path, ml_fixture):
        products, mapping = ml_fixture
        out = tmp_path / "train_out"
        code = main(train_args(products, mapping, out))
        assert code == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert len(manifest["seeds"]["model_seeds"]) == 14
        assert manifest["seeds"]["model_seeds"]["Gluten"] == 7
        assert manifest["seeds"]["model_seeds"]["Molluscs"] == 20
        appendix_files = sorted(out.glob("metrics_appendix_*.csv"))
        assert len(appendix_files) == 14
        for path in appendix_files:
            header = read_csv(path)[0]
            assert header == ["Algo", "Vocab", "TextT", "TP", "TN", "FP", "FN", "Pr", "Re", "F1", "Alpha"]
        mm = read_csv(out / "metrics_macromicro.csv")
        assert mm[0] == ["Allergen", "Algo", "Voc", "TT", "Pr_macro", "Re_macro",
                         "F1_macro", "Pr_micro", "Re_micro", "F1_micro", "Alpha"]
        assert len(mm) == 15
        assert (out / "model" / "bundle.json").exists()

    def test_general_mode_single_row_reports(self, tmp_path, ml_fixture):
        products, mapping = ml_fixture
        out = tmp_path / "general_out"
        code = main(train_args(products, mapping, out, mode="general"))
        assert code == 0
        rows = read_csv(out / "metrics_appendix.csv")
        assert rows[0] == ["Algo", "Vocab", "TextT", "TP", "TN", "FP", "FN", "Pr", "Re", "F1", "Alpha"]
        assert len(rows) == 2
        assert rows[1][0] == "LR"
        mm = read_csv(out / "metrics_macromicro.csv")
        assert mm[0][0] == "Algo"  # no Allergen column in general mode

    def test_too_few_rows_exits_two(self, tmp_path):
        products, mapping = write_ml_fixture(tmp_path, n=10)
        code = main(train_args(products, mapping, tmp_path / "out"))
        assert code == 2

    def test_chain_strategy_records_order(self, tmp_path, ml_fixture):
        products, mapping = ml_fixture
        out = tmp_path / "chain_out"
        code = main(train_args(products, mapping, out, strategy="chain", epochs=25))
        assert code == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["order"][0] == "Gluten"
        assert manifest["config"]["order"][-1] == "Soybeans"

    def test_mlp_arch_trains(self, tmp_path):
        products, mapping = write_ml_fixture(tmp_path, n=80, seed=3)
        out = tmp_path / "mlp_out"
        code = main(train_args(products, mapping, out, mode="general", arch="mlp", epochs=15))
        assert code == 0
        bundle = json.loads((out / "model" / "bundle.json").read_text())
        assert bundle["arch"] == "mlp_n_100_30"

    def test_tfidf_caps_only_variant(self, tmp_path):
        # Capitalized allergen tokens: the caps_only source sees exactly the
        # allergenic ingredients, so its vocabulary is the smaller one.
        products, mapping = write_ml_fixture(tmp_path, n=100, seed=4, caps=True)
        out = tmp_path / "tfidf_out"
        code = main(train_args(products, mapping, out, text="tfidf", source="caps_only"))
        assert code == 0
        rows = read_csv(out / "metrics_macromicro.csv")
        assert rows[1][3] == "TF-IDF"
        caps_vocab = int(rows[1][2])
        assert caps_vocab <= 14

        full_out = tmp_path / "full_out"
        assert main(train_args(products, mapping, full_out, text="tfidf")) == 0
        full_vocab = int(read_csv(full_out / "metrics_macromicro.csv")[1][2])
        assert full_vocab > caps_vocab


class TestConfigFile:
    def test_config_supplies_defaults_flags_win(self, tmp_path, ml_fixture):
        products, mapping = ml_fixture
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"seed": 99, "epochs": 40, "arch": "logistic",
                                      "mode": "specific", "strategy": "br"}))
        out = tmp_path / "out"
        code = main([
            "train", "--products", str(products), "--mapping", str(mapping),
            "--out-dir", str(out), "--config", str(config), "--seed", "7",
        ])
        assert code == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["seeds"]["seed"] == 7          # flag wins
        assert manifest["config"]["train"]["epochs"] == 40  # config fills the rest


class TestPredict:
    def trained_bundle(self, tmp_path, ml_fixture):
        products, mapping = ml_fixture
        out = tmp_path / "train_out"
        assert main(train_args(products, mapping, out)) == 0
        return products, mapping, out / "model"

    def test_predict_writes_jsonl(self, tmp_path, ml_fixture):
        products, mapping, model = self.trained_bundle(tmp_path, ml_fixture)
        out = tmp_path / "pred_out"
        code = main([
            "predict", "--products", str(products), "--mapping", str(mapping),
            "--model", str(model), "--out-dir", str(out),
        ])
        assert code == 0
        lines = (out / "predictions.jsonl").read_text().strip().split("\n")
        assert len(lines) == 200
        row = json.loads(lines[0])
        assert set(row) == {"gtin", "predicted", "probabilities", "sources"}

    def test_hybrid_dictionary_union(self, tmp_path, ml_fixture):
        products, mapping, model = self.trained_bundle(tmp_path, ml_fixture)
        extra = tmp_path / "p2.csv"
        extra.write_text(
            "EAN,NAME,ZUTATEN,ALLERGENE\n"
            '9,"x","milkzutat, whey, water","Milk"\n',
            encoding="utf-8",
        )
        dictionary = tmp_path / "dict.json"
        dictionary.write_text(json.dumps({"whey": ["Milk"], "water": []}))
        out = tmp_path / "pred_out"
        code = main([
            "predict", "--products", str(extra), "--mapping", str(mapping),
            "--model", str(model), "--dict", str(dictionary), "--out-dir", str(out),
        ])
        assert code == 0
        row = json.loads((out / "predictions.jsonl").read_text().strip())
        assert "Milk" in row["predicted"]
        assert row["sources"]["Milk"] == "model+dict"

    def test_missing_bundle_exits_two(self, tmp_path, ml_fixture):
        products, mapping = ml_fixture
        code = main([
            "predict", "--products", str(products), "--mapping", str(mapping),
            "--model", str(tmp_path / "nope"), "--out-dir", str(tmp_path / "out"),
        ])
        assert code == 2

    def test_skipped_products_notice(self, tmp_path, ml_fixture, capsys):
        products, mapping, model = self.trained_bundle(tmp_path, ml_fixture)
        extra = tmp_path / "p3.csv"
        extra.write_text(
            "EAN,NAME,ZUTATEN,ALLERGENE\n1,x,water,\n2,y,,\n", encoding="utf-8",
        )
        out = tmp_path / "pred_out"
        code = main([
            "predict", "--products", str(extra), "--mapping", str(mapping),
            "--model", str(model), "--out-dir", str(out),
        ])
        assert code == 0
        captured = capsys.readouterr()
        assert "skipped" in captured.err
        assert len((out / "predictions.jsonl").read_text().strip().split("\n")) == 1
