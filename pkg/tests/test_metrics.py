import random

import numpy as np
import pytest

from ficverify.metrics import (
    AlphaParams,
    ConfusionCounts,
    aggregate,
    allergen_cooccurrence,
    alpha_score,
    alpha_score_dataset,
    confusion,
    confusion_dataset,
    evaluate_binary,
    evaluate_multilabel,
    label_stats,
    precision_recall_f1,
    two_class_counts,
)
from ficverify.model import ALLERGENS, Allergen, allergen_index

MILK, EGGS, FISH = Allergen.MILK, Allergen.EGGS, Allergen.FISH


def _random_labels(rng, p=0.3):
    return frozenset(a for a in ALLERGENS if rng.random() < p)


class TestConfusion:
    def test_exact_match(self):
        c = confusion(frozenset([MILK]), frozenset([MILK]))
        assert c[MILK] == ConfusionCounts(tp=1)
        others = [a for a in ALLERGENS if a is not MILK]
        assert all(c[a] == ConfusionCounts(tn=1) for a in others)

    def test_false_negative(self):
        c = confusion(frozenset([MILK]), frozenset())
        assert c[MILK] == ConfusionCounts(fn=1)

    def test_mixed_sets(self):
        c = confusion(frozenset([MILK, EGGS]), frozenset([EGGS, FISH]))
        assert c[EGGS] == ConfusionCounts(tp=1)
        assert c[MILK] == ConfusionCounts(fn=1)
        assert c[FISH] == ConfusionCounts(fp=1)
        rest = [a for a in ALLERGENS if a not in (MILK, EGGS, FISH)]
        assert all(c[a] == ConfusionCounts(tn=1) for a in rest)

    def test_dataset_accumulation_matches_per_example(self):
        rng = random.Random(3)
        y_true = [_random_labels(rng) for _ in range(60)]
        y_pred = [_random_labels(rng) for _ in range(60)]
        pooled = confusion_dataset(y_true, y_pred)
        for a in ALLERGENS:
            total = ConfusionCounts()
            for yt, yp in zip(y_true, y_pred):
                total = total + confusion(yt, yp)[a]
            assert pooled[a] == total


class TestPrecisionRecallF1:
    def test_perfect(self):
        t = precision_recall_f1(ConfusionCounts(tp=1))
        assert (t.precision, t.recall, t.f1) == (1, 1, 1)
        assert not t.degenerate

    def test_all_zero_is_degenerate(self):
        t = precision_recall_f1(ConfusionCounts())
        assert (t.precision, t.recall, t.f1) == (0, 0, 0)
        assert t.degenerate

    def test_hand_computed(self):
        t = precision_recall_f1(ConfusionCounts(tp=3, fp=1, fn=2))
        assert t.precision == 0.75
        assert t.recall == 0.6
        assert t.f1 == pytest.approx(2 * 0.45 / 1.35, abs=1e-15)

    def test_f1_carries_factor_two(self):
        # pr = re = 0.5 must give f1 = 0.5, not 0.25.
        t = precision_recall_f1(ConfusionCounts(tp=1, fp=1, fn=1))
        assert t.f1 == 0.5


class TestAggregate:
    def test_single_label_macro_equals_micro(self):
        counts = [ConfusionCounts(tp=3, fp=1, fn=2, tn=4)]
        assert aggregate(counts, "macro") == aggregate(counts, "micro")

    def test_hand_computed_macro_vs_micro(self):
        counts = [ConfusionCounts(tp=1, fp=1), ConfusionCounts(tp=1, fp=0)]
        assert aggregate(counts, "macro").precision == 0.75
        assert aggregate(counts, "micro").precision == pytest.approx(2 / 3)

    def test_micro_columns_equal_when_fp_total_equals_fn_total(self):
        counts = [ConfusionCounts(tp=5, fp=2, fn=1), ConfusionCounts(tp=3, fp=0, fn=1)]
        micro = aggregate(counts, "micro")
        assert micro.precision == micro.recall
        assert micro.f1 == pytest.approx(micro.precision, abs=1e-15)

    def test_two_class_micro_is_accuracy(self):
        c = ConfusionCounts(tp=3361, tn=4405, fp=158, fn=89)
        micro = aggregate(list(two_class_counts(c)), "micro")
        accuracy = (c.tp + c.tn) / c.total
        assert micro.precision == pytest.approx(accuracy, abs=1e-15)
        assert micro.recall == pytest.approx(accuracy, abs=1e-15)
        assert micro.f1 == pytest.approx(accuracy, abs=1e-15)

    def test_rejects_bad_mode(self):
        with pytest.raises(ValueError):
            aggregate([ConfusionCounts(tp=1)], "weighted")
        with pytest.raises(ValueError):
            aggregate([], "macro")


class TestAlphaScore:
    def test_perfect_prediction(self):
        assert alpha_score(frozenset([MILK]), frozenset([MILK])) == 1.0

    def test_one_false_negative_default_params(self):
        got = alpha_score(frozenset([MILK]), frozenset())
        assert got == pytest.approx((1 - 0.33) ** 7, abs=1e-15)

    def test_one_false_positive_union_two(self):
        got = alpha_score(frozenset([MILK]), frozenset([MILK, EGGS]))
        assert got == 0.5 ** 7 == 0.0078125

    def test_empty_empty_is_perfect(self):
        assert alpha_score(frozenset(), frozenset()) == 1.0

    def test_alpha_zero_limit(self):
        params = AlphaParams(alpha=0.0)
        rng = random.Random(11)
        for _ in range(2000):
            y_true = _random_labels(rng)
            y_pred = _random_labels(rng)
            got = alpha_score(y_true, y_pred, params)
            fn = len(y_true - y_pred)
            fp = len(y_pred - y_true)
            union = len(y_true | y_pred)
            if union == 0 or 0.33 * fn + 1.0 * fp < union:
                assert got == 1.0
            else:
                assert got == 0.0

    def test_range_and_monotonicity(self):
        rng = random.Random(5)
        for _ in range(500):
            y_true = _random_labels(rng)
            y_pred = _random_labels(rng)
            assert 0.0 <= alpha_score(y_true, y_pred) <= 1.0
        # More false negatives with a fixed union never raise the score.
        a, b, c = ALLERGENS[0], ALLERGENS[1], ALLERGENS[2]
        union_fixed = frozenset([a, b, c])
        one_fn = alpha_score(union_fixed, frozenset([a, b]))
        two_fn = alpha_score(union_fixed, frozenset([a]))
        assert two_fn <= one_fn

    def test_param_validation(self):
        with pytest.raises(ValueError):
            AlphaParams(alpha=-1)
        with pytest.raises(ValueError):
            AlphaParams(beta=1.5)
        with pytest.raises(ValueError):
            AlphaParams(gamma=-0.1)

    def test_dataset_mean_and_empty_empty_count(self):
        y_true = [frozenset([MILK]), frozenset(), frozenset([EGGS])]
        y_pred = [frozenset([MILK]), frozenset(), frozenset()]
        summary = alpha_score_dataset(y_true, y_pred)
        expected = (1.0 + 1.0 + (1 - 0.33) ** 7) / 3
        assert summary.mean == pytest.approx(expected, abs=1e-15)
        assert summary.empty_empty_count == 1


class TestLabelStats:
    def test_hand_computed(self):
        a, b = ALLERGENS[0], ALLERGENS[1]
        stats = label_stats([frozenset([a]), frozenset([a, b])])
        assert stats.label_cardinality == 1.5
        assert len(stats.labels_present) == 2
        assert stats.label_density == 0.75

    def test_identical_sets(self):
        labels = frozenset(ALLERGENS[:3])
        stats = label_stats([labels] * 5)
        assert stats.label_cardinality == 3
        assert stats.label_density == 1.0

    def test_single_product_single_label(self):
        stats = label_stats([frozenset([MILK])])
        assert stats.label_cardinality == 1
        assert stats.label_density == 1
        assert stats.per_allergen_counts[MILK] == 1

    def test_all_empty_flags_undefined_density(self):
        stats = label_stats([frozenset(), frozenset()])
        assert stats.label_cardinality == 0
        assert not stats.density_defined

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError):
            label_stats([])

    def test_cardinality_density_identity(self):
        rng = random.Random(23)
        for _ in range(300):
            n = rng.randint(1, 40)
            data = [_random_labels(rng, p=rng.random() * 0.6) for _ in range(n)]
            stats = label_stats(data)
            if stats.density_defined:
                assert stats.label_cardinality == pytest.approx(
                    stats.label_density * len(stats.labels_present), abs=1e-12
                )


class TestAllergenCooccurrence:
    def test_single_pair(self):
        m = allergen_cooccurrence([frozenset([MILK, FISH])])
        i, j = allergen_index(MILK), allergen_index(FISH)
        assert m.absolute[i, j] == 1
        assert m.absolute[i, i] == 1
        assert m.relative[i, j] == 1.0

    def test_symmetry(self):
        rng = random.Random(17)
        data = [_random_labels(rng) for _ in range(80)]
        m = allergen_cooccurrence(data)
        assert np.array_equal(m.absolute, m.absolute.T)

    def test_matches_brute_force(self):
        rng = random.Random(29)
        data = [_random_labels(rng) for _ in range(50)]
        m = allergen_cooccurrence(data)
        for i, a in enumerate(ALLERGENS):
            for j, b in enumerate(ALLERGENS):
                expected = sum(1 for labels in data if a in labels and b in labels)
                assert m.absolute[i, j] == expected

    def test_undefined_rows_flagged(self):
        m = allergen_cooccurrence([frozenset([MILK])])
        assert allergen_index(MILK) not in m.undefined_rows
        assert allergen_index(EGGS) in m.undefined_rows
        assert np.all(m.relative[allergen_index(EGGS)] == 0)

    def test_empty_dataset_all_zero(self):
        m = allergen_cooccurrence([])
        assert m.absolute.sum() == 0
        assert m.relative.sum() == 0
        assert len(m.undefined_rows) == 14


class TestEvaluate:
    def test_binary_evaluation_counts(self):
        ev = evaluate_binary([True, True, False, False], [True, False, True, False])
        assert ev.counts == ConfusionCounts(tp=1, tn=1, fp=1, fn=1)
        assert ev.micro.precision == 0.5  # accuracy
        expected_alpha = (1 + 1 + (1 - 0.33) ** 7 + 0.0) / 4
        assert ev.alpha == pytest.approx(expected_alpha, abs=1e-15)

    def test_multilabel_evaluation_pools_counts(self):
        y_true = [frozenset([MILK, EGGS]), frozenset([FISH])]
        y_pred = [frozenset([MILK]), frozenset([FISH, EGGS])]
        ev = evaluate_multilabel(y_true, y_pred)
        assert ev.per_allergen[MILK].counts.tp == 1
        assert ev.per_allergen[EGGS].counts.fn == 1
        assert ev.per_allergen[EGGS].counts.fp == 1
        assert ev.n_examples == 2
        # micro pools all 14 labels: tp=2 (Milk, Fish), fp=1, fn=1.
        assert ev.micro.precision == pytest.approx(2 / 3)
        assert ev.micro.recall == pytest.approx(2 / 3)
