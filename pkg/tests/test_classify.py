import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import brute_force_confusion

from symclf.classify import (
    Confusion,
    confusion,
    f1_score,
    metrics,
    predict,
    reward_ce,
    reward_f1,
    sigmoid,
)
from symclf.errors import EmptyDataset, LengthMismatch
from symclf.expr import Library, parse_prefix


class TestSigmoid:
    def test_zero(self):
        assert sigmoid(0.0) == 0.5

    def test_known_point(self):
        # ln(0.7/0.3) maps back to 0.70
        assert sigmoid(0.8473) == pytest.approx(0.70, abs=1e-3)

    def test_symmetry(self):
        v = np.linspace(-40, 40, 101)
        np.testing.assert_allclose(sigmoid(-v), 1.0 - sigmoid(v), atol=1e-15)

    def test_saturation_without_overflow(self):
        assert sigmoid(1e4) == 1.0
        assert sigmoid(-1e4) == 0.0


class TestPredict:
    def setup_method(self):
        self.lib = Library.build(["x"])

    def test_boundary_counts_as_fraud(self):
        # f == 0 gives sigmoid 0.5, and 0.5 >= 0.5 labels fraud
        tree = parse_prefix(["-", "x", "x"], self.lib)
        X = np.array([[1.0], [2.0], [-3.0]])
        np.testing.assert_array_equal(predict(tree, X, 0.5), [1, 1, 1])

    def test_reference_tree_fraud_case(self, ref_lib, ref_tree):
        # transfer to an external account matching the recent max: f = 1
        row = np.array([[1.0, 0.0, 5.0, 5.0, 1.0]])
        assert predict(ref_tree, row, 0.7)[0] == 1

    def test_reference_tree_cashout_never_fraud(self, ref_lib, ref_tree):
        rng = np.random.default_rng(0)
        n = 2000
        amount = rng.uniform(0, 100, n)
        maxd = amount + rng.uniform(0, 50, n)
        ext = rng.integers(0, 2, n)
        X = np.column_stack([ext, np.ones(n), amount, maxd, np.zeros(n)])
        assert predict(ref_tree, X, 0.7).sum() == 0

    def test_nonfinite_rows_label_zero(self):
        tree = parse_prefix(["log", "x"], self.lib)
        labels = predict(tree, np.array([[0.0], [math.e]]), 0.5)
        np.testing.assert_array_equal(labels, [0, 1])

    def test_threshold_monotonicity(self, ref_lib, ref_tree):
        rng = np.random.default_rng(1)
        n = 500
        X = np.column_stack([
            rng.integers(0, 2, n), rng.integers(0, 2, n),
            rng.uniform(0, 80, n), rng.uniform(0, 80, n), rng.integers(0, 2, n),
        ])
        counts = [predict(ref_tree, X, t).sum() for t in (0.5, 0.6, 0.7, 0.8, 0.9)]
        assert all(a >= b for a, b in zip(counts, counts[1:]))


class TestConfusionAndMetrics:
    def test_all_negative(self):
        c = confusion([0, 0, 0, 0], [0, 0, 0, 0])
        assert (c.tp, c.fp, c.tn, c.fn) == (0, 0, 4, 0)

    def test_inverted(self):
        c = confusion([1, 0], [0, 1])
        assert c.tp == 0 and c.tn == 0 and c.fp == 1 and c.fn == 1

    def test_mixed(self):
        c = confusion([1, 1, 0, 0], [1, 0, 1, 0])
        assert (c.tp, c.fp, c.fn, c.tn) == (1, 1, 1, 1)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            confusion([1, 0], [1])

    def test_empty_dataset(self):
        with pytest.raises(EmptyDataset):
            metrics(Confusion(0, 0, 0, 0))

    def test_paper_style_f1(self):
        m = metrics(Confusion(67, 4, 929, 33))  # p ~ 0.94, r = 0.67
        assert m.f1 == pytest.approx(2 * m.precision * m.recall
                                     / (m.precision + m.recall))
        p, r = 0.95, 0.67
        assert 2 * p * r / (p + r) == pytest.approx(0.786, abs=1e-3)

    def test_balanced_half(self):
        m = metrics(Confusion(1, 1, 1, 1))
        assert m.precision == 0.5 and m.recall == 0.5 and m.f1 == 0.5

    def test_degenerate_f1_is_zero(self):
        m = metrics(Confusion(0, 0, 5, 0))
        assert m.precision == 0.0 and m.recall == 0.0 and m.f1 == 0.0

    @given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)),
                    min_size=1, max_size=60))
    @settings(max_examples=200, deadline=None)
    def test_matches_brute_force(self, pairs):
        pred = [p for p, _ in pairs]
        truth = [t for _, t in pairs]
        c = confusion(pred, truth)
        assert (c.tp, c.fp, c.tn, c.fn) == brute_force_confusion(pred, truth)

    def test_f1_permutation_invariant(self):
        rng = np.random.default_rng(2)
        pred = rng.integers(0, 2, 300)
        truth = rng.integers(0, 2, 300)
        base = f1_score(pred, truth)
        for _ in range(10):
            perm = rng.permutation(300)
            assert f1_score(pred[perm], truth[perm]) == base


class TestRewards:
    def test_ce_perfect_probs(self):
        r = reward_ce(np.array([1.0, 0.0, 1.0]), np.array([1, 0, 1]))
        assert r == pytest.approx(1.0, abs=1e-9)

    def test_ce_coin_flip(self):
        n = 64
        r = reward_ce(np.full(n, 0.5), np.random.default_rng(0).integers(0, 2, n))
        assert r == pytest.approx(1.0 / (1.0 + math.log(2)), abs=1e-12)

    def test_ce_monotone_in_ce(self):
        truth = np.array([1.0, 1.0, 0.0, 0.0])
        rewards = [reward_ce(np.array([p, p, 1 - p, 1 - p]), truth)
                   for p in (0.9, 0.7, 0.5, 0.3)]
        assert all(a > b for a, b in zip(rewards, rewards[1:]))

    def test_ce_range(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            probs = rng.uniform(0, 1, 20)
            truth = rng.integers(0, 2, 20)
            assert 0.0 < reward_ce(probs, truth) <= 1.0

    def test_f1_all_legit_predictor_scores_zero(self):
        lib = Library.build(["x"])
        tree = parse_prefix(["-", "x", "x"], lib)  # f = 0, sigma = 0.5 < 0.8
        X = np.ones((100, 1))
        y = np.zeros(100, dtype=int)
        y[:3] = 1
        assert reward_f1(tree, X, y, 0.8) == 0.0

    def test_f1_oracle_tree_scores_one(self, ref_lib, ref_tree):
        rng = np.random.default_rng(4)
        n = 400
        ext = rng.integers(0, 2, n)
        transfer = rng.integers(0, 2, n)
        cashout = (1 - transfer) * rng.integers(0, 2, n)
        amount = rng.uniform(1, 50, n)
        gap = rng.uniform(1.0, 20, n) * (1 - (rng.random(n) < 0.3))
        maxd = amount + gap
        X = np.column_stack([ext, cashout, amount, maxd, transfer])
        y = ((transfer == 1) & (ext == 1)
             & (amount - maxd > math.log(7 / 3) - 1)).astype(int)
        assert y.sum() > 0  # the planted rule fires for this seed
        assert reward_f1(ref_tree, X, y, 0.7) == 1.0

    def test_f1_invalid_tree_scores_zero(self):
        lib = Library.build(["x"])
        tree = parse_prefix(["log", "x"], lib)
        X = np.array([[0.0], [1.0]])
        assert reward_f1(tree, X, np.array([0, 1]), 0.5) == 0.0

    def test_f1_matches_metrics_definition(self, ref_lib, ref_tree):
        rng = np.random.default_rng(5)
        n = 200
        X = np.column_stack([
            rng.integers(0, 2, n), rng.integers(0, 2, n),
            rng.uniform(0, 30, n), rng.uniform(0, 30, n), rng.integers(0, 2, n),
        ])
        y = rng.integers(0, 2, n)
        direct = reward_f1(ref_tree, X, y, 0.6)
        via_metrics = metrics(confusion(predict(ref_tree, X, 0.6), y)).f1
        assert abs(direct - via_metrics) < 1e-12
