import numpy as np
import pytest

from kgssl.typing_eval import (
    TypingResult, assign_types, baseline_typing, compute_metrics, transition_matrix,
)


def embed(rows):
    return np.asarray(rows, dtype=np.float64)


class TestAssignTypes:
    def test_exact_match_wins(self):
        H = embed([[1, 0, 0],   # target 0 == type 1's embedding
                   [1, 0, 0],   # type node 1
                   [0, 1, 0]])  # type node 2
        result = assign_types(H, target_nodes=[0], type_nodes=[1, 2])
        assert result.assignments[0] == 1

    def test_tie_breaks_to_lowest_type_handle(self):
        H = embed([[1, 1], [1, 0], [0, 1]])
        result = assign_types(H, [0], [1, 2])
        assert result.assignments[0] == 1
        assert result.margins[0] == pytest.approx(0.0, abs=1e-12)

    def test_hand_cosines(self):
        H = embed([[0.9, 0.1], [1, 0], [0, 1]])
        result = assign_types(H, [0], [1, 2])
        assert result.assignments[0] == 1
        expected_margin = 0.9 / np.hypot(0.9, 0.1) - 0.1 / np.hypot(0.9, 0.1)
        assert result.margins[0] == pytest.approx(expected_margin, abs=1e-9)

    def test_zero_norm_target_falls_back_with_warning(self):
        H = embed([[0, 0], [1, 0], [0, 1]])
        with pytest.warns(UserWarning, match="zero-norm"):
            result = assign_types(H, [0], [2, 1])
        assert result.assignments[0] == 1  # lowest type handle

    def test_scaling_invariance(self, rng):
        H = rng.normal(size=(10, 6))
        a = assign_types(H, range(6), [6, 7, 8, 9])
        b = assign_types(H * 37.5, range(6), [6, 7, 8, 9])
        assert a.assignments == b.assignments

    def test_empty_type_set_rejected(self):
        with pytest.raises(ValueError, match="type node set"):
            assign_types(embed([[1.0]]), [0], [])


class TestComputeMetrics:
    def test_perfect_assignment(self):
        gold = {i: 100 + (i % 8) for i in range(80)}
        result = TypingResult(assignments=dict(gold), margins={})
        m = compute_metrics(result, gold)
        assert m.accuracy == 1.0
        assert m.macro_precision == 1.0
        assert m.macro_f1 == 1.0

    def test_macro_recall_equals_accuracy_on_balanced_gold(self, rng):
        types = list(range(1040, 1048))
        gold = {i: types[i % 8] for i in range(1040)}
        for _ in range(20):
            assignments = {i: int(rng.choice(types)) for i in range(1040)}
            m = compute_metrics(TypingResult(assignments, {}), gold)
            assert m.macro_recall == pytest.approx(m.accuracy, abs=1e-12)

    def test_two_class_hand_confusion(self):
        # confusion [[3,1],[2,2]]: accuracy 5/8, macro-precision (3/5 + 2/3)/2
        gold = {}
        assignments = {}
        idx = 0
        for true, pred, count in [(0, 0, 3), (0, 1, 1), (1, 0, 2), (1, 1, 2)]:
            for _ in range(count):
                gold[idx] = 100 + true
                assignments[idx] = 100 + pred
                idx += 1
        m = compute_metrics(TypingResult(assignments, {}), gold)
        assert m.accuracy == pytest.approx(5 / 8)
        assert m.macro_precision == pytest.approx((3 / 5 + 2 / 3) / 2, abs=1e-9)

    def test_zero_prediction_class_precision_is_zero(self):
        gold = {0: 10, 1: 11}
        assignments = {0: 10, 1: 10}
        m = compute_metrics(TypingResult(assignments, {}), gold)
        assert m.per_class[11].precision == 0.0

    def test_target_mismatch_rejected(self):
        with pytest.raises(ValueError, match="missing from gold"):
            compute_metrics(TypingResult({0: 10, 5: 10}, {}), {0: 10})

    def test_values_in_unit_interval(self, rng):
        types = [50, 51, 52]
        gold = {i: types[i % 3] for i in range(30)}
        for _ in range(10):
            assignments = {i: int(rng.choice(types)) for i in range(30)}
            m = compute_metrics(TypingResult(assignments, {}), gold)
            for v in (m.accuracy, m.macro_precision, m.macro_recall, m.macro_f1):
                assert 0.0 <= v <= 1.0


class TestBaselineTyping:
    def test_features_equal_to_type_rows_give_perfect_accuracy(self):
        rng = np.random.Generator(np.random.PCG64(3))
        types = [8, 9]
        X = np.zeros((10, 4))
        X[8] = [1, 0, 0, 0]
        X[9] = [0, 1, 0, 0]
        gold = {}
        for i in range(8):
            gold[i] = types[i % 2]
            X[i] = X[gold[i]]
        _, metrics = baseline_typing(X, list(range(8)), types, gold)
        assert metrics.accuracy == 1.0

    def test_random_features_hit_chance_level(self):
        # gold assigned independently of geometry: correctness is Bernoulli(1/8)
        rng = np.random.Generator(np.random.PCG64(17))
        n_targets, n_types = 400, 8
        trials = 20
        total_correct = 0
        for _ in range(trials):
            X = rng.normal(size=(n_targets + n_types, 64))
            types = list(range(n_targets, n_targets + n_types))
            gold = {i: int(rng.choice(types)) for i in range(n_targets)}
            _, metrics = baseline_typing(X, list(range(n_targets)), types, gold)
            total_correct += round(metrics.accuracy * n_targets)
        n = trials * n_targets
        p = 1 / 8
        sigma = np.sqrt(n * p * (1 - p))
        assert abs(total_correct - n * p) < 3 * sigma


class TestTransitionMatrix:
    def test_identity_final_equals_initial(self):
        gold = {0: 10, 1: 10, 2: 11}
        res = TypingResult({0: 10, 1: 11, 2: 11}, {})
        m = transition_matrix(res, res, gold)
        assert np.allclose(m, [[100.0, 0.0], [0.0, 100.0]])

    def test_hand_tally(self):
        gold = {0: 10, 1: 10, 2: 10, 3: 10}
        initial = TypingResult({0: 10, 1: 10, 2: 10, 3: 11}, {})
        final = TypingResult({0: 10, 1: 10, 2: 11, 3: 10}, {})
        m = transition_matrix(initial, final, gold)
        assert np.allclose(m[0], [200 / 3, 100 / 3], atol=1e-2)
        assert np.allclose(m[1], [100.0, 0.0])

    def test_rows_sum_to_hundred(self, rng):
        types = [90, 91, 92]
        gold = {i: types[i % 3] for i in range(60)}
        for _ in range(20):
            initial = TypingResult({i: int(rng.choice(types)) for i in range(60)}, {})
            final = TypingResult({i: int(rng.choice(types)) for i in range(60)}, {})
            m = transition_matrix(initial, final, gold)
            for row in m:
                if row.sum() > 0:
                    assert row.sum() == pytest.approx(100.0, abs=0.01)

    def test_target_set_mismatch_rejected(self):
        with pytest.raises(ValueError, match="different targets"):
            transition_matrix(TypingResult({0: 1}, {}), TypingResult({1: 1}, {}), {0: 1})
