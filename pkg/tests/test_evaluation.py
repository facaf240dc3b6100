import itertools

import numpy as np
import pytest

from plreg import evaluation as ev
from plreg.errors import ContractError


def brute_force_min(cost):
    n = cost.shape[0]
    best = None
    for perm in itertools.permutations(range(n)):
        total = sum(cost[i, perm[i]] for i in range(n))
        if best is None or total < best:
            best = total
    return best


class TestHungarian:
    def test_identity_optimum(self):
        pi = ev.hungarian(np.array([[1.0, 2.0], [2.0, 1.0]]))
        assert np.array_equal(pi, [0, 1])

    def test_swap_optimum(self):
        # brute force over the 2 permutations: identity costs 7, swap costs 3
        cost = np.array([[4.0, 1.0], [2.0, 3.0]])
        pi = ev.hungarian(cost)
        assert np.array_equal(pi, [1, 0])
        assert cost[[0, 1], pi].sum() == brute_force_min(cost)

    def test_matches_brute_force_on_200_random_matrices(self):
        rng = np.random.default_rng(0)
        for trial in range(200):
            n = int(rng.integers(2, 8))
            cost = rng.uniform(-10, 10, size=(n, n))
            pi = ev.hungarian(cost)
            total = cost[np.arange(n), pi].sum()
            assert abs(total - brute_force_min(cost)) < 1e-9, f"trial {trial}"

    def test_output_is_permutation(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            n = int(rng.integers(2, 9))
            pi = ev.hungarian(rng.normal(size=(n, n)))
            assert sorted(pi.tolist()) == list(range(n))

    def test_beats_identity_and_random_permutations(self):
        rng = np.random.default_rng(2)
        cost = rng.uniform(0, 5, size=(6, 6))
        pi = ev.hungarian(cost)
        best = cost[np.arange(6), pi].sum()
        assert best <= cost.trace() + 1e-12
        for _ in range(50):
            perm = rng.permutation(6)
            assert best <= cost[np.arange(6), perm].sum() + 1e-12

    def test_lexicographic_tie_break(self):
        # every assignment of the all-ones matrix is optimal
        pi = ev.hungarian(np.ones((3, 3)))
        assert np.array_equal(pi, [0, 1, 2])

    def test_row_priority_changes_tie_break(self):
        pi = ev.hungarian(np.ones((3, 3)), row_priority=[2, 1, 0])
        assert np.array_equal(pi, [2, 1, 0])

    def test_non_finite_rejected(self):
        with pytest.raises(ContractError):
            ev.hungarian(np.array([[1.0, np.inf], [0.0, 1.0]]))

    def test_non_square_rejected(self):
        with pytest.raises(ContractError):
            ev.hungarian(np.zeros((2, 3)))


class TestClusterAccuracy:
    def test_exact_predictions(self):
        true = [0, 0, 1, 1, 2, 2]
        met = ev.cluster_accuracy(true, true, known_classes={0, 1}, n_classes=3)
        assert met.acc_all == met.acc_known == met.acc_unknown == 1.0

    def test_relabeling_invariance(self):
        rng = np.random.default_rng(3)
        true = rng.integers(0, 4, size=40)
        relabel = np.array([2, 3, 1, 0])
        met = ev.cluster_accuracy(relabel[true], true, known_classes={0, 1},
                                  n_classes=4)
        assert met.acc_all == met.acc_known == met.acc_unknown == 1.0

    def test_constant_prediction_tie_break(self):
        # both optimal maps enumerated by hand; largest cluster takes class 0
        met = ev.cluster_accuracy([1, 1, 1, 1], [0, 0, 1, 1],
                                  known_classes={0}, n_classes=2)
        assert met.acc_all == 0.5
        assert met.acc_known == 1.0
        assert met.acc_unknown == 0.0

    def test_weighted_mean_identity(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            n = int(rng.integers(10, 60))
            k = int(rng.integers(2, 6))
            pred = rng.integers(0, k, size=n)
            true = rng.integers(0, k, size=n)
            known = set(range(int(rng.integers(1, k))))
            met = ev.cluster_accuracy(pred, true, known, n_classes=k)
            parts = 0.0
            if met.n_known:
                parts += met.acc_known * met.n_known
            if met.n_unknown:
                parts += met.acc_unknown * met.n_unknown
            assert abs(met.acc_all - parts / met.n_all) < 1e-12

    def test_empty_rejected(self):
        with pytest.raises(ContractError):
            ev.cluster_accuracy([], [], {0}, 2)

    def test_out_of_range_rejected(self):
        with pytest.raises(ContractError):
            ev.cluster_accuracy([0, 5], [0, 1], {0}, 2)


class TestCILMetrics:
    def test_perfect(self):
        preds = [[0, 1], [0, 1, 2]]
        met = ev.cil_metrics(preds, preds)
        assert met.per_session_acc == [1.0, 1.0]
        assert met.average == 1.0

    def test_random_predictor_expectation(self):
        rng = np.random.default_rng(5)
        k = 4
        true = rng.integers(0, k, size=2000)
        pred = rng.integers(0, k, size=2000)
        met = ev.cil_metrics([pred], [true])
        assert abs(met.per_session_acc[0] - 1.0 / k) < 0.05

    def test_session_count_preserved(self):
        sets = [[0]] * 6
        met = ev.cil_metrics(sets, sets)
        assert len(met.per_session_acc) == 6

    def test_mismatch_rejected(self):
        with pytest.raises(ContractError):
            ev.cil_metrics([[0]], [[0], [1]])

    def test_average_is_mean(self):
        met = ev.cil_metrics([[0, 0], [1, 1]], [[0, 1], [1, 1]])
        assert met.average == np.mean(met.per_session_acc)


class TestGeneralizationGap:
    def test_ground_truth_model(self):
        labels = [3, 4, 3, 4]
        assert ev.generalization_gap(labels, labels) == 0.0

    def test_constant_predictor_on_balanced_subset(self):
        k = 4
        labels = np.repeat(np.arange(k), 25)
        preds = np.zeros_like(labels)
        assert abs(ev.generalization_gap(preds, labels) - (k - 1) / k) < 1e-12

    def test_empty_rejected(self):
        with pytest.raises(ContractError):
            ev.generalization_gap([], [])
