import itertools

import numpy as np
import pytest

from incd.classifier import CosineHead, concat, init_head
from incd.evaluation import (StepMetrics, append_metrics_csv,
                             clustering_accuracy, hungarian,
                             maximum_forgetting, overall_accuracy,
                             per_task_accuracy, read_metrics_csv)


def brute_force_assignment_cost(cost):
    k = cost.shape[0]
    rows = np.arange(k)
    return min(cost[rows, perm].sum()
               for perm in itertools.permutations(range(k)))


class TestHungarian:
    def test_identity_favoring_cost(self):
        cost = np.ones((4, 4)) - np.eye(4)
        assert np.array_equal(hungarian(cost), np.arange(4))

    def test_all_equal_costs_give_total_kc(self):
        cost = np.full((5, 5), 3.0)
        perm = hungarian(cost)
        assert sorted(perm) == list(range(5))
        assert cost[np.arange(5), perm].sum() == pytest.approx(15.0)

    def test_random_integer_costs_match_brute_force(self, rng):
        for _ in range(20):
            cost = rng.integers(0, 50, size=(6, 6)).astype(float)
            perm = hungarian(cost)
            got = cost[np.arange(6), perm].sum()
            assert got == pytest.approx(brute_force_assignment_cost(cost))

    def test_every_size_up_to_seven(self, rng):
        for k in range(1, 8):
            for _ in range(10):
                cost = rng.normal(size=(k, k))
                perm = hungarian(cost)
                got = cost[np.arange(k), perm].sum()
                assert got == pytest.approx(brute_force_assignment_cost(cost))

    def test_non_square_rejected(self):
        with pytest.raises(ValueError):
            hungarian(np.ones((3, 4)))

    def test_non_finite_rejected(self):
        cost = np.zeros((2, 2))
        cost[0, 0] = np.inf
        with pytest.raises(ValueError):
            hungarian(cost)


class TestClusteringAccuracy:
    def test_perfect_prediction(self, rng):
        y = rng.integers(0, 5, size=200)
        assert clustering_accuracy(y, y, 5, 5) == 1.0

    def test_invariant_to_label_permutation(self, rng):
        y = rng.integers(0, 6, size=300)
        perm = rng.permutation(6)
        assert clustering_accuracy(perm[y], y, 6, 6) == 1.0
        assert clustering_accuracy(y, perm[y], 6, 6) == 1.0

    def test_uniform_random_predictions_score_near_chance(self, rng):
        k, n = 10, 100_000
        y = rng.integers(0, k, size=n)
        pred = rng.integers(0, k, size=n)
        acc = clustering_accuracy(pred, y, k, k)
        assert 1.0 / k - 0.01 <= acc <= 1.0 / k + 0.02

    def test_rectangular_padding(self):
        # 3 clusters onto 2 classes: the best 2 clusters are matched.
        pred = np.array([0, 0, 1, 1, 2, 2])
        true = np.array([0, 0, 1, 1, 0, 1])
        acc = clustering_accuracy(pred, true, 3, 2)
        assert acc == pytest.approx(4 / 6)

    def test_range_violations_rejected(self):
        with pytest.raises(ValueError):
            clustering_accuracy([0, 5], [0, 1], 2, 2)
        with pytest.raises(ValueError):
            clustering_accuracy([0, 1], [0, 2], 2, 2)
        with pytest.raises(ValueError):
            clustering_accuracy([], [], 2, 2)

    def test_bounds(self, rng):
        pred = rng.integers(0, 4, 500)
        true = rng.integers(0, 3, 500)
        acc = clustering_accuracy(pred, true, 4, 3)
        assert 0.0 <= acc <= 1.0


def _center_head(centers, task=0):
    return CosineHead(weight=np.asarray(centers, dtype=np.float64), task=task)


def _orthogonal_centers(n, dim, scale=5.0):
    assert n <= dim
    return np.eye(dim)[:n] * scale


class TestOverallAccuracy:
    def test_single_task_perfect_head(self, rng):
        centers = _orthogonal_centers(3, 8)
        labels = rng.integers(0, 3, size=60)
        feats = centers[labels] + rng.normal(scale=0.05, size=(60, 8))
        unified = concat([_center_head(centers)])
        assert overall_accuracy(unified, [(feats, labels)]) == 1.0

    def test_collapsed_head_bounded_by_task1_share(self, rng):
        # Task-2 block never wins: its rows are opposite to every feature.
        centers = _orthogonal_centers(2, 8)
        z1 = centers[rng.integers(0, 2, size=50)] + rng.normal(scale=0.05, size=(50, 8))
        y1 = np.argmax(z1 @ centers.T, axis=1)
        z2 = np.abs(rng.normal(size=(30, 8)))  # positive cone
        y2 = rng.integers(2, 4, size=30)
        h1 = _center_head(centers)
        h2 = _center_head(-np.abs(rng.normal(size=(2, 8))), task=1)
        unified = concat([h1, h2])
        acc = overall_accuracy(unified, [(z1, y1), (z2, y2)])
        share1 = 50 / 80
        assert acc <= share1 + 1e-12

    def test_per_task_accuracy_matches_global_map(self, rng):
        centers = _orthogonal_centers(4, 8)
        labels = rng.integers(0, 4, size=100)
        feats = centers[labels] + rng.normal(scale=0.05, size=(100, 8))
        unified = concat([_center_head(centers[:2]),
                          _center_head(centers[2:], task=1)])
        sets = [(feats[labels < 2], labels[labels < 2]),
                (feats[labels >= 2], labels[labels >= 2])]
        accs = per_task_accuracy(unified, sets)
        assert len(accs) == 2
        assert accs[0] == 1.0 and accs[1] == 1.0


class TestMaximumForgetting:
    def test_single_task_is_exactly_zero(self, rng):
        head = init_head(3, 8, seed=1)
        labels = rng.integers(0, 3, size=40)
        feats = rng.normal(size=(40, 8))
        unified = concat([head])
        assert maximum_forgetting(head, unified, [(feats, labels)]) == 0.0

    def test_never_selected_extra_columns_do_not_forget(self, rng):
        centers = _orthogonal_centers(3, 9)
        labels = rng.integers(0, 3, size=60)
        feats = centers[labels] + rng.normal(scale=0.05, size=(60, 9))
        head = _center_head(centers)
        dead = _center_head(-np.abs(rng.normal(size=(2, 9))), task=1)
        unified = concat([head, dead])
        assert maximum_forgetting(head, unified, [(feats, labels)]) == 0.0

    def test_corrupted_task1_block_forgets(self, rng):
        centers = _orthogonal_centers(2, 8)
        z1 = centers[rng.integers(0, 2, size=50)] + rng.normal(scale=0.05, size=(50, 8))
        y1 = np.argmax(z1 @ centers.T, axis=1)
        step1 = _center_head(centers)
        # unified task-1 block scrambled; task-2 block absorbs everything
        corrupt = _center_head(-centers)
        absorber = _center_head(np.stack([z1.mean(axis=0), rng.normal(size=8)]),
                                task=1)
        unified = concat([corrupt, absorber])
        forget = maximum_forgetting(step1, unified, [(z1, y1)])
        assert forget > 0.0


class TestMetricsCsv:
    def test_round_trip(self, tmp_path):
        rows = [
            StepMetrics(step=1, accuracy=0.5, forgetting=0.0,
                        per_task_acc=[0.5], n_samples=100),
            StepMetrics(step=2, accuracy=0.75, forgetting=0.125,
                        per_task_acc=[0.7, 0.8], n_samples=200),
        ]
        path = tmp_path / "metrics.csv"
        for i, row in enumerate(rows):
            append_metrics_csv(path, row, write_header=(i == 0))
        back = read_metrics_csv(path)
        assert back == rows
