import numpy as np
import pytest

from incd.classifier import predict
from incd.data import make_blobs, remap_labels, split_sequence
from incd.discovery import TrainConfig
from incd.evaluation import clustering_accuracy
from incd.reference import (KmeansConfig, joint_frozen, kmeans_assign,
                            kmeans_cluster, kmeans_fit)


class TestKmeansConfig:
    def test_defaults(self):
        cfg = KmeansConfig(k=5)
        assert cfg.max_iters == 300
        assert cfg.n_init == 1

    def test_validation(self):
        with pytest.raises(ValueError):
            KmeansConfig(k=1)
        with pytest.raises(ValueError):
            KmeansConfig(k=2, max_iters=0)


class TestKmeansCluster:
    def test_separated_blobs_recovered(self):
        ds = make_blobs(4, 150, 16, views=1, center_scale=8.0, within_std=1.0,
                        seed=60)
        ids = kmeans_cluster(ds.view(0), KmeansConfig(k=4, seed=1))
        acc = clustering_accuracy(ids, ds.labels, 4, 4)
        assert acc >= 0.99

    def test_identical_points_converge_without_fault(self):
        feats = np.ones((10, 4))
        ids = kmeans_cluster(feats, KmeansConfig(k=2, max_iters=5, seed=2))
        assert ids.shape == (10,)
        assert set(np.unique(ids)) <= {0, 1}

    def test_deterministic_per_seed(self, rng):
        feats = rng.normal(size=(80, 6))
        a = kmeans_cluster(feats, KmeansConfig(k=5, seed=3))
        b = kmeans_cluster(feats, KmeansConfig(k=5, seed=3))
        assert np.array_equal(a, b)

    def test_objective_non_increasing_over_iterations(self, rng):
        feats = rng.normal(size=(120, 5))

        def inertia_after(iters):
            centers, ids = kmeans_fit(feats, KmeansConfig(k=6, max_iters=iters,
                                                          seed=4, tol=0.0))
            d2 = ((feats[:, None, :] - centers[None]) ** 2).sum(axis=2)
            return d2[np.arange(len(ids)), ids].sum()

        inertias = [inertia_after(i) for i in (1, 2, 4, 8, 16)]
        assert all(a >= b - 1e-9 for a, b in zip(inertias, inertias[1:]))

    def test_too_few_samples_rejected(self, rng):
        with pytest.raises(ValueError):
            kmeans_cluster(rng.normal(size=(3, 4)), KmeansConfig(k=5))

    def test_assign_routes_to_nearest_center(self):
        centers = np.array([[0.0, 0.0], [10.0, 0.0]])
        ids = kmeans_assign(np.array([[1.0, 0.0], [9.0, 1.0]]), centers)
        assert list(ids) == [0, 1]


class TestJointFrozen:
    def _tasks(self, seed):
        full = make_blobs(6, 60, 16, views=2, center_scale=8.0, within_std=1.0,
                          seed=seed)
        split = split_sequence(full, 2, seed=seed)
        datasets = [full.subset(ix) for ix in split.train_indices]
        return full, split, datasets

    def test_single_task_behaves_like_discovery(self):
        ds = make_blobs(3, 80, 16, views=2, center_scale=8.0, within_std=1.0,
                        seed=61)
        cfg = TrainConfig(epochs=20, batch_size=64, seed=5)
        unified = joint_frozen([ds], [3], cfg)
        preds = predict(unified, ds.view(0))
        assert clustering_accuracy(preds, ds.labels, 3, 3) >= 0.99

    def test_features_unchanged(self):
        full, split, datasets = self._tasks(62)
        hashes = [ds.feature_hash() for ds in datasets]
        joint_frozen(datasets, split.class_counts,
                     TrainConfig(epochs=5, batch_size=64, seed=6))
        assert [ds.feature_hash() for ds in datasets] == hashes

    def test_joint_training_does_not_trail_baseline(self):
        full, split, datasets = self._tasks(63)
        cfg = TrainConfig(epochs=25, batch_size=64, seed=7)
        unified = joint_frozen(datasets, split.class_counts, cfg)
        feats = np.concatenate([full.view(0)[ix] for ix in split.test_indices])
        labels = remap_labels(
            np.concatenate([full.labels[ix] for ix in split.test_indices]),
            split.label_map)
        preds = predict(unified, feats)
        acc = clustering_accuracy(preds, labels, unified.total_classes,
                                  int(labels.max()) + 1)
        assert acc >= 0.95
