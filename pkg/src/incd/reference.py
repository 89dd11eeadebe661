"""Reference comparators: K-means++ on pooled embeddings (pseudo lower
bound) and the joint trainer with frozen features (upper reference)."""

from dataclasses import dataclass, replace
import math

import numpy as np

from .classifier import CosineHead, concat
from .discovery import _batch_views, discover_task, swapped_loss
from .numerics import LrSchedule, OptimizerState, cosine_lr, l2_normalize, sgd_step


@dataclass
class KmeansConfig:
    k: int
    max_iters: int = 300
    n_init: int = 1
    seed: int = 0
    tol: float = 1e-6

    def __post_init__(self):
        if self.k < 2:
            raise ValueError(f"k must be >= 2, got {self.k}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.n_init < 1:
            raise ValueError(f"n_init must be >= 1, got {self.n_init}")


def _sq_dists(features, centers):
    # |x - c|^2 = |x|^2 - 2 x.c + |c|^2, clipped at 0 against rounding.
    d2 = (np.sum(features ** 2, axis=1)[:, None]
          - 2.0 * features @ centers.T
          + np.sum(centers ** 2, axis=1)[None, :])
    return np.maximum(d2, 0.0)


def _kmeans_pp_init(features, k, rng):
    """D^2-weighted seeding: each new center is drawn with probability
    proportional to the squared distance to the nearest existing one."""
    n = features.shape[0]
    centers = np.empty((k, features.shape[1]))
    centers[0] = features[rng.integers(n)]
    best = _sq_dists(features, centers[:1])[:, 0]
    for j in range(1, k):
        total = best.sum()
        if total <= 0:
            centers[j] = features[rng.integers(n)]
        else:
            centers[j] = features[rng.choice(n, p=best / total)]
        best = np.minimum(best, _sq_dists(features, centers[j:j + 1])[:, 0])
    return centers


def _lloyd(features, centers, max_iters, tol):
    for _ in range(max_iters):
        d2 = _sq_dists(features, centers)
        ids = np.argmin(d2, axis=1)
        new_centers = centers.copy()
        for j in range(centers.shape[0]):
            members = features[ids == j]
            if members.shape[0] == 0:
                # Re-seed an empty cluster to the point farthest from its
                # assigned center.
                far = np.argmax(d2[np.arange(len(ids)), ids])
                new_centers[j] = features[far]
            else:
                new_centers[j] = members.mean(axis=0)
        shift = np.sqrt(np.sum((new_centers - centers) ** 2))
        centers = new_centers
        if shift < tol:
            break
    ids = np.argmin(_sq_dists(features, centers), axis=1)
    return centers, ids


def kmeans_fit(features, cfg):
    """K-means++ seeding followed by Lloyd iterations; returns (centers, ids)
    of the best of n_init runs by within-cluster sum of squares."""
    features = np.asarray(features, dtype=np.float64)
    if features.shape[0] < cfg.k:
        raise ValueError(
            f"need at least k={cfg.k} samples, got {features.shape[0]}"
        )
    rng = np.random.Generator(np.random.Philox(cfg.seed))
    best = None
    for _ in range(cfg.n_init):
        centers = _kmeans_pp_init(features, cfg.k, rng)
        centers, ids = _lloyd(features, centers, cfg.max_iters, cfg.tol)
        inertia = _sq_dists(features, centers)[np.arange(len(ids)), ids].sum()
        if best is None or inertia < best[0]:
            best = (inertia, centers, ids)
    return best[1], best[2]


def kmeans_cluster(features, cfg):
    """Per-sample cluster ids from `kmeans_fit`."""
    return kmeans_fit(features, cfg)[1]


def kmeans_assign(features, centers):
    """Nearest-center ids for held-out samples."""
    return np.argmin(_sq_dists(np.asarray(features, dtype=np.float64), centers),
                     axis=1)


def joint_frozen(task_datasets, class_counts, cfg, heads=None, log=None):
    """Upper reference: per-task discovery, then continued training of the
    concatenated head on the union of all training data with the swapped
    prediction objective over the full unified logit width.

    `heads` may carry already-trained per-task heads (they are copied, not
    mutated); otherwise each task is discovered with a seed derived from
    cfg.seed. Embeddings are never modified.
    """
    if heads is None:
        heads = []
        for t, (ds, n_classes) in enumerate(zip(task_datasets, class_counts)):
            seed = np.random.SeedSequence(cfg.seed, spawn_key=(t,))
            task_cfg = _with_seed(cfg, seed.generate_state(1, np.uint64)[0])
            heads.append(discover_task(ds, n_classes, task_cfg, task=t, log=log))
    unified = concat([h.copy() for h in heads])

    pooled = np.concatenate([ds.features for ds in task_datasets], axis=0)
    n = pooled.shape[0]
    rng = np.random.Generator(
        np.random.Philox(np.random.SeedSequence(cfg.seed, spawn_key=(0xF0,))))

    weight = unified.stacked_weights()
    steps_per_epoch = math.ceil(n / cfg.batch_size)
    schedule = LrSchedule(cfg.base_lr, total_steps=cfg.epochs * steps_per_epoch)
    state = OptimizerState(momentum=cfg.momentum, weight_decay=cfg.weight_decay,
                           lr=cfg.base_lr)

    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            z1, z2 = _batch_views(pooled, batch, cfg, rng)
            weight = l2_normalize(weight, axis=-1)
            # Codes span the full unified logit width.
            stack = CosineHead(weight=weight, task=-1)
            loss, grad = swapped_loss(stack, (z1, z2), cfg)
            lr = cosine_lr(schedule)
            weight = sgd_step(weight, grad, state, lr)
            schedule.step += 1
            epoch_loss += loss * len(batch)
        if log is not None:
            log({"task": -1, "epoch": epoch, "loss": epoch_loss / n})

    unified.set_stacked_weights(weight)
    return unified


def _with_seed(cfg, seed):
    return replace(cfg, seed=int(seed))
