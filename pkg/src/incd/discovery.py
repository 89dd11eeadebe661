"""Per-task self-supervised discovery: two views per sample, balanced
assignment codes, swapped-prediction cross-entropy, momentum SGD over the
task head with cosine-annealed learning rate.

The feature extractor is external and frozen; nothing in this module ever
writes to the embedding buffers.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .classifier import (cosine_ce_gradient, cosine_logits, init_head,
                         renormalize_weights)
from .numerics import LrSchedule, OptimizerState, cosine_lr, sgd_step
from .sinkhorn import SinkhornConfig, sinkhorn_codes


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 256
    base_lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-4
    temperature: float = 0.1
    sinkhorn: SinkhornConfig = field(default_factory=SinkhornConfig)
    seed: int = 0
    # Std of the Gaussian jitter used to fabricate a second view when the
    # dataset stores only one; scaled by |z|/sqrt(D) per sample.
    jitter_sigma: float = 0.0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        for name in ("base_lr", "momentum", "weight_decay", "temperature"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.jitter_sigma < 0:
            raise ValueError(f"jitter_sigma must be >= 0, got {self.jitter_sigma}")


def make_views(sample_views, cfg, rng=None):
    """Two views of one sample from its (V, D) stored-view block.

    With V >= 2 stored views, picks two distinct ones at random; with a
    single view, adds i.i.d. Gaussian noise of std jitter_sigma*|z|/sqrt(D)
    to produce each view. Deterministic under a fixed seed.
    """
    sample_views = np.asarray(sample_views, dtype=np.float64)
    if sample_views.ndim != 2 or sample_views.shape[0] < 1:
        raise ValueError(f"need a (V >= 1, D) view block, got {sample_views.shape}")
    if rng is None:
        rng = np.random.Generator(np.random.Philox(cfg.seed))
    n_views = sample_views.shape[0]
    if n_views >= 2:
        first, second = rng.choice(n_views, size=2, replace=False)
        return sample_views[first].copy(), sample_views[second].copy()
    z = sample_views[0]
    if cfg.jitter_sigma == 0.0:
        return z.copy(), z.copy()
    std = cfg.jitter_sigma * np.linalg.norm(z) / math.sqrt(z.size)
    return (z + rng.normal(scale=std, size=z.size),
            z + rng.normal(scale=std, size=z.size))


def _batch_views(features, indices, cfg, rng):
    """Vectorized two-view sampling for a minibatch; same contract as
    `make_views` applied per sample."""
    block = features[indices]  # (N, V, D)
    n, n_views, dim = block.shape
    if n_views >= 2:
        first = rng.integers(0, n_views, size=n)
        shift = rng.integers(1, n_views, size=n)
        second = (first + shift) % n_views
        rows = np.arange(n)
        return block[rows, first], block[rows, second]
    z = block[:, 0, :]
    if cfg.jitter_sigma == 0.0:
        return z.copy(), z.copy()
    std = cfg.jitter_sigma * np.linalg.norm(z, axis=1, keepdims=True) / math.sqrt(dim)
    return (z + rng.normal(size=z.shape) * std,
            z + rng.normal(size=z.shape) * std)


def swapped_loss(head, views, cfg):
    """Swapped-prediction loss over a batch of view pairs and its analytic
    gradient with respect to the head weights.

    `views` is a pair of (N, D) matrices. Codes are computed from each
    view's logits with the balanced-assignment procedure and treated as
    constants; the loss is CE(l1/tau, y2) + CE(l2/tau, y1), each term
    averaged over the batch.
    """
    z1, z2 = views
    logits1 = np.atleast_2d(cosine_logits(head, z1))
    logits2 = np.atleast_2d(cosine_logits(head, z2))
    codes1 = sinkhorn_codes(logits1, cfg.sinkhorn)
    codes2 = sinkhorn_codes(logits2, cfg.sinkhorn)
    loss1, grad1 = cosine_ce_gradient(head.weight, z1, codes2, cfg.temperature)
    loss2, grad2 = cosine_ce_gradient(head.weight, z2, codes1, cfg.temperature)
    return loss1 + loss2, grad1 + grad2


def discover_task(dataset, n_classes, cfg, task=0, log=None):
    """Train a fresh cosine head to discover `n_classes` clusters in an
    unlabelled embedding dataset.

    Runs epochs x ceil(N/B) steps of: seeded shuffle, weight renormalization,
    two-view forward, swapped loss, momentum SGD at the cosine-annealed rate.
    The dataset is read-only throughout. Returns the trained head.

    `log`, when given, receives one {"task", "epoch", "loss"} dict per epoch.
    """
    n = len(dataset)
    if n == 0:
        raise ValueError("dataset is empty")
    if n_classes < 2:
        raise ValueError(f"need at least 2 clusters, got {n_classes}")
    if n_classes > n:
        raise ValueError(f"cannot populate {n_classes} clusters from {n} samples")

    seeds = np.random.SeedSequence(cfg.seed).spawn(2)
    head = init_head(n_classes, dataset.dim,
                     seed=seeds[0].generate_state(1, np.uint64)[0], task=task)
    rng = np.random.Generator(np.random.Philox(seeds[1]))

    steps_per_epoch = math.ceil(n / cfg.batch_size)
    schedule = LrSchedule(cfg.base_lr, total_steps=cfg.epochs * steps_per_epoch)
    state = OptimizerState(momentum=cfg.momentum, weight_decay=cfg.weight_decay,
                           lr=cfg.base_lr)

    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            z1, z2 = _batch_views(dataset.features, batch, cfg, rng)
            renormalize_weights(head)
            loss, grad = swapped_loss(head, (z1, z2), cfg)
            lr = cosine_lr(schedule)
            head.weight = sgd_step(head.weight, grad, state, lr)
            schedule.step += 1
            epoch_loss += loss * len(batch)
        if log is not None:
            log({"task": task, "epoch": epoch, "loss": epoch_loss / n})
    return head
