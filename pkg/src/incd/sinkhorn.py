"""Entropic balanced-assignment codes for the swapped prediction problem.

Given a batch of logits, produce per-sample soft targets whose cluster
masses are pushed toward the uniform marginal, so that training cannot
collapse every sample onto one cluster.
"""

from dataclasses import dataclass

import numpy as np


@dataclass
class SinkhornConfig:
    n_iters: int = 3
    epsilon: float = 0.05

    def __post_init__(self):
        if self.n_iters < 1:
            raise ValueError(f"n_iters must be >= 1, got {self.n_iters}")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")


def sinkhorn_codes(logits, cfg=None):
    """Soft assignment codes for a (B, C) logits batch.

    Q = exp(logits.T / epsilon) is alternately normalized to the uniform
    sample marginal (each of the B columns sums to 1/B) and the uniform
    cluster marginal (each of the C rows sums to 1/C) for `n_iters` rounds,
    then transposed back and renormalized so every sample row sums to 1.

    Rows of the result are valid soft targets in [0, 1]; column masses are
    approximately balanced at B/C for non-degenerate batches. B < C batches
    (e.g. a short final minibatch) are accepted but not balanced.
    """
    if cfg is None:
        cfg = SinkhornConfig()
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 2:
        raise ValueError(f"logits must be 2-D, got shape {logits.shape}")
    n_samples, n_clusters = logits.shape
    if n_samples < 1 or n_clusters < 2:
        raise ValueError(f"need B >= 1 and C >= 2, got {logits.shape}")
    if not np.all(np.isfinite(logits)):
        raise ValueError("logits contain non-finite entries")

    # Subtract the matrix max before exponentiating so epsilon-scaled
    # logits cannot overflow.
    q = logits.T / cfg.epsilon
    q -= q.max()
    mat = np.exp(q)  # (C, B)
    mat /= mat.sum()
    for _ in range(cfg.n_iters):
        mat /= mat.sum(axis=0, keepdims=True)  # sample columns -> 1/B
        mat /= n_samples
        mat /= mat.sum(axis=1, keepdims=True)  # cluster rows -> 1/C
        mat /= n_clusters
    codes = mat.T.copy()
    codes /= codes.sum(axis=1, keepdims=True)
    return codes
