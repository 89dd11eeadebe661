"""Cosine-normalized linear task heads and their task-agnostic concatenation.

Each head stores a raw (C, D) weight matrix; logits are cosine similarities
between L2-normalized weight rows and the L2-normalized input feature, so
every head scores on the same [-1, 1] scale and heads from different tasks
can be concatenated for task-agnostic prediction.
"""

from dataclasses import dataclass
import struct

import numpy as np

from .numerics import NORM_EPS, l2_normalize, log_softmax


@dataclass
class CosineHead:
    """Raw weights for one task; forward passes never mutate them."""

    weight: np.ndarray  # (C, D) float64
    task: int = 0

    @property
    def n_classes(self):
        return self.weight.shape[0]

    @property
    def dim(self):
        return self.weight.shape[1]

    def copy(self):
        return CosineHead(weight=self.weight.copy(), task=self.task)


def init_head(n_classes, dim, seed, task=0):
    """Head with i.i.d. uniform weights in [-1/sqrt(D), 1/sqrt(D)].

    Deterministic for a fixed seed (Philox counter-based generator).
    """
    if n_classes < 2:
        raise ValueError(f"need at least 2 classes, got {n_classes}")
    if dim < 1:
        raise ValueError(f"need dim >= 1, got {dim}")
    rng = np.random.Generator(np.random.Philox(seed))
    bound = 1.0 / np.sqrt(dim)
    weight = rng.uniform(-bound, bound, size=(n_classes, dim))
    return CosineHead(weight=weight, task=task)


def cosine_logits(head, z):
    """Cosine similarity between each normalized weight row and normalized z.

    Accepts a single (D,) feature or an (N, D) batch; output is (C,) or
    (N, C) with every entry in [-1, 1].
    """
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] != head.dim:
        raise ValueError(f"feature dim {z.shape[-1]} != head dim {head.dim}")
    w_unit = l2_normalize(head.weight, axis=-1)
    z_unit = l2_normalize(z, axis=-1)
    return z_unit @ w_unit.T


def renormalize_weights(head):
    """Replace each weight row with its unit-norm version, in place.

    Applied once per training minibatch before the forward pass; idempotent
    and safe on zero rows (they stay numerically zero).
    """
    head.weight = l2_normalize(head.weight, axis=-1)


@dataclass
class UnifiedHead:
    """Ordered task heads plus the cumulative class offset of each block."""

    heads: list
    offsets: list  # offsets[t] = first global class id of task t

    @property
    def total_classes(self):
        return self.offsets[-1] + self.heads[-1].n_classes

    @property
    def dim(self):
        return self.heads[0].dim

    def block(self, t):
        """(start, stop) global column range of task t's logits."""
        return self.offsets[t], self.offsets[t] + self.heads[t].n_classes

    def logits(self, z):
        """Concatenated cosine logits; each block is computed by its own
        head, so block logits are bitwise equal to the task head's."""
        return np.concatenate(
            [cosine_logits(h, z) for h in self.heads], axis=-1
        )

    def stacked_weights(self):
        """Copy of all blocks stacked into one (C_total, D) matrix."""
        return np.concatenate([h.weight for h in self.heads], axis=0)

    def set_stacked_weights(self, stacked):
        """Write a stacked matrix back into the per-task heads."""
        if stacked.shape != (self.total_classes, self.dim):
            raise ValueError(
                f"stacked shape {stacked.shape} != "
                f"({self.total_classes}, {self.dim})"
            )
        for t, head in enumerate(self.heads):
            start, stop = self.block(t)
            head.weight = stacked[start:stop].copy()

    def copy(self):
        heads = [h.copy() for h in self.heads]
        return UnifiedHead(heads=heads, offsets=list(self.offsets))


def concat(heads):
    """Concatenate task heads (shared D) into a UnifiedHead."""
    if not heads:
        raise ValueError("need at least one head")
    dim = heads[0].dim
    for h in heads[1:]:
        if h.dim != dim:
            raise ValueError(f"dim mismatch: {h.dim} != {dim}")
    offsets = [0]
    for h in heads[:-1]:
        offsets.append(offsets[-1] + h.n_classes)
    return UnifiedHead(heads=list(heads), offsets=offsets)


def predict(unified, z):
    """Global argmax cluster id(s); ties break to the lowest index."""
    logits = unified.logits(z)
    return np.argmax(logits, axis=-1)


def cosine_ce_gradient(weight, z, soft_targets, temperature):
    """Mean cross-entropy of cosine logits against soft targets, plus its
    analytic gradient with respect to the raw weight matrix.

    The gradient includes the Jacobian of the row normalization, so it
    matches finite differences of this exact function. Targets are treated
    as constants (no gradient flows into them).

    Returns (loss, grad) with grad shaped like `weight`.
    """
    weight = np.asarray(weight, dtype=np.float64)
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    soft_targets = np.atleast_2d(np.asarray(soft_targets, dtype=np.float64))
    n = z.shape[0]

    scale = np.sqrt(np.sum(weight * weight, axis=1, keepdims=True) + NORM_EPS)
    w_unit = weight / scale
    z_unit = l2_normalize(z, axis=-1)
    logits = z_unit @ w_unit.T  # (N, C)

    logp = log_softmax(logits, temperature)
    loss = float(-np.mean(np.sum(soft_targets * logp, axis=1)))

    # dL/dlogits for the batch-mean CE, then back through w_unit = w/|w|:
    # dlogit_i/dw_i = (z_unit - logit_i * w_unit_i) / |w_i|.
    delta = (np.exp(logp) - soft_targets) / (temperature * n)
    grad = (delta.T @ z_unit - np.sum(delta * logits, axis=0)[:, None] * w_unit)
    grad /= scale
    return loss, grad


def save_head(head, path):
    """Dimension-prefixed little-endian float32 block: u32 C, u32 D, C*D f32."""
    weight32 = np.ascontiguousarray(head.weight, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<II", head.n_classes, head.dim))
        fh.write(weight32.tobytes())


def load_head(path, task=0):
    """Read a head written by `save_head`, widening weights to float64."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 8:
        raise ValueError(f"{path}: truncated header ({len(raw)} bytes)")
    n_classes, dim = struct.unpack_from("<II", raw, 0)
    expected = 8 + 4 * n_classes * dim
    if len(raw) != expected:
        raise ValueError(
            f"{path}: expected {expected} bytes for a {n_classes}x{dim} head, "
            f"got {len(raw)}"
        )
    weight = np.frombuffer(raw, dtype="<f4", count=n_classes * dim, offset=8)
    weight = weight.reshape(n_classes, dim).astype(np.float64)
    return CosineHead(weight=weight, task=task)


def save_unified(unified, path):
    """u32 head count, then each head as in `save_head`."""
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", len(unified.heads)))
        for head in unified.heads:
            weight32 = np.ascontiguousarray(head.weight, dtype="<f4")
            fh.write(struct.pack("<II", head.n_classes, head.dim))
            fh.write(weight32.tobytes())


def load_unified(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4:
        raise ValueError(f"{path}: truncated header ({len(raw)} bytes)")
    (n_heads,) = struct.unpack_from("<I", raw, 0)
    heads = []
    pos = 4
    for t in range(n_heads):
        if len(raw) < pos + 8:
            raise ValueError(f"{path}: truncated at head {t} (offset {pos})")
        n_classes, dim = struct.unpack_from("<II", raw, pos)
        pos += 8
        nbytes = 4 * n_classes * dim
        if len(raw) < pos + nbytes:
            raise ValueError(
                f"{path}: truncated weights for head {t} "
                f"(need {nbytes} bytes at offset {pos}, have {len(raw) - pos})"
            )
        weight = np.frombuffer(raw, dtype="<f4", count=n_classes * dim, offset=pos)
        heads.append(
            CosineHead(weight=weight.reshape(n_classes, dim).astype(np.float64), task=t)
        )
        pos += nbytes
    if pos != len(raw):
        raise ValueError(f"{path}: {len(raw) - pos} trailing bytes")
    return concat(heads)
