"""Prototype memory and generative feature replay.

After each task, the per-pseudo-class mean and diagonal variance of the
raw embeddings stand in for the discarded data. Later steps sample from
those Gaussians to fine-tune the concatenated head against forgetting
(replayed past classes + pseudo-labelled current data).
"""

from dataclasses import dataclass
import math
import struct

import numpy as np

from .classifier import cosine_ce_gradient, cosine_logits
from .discovery import _batch_views
from .numerics import LrSchedule, OptimizerState, cosine_lr, l2_normalize, \
    one_hot, sgd_step

# Smallest allowed per-dimension variance; chosen to survive the float32
# round trip of the memory file exactly.
VARIANCE_FLOOR = float(np.float32(1e-6))

_MEM_HEADER = struct.Struct("<II")  # prototype count, dim
_PROTO_HEADER = struct.Struct("<iiQ")  # class id, task, member count


class InvalidStateError(RuntimeError):
    """Raised when replay is requested from an impossible state."""


@dataclass
class ClassPrototype:
    """Diagonal Gaussian proxy for one discovered pseudo-class."""

    mean: np.ndarray  # (D,)
    var: np.ndarray   # (D,), always >= VARIANCE_FLOOR
    class_id: int     # global id, consistent with UnifiedHead offsets
    task: int
    count: int


class PrototypeMemory:
    """Append-only store of prototypes from tasks 1..t-1."""

    def __init__(self, dim):
        self.dim = dim
        self.prototypes = []

    def __len__(self):
        return len(self.prototypes)

    def extend(self, prototypes):
        for p in prototypes:
            if p.mean.shape != (self.dim,) or p.var.shape != (self.dim,):
                raise ValueError(f"prototype dim != {self.dim}")
            self.prototypes.append(p)

    def class_ids(self):
        return np.array([p.class_id for p in self.prototypes], dtype=np.int64)

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(_MEM_HEADER.pack(len(self.prototypes), self.dim))
            for p in self.prototypes:
                fh.write(_PROTO_HEADER.pack(p.class_id, p.task, p.count))
                fh.write(np.ascontiguousarray(p.mean, dtype="<f4").tobytes())
                fh.write(np.ascontiguousarray(p.var, dtype="<f4").tobytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            raw = fh.read()
        if len(raw) < _MEM_HEADER.size:
            raise ValueError(f"{path}: truncated header")
        count, dim = _MEM_HEADER.unpack_from(raw, 0)
        expected = _MEM_HEADER.size + count * (_PROTO_HEADER.size + 8 * dim)
        if len(raw) != expected:
            raise ValueError(
                f"{path}: expected {expected} bytes for {count} prototypes, "
                f"got {len(raw)}"
            )
        memory = cls(dim)
        pos = _MEM_HEADER.size
        for _ in range(count):
            class_id, task, n = _PROTO_HEADER.unpack_from(raw, pos)
            pos += _PROTO_HEADER.size
            mean = np.frombuffer(raw, dtype="<f4", count=dim, offset=pos)
            pos += 4 * dim
            var = np.frombuffer(raw, dtype="<f4", count=dim, offset=pos)
            pos += 4 * dim
            memory.prototypes.append(ClassPrototype(
                mean=mean.astype(np.float64), var=var.astype(np.float64),
                class_id=class_id, task=task, count=n,
            ))
        return memory


def _quantize(arr):
    # Prototype statistics live in the float32 file format; quantize at
    # creation so in-memory and reloaded runs agree bitwise.
    return arr.astype(np.float32).astype(np.float64)


def compute_prototypes(dataset, head, task, offset):
    """Mean/variance prototypes of the head's pseudo-classes.

    Each sample's canonical (first) stored view is pseudo-labelled with the
    head argmax; statistics are taken over raw, un-normalized embeddings
    with per-dimension population variance, floored at VARIANCE_FLOOR.
    Empty pseudo-classes yield no prototype. Ids are offset into the global
    class space.
    """
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    feats = dataset.view(0)
    preds = np.argmax(cosine_logits(head, feats), axis=-1)
    out = []
    for j in range(head.n_classes):
        members = feats[preds == j]
        if members.shape[0] == 0:
            continue
        mean = _quantize(members.mean(axis=0))
        var = _quantize(np.maximum(members.var(axis=0), VARIANCE_FLOOR))
        out.append(ClassPrototype(mean=mean, var=var, class_id=offset + j,
                                  task=task, count=members.shape[0]))
    return out


def replay_batch(memory, n, rng):
    """Draw n replayed (feature, global label) pairs from the memory.

    Each sample picks a prototype uniformly at random, then draws every
    dimension from N(mean_d, var_d). Deterministic for a fixed generator
    or integer seed.
    """
    if len(memory) == 0:
        raise InvalidStateError("prototype memory is empty")
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.Generator(np.random.Philox(rng))
    choice = rng.integers(0, len(memory), size=n)
    means = np.stack([memory.prototypes[i].mean for i in choice])
    stds = np.sqrt(np.stack([memory.prototypes[i].var for i in choice]))
    feats = means + rng.normal(size=(n, memory.dim)) * stds
    labels = np.array([memory.prototypes[i].class_id for i in choice],
                      dtype=np.int64)
    return feats, labels


def _renormalize_rows(weight):
    return l2_normalize(weight, axis=-1)


def ktrfr_finetune(unified, dataset, current_head, memory, cfg, log=None,
                   task=None):
    """Fine-tune all unified-head weights with replayed past features and
    pseudo-labelled current data.

    Per minibatch of current data: (a) a replay batch of equal size is
    scored against its stored hard labels; (b) both current views are
    pseudo-labelled by the task-specific head's argmax shifted by the
    current task's global offset. Both cross-entropy terms are minimized
    jointly with momentum SGD and cosine-annealed learning rate; weights
    are renormalized every step. Mutates `unified` in place and returns it.
    """
    if len(memory) == 0:
        raise InvalidStateError(
            "KTRFR requires a non-empty prototype memory (skip it at step 1)"
        )
    n = len(dataset)
    if n == 0:
        raise ValueError("dataset is empty")
    if task is None:
        task = len(unified.heads) - 1

    offset = unified.total_classes - current_head.n_classes
    n_total = unified.total_classes
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(cfg.seed)))

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
            z1, z2 = _batch_views(dataset.features, batch, cfg, rng)
            weight = _renormalize_rows(weight)

            z_past, y_past = replay_batch(memory, len(batch), rng)
            loss_past, grad_past = cosine_ce_gradient(
                weight, z_past, one_hot(y_past, n_total), cfg.temperature)

            pseudo1 = np.argmax(cosine_logits(current_head, z1), axis=-1) + offset
            pseudo2 = np.argmax(cosine_logits(current_head, z2), axis=-1) + offset
            z_current = np.concatenate([z1, z2], axis=0)
            y_current = np.concatenate([pseudo1, pseudo2])
            loss_current, grad_current = cosine_ce_gradient(
                weight, z_current, one_hot(y_current, n_total), cfg.temperature)

            lr = cosine_lr(schedule)
            weight = sgd_step(weight, grad_past + grad_current, state, lr)
            schedule.step += 1
            epoch_loss += (loss_past + loss_current) * len(batch)
        if log is not None:
            log({"task": task, "epoch": epoch, "loss": epoch_loss / n})

    unified.set_stacked_weights(weight)
    return unified
