"""Dense float64 primitives shared by every other module.

All functions are pure and operate on caller-owned numpy arrays; the only
mutable piece of state is the optimizer velocity buffer, which has a single
writer. In-core precision is double throughout; on-disk formats are 32-bit
and get widened on load.
"""

from dataclasses import dataclass
import math

import numpy as np

# Division guard used for every L2 normalization in the library.
NORM_EPS = 1e-12


def l2_normalize(v, eps=NORM_EPS, axis=-1):
    """Return v / sqrt(v.v + eps) along `axis`.

    The guard keeps zero vectors at zero instead of faulting. For inputs
    with norm >= 1e-3 the operation is idempotent to ~1e-9.
    """
    v = np.asarray(v, dtype=np.float64)
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if v.size == 0 or v.shape[axis] == 0:
        raise ValueError("cannot normalize a dimension-zero vector")
    norm = np.sqrt(np.sum(v * v, axis=axis, keepdims=True) + eps)
    return v / norm


def softmax(logits, temperature=1.0, axis=-1):
    """Temperature softmax with max-subtraction for overflow safety.

    Invariant to adding a constant to all logits; rows sum to 1.
    """
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    a = np.asarray(logits, dtype=np.float64) / temperature
    a = a - np.max(a, axis=axis, keepdims=True)
    e = np.exp(a)
    return e / np.sum(e, axis=axis, keepdims=True)


def log_softmax(logits, temperature=1.0, axis=-1):
    """Numerically stable log of `softmax`."""
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    a = np.asarray(logits, dtype=np.float64) / temperature
    a = a - np.max(a, axis=axis, keepdims=True)
    return a - np.log(np.sum(np.exp(a), axis=axis, keepdims=True))


def cross_entropy(logits, soft_target, temperature=1.0):
    """-sum_j target_j * log softmax(logits / temperature)_j for one sample.

    `soft_target` must be a distribution over the same support as `logits`.
    Non-negative whenever the target is one-hot.
    """
    logits = np.asarray(logits, dtype=np.float64)
    soft_target = np.asarray(soft_target, dtype=np.float64)
    if logits.ndim != 1 or soft_target.ndim != 1:
        raise ValueError("cross_entropy expects 1-D logits and target")
    if logits.shape != soft_target.shape:
        raise ValueError(
            f"shape mismatch: logits {logits.shape} vs target {soft_target.shape}"
        )
    return float(-np.sum(soft_target * log_softmax(logits, temperature)))


def one_hot(labels, n_classes):
    """Integer labels -> (N, n_classes) float64 one-hot rows."""
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.size, n_classes), dtype=np.float64)
    out[np.arange(labels.size), labels] = 1.0
    return out


@dataclass
class OptimizerState:
    """SGD-with-momentum state for one parameter tensor.

    Weight decay is coupled into the gradient (classical deep-learning
    default): v <- m*v + (g + wd*p); p <- p - lr*v.
    """

    momentum: float = 0.9
    weight_decay: float = 1e-4
    lr: float = 0.1
    velocity: np.ndarray | None = None


def sgd_step(params, grads, state, lr):
    """One momentum-SGD update; returns the new parameters.

    The velocity buffer inside `state` is updated in place and is lazily
    allocated to the parameter shape on first use.
    """
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape:
        raise ValueError(
            f"shape mismatch: params {params.shape} vs grads {grads.shape}"
        )
    if state.velocity is None:
        state.velocity = np.zeros_like(params)
    if state.velocity.shape != params.shape:
        raise ValueError(
            f"velocity shape {state.velocity.shape} does not match params {params.shape}"
        )
    np.multiply(state.velocity, state.momentum, out=state.velocity)
    state.velocity += grads + state.weight_decay * params
    return params - lr * state.velocity


@dataclass
class LrSchedule:
    """Cosine annealing over a fixed number of steps."""

    base_rate: float
    total_steps: int
    step: int = 0


def cosine_lr(schedule):
    """base * (1 + cos(pi * step / total)) / 2; base at step 0, 0 at the end."""
    if schedule.step < 0 or schedule.step > schedule.total_steps:
        raise ValueError(
            f"step {schedule.step} outside [0, {schedule.total_steps}]"
        )
    frac = schedule.step / schedule.total_steps
    return schedule.base_rate * (1.0 + math.cos(math.pi * frac)) / 2.0
