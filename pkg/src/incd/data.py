"""Embedding dataset ingestion, synthetic blob generation and task splits.

The on-disk "MSCE" format is the wire contract with external feature
extractors: little-endian, magic "MSCE", version u32=1, dim u32, views u16,
flags u16 (bit 0 = labels present), count u64, then per sample a label i32
(-1 when absent) followed by views*dim float32 features.

Feature values are quantized through float32 when a dataset is constructed
(in-core storage is float64), which makes write->read round trips bit-exact
for every dataset the library can hold.
"""

from dataclasses import dataclass
import hashlib
import math
import struct

import numpy as np

MAGIC = b"MSCE"
VERSION = 1
HEADER = struct.Struct("<4sIIHHQ")

# Fixed seed for the documented, reproducible per-dataset splits.
DEFAULT_SPLIT_SEED = 20230517


class FormatError(ValueError):
    """Malformed MSCE file; `offset` is the byte position of the problem."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class EmbeddingDataset:
    """N samples x V views x D dims of frozen features, immutable after load.

    Labels are hidden evaluation ground truth; training code never reads
    them. They are absent (None) when the source file carries none.
    """

    def __init__(self, features, labels=None, split="train"):
        feats = np.asarray(features)
        if feats.ndim != 3:
            raise ValueError(f"features must be (N, V, D), got {feats.shape}")
        # Quantize through float32: the file format is 32-bit, widened on load.
        feats = feats.astype(np.float32).astype(np.float64)
        if not np.all(np.isfinite(feats)):
            raise ValueError("features contain non-finite values")
        feats.setflags(write=False)
        self.features = feats
        if labels is not None:
            labels = np.asarray(labels, dtype=np.int32)
            if labels.shape != (feats.shape[0],):
                raise ValueError(
                    f"labels shape {labels.shape} != ({feats.shape[0]},)"
                )
            if labels.size and labels.min() < 0:
                raise ValueError("labels must be non-negative")
            labels.setflags(write=False)
        self.labels = labels
        self.split = split

    @property
    def n_samples(self):
        return self.features.shape[0]

    @property
    def n_views(self):
        return self.features.shape[1]

    @property
    def dim(self):
        return self.features.shape[2]

    @property
    def n_classes(self):
        if self.labels is None or self.labels.size == 0:
            return 0
        return int(self.labels.max()) + 1

    def __len__(self):
        return self.n_samples

    def view(self, v=0):
        """(N, D) slice of one stored view."""
        return self.features[:, v, :]

    def subset(self, indices):
        labels = None if self.labels is None else self.labels[indices]
        return EmbeddingDataset(self.features[indices], labels, self.split)

    def feature_hash(self):
        """SHA-256 of the raw feature buffer; used to assert immutability."""
        return hashlib.sha256(np.ascontiguousarray(self.features).tobytes()).hexdigest()


def write_embeddings(dataset, path):
    """Serialize to the MSCE v1 binary format (always writes label fields,
    -1 per sample when the dataset has no labels)."""
    n, v, d = dataset.features.shape
    flags = 1 if dataset.labels is not None else 0
    record = np.dtype([("label", "<i4"), ("feat", "<f4", (v, d))])
    recs = np.zeros(n, dtype=record)
    recs["label"] = dataset.labels if dataset.labels is not None else -1
    recs["feat"] = dataset.features.astype("<f4")
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, VERSION, d, v, flags, n))
        fh.write(recs.tobytes())


def read_embeddings(path, split="train"):
    """Read an MSCE v1 file; raises FormatError with a byte offset on any
    malformed input."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < HEADER.size:
        raise FormatError(
            f"file too short for header: {len(raw)} < {HEADER.size} bytes",
            offset=len(raw),
        )
    magic, version, dim, views, flags, count = HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}", offset=0)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)
    if dim == 0 or views == 0:
        raise FormatError(f"invalid geometry dim={dim} views={views}", offset=8)
    record = np.dtype([("label", "<i4"), ("feat", "<f4", (views, dim))])
    expected = HEADER.size + count * record.itemsize
    if len(raw) != expected:
        raise FormatError(
            f"expected {expected} bytes for {count} samples, got {len(raw)}",
            offset=min(len(raw), expected),
        )
    recs = np.frombuffer(raw, dtype=record, count=count, offset=HEADER.size)
    features = recs["feat"].astype(np.float64).reshape(count, views, dim)
    labels = None
    if flags & 1:
        labels = recs["label"].astype(np.int32)
        if labels.size and labels.min() < 0:
            raise FormatError(
                "labels flagged present but a negative label was found",
                offset=HEADER.size,
            )
    return EmbeddingDataset(features, labels, split=split)


def make_blobs(n_classes, per_class, dim, views=2, center_scale=8.0,
               within_std=1.0, seed=0):
    """Gaussian blobs in feature space as a desk-scale stand-in for real
    backbone embeddings.

    Class centers are uniform on the radius-`center_scale` sphere; every
    view of a sample is drawn i.i.d. N(center, within_std^2 I). Labels are
    included. Deterministic per seed.
    """
    if n_classes < 1 or per_class < 1 or dim < 1 or views < 1:
        raise ValueError("all counts must be positive")
    rng = np.random.Generator(np.random.Philox(seed))
    centers = rng.normal(size=(n_classes, dim))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    centers *= center_scale
    labels = np.repeat(np.arange(n_classes, dtype=np.int32), per_class)
    noise = rng.normal(scale=within_std, size=(labels.size, views, dim)) if within_std > 0 \
        else np.zeros((labels.size, views, dim))
    features = centers[labels][:, None, :] + noise
    return EmbeddingDataset(features, labels)


@dataclass(frozen=True)
class TaskSplit:
    """Disjoint class groups with per-task train/test index lists.

    `class_sets[t]` holds original label ids; `label_map` sends an original
    label to its discovery-order id (task blocks are contiguous), which is
    the label space the unified classifier is evaluated against.
    """

    class_sets: list
    train_indices: list
    test_indices: list
    label_map: dict

    @property
    def n_tasks(self):
        return len(self.class_sets)

    @property
    def class_counts(self):
        return [len(c) for c in self.class_sets]


def _task_sizes(n_classes, n_tasks):
    """First tasks take ceil(n/T) classes, the last the remainder, matching
    the published per-task counts (e.g. 683/5 -> 137,137,137,137,135). Falls
    back to a balanced split when the ceiling rule would starve the last task."""
    q = math.ceil(n_classes / n_tasks)
    last = n_classes - q * (n_tasks - 1)
    if last >= 1:
        return [q] * (n_tasks - 1) + [last]
    q, r = divmod(n_classes, n_tasks)
    return [q + 1] * r + [q] * (n_tasks - r)


def split_sequence(dataset, n_tasks, seed=DEFAULT_SPLIT_SEED,
                   test_dataset=None, test_fraction=0.2):
    """Partition classes into `n_tasks` disjoint groups after a seeded class
    shuffle, with per-task train/test index lists.

    When `test_dataset` is given, its samples provide the test indices;
    otherwise `test_fraction` of each class is held out from `dataset`.
    """
    if dataset.labels is None:
        raise ValueError("splitting requires a labelled dataset")
    n_classes = dataset.n_classes
    if n_tasks < 1 or n_tasks > n_classes:
        raise ValueError(f"need 1 <= T <= {n_classes} classes, got T={n_tasks}")
    rng = np.random.Generator(np.random.Philox(seed))
    order = rng.permutation(n_classes)
    sizes = _task_sizes(n_classes, n_tasks)

    label_map = {int(c): i for i, c in enumerate(order)}
    class_sets, train_idx, test_idx = [], [], []
    pos = 0
    for size in sizes:
        classes = order[pos:pos + size]
        pos += size
        tr, te = [], []
        for c in classes:
            members = np.flatnonzero(dataset.labels == c)
            if test_dataset is not None:
                tr.append(members)
                te.append(np.flatnonzero(test_dataset.labels == c))
            else:
                members = rng.permutation(members)
                n_test = 0
                if members.size >= 2:
                    n_test = min(members.size - 1,
                                 max(1, round(test_fraction * members.size)))
                te.append(members[:n_test])
                tr.append(members[n_test:])
        class_sets.append(np.sort(classes))
        train_idx.append(np.sort(np.concatenate(tr)))
        test_idx.append(np.sort(np.concatenate(te)))
    return TaskSplit(class_sets, train_idx, test_idx, label_map)


def remap_labels(labels, label_map):
    """Apply a TaskSplit label map to an integer label array."""
    lut = np.empty(max(label_map) + 1, dtype=np.int64)
    for orig, mapped in label_map.items():
        lut[orig] = mapped
    return lut[np.asarray(labels, dtype=np.int64)]
