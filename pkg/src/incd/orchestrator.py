"""Experiment runner: builds the task sequence, executes one of the four
methods step by step, checkpoints everything needed for bit-exact resume,
and emits per-step metrics.

Run directory layout:
    config.snapshot     JSON mirror of the effective configuration
    state.json          completed-step counter + seed (the RNG state)
    heads/step-{t}.bin  task-specific head after each discovery step
    unified.bin         unified head after the last completed step
    memory.bin          prototype memory (baseline++ only)
    metrics.csv         one StepMetrics row per step
    losses.ndjson       per-epoch training losses
    report.json         final RunReport

All randomness is drawn from Philox streams derived from the experiment
seed and the step index, so the checkpointed (seed, step) pair is the
complete RNG state and a resumed run reproduces an uninterrupted one
bitwise. Head and prototype tensors are passed through their float32 file
representation at every step boundary for the same reason.
"""

from dataclasses import asdict, dataclass, field, replace
import json
import hashlib
import os
from pathlib import Path
import time

import numpy as np

from . import __version__
from .classifier import concat, load_head, load_unified, save_head, save_unified
from .data import make_blobs, read_embeddings, remap_labels, split_sequence
from .discovery import TrainConfig, discover_task
from .evaluation import (StepMetrics, append_metrics_csv, clustering_accuracy,
                         match_clusters, maximum_forgetting, overall_accuracy,
                         per_task_accuracy, read_metrics_csv)
from .reference import KmeansConfig, joint_frozen, kmeans_assign, kmeans_fit
from .replay import PrototypeMemory, compute_prototypes, ktrfr_finetune

METHODS = ("baseline", "baseline++", "kmeans", "joint-frozen")
SCHEMA_VERSION = 1

# spawn_key purpose tags for derived RNG streams
_SPLIT, _DISCOVER, _KTRFR, _KMEANS, _JOINT = range(5)


class ResumeError(RuntimeError):
    """A checkpoint artifact is missing or corrupt; names the file."""


@dataclass
class SyntheticSpec:
    classes: int = 10
    per_class: int = 100
    dim: int = 64
    views: int = 2
    center_scale: float = 8.0
    within_std: float = 1.0
    seed: int = 0


@dataclass
class DataConfig:
    train_path: str | None = None
    test_path: str | None = None
    synthetic: SyntheticSpec | None = None

    def __post_init__(self):
        if (self.train_path is None) == (self.synthetic is None):
            raise ValueError("configure exactly one of data.train_path or data.synthetic")


@dataclass
class ExperimentConfig:
    method: str
    data: DataConfig
    n_tasks: int
    train: TrainConfig = field(default_factory=TrainConfig)
    out_dir: str = "run"
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {METHODS}")
        if self.n_tasks < 1:
            raise ValueError(f"n_tasks must be >= 1, got {self.n_tasks}")


@dataclass
class RunReport:
    config: dict
    steps: list
    timings: list
    version: str = __version__


def child_seed(seed, purpose, step=0):
    """Deterministic per-(purpose, step) seed derived from the experiment
    seed; together with the step counter this is the whole RNG state."""
    ss = np.random.SeedSequence(seed, spawn_key=(purpose, step))
    return int(ss.generate_state(1, np.uint64)[0])


def config_snapshot(cfg):
    snap = asdict(cfg)
    snap["schema"] = SCHEMA_VERSION
    return snap


def _config_hash(snap):
    return hashlib.sha256(
        json.dumps(snap, sort_keys=True).encode()).hexdigest()


def _quantize_head(head):
    head.weight = head.weight.astype(np.float32).astype(np.float64)


def _load_datasets(cfg):
    if cfg.data.synthetic is not None:
        s = cfg.data.synthetic
        train = make_blobs(s.classes, s.per_class, s.dim, s.views,
                           s.center_scale, s.within_std, s.seed)
        return train, None
    train = read_embeddings(cfg.data.train_path, split="train")
    test = None
    if cfg.data.test_path:
        test = read_embeddings(cfg.data.test_path, split="test")
    return train, test


def _require(path):
    if not path.exists():
        raise ResumeError(f"checkpoint artifact missing: {path}")
    return path


class _Runner:
    """One sequential experiment pipeline over its own output directory."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.out = Path(cfg.out_dir)
        self.heads_dir = self.out / "heads"
        self.snapshot = config_snapshot(cfg)

        train, test = _load_datasets(cfg)
        self.split = split_sequence(train, cfg.n_tasks,
                                    seed=child_seed(cfg.seed, _SPLIT),
                                    test_dataset=test)
        self.task_train = [train.subset(ix) for ix in self.split.train_indices]
        source = test if test is not None else train
        self.test_sets = []
        for t in range(cfg.n_tasks):
            ix = self.split.test_indices[t]
            feats = source.view(0)[ix]
            labels = remap_labels(source.labels[ix], self.split.label_map)
            self.test_sets.append((feats, labels))
        self.counts = self.split.class_counts

        # method state
        self.heads = []          # quantized discovery snapshots
        self.unified = None
        self.memory = PrototypeMemory(train.dim)
        self.kmeans_step1 = None
        self.metrics = []
        self.timings = []

    # -- persistence ------------------------------------------------------

    def _log_losses(self, record):
        with open(self.out / "losses.ndjson", "a") as fh:
            fh.write(json.dumps(record) + "\n")

    def _write_state(self, completed):
        state = {"schema": SCHEMA_VERSION, "completed_step": completed,
                 "seed": self.cfg.seed, "config_hash": _config_hash(self.snapshot)}
        tmp = self.out / "state.json.tmp"
        tmp.write_text(json.dumps(state))
        os.replace(tmp, self.out / "state.json")

    def _restore(self):
        """Reload state after the last completed step; returns that step
        (0 when starting fresh)."""
        state_path = self.out / "state.json"
        if not state_path.exists():
            self.out.mkdir(parents=True, exist_ok=True)
            self.heads_dir.mkdir(exist_ok=True)
            (self.out / "config.snapshot").write_text(
                json.dumps(self.snapshot, indent=2, sort_keys=True))
            for stale in ("metrics.csv", "losses.ndjson", "report.json"):
                p = self.out / stale
                if p.exists():
                    p.unlink()
            return 0
        try:
            state = json.loads(state_path.read_text())
        except json.JSONDecodeError as err:
            raise ResumeError(f"corrupt checkpoint file: {state_path} ({err})")
        if state.get("config_hash") != _config_hash(self.snapshot):
            raise ResumeError(
                f"{state_path}: configuration does not match the checkpoint")
        completed = state["completed_step"]
        if self.cfg.method in ("baseline", "baseline++", "joint-frozen"):
            for t in range(completed):
                path = _require(self.heads_dir / f"step-{t + 1}.bin")
                try:
                    head = load_head(path, task=t)
                except ValueError as err:
                    raise ResumeError(f"corrupt checkpoint file: {path} ({err})")
                if head.n_classes != self.counts[t]:
                    raise ResumeError(
                        f"corrupt checkpoint file: {path} "
                        f"(has {head.n_classes} classes, expected {self.counts[t]})")
                self.heads.append(head)
            if completed:
                path = _require(self.out / "unified.bin")
                try:
                    self.unified = load_unified(path)
                except ValueError as err:
                    raise ResumeError(f"corrupt checkpoint file: {path} ({err})")
        if self.cfg.method == "baseline++" and completed:
            path = _require(self.out / "memory.bin")
            try:
                self.memory = PrototypeMemory.load(path)
            except ValueError as err:
                raise ResumeError(f"corrupt checkpoint file: {path} ({err})")
        try:
            self.metrics = read_metrics_csv(_require(self.out / "metrics.csv"))
        except (ValueError, KeyError) as err:
            raise ResumeError(
                f"corrupt checkpoint file: {self.out / 'metrics.csv'} ({err})")
        if len(self.metrics) != completed:
            raise ResumeError(
                f"corrupt checkpoint file: {self.out / 'metrics.csv'} "
                f"({len(self.metrics)} rows, expected {completed})")
        return completed

    # -- per-step work ----------------------------------------------------

    def _train_cfg(self, purpose, step):
        return replace(self.cfg.train, seed=child_seed(self.cfg.seed, purpose, step))

    def _discover(self, t):
        head = discover_task(self.task_train[t], self.counts[t],
                             self._train_cfg(_DISCOVER, t), task=t,
                             log=self._log_losses)
        _quantize_head(head)
        save_head(head, self.heads_dir / f"step-{t + 1}.bin")
        self.heads.append(head)
        return head

    def _step_heads(self, t):
        head = self._discover(t)
        method = self.cfg.method
        if method == "baseline":
            self.unified = concat(self.heads)
        elif method == "baseline++":
            if t == 0:
                self.unified = concat([head.copy()])
            else:
                self.unified.heads.append(head.copy())
                self.unified = concat(self.unified.heads)
                ktrfr_finetune(self.unified, self.task_train[t], head,
                               self.memory, self._train_cfg(_KTRFR, t),
                               log=self._log_losses, task=t)
                for h in self.unified.heads:
                    _quantize_head(h)
            offset = self.unified.block(t)[0]
            self.memory.extend(
                compute_prototypes(self.task_train[t], head, t, offset))
            self.memory.save(self.out / "memory.bin")
        else:  # joint-frozen
            self.unified = joint_frozen(self.task_train[:t + 1],
                                        self.counts[:t + 1],
                                        self._train_cfg(_JOINT, t),
                                        heads=self.heads,
                                        log=self._log_losses)
            for h in self.unified.heads:
                _quantize_head(h)
        save_unified(self.unified, self.out / "unified.bin")

        tests = self.test_sets[:t + 1]
        acc = overall_accuracy(self.unified, tests)
        per_task = per_task_accuracy(self.unified, tests)
        forget = maximum_forgetting(self.heads[0], self.unified, tests)
        n = sum(len(y) for _, y in tests)
        return StepMetrics(step=t + 1, accuracy=acc, forgetting=forget,
                           per_task_acc=per_task, n_samples=n)

    def _kmeans_centers(self, t):
        pooled = np.concatenate(
            [ds.view(0) for ds in self.task_train[:t + 1]], axis=0)
        k = sum(self.counts[:t + 1])
        cfg = KmeansConfig(k=k, seed=child_seed(self.cfg.seed, _KMEANS, t))
        return kmeans_fit(pooled, cfg)[0]

    def _step_kmeans(self, t):
        centers = self._kmeans_centers(t)
        if self.kmeans_step1 is None:
            self.kmeans_step1 = self._kmeans_centers(0)

        tests = self.test_sets[:t + 1]
        feats = np.concatenate([z for z, _ in tests], axis=0)
        labels = np.concatenate([y for _, y in tests], axis=0)
        preds = kmeans_assign(feats, centers)
        k, n_classes = centers.shape[0], int(labels.max()) + 1
        acc = clustering_accuracy(preds, labels, k, n_classes)
        mapping = match_clusters(preds, labels, k, n_classes)
        correct = mapping[preds] == labels
        bounds = np.cumsum([0] + [len(y) for _, y in tests])
        per_task = [float(correct[a:b].mean()) for a, b in zip(bounds, bounds[1:])]

        z1, y1 = tests[0]
        pred1 = kmeans_assign(z1, self.kmeans_step1)
        n1 = max(self.counts[0], int(y1.max()) + 1)
        acc_specific = clustering_accuracy(pred1, y1, n1, n1)
        forget = acc_specific - per_task[0]
        n = sum(len(y) for _, y in tests)
        return StepMetrics(step=t + 1, accuracy=acc, forgetting=forget,
                           per_task_acc=per_task, n_samples=n)

    # -- driver -----------------------------------------------------------

    def run(self, stop_after=None):
        completed = self._restore()
        if self.cfg.method == "kmeans" and completed:
            self.kmeans_step1 = self._kmeans_centers(0)
        for t in range(completed, self.cfg.n_tasks):
            started = time.perf_counter()
            if self.cfg.method == "kmeans":
                row = self._step_kmeans(t)
            else:
                row = self._step_heads(t)
            self.timings.append(time.perf_counter() - started)
            self.metrics.append(row)
            append_metrics_csv(self.out / "metrics.csv", row, write_header=(t == 0))
            self._write_state(t + 1)
            if stop_after is not None and t + 1 >= stop_after:
                # Budgeted partial run: checkpoints are complete, the final
                # report is written by the resuming invocation.
                return RunReport(config=self.snapshot, steps=self.metrics,
                                 timings=self.timings)
        report = RunReport(config=self.snapshot, steps=self.metrics,
                           timings=self.timings)
        (self.out / "report.json").write_text(json.dumps({
            "config": report.config,
            "steps": [asdict(m) for m in report.steps],
            "timings": report.timings,
            "version": report.version,
        }, indent=2))
        return report


def run_experiment(cfg, stop_after=None):
    """Execute (or resume) an experiment; returns the final RunReport.

    `stop_after` caps the number of completed steps for this invocation
    (the run resumes from its checkpoints on the next call)."""
    return _Runner(cfg).run(stop_after)


def rescore(run_dir):
    """Re-evaluate the final checkpoint of a finished run; returns the
    recomputed final StepMetrics."""
    out = Path(run_dir)
    snap_path = _require(out / "config.snapshot")
    cfg = config_from_snapshot(json.loads(snap_path.read_text()))
    runner = _Runner(cfg)
    t = cfg.n_tasks - 1
    if cfg.method == "kmeans":
        runner.kmeans_step1 = runner._kmeans_centers(0)
        return runner._step_kmeans(t)
    runner.unified = load_unified(_require(out / "unified.bin"))
    step1 = load_head(_require(out / "heads" / "step-1.bin"), task=0)
    tests = runner.test_sets
    acc = overall_accuracy(runner.unified, tests)
    per_task = per_task_accuracy(runner.unified, tests)
    forget = maximum_forgetting(step1, runner.unified, tests)
    return StepMetrics(step=t + 1, accuracy=acc, forgetting=forget,
                       per_task_acc=per_task,
                       n_samples=sum(len(y) for _, y in tests))


def _build_config(exp, data, train, sinkhorn):
    from .sinkhorn import SinkhornConfig

    synth = data.pop("synthetic", None)
    if synth is not None:
        synth = SyntheticSpec(**synth)
    data_cfg = DataConfig(train_path=data.pop("train_path", None),
                          test_path=data.pop("test_path", None),
                          synthetic=synth)
    if data:
        raise ValueError(f"unknown [data] keys: {sorted(data)}")
    train_cfg = TrainConfig(**train, sinkhorn=SinkhornConfig(**sinkhorn))
    return ExperimentConfig(
        method=exp.pop("method"),
        data=data_cfg,
        n_tasks=int(exp.pop("steps")),
        train=train_cfg,
        out_dir=str(exp.pop("out_dir", "run")),
        seed=int(exp.pop("seed", 0)),
    )


def config_from_tree(tree):
    """Build an ExperimentConfig from a parsed TOML config tree.

    Schema (version 1):
        schema = 1
        [experiment]  method, steps, seed, out_dir
        [data]        train_path / test_path, or [data.synthetic] with
                      classes, per_class, dim, views, center_scale,
                      within_std, seed
        [train]       epochs, batch_size, base_lr, momentum, weight_decay,
                      temperature, jitter_sigma
        [sinkhorn]    n_iters, epsilon
    """
    tree = dict(tree)
    schema = tree.pop("schema", SCHEMA_VERSION)
    if schema != SCHEMA_VERSION:
        raise ValueError(f"unsupported config schema {schema}")
    exp = dict(tree.pop("experiment", {}))
    data = dict(tree.pop("data", {}))
    train = dict(tree.pop("train", {}))
    sinkhorn = dict(tree.pop("sinkhorn", {}))
    if tree:
        raise ValueError(f"unknown config sections: {sorted(tree)}")
    if "method" not in exp or "steps" not in exp:
        raise ValueError("[experiment] requires 'method' and 'steps'")
    cfg = _build_config(exp, data, train, sinkhorn)
    if exp:
        raise ValueError(f"unknown [experiment] keys: {sorted(exp)}")
    return cfg


def config_from_snapshot(snap):
    """Rebuild an ExperimentConfig from a config.snapshot JSON tree."""
    snap = dict(snap)
    snap.pop("schema", None)
    train = dict(snap["train"])
    sinkhorn = dict(train.pop("sinkhorn"))
    exp = {"method": snap["method"], "steps": snap["n_tasks"],
           "out_dir": snap["out_dir"], "seed": snap["seed"]}
    return _build_config(exp, dict(snap["data"]), train, sinkhorn)
