"""Multi-step incremental novel-class discovery over frozen embeddings.

A library (and small CLI) for discovering disjoint sets of novel classes
arriving as a sequence of unlabelled embedding datasets: per-task
self-supervised cluster discovery with balanced-assignment pseudo-labels,
cosine-normalized task heads concatenated for task-agnostic inference, and
Gaussian-prototype feature replay against forgetting, plus the K-means and
joint-training reference methods and a Hungarian-matched evaluation
protocol.
"""

__version__ = "0.1.0"

from .classifier import (CosineHead, UnifiedHead, concat, cosine_logits,
                         init_head, predict, renormalize_weights)
from .data import (EmbeddingDataset, FormatError, TaskSplit, make_blobs,
                   read_embeddings, split_sequence, write_embeddings)
from .discovery import TrainConfig, discover_task, make_views, swapped_loss
from .evaluation import (StepMetrics, clustering_accuracy, hungarian,
                         maximum_forgetting, overall_accuracy)
from .numerics import (LrSchedule, OptimizerState, cosine_lr, cross_entropy,
                       l2_normalize, sgd_step, softmax)
from .orchestrator import (DataConfig, ExperimentConfig, ResumeError,
                           RunReport, SyntheticSpec, run_experiment)
from .reference import KmeansConfig, joint_frozen, kmeans_cluster
from .replay import (ClassPrototype, PrototypeMemory, compute_prototypes,
                     ktrfr_finetune, replay_batch)
from .sinkhorn import SinkhornConfig, sinkhorn_codes
