#!/usr/bin/env python3
"""All four methods on one benchmark.

Pooled K-means (allowed to see all data at once) is the pseudo lower
reference; joint training of the concatenated head on all data is the
upper reference. Averaged over seeds the incremental pipelines land
between the two, with replay closing most of the gap to joint training;
a single seed, as here, carries some noise.
"""

import tempfile
from pathlib import Path

from incd.discovery import TrainConfig
from incd.orchestrator import (DataConfig, ExperimentConfig, SyntheticSpec,
                               run_experiment)

synth = SyntheticSpec(classes=30, per_class=150, dim=64, views=2,
                      center_scale=3.0, within_std=1.0, seed=13)

rows = []
with tempfile.TemporaryDirectory() as tmp:
    for method in ("kmeans", "baseline", "baseline++", "joint-frozen"):
        cfg = ExperimentConfig(
            method=method,
            data=DataConfig(synthetic=synth),
            n_tasks=5,
            train=TrainConfig(epochs=40, batch_size=128, seed=0),
            out_dir=str(Path(tmp) / method),
            seed=13,
        )
        final = run_experiment(cfg).steps[-1]
        rows.append((method, final.accuracy, final.forgetting))

print(f"{'method':<14}{'accuracy':>10}{'forgetting':>12}")
for method, acc, forget in rows:
    print(f"{method:<14}{acc:>10.4f}{forget:>12.4f}")
