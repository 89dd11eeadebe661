import json

import pytest

from incd.discovery import TrainConfig
from incd.orchestrator import (DataConfig, ExperimentConfig, ResumeError,
                               SyntheticSpec, config_from_snapshot,
                               config_from_tree, config_snapshot, rescore,
                               run_experiment)


def small_config(method, out_dir, n_tasks=3, seed=11, epochs=12):
    return ExperimentConfig(
        method=method,
        data=DataConfig(synthetic=SyntheticSpec(
            classes=3 * n_tasks, per_class=40, dim=16, views=2,
            center_scale=8.0, within_std=1.0, seed=7)),
        n_tasks=n_tasks,
        train=TrainConfig(epochs=epochs, batch_size=64, seed=0),
        out_dir=str(out_dir),
        seed=seed,
    )


class TestRunStructure:
    def test_steps_are_ordered_and_complete(self, tmp_path):
        report = run_experiment(small_config("baseline", tmp_path / "b"))
        assert [m.step for m in report.steps] == [1, 2, 3]
        assert all(0.0 <= m.accuracy <= 1.0 for m in report.steps)
        assert all(-1.0 <= m.forgetting <= 1.0 for m in report.steps)
        assert all(len(m.per_task_acc) == m.step for m in report.steps)
        out = tmp_path / "b"
        for name in ("config.snapshot", "state.json", "metrics.csv",
                     "report.json", "losses.ndjson", "unified.bin"):
            assert (out / name).exists(), name
        for t in (1, 2, 3):
            assert (out / "heads" / f"step-{t}.bin").exists()

    def test_first_step_forgetting_is_zero(self, tmp_path):
        report = run_experiment(small_config("baseline", tmp_path / "b"))
        assert report.steps[0].forgetting == 0.0

    def test_baselines_agree_at_step_one(self, tmp_path):
        rep_a = run_experiment(small_config("baseline", tmp_path / "a"))
        rep_b = run_experiment(small_config("baseline++", tmp_path / "b"))
        first_a, first_b = rep_a.steps[0], rep_b.steps[0]
        assert first_a.accuracy == first_b.accuracy
        assert first_a.forgetting == first_b.forgetting
        assert first_a.per_task_acc == first_b.per_task_acc

    def test_losses_ndjson_is_parseable(self, tmp_path):
        run_experiment(small_config("baseline", tmp_path / "b"))
        lines = (tmp_path / "b" / "losses.ndjson").read_text().splitlines()
        records = [json.loads(line) for line in lines]
        assert {r["task"] for r in records} == {0, 1, 2}
        assert all(set(r) == {"task", "epoch", "loss"} for r in records)

    def test_kmeans_method_runs(self, tmp_path):
        report = run_experiment(small_config("kmeans", tmp_path / "k"))
        assert len(report.steps) == 3
        assert report.steps[-1].accuracy >= 0.8  # separable blobs


class TestDeterminismAndResume:
    def test_identical_runs_identical_metrics(self, tmp_path):
        run_experiment(small_config("baseline++", tmp_path / "one"))
        run_experiment(small_config("baseline++", tmp_path / "two"))
        a = (tmp_path / "one" / "metrics.csv").read_bytes()
        b = (tmp_path / "two" / "metrics.csv").read_bytes()
        assert a == b

    @pytest.mark.parametrize("method", ["baseline", "baseline++", "kmeans",
                                        "joint-frozen"])
    def test_kill_and_resume_matches_uninterrupted(self, tmp_path, method):
        n_tasks, kill_at = 3, 2
        run_experiment(small_config(method, tmp_path / "full", n_tasks=n_tasks,
                                    epochs=6))
        partial_cfg = small_config(method, tmp_path / "resumed",
                                   n_tasks=n_tasks, epochs=6)
        partial = run_experiment(partial_cfg, stop_after=kill_at)
        assert len(partial.steps) == kill_at
        resumed = run_experiment(partial_cfg)
        assert len(resumed.steps) == n_tasks
        a = (tmp_path / "full" / "metrics.csv").read_bytes()
        b = (tmp_path / "resumed" / "metrics.csv").read_bytes()
        assert a == b

    def test_resume_rejects_config_change(self, tmp_path):
        cfg = small_config("baseline", tmp_path / "r")
        run_experiment(cfg, stop_after=1)
        changed = small_config("baseline", tmp_path / "r", seed=99)
        with pytest.raises(ResumeError, match="configuration"):
            run_experiment(changed)

    def test_resume_names_corrupt_file(self, tmp_path):
        cfg = small_config("baseline", tmp_path / "r")
        run_experiment(cfg, stop_after=2)
        target = tmp_path / "r" / "heads" / "step-2.bin"
        target.write_bytes(target.read_bytes()[:-7])
        with pytest.raises(ResumeError, match="step-2.bin"):
            run_experiment(cfg)

    def test_resume_detects_missing_artifact(self, tmp_path):
        cfg = small_config("baseline++", tmp_path / "r")
        run_experiment(cfg, stop_after=2)
        (tmp_path / "r" / "memory.bin").unlink()
        with pytest.raises(ResumeError, match="memory.bin"):
            run_experiment(cfg)


class TestRescore:
    def test_rescore_matches_final_metrics(self, tmp_path):
        report = run_experiment(small_config("baseline++", tmp_path / "r"))
        row = rescore(tmp_path / "r")
        final = report.steps[-1]
        assert row.step == final.step
        assert row.accuracy == final.accuracy
        assert row.forgetting == final.forgetting
        assert row.per_task_acc == final.per_task_acc


class TestConfigParsing:
    def test_toml_tree_round_trip(self):
        tree = {
            "schema": 1,
            "experiment": {"method": "baseline++", "steps": 4, "seed": 3,
                           "out_dir": "runs/x"},
            "data": {"synthetic": {"classes": 8, "per_class": 20, "dim": 32,
                                   "views": 2, "center_scale": 6.0,
                                   "within_std": 1.0, "seed": 1}},
            "train": {"epochs": 17, "batch_size": 128, "temperature": 0.2},
            "sinkhorn": {"n_iters": 5, "epsilon": 0.1},
        }
        cfg = config_from_tree(tree)
        assert cfg.method == "baseline++"
        assert cfg.n_tasks == 4
        assert cfg.train.epochs == 17
        assert cfg.train.sinkhorn.n_iters == 5
        assert cfg.data.synthetic.classes == 8

    def test_snapshot_round_trip(self, tmp_path):
        cfg = small_config("joint-frozen", tmp_path / "x", seed=5)
        back = config_from_snapshot(config_snapshot(cfg))
        assert back == cfg

    def test_file_data_config(self):
        tree = {
            "experiment": {"method": "kmeans", "steps": 2},
            "data": {"train_path": "train.msce", "test_path": "test.msce"},
        }
        cfg = config_from_tree(tree)
        assert cfg.data.train_path == "train.msce"
        assert cfg.data.test_path == "test.msce"

    def test_unknown_sections_rejected(self):
        with pytest.raises(ValueError, match="unknown config sections"):
            config_from_tree({"experiment": {"method": "baseline", "steps": 2},
                              "data": {"synthetic": {}}, "extra": {}})

    def test_unknown_method_rejected(self):
        with pytest.raises(ValueError, match="unknown method"):
            config_from_tree({"experiment": {"method": "magic", "steps": 2},
                              "data": {"synthetic": {}}})

    def test_both_data_sources_rejected(self):
        with pytest.raises(ValueError, match="exactly one"):
            DataConfig(train_path="x.msce", synthetic=SyntheticSpec())

    def test_missing_required_keys_rejected(self):
        with pytest.raises(ValueError, match="requires"):
            config_from_tree({"experiment": {"method": "baseline"},
                              "data": {"synthetic": {}}})
