import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from lpvred.config import (
    ConfigError,
    PipelineConfig,
    SimulateConfig,
    config_hash,
    load_config,
)
from lpvred.nnet import TrainConfig

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"
BENCH_CFG = CONFIG_DIR / "benchmark-small.toml"


def _run_cli(*args):
    return subprocess.run([sys.executable, "-m", "lpvred", *args],
                          capture_output=True, text=True)


class TestConfigParsing:
    def test_bundled_configs_load(self):
        for name in ("benchmark-small.toml", "parafoil-desk.toml"):
            cfg = load_config(CONFIG_DIR / name)
            assert isinstance(cfg, PipelineConfig)

    def test_json_equivalence(self, tmp_path):
        cfg_toml = load_config(BENCH_CFG)
        payload = {
            "model": {"name": "analytic-benchmark"},
            "simulate": {"h": 0.01, "duration": 20.0, "trajectory_count": 6,
                         "n_samples": 4000, "seed": 1234, "validation_fraction": 0.25},
            "reduce": {"methods": ["pca"], "normalizations": ["minmax"], "n_hat": [1, 2]},
            "region": {"method": "kabsch", "n_hat": 2, "reduction": "pca",
                       "normalization": "minmax", "mc_samples": 20000},
            "compare": {"n_hat": [1, 2], "duration": 10.0, "scenario": "random-0"},
            "output": {"directory": "out-benchmark"},
        }
        json_path = tmp_path / "cfg.json"
        json_path.write_text(json.dumps(payload))
        cfg_json = load_config(json_path)
        assert cfg_json == cfg_toml
        assert config_hash(cfg_json) == config_hash(cfg_toml)

    def test_unknown_key_rejected(self, tmp_path):
        p = tmp_path / "bad.toml"
        p.write_text("[simulate]\nstep = 0.1\n")
        with pytest.raises(ConfigError):
            load_config(p)

    def test_unknown_section_rejected(self, tmp_path):
        p = tmp_path / "bad.toml"
        p.write_text("[solver]\nx = 1\n")
        with pytest.raises(ConfigError):
            load_config(p)

    def test_nhat_out_of_range_rejected(self, tmp_path):
        # the benchmark has only 3 scheduling entries
        p = tmp_path / "bad.toml"
        p.write_text(
            '[model]\nname = "analytic-benchmark"\n'
            "[simulate]\nh = 0.01\nduration = 5.0\ntrajectory_count = 2\nn_samples = 100\n"
            "[reduce]\nn_hat = [5]\n[region]\nn_hat = 5\n"
        )
        with pytest.raises(ConfigError):
            load_config(p)

    def test_invalid_fraction_rejected(self, tmp_path):
        p = tmp_path / "bad.toml"
        p.write_text("[simulate]\nvalidation_fraction = 1.5\n")
        with pytest.raises(ConfigError):
            load_config(p)

    def test_oversampling_rejected_before_compute(self, tmp_path):
        p = tmp_path / "bad.toml"
        p.write_text(
            '[model]\nname = "analytic-benchmark"\n'
            "[simulate]\nh = 0.01\nduration = 1.0\ntrajectory_count = 1\nn_samples = 100000\n"
        )
        with pytest.raises(ConfigError):
            load_config(p)


class TestDefaults:
    def test_desk_scale_simulation_defaults(self):
        sim = SimulateConfig()
        assert sim.h == 1.0 / 400.0
        assert sim.duration == 60.0
        assert sim.trajectory_count == 20
        assert sim.n_samples == 50_000

    def test_training_defaults(self):
        cfg = TrainConfig()
        assert cfg.learning_rate == 1e-5
        assert cfg.batch_size == 128
        assert cfg.epochs == 200
        assert cfg.l2_weight == 1e-4
        assert cfg.beta1 == 0.9 and cfg.beta2 == 0.999 and cfg.eps == 1e-8
        assert cfg.hidden == (64, 64, 64, 64)
        assert cfg.patience == 20


class TestCli:
    def test_config_error_exit_code(self, tmp_path):
        missing = tmp_path / "nope.toml"
        res = _run_cli("run", "--config", str(missing))
        assert res.returncode == 2
        assert "configuration error" in res.stderr

    def test_evaluate_without_dataset_names_simulate(self, tmp_path):
        res = _run_cli("evaluate", "--config", str(BENCH_CFG), "--out", str(tmp_path / "o"))
        assert res.returncode == 3
        assert "lpvred simulate" in res.stderr

    def test_evaluate_without_reduction_names_reducer(self, tmp_path):
        out = tmp_path / "o"
        assert _run_cli("simulate", "--config", str(BENCH_CFG), "--out", str(out)).returncode == 0
        assert _run_cli("embed", "--config", str(BENCH_CFG), "--out", str(out)).returncode == 0
        res = _run_cli("evaluate", "--config", str(BENCH_CFG), "--out", str(out))
        assert res.returncode == 3
        assert "reduce-pca" in res.stderr

    def test_stagewise_run_and_artifacts(self, tmp_path):
        out = tmp_path / "stage"
        for cmd in (["simulate"], ["embed"], ["reduce-pca"], ["evaluate"],
                    ["region", "--dim", "2", "--method", "kabsch"],
                    ["compare", "--nhat", "1,2"]):
            res = _run_cli(*cmd, "--config", str(BENCH_CFG), "--out", str(out))
            assert res.returncode == 0, f"{cmd}: {res.stderr}"
        region = json.loads((out / "region" / "pca_minmax_n02_region.json").read_text())
        assert region["method"] == "kabsch"
        assert "lo" in region["box"] and "hi" in region["box"]
        compare_csv = (out / "compare" / "compare_pca_minmax.csv").read_text().splitlines()
        assert "full-order_x0" in compare_csv[0]
        assert "pca-n01_x0" in compare_csv[0] and "pca-n02_x0" in compare_csv[0]

    def test_every_artifact_round_trips(self, tmp_path):
        import csv as csvmod

        from lpvred import serialize

        out = tmp_path / "full"
        res = _run_cli("run", "--config", str(BENCH_CFG), "--out", str(out))
        assert res.returncode == 0, res.stderr
        manifest = json.loads((out / "manifest.json").read_text())
        assert len(manifest["files"]) >= 6
        for entry in manifest["files"]:
            path = out / entry["path"]
            assert serialize.file_sha256(path) == entry["sha256"]
            if path.suffix in (".lpvd", ".lpvm", ".lpvn"):
                kind, meta, arrays = serialize.read_container(path)
                assert kind and isinstance(meta, dict) and arrays
            elif path.suffix == ".json":
                json.loads(path.read_text())
            elif path.suffix == ".csv":
                rows = list(csvmod.reader(path.read_text().splitlines()))
                assert len(rows) >= 2
                assert all(len(r) == len(rows[0]) for r in rows)
