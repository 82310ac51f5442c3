import csv
import json

import numpy as np
import pytest
import yaml

from disbound.cli import main
from disbound.mutual_info import fixture_paths

from conftest import ROOT

OURS_FLAGS = ["bound", "--method", "ours", "--m", "5000", "--delta", "0.05", "--T", "1", "--sigma2", "1e-3", "--risk", "0.02", "--dist-sq", "1e-3"]


def fixture(stem):
    return [p for p in fixture_paths() if p.stem == stem][0]


def run_json(capsys, argv):
    assert main(argv) == 0
    return capsys.readouterr().out


class TestBound:
    def test_overhead_breakdown(self, capsys):
        doc = json.loads(run_json(capsys, OURS_FLAGS))
        parts = doc["extras"]["log_term_parts"]
        assert parts["disintegration_per_sample"] == pytest.approx(0.002, abs=5e-4)
        assert doc["schema_version"] == 1
        assert doc["T"] == 1

    def test_deterministic(self, capsys):
        assert run_json(capsys, OURS_FLAGS) == run_json(capsys, OURS_FLAGS)

    def test_catoni_empty_grid_is_usage_error(self, capsys):
        argv = ["bound", "--method", "catoni", "--m", "100", "--delta", "0.05", "--sigma2", "1e-3", "--risk", "0.1", "--dkl", "2", "--c-grid", ""]
        with pytest.raises(SystemExit) as exc:
            main(argv)
        assert exc.value.code == 2
        assert "--c-grid" in capsys.readouterr().err

    def test_invalid_delta_names_flag(self, capsys):
        argv = list(OURS_FLAGS)
        argv[argv.index("0.05")] = "1.5"
        with pytest.raises(SystemExit) as exc:
            main(argv)
        assert exc.value.code == 2
        assert "--delta" in capsys.readouterr().err

    def test_weights_archive(self, tmp_path, capsys):
        rng = np.random.default_rng(0)
        w, v, eps = rng.normal(size=(3, 20)) * 0.01
        archive = tmp_path / "weights.npz"
        np.savez(archive, w=w, v=v, eps=eps)
        base = ["--m", "500", "--delta", "0.05", "--sigma2", "1e-3", "--risk", "0.1", "--weights", str(archive)]
        ours = json.loads(run_json(capsys, ["bound", "--method", "ours", *base]))
        assert ours["divergence"] == pytest.approx(float((w - v) @ (w - v)) / 1e-3)
        riva = json.loads(run_json(capsys, ["bound", "--method", "rivasplata", *base]))
        dkl = float((w + eps - v) @ (w + eps - v) - eps @ eps) / 2e-3
        assert riva["divergence"] == pytest.approx(dkl)

    def test_stochastic_and_out_dir(self, tmp_path, capsys):
        argv = ["bound", "--method", "stochastic", "--m", "500", "--delta", "0.05", "--sigma2", "1e-3",
                "--risks", "0.1,0.12,0.08", "--dist-sq", "0.01", "--out-dir", str(tmp_path)]
        text = run_json(capsys, argv)
        assert (tmp_path / "bound.json").read_text() == text

    def test_config_file(self, capsys):
        doc = json.loads(run_json(capsys, ["bound", "--config", str(ROOT / "configs" / "bound_ours.yaml")]))
        assert doc["m"] == 5000 and doc["method"] == "ours"


class TestValidateAndMi:
    def test_validate_two_atom(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.yaml"
        cfg.write_text(yaml.safe_dump({
            "problem_file": str(fixture("two_atom_gibbs")),
            "simulator": {"mode": "exact", "deltas": [0.05, 0.1]},
            "maurer": {"m_max": 50},
        }))
        assert main(["validate", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 0
        with open(tmp_path / "coverage.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 10
        assert all(float(r["rate"]) <= float(r["delta"]) for r in rows)
        with open(tmp_path / "maurer.csv") as fh:
            assert all(r["passed"] == "True" for r in csv.DictReader(fh))

    def test_validate_cap_exceeded(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.yaml"
        cfg.write_text(yaml.safe_dump({
            "problem_file": str(fixture("three_atom_gibbs")),
            "enumeration_cap": 10,
            "simulator": {"mode": "exact"},
        }))
        assert main(["validate", "--config", str(cfg)]) == 2
        assert "monte_carlo" in capsys.readouterr().err

    def test_mi_independent(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.yaml"
        cfg.write_text(yaml.safe_dump({"problem_file": str(fixture("independent"))}))
        assert main(["mi", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 0
        doc = json.loads((tmp_path / "mi.json").read_text())
        assert doc["shannon"]["value"] == pytest.approx(0.0, abs=1e-12)
        assert all(abs(e["value"]) < 1e-12 for e in doc["sibson"])

    def test_missing_config(self, capsys):
        assert main(["mi", "--config", "/nonexistent.yaml"]) == 2
        assert "--config" in capsys.readouterr().err


class TestTrain:
    def _config(self, tmp_path, seed=0):
        cfg = tmp_path / "train.yaml"
        cfg.write_text(yaml.safe_dump({
            "seed": seed,
            "data": {"generator": "moons", "sizes": {"prior": 100, "posterior": 100, "test": 100}},
            "model": {"hidden": [4]},
            "training": {"epochs_prior": 2, "epochs_posterior": 1, "n_eval": 10},
        }))
        return cfg

    def test_artifacts_and_determinism(self, tmp_path, capsys):
        cfg = self._config(tmp_path)
        summaries = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert main(["train", "--config", str(cfg), "--out-dir", str(out)]) == 0
            for artifact in ("run.json", "metrics.csv", "summary.csv", "config.yaml", "timing.json"):
                assert (out / artifact).is_file()
            summaries.append((out / "summary.csv").read_text())
        assert summaries[0] == summaries[1]
        with open(tmp_path / "a" / "summary.csv") as fh:
            rows = {r["method"]: r for r in csv.DictReader(fh)}
        assert set(rows) == {"ours", "rivasplata", "blanchard", "catoni", "stochastic"}
        assert float(rows["ours"]["div_std"]) == 0.0
        with open(tmp_path / "a" / "metrics.csv") as fh:
            assert next(csv.reader(fh)) == ["epoch", "phase", "objective", "surrogate_risk", "divergence", "psi"]

    def test_bad_schema_fails_before_training(self, tmp_path, capsys):
        cfg = tmp_path / "bad.yaml"
        cfg.write_text(yaml.safe_dump({"training": {"learning_rate": 0.1}}))
        assert main(["train", "--config", str(cfg)]) == 2
        assert "learning_rate" in capsys.readouterr().err
