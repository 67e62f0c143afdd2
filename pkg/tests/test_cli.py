"""Command line interface tests (in-process, no subprocesses)."""

import json
import os

import numpy as np
import pytest

from genrom.cli import main
from genrom.config import CampaignConfig
from genrom.matio import load_array, save_array


def tiny_config() -> CampaignConfig:
    return CampaignConfig.from_dict({
        "master_seed": 55,
        "chain": {"n_dof": 8},
        "time": {"dt": 0.02, "n_steps": 100},
        "excitation": {"n_components": 15},
        "sampling": {"n_train": 10, "n_test": 2},
        "twin": {"n_sensors": 4, "pca_dim": 5},
        "reduction": {"pod_tol": 1e-6, "ecsw_tau": 0.05,
                      "ecsw_max_states": 30},
        "generative": {"latent_dim": 3, "encoder_hidden": [10],
                       "decoder_hidden": [10], "epochs": 4, "batch_size": 5,
                       "learning_rate": 1e-3, "gamma_align": 0.0,
                       "gamma_rom": 0.0},
        "inference": {"hidden": [8], "epochs": 20, "batch_size": 16,
                      "learning_rate": 1e-2, "cv_folds": 2},
        "prediction": {"n_basis_draws": 4, "n_param_draws": 3},
    })


@pytest.fixture(scope="module")
def campaign(tmp_path_factory):
    """Train once via the CLI; reuse the artifact for the online commands."""
    root = tmp_path_factory.mktemp("cli")
    config_path = str(root / "config.json")
    tiny_config().to_json(config_path)
    artifact_dir = str(root / "artifact")
    code = main(["train", "--config", config_path,
                 "--out-dir", artifact_dir, "--quiet"])
    assert code == 0
    return root, config_path, artifact_dir


class TestUsageErrors:
    def test_no_command(self):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 64

    def test_unknown_command(self):
        with pytest.raises(SystemExit) as exc:
            main(["transmogrify"])
        assert exc.value.code == 64

    def test_missing_required_option(self):
        with pytest.raises(SystemExit) as exc:
            main(["simulate"])
        assert exc.value.code == 64

    def test_unknown_flag(self):
        with pytest.raises(SystemExit) as exc:
            main(["simulate", "--out", "x.grm", "--turbo"])
        assert exc.value.code == 64


class TestSimulate:
    def test_default_config_run(self, tmp_path, capsys):
        out = str(tmp_path / "traj.grm")
        code = main(["simulate", "--out", out, "--params", "amp_scale=0.5"])
        assert code == 0
        u = load_array(out)
        assert u.shape[0] == 20 and u.shape[1] == 501
        text = capsys.readouterr().out
        assert "amp_scale=0.5" in text

    def test_config_file_run(self, campaign, tmp_path):
        _, config_path, _ = campaign
        out = str(tmp_path / "traj.grm")
        assert main(["simulate", "--config", config_path,
                     "--out", out]) == 0
        assert load_array(out).shape == (8, 101)

    def test_unknown_parameter_exits_2(self, tmp_path, capsys):
        code = main(["simulate", "--out", str(tmp_path / "x.grm"),
                     "--params", "bogus=1.0"])
        assert code == 2
        assert "configuration error" in capsys.readouterr().err

    def test_malformed_override_exits_2(self, tmp_path):
        assert main(["simulate", "--out", str(tmp_path / "x.grm"),
                     "--params", "amp_scale:2"]) == 2

    def test_divergent_run_exits_3(self, tmp_path, capsys):
        code = main(["simulate", "--out", str(tmp_path / "x.grm"),
                     "--params", "amp_scale=1e9,cubic_scale=1e9"])
        assert code == 3
        assert "numeric failure" in capsys.readouterr().err

    def test_missing_config_file_exits_2(self, tmp_path):
        assert main(["simulate", "--config", str(tmp_path / "nope.json"),
                     "--out", str(tmp_path / "x.grm")]) == 2


class TestTrainedCampaign:
    def test_artifact_directory_contents(self, campaign):
        _, _, artifact_dir = campaign
        for name in ("manifest.json", "config.json", "summary.json"):
            assert os.path.exists(os.path.join(artifact_dir, name))
        assert os.path.isdir(os.path.join(artifact_dir, "arrays"))

    def test_predict_command(self, campaign, capsys):
        root, _, artifact_dir = campaign
        from genrom.pipeline import _monitoring_signals, load_artifact
        art = load_artifact(artifact_dir)
        cfg = art.config
        p = art.space.nominal()
        signals = _monitoring_signals(art.twin, art.sensors, p, cfg.time.dt,
                                      cfg.time.n_steps, cfg.twin.noise_ratio,
                                      seed=99)
        signals_path = str(root / "signals.grm")
        save_array(signals_path, signals)
        out_dir = str(root / "prediction")
        code = main(["predict", "--artifact", artifact_dir,
                     "--signals", signals_path, "--out-dir", out_dir,
                     "--seed", "3"])
        assert code == 0
        for name in ("mean", "band", "lower", "upper"):
            assert load_array(os.path.join(out_dir, f"{name}.grm")).shape \
                == (8, 101)
        params = json.load(open(os.path.join(out_dir, "params.json")))
        assert params["names"] == list(art.space.names)
        assert params["n_failed"] == 0
        assert "inferred parameters" in capsys.readouterr().out

    def test_predict_missing_signals_exits_2(self, campaign):
        root, _, artifact_dir = campaign
        assert main(["predict", "--artifact", artifact_dir,
                     "--signals", str(root / "missing.grm"),
                     "--out-dir", str(root / "p2")]) == 2

    def test_evaluate_and_report_commands(self, campaign, capsys):
        root, _, artifact_dir = campaign
        out_dir = str(root / "evaluation")
        code = main(["evaluate", "--artifact", artifact_dir,
                     "--out-dir", out_dir, "--quiet"])
        assert code == 0
        text = capsys.readouterr().out
        assert "truncation" in text and "speedup" in text
        assert os.path.exists(os.path.join(out_dir, "report.csv"))

        plot_path = str(root / "report.png")
        code = main(["report", "--results", out_dir, "--plot", plot_path])
        assert code == 0
        text = capsys.readouterr().out
        assert "parameter band coverage" in text
        assert os.path.getsize(plot_path) > 1000

    def test_report_on_missing_directory_exits_2(self, tmp_path):
        assert main(["report", "--results", str(tmp_path / "ghost")]) == 2
