"""
Integration tests for the lvat-lab command line.

Commands run in-process through ``main`` against tiny configurations in tmp directories.
"""

import json
import logging

import numpy as np
import pandas as pd
import pytest

from lvat_lab.autodiff import tensor as T
from lvat_lab.autodiff.gradcheck import GradCheckCase
from lvat_lab.autodiff.tensor import primitive
from lvat_lab.cli.main import load_transformer_checkpoint, main
from lvat_lab.exceptions import TapeError
from lvat_lab.models.vae import VaeModel
from lvat_lab.utils.logger import ROOT_LOGGER


def run_cli(*argv) -> int:
    """Run ``main`` and drop the log handler it installs on the captured stderr."""
    logger = logging.getLogger(ROOT_LOGGER)
    handlers = list(logger.handlers)
    try:
        return main([str(a) for a in argv])
    finally:
        logger.handlers[:] = handlers


def _bad_square_case() -> GradCheckCase:
    def build(t):
        a = t["a"]
        return T.reduce_sum(primitive("bad_square", (a,), a.values**2, lambda g: (g * a.values,)))

    return GradCheckCase("bad_square", build, {"a": np.array([0.5, -1.5])})


@pytest.fixture
def run_config(tiny_run_config, write_config):
    return write_config(tiny_run_config)


@pytest.fixture
def trained(run_config, tmp_path, capsys):
    """Output directory of a finished VAT classifier run."""
    out = tmp_path / "vat"
    assert run_cli("train-classifier", "--config", run_config, "--out", out) == 0
    capsys.readouterr()
    return out


# ============================================================================
# Gradient oracle and schema
# ============================================================================


class TestGradcheckCommand:
    """Test the gradcheck subcommand."""

    def test_all_cases_pass(self, capsys):
        """Every registered graph passes and is listed."""
        assert run_cli("gradcheck") == 0
        lines = capsys.readouterr().out.strip().splitlines()
        rows = [line for line in lines[1:-1] if line.endswith(" ok")]
        assert len(rows) >= 12
        assert lines[-1] == f"{len(rows)}/{len(rows)} cases passed"

    def test_corrupted_gradient_fails(self, capsys, mocker):
        """A wrong backward pass exits 1 and names the worst case."""
        mocker.patch("lvat_lab.cli.main.default_cases", return_value=[_bad_square_case()])
        assert run_cli("gradcheck") == 1
        out = capsys.readouterr().out
        assert "FAIL" in out
        assert "worst offender: bad_square" in out

    def test_tolerance_from_environment(self, capsys, mocker, monkeypatch):
        """LVAT_GRADCHECK_TOLERANCE loosens the pass threshold."""
        mocker.patch("lvat_lab.cli.main.default_cases", return_value=[_bad_square_case()])
        monkeypatch.setenv("LVAT_GRADCHECK_TOLERANCE", "10")
        assert run_cli("gradcheck") == 0


class TestSchemaAndUsage:
    """Test the schema command and usage errors."""

    def test_schema(self, capsys):
        """The run-config schema is printed as JSON."""
        assert run_cli("schema") == 0
        schema = json.loads(capsys.readouterr().out)
        assert {"data", "regularizer", "seeds"} <= set(schema["properties"])

    def test_unknown_command(self):
        """Unknown subcommands are usage errors."""
        assert run_cli("fly") == 2

    def test_no_command(self):
        """A subcommand is required."""
        assert run_cli() == 2

    def test_invalid_environment(self, monkeypatch):
        """A bad LVAT_LOG is a usage error."""
        monkeypatch.setenv("LVAT_LOG", "loud")
        assert run_cli("schema") == 2


# ============================================================================
# Training
# ============================================================================


class TestTrainTransformer:
    """Test transformer pre-training."""

    def test_writes_artifacts(self, run_config, tmp_path, capsys):
        """Checkpoint, loss history and summary land in the output directory."""
        out = tmp_path / "flow"
        assert run_cli("train-transformer", "--config", run_config, "--out", out) == 0
        printed = json.loads(capsys.readouterr().out)
        assert printed["kind"] == "flow"
        assert printed["epochs"] == 2
        assert (out / "transformer.json").is_file()
        history = pd.read_csv(out / "transformer_loss.csv")
        assert list(history.columns) == ["epoch", "lr", "loss", "held_out_loss"]
        assert len(history) == 2
        assert json.loads((out / "transformer_summary.json").read_text()) == printed

    def test_flow_trains_at_default_rate(self, run_config, tmp_path):
        """Without an explicit rate the flow history records 1e-4."""
        out = tmp_path / "flow"
        assert run_cli("train-transformer", "--config", run_config, "--out", out) == 0
        assert pd.read_csv(out / "transformer_loss.csv")["lr"].tolist() == [1e-4, 1e-4]

    def test_vae_on_two_moons(self, run_config, tmp_path):
        """A VAE with the default latent size fits 2-D moons."""
        out = tmp_path / "vae"
        args = ("--config", run_config, "--set", "transformer.kind=vae", "--out", out)
        assert run_cli("train-transformer", *args) == 0
        vae = load_transformer_checkpoint(out / "transformer.json")
        assert isinstance(vae, VaeModel)
        assert vae.latent_dim == 2

    def test_vae_latent_larger_than_data(self, run_config, tmp_path):
        """An explicit latent size above the data dimension exits 2."""
        code = run_cli(
            "train-transformer",
            "--config",
            run_config,
            "--set",
            "transformer.kind=vae",
            "--set",
            "transformer.latent_dim=3",
            "--out",
            tmp_path / "vae",
        )
        assert code == 2

    def test_missing_config(self, tmp_path):
        """A missing config file exits 2."""
        assert run_cli("train-transformer", "--config", tmp_path / "absent.json") == 2

    def test_invalid_config(self, tiny_run_config, write_config, tmp_path):
        """Unknown keys exit 2."""
        tiny_run_config["regularizer"]["strength"] = 3
        path = write_config(tiny_run_config)
        assert run_cli("train-transformer", "--config", path, "--out", tmp_path) == 2

    def test_malformed_override(self, run_config, tmp_path):
        """--set needs KEY=VALUE."""
        assert run_cli("train-transformer", "--config", run_config, "--set", "epochs") == 2


class TestTrainClassifier:
    """Test classifier training and its artifacts."""

    def test_artifacts(self, trained, tiny_run_config):
        """Checkpoint, metrics, test split and summaries are written."""
        assert (trained / "classifier_seed0.json").is_file()
        assert (trained / "test.csv").is_file()
        metrics = pd.read_csv(trained / "metrics_seed0.csv")
        assert list(metrics.columns) == [
            "step",
            "lr",
            "loss_sl",
            "loss_usl",
            "loss_total",
            "test_error",
        ]
        assert len(metrics) == tiny_run_config["trainer"]["total_updates"]
        summary = json.loads((trained / "summary.json").read_text())
        assert summary["mode"] == "ssl"
        assert summary["regularizer"] == "vat"
        assert summary["per_seed"][0]["n_labeled"] == 10
        assert 0.0 <= summary["final_test_error"] <= 1.0
        assert summary["std_test_error"] == 0.0

    def test_summary_csv(self, trained):
        """One row per seed followed by mean and std rows."""
        rows = pd.read_csv(trained / "summary.csv", dtype={"seed": str})
        assert rows["seed"].tolist() == ["0", "mean", "std"]
        assert rows["final_test_error"][1] == rows["final_test_error"][0]

    def test_reproducible(self, run_config, trained, tmp_path):
        """Re-running a configuration reproduces the metrics byte for byte."""
        again = tmp_path / "again"
        assert run_cli("train-classifier", "--config", run_config, "--out", again) == 0
        for name in ("metrics_seed0.csv", "classifier_seed0.json", "summary.json"):
            assert (again / name).read_bytes() == (trained / name).read_bytes()

    def test_multiple_seeds(self, tiny_run_config, write_config, tmp_path):
        """Each seed gets its own files; the summary averages them."""
        tiny_run_config["seeds"] = [0, 1]
        out = tmp_path / "seeds"
        path = write_config(tiny_run_config)
        assert run_cli("train-classifier", "--config", path, "--out", out) == 0
        summary = json.loads((out / "summary.json").read_text())
        errors = [r["final_test_error"] for r in summary["per_seed"]]
        assert summary["final_test_error"] == pytest.approx(np.mean(errors))
        assert (out / "metrics_seed1.csv").is_file()

    def test_set_and_seed_overrides(self, run_config, tmp_path):
        """--set and --seed change the run before validation."""
        out = tmp_path / "override"
        code = run_cli(
            "train-classifier",
            "--config",
            run_config,
            "--set",
            "trainer.total_updates=7",
            "--set",
            "data.n_labeled=null",
            "--seed",
            "3",
            "--out",
            out,
        )
        assert code == 0
        assert len(pd.read_csv(out / "metrics_seed3.csv")) == 7
        summary = json.loads((out / "summary.json").read_text())
        assert summary["mode"] == "sl"
        assert summary["seeds"] == [3]
        assert summary["per_seed"][0]["n_labeled"] == 60

    def test_lvat_without_transformer(self, run_config, tmp_path):
        """LVAT needs a transformer checkpoint."""
        code = run_cli(
            "train-classifier",
            "--config",
            run_config,
            "--set",
            "regularizer.kind=lvat-flow",
            "--out",
            tmp_path / "missing",
        )
        assert code == 2


# ============================================================================
# Evaluation and adversarial analysis
# ============================================================================


class TestEval:
    """Test the eval subcommand."""

    def test_reproduces_final_test_error(self, trained, capsys):
        """Evaluating the saved classifier on test.csv gives the summary's error."""
        checkpoint = trained / "classifier_seed0.json"
        assert run_cli("eval", "--checkpoint", checkpoint, "--data", trained / "test.csv") == 0
        report = json.loads(capsys.readouterr().out)
        summary = json.loads((trained / "summary.json").read_text())
        assert report["n"] == 40
        assert report["error_rate"] == summary["final_test_error"]
        assert json.loads((trained / "eval.json").read_text()) == report

    def test_empty_dataset(self, trained, tmp_path):
        """A CSV without rows exits 2."""
        empty = tmp_path / "empty.csv"
        empty.write_text("x0,x1,label\n")
        checkpoint = trained / "classifier_seed0.json"
        assert run_cli("eval", "--checkpoint", checkpoint, "--data", empty) == 2

    def test_missing_checkpoint(self, trained, tmp_path):
        """A missing checkpoint exits 2."""
        code = run_cli("eval", "--checkpoint", tmp_path / "x.json", "--data", trained / "test.csv")
        assert code == 2

    def test_tape_error_exits_1(self, trained, mocker):
        """A misuse of the autodiff tape during evaluation exits 1."""
        mocker.patch("lvat_lab.cli.main.count_errors", side_effect=TapeError("foreign root"))
        checkpoint = trained / "classifier_seed0.json"
        assert run_cli("eval", "--checkpoint", checkpoint, "--data", trained / "test.csv") == 1

    def test_wrong_checkpoint_kind(self, run_config, tmp_path):
        """A transformer checkpoint is not a classifier."""
        out = tmp_path / "flow"
        assert run_cli("train-transformer", "--config", run_config, "--out", out) == 0
        data = tmp_path / "data.csv"
        data.write_text("x0,x1,label\n0.5,0.5,1\n")
        assert run_cli("eval", "--checkpoint", out / "transformer.json", "--data", data) == 2


class TestGenAdv:
    """Test the adversarial-distance export."""

    def test_vat_distances_are_constant(self, run_config, trained, capsys):
        """Input-space VAT puts every example exactly epsilon away."""
        code = run_cli(
            "gen-adv", "--config", run_config, "--out", trained, "--n", 50, "--bins", 4
        )
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert report["space"] == "input"
        assert report["coefficient_of_variation"] < 1e-6
        adv = pd.read_csv(trained / "adv.csv")
        assert list(adv.columns) == [
            "sample_id",
            "input_space_distance",
            "latent_space_distance",
            "reconstruction_distance",
            "kl_cost",
        ]
        assert len(adv) == 50
        np.testing.assert_allclose(adv["input_space_distance"], 0.5, atol=1e-9)
        assert adv["latent_space_distance"].isna().all()
        hist = pd.read_csv(trained / "adv_hist.csv")
        assert len(hist) == 4
        assert hist["count"].sum() == 50

    def test_lvat_flow_pipeline(self, run_config, tmp_path, capsys):
        """Transformer, LVAT classifier and latent distances end to end."""
        out = tmp_path / "lvat"
        lvat = ("--set", "regularizer.kind=lvat-flow", "--out", out)
        assert run_cli("train-transformer", "--config", run_config, *lvat) == 0
        assert run_cli("train-classifier", "--config", run_config, *lvat) == 0
        capsys.readouterr()
        assert run_cli("gen-adv", "--config", run_config, *lvat, "--n", 30) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["space"] == "latent"
        adv = pd.read_csv(out / "adv.csv")
        np.testing.assert_allclose(adv["latent_space_distance"], 0.5, atol=1e-9)
        assert (adv["reconstruction_distance"] < 1e-8).all()
        assert not (out / "adv_hist.csv").exists()

    def test_more_samples_than_rows(self, run_config, trained):
        """n larger than the training set samples with replacement."""
        assert run_cli("gen-adv", "--config", run_config, "--out", trained, "--n", 75) == 0
        assert len(pd.read_csv(trained / "adv.csv")) == 75

    @pytest.mark.parametrize("flag", ["--n", "--bins"])
    def test_non_positive_counts(self, run_config, trained, flag):
        """--n and --bins must be positive."""
        assert run_cli("gen-adv", "--config", run_config, "--out", trained, flag, 0) == 2

    def test_missing_classifier(self, run_config, tmp_path):
        """Without a trained classifier the command exits 2."""
        assert run_cli("gen-adv", "--config", run_config, "--out", tmp_path, "--n", 5) == 2


# ============================================================================
# Regularizer comparison
# ============================================================================


class TestVatAgainstBaseline:
    """Test that VAT helps on a small two-moons problem."""

    def test_vat_lowers_mean_test_error(self, write_config, tmp_path):
        """Three seeds with 10 labels: VAT ends below the unregularized classifier."""
        path = write_config(
            {
                "data": {
                    "dataset": "two_moons",
                    "n_train": 500,
                    "n_test": 500,
                    "noise": 0.1,
                    "n_labeled": 10,
                },
                "classifier": {"hidden": [32, 32]},
                "regularizer": {"kind": "vat", "epsilon": 0.4},
                "trainer": {
                    "total_updates": 1000,
                    "decay_updates": 300,
                    "eval_every": 500,
                    "log_every": 500,
                },
                "seeds": [0, 1, 2],
            }
        )
        vat, baseline = tmp_path / "vat", tmp_path / "none"
        assert run_cli("train-classifier", "--config", path, "--out", vat) == 0
        args = ("--config", path, "--set", "regularizer.kind=none", "--out", baseline)
        assert run_cli("train-classifier", *args) == 0
        vat_error = json.loads((vat / "summary.json").read_text())["final_test_error"]
        baseline_error = json.loads((baseline / "summary.json").read_text())["final_test_error"]
        assert vat_error < baseline_error
