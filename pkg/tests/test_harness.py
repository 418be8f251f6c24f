"""Run configuration, logging, and the training/eval pipelines end to end.

Pipeline tests run on small generated datasets so the whole module stays
in the sub-minute range while still exercising early stopping, checkpoint
reload, and the reproducibility contracts.
"""

import json
import logging
import os

import numpy as np
import pytest

from svdgcl.errors import ConfigError, DataError, NumericalError
from svdgcl.harness import (
    LOG_ENV_VAR,
    RunConfig,
    TrainResult,
    configure_logging,
    run_eval,
    run_svd_report,
    run_training,
)
from svdgcl.synth import generate_blocks


def small_config(tmp_path, name="data", **over):
    paths = generate_blocks(tmp_path / name, 12, 12, 2, 0.0, 3)
    base = dict(
        train_path=str(paths["train"]),
        test_path=str(paths["test"]),
        val_path=str(paths["val"]),
        embed_dim=8,
        epochs=12,
        eval_every=3,
        patience=3,
        batch_size=256,
        eval_ks=[3],
        checkpoint_dir=str(tmp_path / f"{name}_ck"),
    )
    base.update(over)
    return RunConfig(**base)


class TestRunConfig:
    def test_defaults_probe_cleanly(self):
        cfg = RunConfig()
        assert cfg.to_hyperparams().embed_dim == cfg.embed_dim

    @pytest.mark.parametrize(
        "bad",
        [
            dict(eval_every=0),
            dict(patience=0),
            dict(val_fraction=1.0),
            dict(eval_ks=[0]),
            dict(eval_ks=[]),
            dict(eval_ks=["soon"]),
            dict(embed_dim=0),
            dict(temperature=0.0),
            dict(svd_oversample=-1),
        ],
    )
    def test_bad_fields_rejected(self, bad):
        with pytest.raises(ConfigError):
            RunConfig(**bad)

    def test_digest_tracks_content(self):
        a = RunConfig(seed=1)
        b = RunConfig(seed=1)
        c = RunConfig(seed=2)
        assert a.digest() == b.digest()
        assert a.digest() != c.digest()
        json.dumps(a.as_dict())

    def test_from_sources_layering(self, tmp_path):
        cfg_file = tmp_path / "run.json"
        cfg_file.write_text(json.dumps({"embed_dim": 24, "lambda1": 0.4}))
        cfg = RunConfig.from_sources(cfg_file, ["embed-dim=48", "eval_ks=5,20"])
        assert cfg.embed_dim == 48  # override beats the file
        assert cfg.lambda1 == 0.4
        assert cfg.eval_ks == [5, 20]

    def test_from_sources_rejects_unknowns_and_junk(self, tmp_path):
        with pytest.raises(ConfigError, match="unknown config key"):
            RunConfig.from_sources(None, ["mystery=1"])
        with pytest.raises(ConfigError, match="key=value"):
            RunConfig.from_sources(None, ["embed_dim"])
        with pytest.raises(ConfigError, match="bad value"):
            RunConfig.from_sources(None, ["embed_dim=soon"])
        bad = tmp_path / "bad.json"
        bad.write_text("[1, 2]")
        with pytest.raises(ConfigError, match="JSON object"):
            RunConfig.from_sources(bad)
        with pytest.raises(ConfigError, match="cannot read"):
            RunConfig.from_sources(tmp_path / "absent.json")

    def test_optional_paths_accept_none_spelling(self):
        cfg = RunConfig.from_sources(None, ["log-path=none", "val-path="])
        assert cfg.log_path is None
        assert cfg.val_path is None


class TestLogging:
    def test_env_level_and_file_mirror(self, tmp_path, monkeypatch):
        monkeypatch.setenv(LOG_ENV_VAR, "WARNING")
        log_file = tmp_path / "run.log"
        configure_logging(log_file)
        lg = logging.getLogger("svdgcl")
        lg.info("quiet")
        lg.warning("loud")
        for h in lg.handlers:
            h.flush()
        text = log_file.read_text()
        assert "loud" in text and "quiet" not in text
        # message-only format: no level names or logger names in lines
        assert "WARNING" not in text

    def test_bad_level_rejected(self, monkeypatch):
        monkeypatch.setenv(LOG_ENV_VAR, "SHOUTING")
        with pytest.raises(ConfigError):
            configure_logging(None)

    def test_reconfigure_does_not_stack_handlers(self, monkeypatch):
        monkeypatch.delenv(LOG_ENV_VAR, raising=False)
        configure_logging(None)
        configure_logging(None)
        assert len(logging.getLogger("svdgcl").handlers) == 1


class TestTraining:
    def test_result_shape_and_artifacts(self, tmp_path):
        cfg = small_config(tmp_path)
        res = run_training(cfg)
        assert isinstance(res, TrainResult)
        assert res.epochs_run <= cfg.epochs
        assert len(res.epoch_seconds) == res.epochs_run
        assert res.svd_runs == 1
        assert res.best_epoch is not None
        assert os.path.exists(res.checkpoint_path)
        assert 0.0 <= res.test_result.recall[3] <= 1.0

    def test_branch_off_skips_factorization(self, tmp_path):
        cfg = small_config(tmp_path, lambda1=0.0, epochs=4)
        res = run_training(cfg)
        assert res.svd_runs == 0

    def test_log_stream_is_a_function_of_config_and_seed(self, tmp_path):
        log_a = tmp_path / "a.log"
        log_b = tmp_path / "b.log"
        cfg_a = small_config(tmp_path, name="da", epochs=6, log_path=str(log_a))
        run_training(cfg_a)
        cfg_b = small_config(tmp_path, name="db", epochs=6, log_path=str(log_b))
        run_training(cfg_b)
        assert log_a.read_text() == log_b.read_text()
        body = log_a.read_text()
        assert body.startswith("dataset M=24 N=24 ")
        assert "epoch=1 rec=" in body
        # wall-clock timings stay out of the deterministic stream
        assert "seconds" not in body and "time" not in body

    def test_seed_changes_the_stream(self, tmp_path):
        log_a = tmp_path / "a.log"
        log_b = tmp_path / "b.log"
        run_training(small_config(tmp_path, name="da", epochs=4, log_path=str(log_a)))
        run_training(small_config(tmp_path, name="db", epochs=4, seed=7, log_path=str(log_b)))
        assert log_a.read_text() != log_b.read_text()

    def test_early_stopping_respects_patience(self, tmp_path):
        cfg = small_config(tmp_path, epochs=60, eval_every=1, patience=2)
        res = run_training(cfg)
        assert res.epochs_run < 60

    def test_checkpoint_round_trip_reproduces_metrics(self, tmp_path):
        cfg = small_config(tmp_path)
        res = run_training(cfg)
        again = run_eval(cfg, res.checkpoint_path)
        assert again.recall == res.test_result.recall
        assert again.ndcg == res.test_result.ndcg

    def test_no_validation_signal_keeps_last_state(self, tmp_path):
        cfg = small_config(tmp_path, val_path=None, val_fraction=0.0, epochs=4)
        res = run_training(cfg)
        assert res.best_epoch is None
        assert os.path.exists(res.checkpoint_path)

    def test_zero_epochs_evaluates_the_init(self, tmp_path):
        cfg = small_config(tmp_path, epochs=0)
        res = run_training(cfg)
        assert res.checkpoint_path is None
        assert res.epochs_run == 0

    def test_runaway_learning_rate_raises_numerical_error(self, tmp_path):
        cfg = small_config(tmp_path, learning_rate=1e200, epochs=4)
        with pytest.raises(NumericalError, match="epoch"):
            run_training(cfg)

    def test_missing_paths_rejected(self):
        with pytest.raises(ConfigError, match="required"):
            run_training(RunConfig(epochs=1))


class TestEval:
    def test_dimension_mismatch_is_a_data_error(self, tmp_path):
        cfg = small_config(tmp_path, epochs=3)
        res = run_training(cfg)
        other = generate_blocks(tmp_path / "other", 10, 10, 2, 0.0, 1)
        cfg2 = RunConfig(
            train_path=str(other["train"]),
            test_path=str(other["test"]),
            val_path=str(other["val"]),
            eval_ks=[3],
        )
        with pytest.raises(DataError, match="checkpoint tables"):
            run_eval(cfg2, res.checkpoint_path)


class TestSvdReport:
    def test_dense_residual_on_small_graph(self, tmp_path):
        cfg = small_config(tmp_path, svd_rank=4)
        factors, resid = run_svd_report(cfg)
        assert factors.rank == 4
        assert 0.0 <= resid <= 1.0
        assert np.all(np.diff(factors.s_r) <= 1e-12)

    def test_report_is_deterministic(self, tmp_path):
        cfg = small_config(tmp_path, svd_rank=4)
        f1, r1 = run_svd_report(cfg)
        f2, r2 = run_svd_report(cfg)
        assert r1 == r2
        np.testing.assert_array_equal(f1.s_r, f2.s_r)
