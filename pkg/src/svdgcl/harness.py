"""Run orchestration: flat configuration, the training loop, evaluation.

Every log line a run emits is a pure function of (config, seed); wall
times are returned to callers instead of logged so identical runs yield
identical streams.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from time import perf_counter

import numpy as np

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .errors import ConfigError, DataError, NumericalError
from .interactions import build_adjacency, load_interactions, normalize_adjacency
from .linalg import approx_svd, reset_svd_run_count, svd_run_count
from .losses import loss_and_grads, sample_batch
from .metrics import EvalResult, evaluate
from .model import HyperParams, forward, init_model
from .optim import adam_step, init_optimizer

logger = logging.getLogger("svdgcl.run")

LOG_ENV_VAR = "SVDGCL_LOG"

# how each overridable field parses from a command-line string
_FIELD_TYPES = {
    "train_path": str,
    "test_path": str,
    "val_path": str,
    "embed_dim": int,
    "layers": int,
    "svd_rank": int,
    "dropout_p": float,
    "temperature": float,
    "lambda1": float,
    "lambda2": float,
    "learning_rate": float,
    "batch_size": int,
    "epochs": int,
    "seed": int,
    "cl_scope": str,
    "eval_every": int,
    "eval_ks": "ks",
    "checkpoint_dir": str,
    "log_path": str,
    "svd_oversample": int,
    "svd_power_iters": int,
    "val_fraction": float,
    "patience": int,
}

_OPTIONAL_PATHS = ("val_path", "log_path")


@dataclass
class RunConfig:
    """Flat run configuration; JSON files and --key=value overrides map
    one-to-one onto these fields."""

    train_path: str | None = None
    test_path: str | None = None
    val_path: str | None = None
    embed_dim: int = 64
    layers: int = 2
    svd_rank: int = 5
    dropout_p: float = 0.1
    temperature: float = 1.0
    lambda1: float = 0.05
    lambda2: float = 1e-5
    learning_rate: float = 3e-3
    batch_size: int = 1024
    epochs: int = 200
    seed: int = 42
    cl_scope: str = "in-batch"
    eval_every: int = 5
    eval_ks: list = field(default_factory=lambda: [20])
    checkpoint_dir: str = "checkpoints"
    log_path: str | None = None
    svd_oversample: int = 8
    svd_power_iters: int = 4
    val_fraction: float = 0.1
    patience: int = 20

    def __post_init__(self):
        if self.eval_every < 1:
            raise ConfigError("eval_every must be at least 1")
        if self.patience < 1:
            raise ConfigError("patience must be at least 1")
        if self.svd_oversample < 0 or self.svd_power_iters < 0:
            raise ConfigError("svd_oversample and svd_power_iters must be non-negative")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ConfigError("val_fraction must lie in [0, 1)")
        try:
            self.eval_ks = [int(k) for k in self.eval_ks]
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"eval_ks must be a list of integers: {exc}") from exc
        if not self.eval_ks or min(self.eval_ks) < 1:
            raise ConfigError("eval_ks must contain positive cutoffs")
        # surface hyperparameter range errors at config time too
        self.to_hyperparams()

    def to_hyperparams(self) -> HyperParams:
        return HyperParams(
            embed_dim=self.embed_dim,
            layers=self.layers,
            svd_rank=self.svd_rank,
            dropout_p=self.dropout_p,
            temperature=self.temperature,
            lambda1=self.lambda1,
            lambda2=self.lambda2,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            epochs=self.epochs,
            seed=self.seed,
            cl_scope=self.cl_scope,
        )

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.as_dict(), sort_keys=True).encode("utf-8")).hexdigest()

    @classmethod
    def from_sources(cls, json_path=None, overrides=()) -> "RunConfig":
        """Defaults, then a JSON file, then key=value overrides, last wins."""
        values: dict = {}
        if json_path is not None:
            try:
                raw = json.loads(Path(json_path).read_text())
            except OSError as exc:
                raise ConfigError(f"cannot read config {json_path}: {exc}") from exc
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config {json_path} is not valid JSON: {exc}") from exc
            if not isinstance(raw, dict):
                raise ConfigError(f"config {json_path} must hold a JSON object")
            for key, value in raw.items():
                values[key] = value
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"override {item!r} is not of the form key=value")
            key, text = item.split("=", 1)
            key = key.replace("-", "_")
            values[key] = _parse_override(key, text)
        unknown = sorted(set(values) - set(_FIELD_TYPES))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**values)


def _parse_override(key: str, text: str):
    kind = _FIELD_TYPES.get(key)
    if kind is None:
        raise ConfigError(f"unknown config key: {key}")
    if key in _OPTIONAL_PATHS and text.lower() in ("none", "null", ""):
        return None
    if kind == "ks":
        try:
            return [int(part) for part in text.split(",") if part]
        except ValueError as exc:
            raise ConfigError(f"{key} expects comma-separated integers: {text!r}") from exc
    try:
        return kind(text)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {text!r}") from exc


def configure_logging(log_path=None):
    """Message-only logging to stdout, mirrored to log_path when given.

    The environment variable SVDGCL_LOG picks the level (default INFO);
    nothing else about logging is environment-dependent.
    """
    level_name = os.environ.get(LOG_ENV_VAR, "INFO").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        raise ConfigError(f"{LOG_ENV_VAR}={level_name!r} is not a log level")
    root = logging.getLogger("svdgcl")
    for handler in list(root.handlers):
        root.removeHandler(handler)
        handler.close()
    root.setLevel(level)
    root.propagate = False
    formatter = logging.Formatter("%(message)s")
    stream = logging.StreamHandler(sys.stdout)
    stream.setFormatter(formatter)
    root.addHandler(stream)
    if log_path is not None:
        Path(log_path).parent.mkdir(parents=True, exist_ok=True)
        fh = logging.FileHandler(log_path, mode="w")
        fh.setFormatter(formatter)
        root.addHandler(fh)


@dataclass
class TrainResult:
    """What a completed run hands back to its caller."""

    test_result: EvalResult
    best_epoch: int | None
    epochs_run: int
    checkpoint_path: str | None
    epoch_seconds: list
    svd_runs: int


def _log_eval(epoch: int, res: EvalResult, ks):
    parts = [f"recall@{k}={res.recall[k]:.6f} ndcg@{k}={res.ndcg[k]:.6f}" for k in ks]
    logger.info("eval epoch=%d %s users=%d", epoch, " ".join(parts), res.users_evaluated)


def _primary_k(ks) -> int:
    return 20 if 20 in ks else ks[0]


def run_training(config: RunConfig) -> TrainResult:
    """Full training pipeline, early-stopped on validation recall.

    The graph factorization runs exactly once per call (asserted); with
    lambda1 == 0 it is skipped entirely along with the whole global-view
    branch. The best-by-validation checkpoint is what gets evaluated on
    test at the end; without a validation signal the last epoch wins.
    """
    configure_logging(config.log_path)
    if config.train_path is None or config.test_path is None:
        raise ConfigError("train_path and test_path are required")
    reset_svd_run_count()
    hp = config.to_hyperparams()
    ds = load_interactions(
        config.train_path,
        config.test_path,
        config.val_path,
        val_fraction=config.val_fraction,
        seed=hp.seed,
    )
    a_norm = normalize_adjacency(build_adjacency(ds))
    state = init_model(ds, hp)
    opt = init_optimizer(state)
    svd = None
    if hp.lambda1 > 0:
        svd = approx_svd(
            a_norm, hp.svd_rank, oversample=config.svd_oversample, power_iters=config.svd_power_iters, seed=hp.seed
        )
        assert svd_run_count() == 1, "the factorization must run exactly once"

    ks = sorted(set(config.eval_ks))
    primary = _primary_k(ks)
    batches = max(1, math.ceil(ds.train.shape[0] / hp.batch_size))
    val_available = ds.validation.shape[0] > 0
    ckpt_path = Path(config.checkpoint_dir) / "best.ckpt"
    best_metric = -1.0
    best_epoch: int | None = None
    stale = 0
    epoch_seconds: list = []
    epochs_run = 0

    for epoch in range(1, hp.epochs + 1):
        t0 = perf_counter()
        sums = np.zeros(5)
        for _ in range(batches):
            batch = sample_batch(ds, hp.batch_size, state.rng)
            trace = forward(state, a_norm, svd, hp, mode="train")
            report, gu, gv = loss_and_grads(trace, batch, state, hp)
            parts = (report.rec_loss, report.cl_loss_user, report.cl_loss_item, report.reg_loss, report.total)
            if not all(math.isfinite(x) for x in parts):
                raise NumericalError(
                    f"non-finite loss in epoch {epoch}; last fully finite epoch was {epoch - 1}"
                )
            sums += parts
            adam_step(state, opt, gu, gv, hp.learning_rate)
        epoch_seconds.append(perf_counter() - t0)
        mean = sums / batches
        logger.info(
            "epoch=%d rec=%.6f cl_u=%.6f cl_i=%.6f reg=%.6f total=%.6f",
            epoch, mean[0], mean[1], mean[2], mean[3], mean[4],
        )
        epochs_run = epoch
        if val_available and epoch % config.eval_every == 0:
            res = evaluate(state, a_norm, svd, ds, ks, split="val")
            _log_eval(epoch, res, ks)
            metric = res.recall[primary]
            if metric > best_metric:
                best_metric = metric
                best_epoch = epoch
                ckpt_path.parent.mkdir(parents=True, exist_ok=True)
                save_checkpoint(ckpt_path, state, opt, hp.svd_rank, config.digest())
                stale = 0
            else:
                stale += 1
                if stale >= config.patience:
                    logger.info("early stop at epoch %d after %d flat evals", epoch, stale)
                    break

    checkpoint_used: str | None = None
    if hp.epochs > 0:
        if best_epoch is not None:
            loaded = load_checkpoint(ckpt_path)
            state, opt = loaded.state, loaded.opt
        else:
            # no validation signal: the final state is the artifact
            ckpt_path.parent.mkdir(parents=True, exist_ok=True)
            save_checkpoint(ckpt_path, state, opt, hp.svd_rank, config.digest())
        checkpoint_used = str(ckpt_path)

    test_result = evaluate(state, a_norm, svd, ds, ks, split="test")
    _log_eval(epochs_run, test_result, ks)
    expected_runs = 1 if hp.lambda1 > 0 else 0
    assert svd_run_count() == expected_runs, "the factorization count drifted during the run"
    return TrainResult(
        test_result=test_result,
        best_epoch=best_epoch,
        epochs_run=epochs_run,
        checkpoint_path=checkpoint_used,
        epoch_seconds=epoch_seconds,
        svd_runs=svd_run_count(),
    )


def run_eval(config: RunConfig, checkpoint_path) -> EvalResult:
    """Score a saved checkpoint against the configured dataset's test split.

    The logged epoch field carries the checkpoint's optimizer step count.
    """
    configure_logging(config.log_path)
    if config.train_path is None or config.test_path is None:
        raise ConfigError("train_path and test_path are required")
    ds = load_interactions(
        config.train_path,
        config.test_path,
        config.val_path,
        val_fraction=config.val_fraction,
        seed=config.seed,
    )
    loaded: Checkpoint = load_checkpoint(checkpoint_path)
    if loaded.state.num_users != ds.num_users or loaded.state.num_items != ds.num_items:
        raise DataError(
            f"checkpoint tables are {loaded.state.num_users}x{loaded.state.num_items} "
            f"but the dataset is {ds.num_users}x{ds.num_items}"
        )
    a_norm = normalize_adjacency(build_adjacency(ds))
    ks = sorted(set(config.eval_ks))
    res = evaluate(loaded.state, a_norm, None, ds, ks, split="test")
    _log_eval(loaded.step, res, ks)
    return res


def run_svd_report(config: RunConfig):
    """Factorize the normalized graph and report the spectrum and residual.

    Small problems (at most a million cells) get the exact dense residual;
    larger ones get the energy-difference bound computed from the stored
    entries and the returned spectrum.
    """
    configure_logging(config.log_path)
    if config.train_path is None or config.test_path is None:
        raise ConfigError("train_path and test_path are required")
    ds = load_interactions(
        config.train_path,
        config.test_path,
        config.val_path,
        val_fraction=config.val_fraction,
        seed=config.seed,
    )
    a_norm = normalize_adjacency(build_adjacency(ds))
    factors = approx_svd(
        a_norm,
        config.svd_rank,
        oversample=config.svd_oversample,
        power_iters=config.svd_power_iters,
        seed=config.seed,
    )
    logger.info("singular_values %s", " ".join(f"{x:.12g}" for x in factors.s_r))
    fro2 = float(np.sum(a_norm.values**2))
    if ds.num_users * ds.num_items <= 1_000_000:
        dense = a_norm.to_dense()
        resid = np.linalg.norm(dense - factors.reconstruct()) / np.linalg.norm(dense)
        logger.info("residual_rel=%.12g method=dense", resid)
    else:
        resid = math.sqrt(max(fro2 - float(np.sum(factors.s_r**2)), 0.0) / fro2)
        logger.info("residual_rel=%.12g method=energy_bound", resid)
    return factors, resid
