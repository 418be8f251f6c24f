"""Embedding tables and the two-branch propagation forward pass.

The aggregation itself carries no weights: per layer, user states are
refreshed from item states through the normalized graph (and vice versa),
passed through a LeakyReLU, and added back onto the running state. A
parallel branch propagates through the low-rank reconstruction of the
same graph; it reads the main branch's states but never feeds back into
them, so rankings depend on the main branch only.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .linalg import SvdFactors, svd_propagate
from .sparse import SparseMatrix, spmm, spmm_t

INIT_STREAM = 1
TRAIN_STREAM = 2

LEAKY_SLOPE = 0.2


@dataclass
class HyperParams:
    """Training-time knobs. Defaults are the package defaults ablated on the
    synthetic block task; shape parameters follow the library's reference
    configuration (32-dim embeddings, 2 layers, rank-5 reconstruction)."""

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

    def __post_init__(self):
        if self.embed_dim < 1:
            raise ConfigError("embed_dim must be at least 1")
        if self.layers < 1:
            raise ConfigError("layers must be at least 1")
        if self.svd_rank < 1:
            raise ConfigError("svd_rank must be at least 1")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigError("dropout_p must lie in [0, 1)")
        if self.temperature <= 0:
            raise ConfigError("temperature must be positive")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ConfigError("loss weights must be non-negative")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")
        if self.epochs < 0:
            raise ConfigError("epochs must be non-negative")
        if self.cl_scope not in ("in-batch", "full-population"):
            raise ConfigError(f"cl_scope must be 'in-batch' or 'full-population', got {self.cl_scope!r}")


@dataclass
class ModelState:
    """Learnable tables plus the generator driving training-time randomness."""

    e_user: np.ndarray
    e_item: np.ndarray
    layers: int
    embed_dim: int
    rng: np.random.Generator

    @property
    def num_users(self) -> int:
        return self.e_user.shape[0]

    @property
    def num_items(self) -> int:
        return self.e_item.shape[0]


@dataclass
class ForwardTrace:
    """Every intermediate the forward pass produced, kept for backward.

    Layer lists are indexed 0..layers-1 for layer outputs (z, g and their
    pre-activations) and 0..layers for the running states h, where index 0
    holds the embedding tables themselves. Global-view lists are None when
    the reconstruction branch was skipped.
    """

    mode: str
    z_user: list = field(default_factory=list)
    z_item: list = field(default_factory=list)
    g_user: list | None = None
    g_item: list | None = None
    h_user: list = field(default_factory=list)
    h_item: list = field(default_factory=list)
    final_user: np.ndarray | None = None
    final_item: np.ndarray | None = None
    dropout_masks: list | None = None
    dropped_adj: list | None = None
    pre_z_user: list = field(default_factory=list)
    pre_z_item: list = field(default_factory=list)
    pre_g_user: list | None = None
    pre_g_item: list | None = None
    svd_factors: SvdFactors | None = None


def init_model(ds, hp: HyperParams) -> ModelState:
    """Fresh embedding tables, uniform on +-sqrt(3/embed_dim) so each
    coordinate has variance 1/embed_dim; fully determined by hp.seed."""
    rng_init = np.random.Generator(np.random.Philox(np.random.SeedSequence([hp.seed, INIT_STREAM])))
    bound = np.sqrt(3.0 / hp.embed_dim)
    e_user = rng_init.uniform(-bound, bound, size=(ds.num_users, hp.embed_dim))
    e_item = rng_init.uniform(-bound, bound, size=(ds.num_items, hp.embed_dim))
    rng_train = np.random.Generator(np.random.Philox(np.random.SeedSequence([hp.seed, TRAIN_STREAM])))
    return ModelState(e_user=e_user, e_item=e_item, layers=hp.layers, embed_dim=hp.embed_dim, rng=rng_train)


def leaky_relu(x: np.ndarray, negative_slope: float = LEAKY_SLOPE) -> np.ndarray:
    return np.where(x >= 0, x, negative_slope * x)


def leaky_relu_grad(x: np.ndarray, negative_slope: float = LEAKY_SLOPE) -> np.ndarray:
    # the kink at exactly 0 takes slope 1
    return np.where(x >= 0, 1.0, negative_slope)


def edge_dropout(a: SparseMatrix, p: float, rng: np.random.Generator):
    """Drop each stored edge with probability p, scaling survivors by 1/(1-p).

    Returns the thinned matrix and the boolean keep mask, so the same draw
    can be replayed.
    """
    if not 0.0 <= p < 1.0:
        raise ValueError("dropout probability must lie in [0, 1)")
    if p == 0.0:
        return a, np.ones(a.nnz, dtype=bool)
    keep = rng.random(a.nnz) >= p
    return a.select(keep, scale=1.0 / (1.0 - p)), keep


def forward(
    state: ModelState,
    a_norm: SparseMatrix,
    svd: SvdFactors | None = None,
    hp: HyperParams | None = None,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
    masks: list | None = None,
    with_global_view: bool | None = None,
) -> ForwardTrace:
    """Run the propagation stack and capture a full trace.

    Train mode needs hp (for dropout_p and the branch gate) and draws
    dropout masks from state.rng unless replay masks are supplied. Eval
    mode drops nothing and skips the reconstruction branch unless asked.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    if a_norm.rows != state.num_users or a_norm.cols != state.num_items:
        raise ValueError(
            f"graph is {a_norm.rows}x{a_norm.cols} but tables are "
            f"{state.num_users}x{state.num_items}"
        )
    if mode == "train" and hp is None:
        raise ValueError("train-mode forward needs hyperparameters")
    p = hp.dropout_p if (mode == "train" and hp is not None) else 0.0
    if with_global_view is None:
        with_global_view = mode == "train" and hp is not None and hp.lambda1 > 0
    if with_global_view and svd is None:
        raise ValueError("global view requested but no factorization given")
    if masks is not None and len(masks) != state.layers:
        raise ValueError("need one replay mask per layer")

    trace = ForwardTrace(mode=mode)
    trace.h_user.append(state.e_user)
    trace.h_item.append(state.e_item)
    trace.dropout_masks = []
    trace.dropped_adj = []
    if with_global_view:
        trace.g_user, trace.g_item = [], []
        trace.pre_g_user, trace.pre_g_item = [], []
        trace.svd_factors = svd

    draw = rng if rng is not None else state.rng
    for t in range(state.layers):
        if masks is not None:
            mask = np.asarray(masks[t], dtype=bool)
            dropped = a_norm.select(mask, scale=1.0 / (1.0 - p)) if p > 0 else a_norm
        elif p > 0:
            dropped, mask = edge_dropout(a_norm, p, draw)
        else:
            dropped, mask = a_norm, np.ones(a_norm.nnz, dtype=bool)
        trace.dropout_masks.append(mask)
        trace.dropped_adj.append(dropped)

        hu_prev, hv_prev = trace.h_user[t], trace.h_item[t]
        pre_zu = spmm(dropped, hv_prev)
        pre_zv = spmm_t(dropped, hu_prev)
        zu, zv = leaky_relu(pre_zu), leaky_relu(pre_zv)
        trace.pre_z_user.append(pre_zu)
        trace.pre_z_item.append(pre_zv)
        trace.z_user.append(zu)
        trace.z_item.append(zv)
        if with_global_view:
            pre_gu = svd_propagate(svd, hv_prev, "user")
            pre_gv = svd_propagate(svd, hu_prev, "item")
            trace.pre_g_user.append(pre_gu)
            trace.pre_g_item.append(pre_gv)
            trace.g_user.append(leaky_relu(pre_gu))
            trace.g_item.append(leaky_relu(pre_gv))
        trace.h_user.append(zu + hu_prev)
        trace.h_item.append(zv + hv_prev)

    trace.final_user = np.add.reduce(trace.h_user)
    trace.final_item = np.add.reduce(trace.h_item)
    return trace


def predict_scores(trace: ForwardTrace, users) -> np.ndarray:
    """Score every item for the given user rows: one dot product each."""
    users = np.asarray(users, dtype=np.int64)
    m = trace.final_user.shape[0]
    if users.size and (users.min() < 0 or users.max() >= m):
        raise IndexError(f"user index out of range for {m} users")
    return trace.final_user[users] @ trace.final_item.T
