"""Training objective: pairwise ranking, two-view contrast, weight decay.

All gradients are accumulated by hand in reverse through the propagation
trace; nothing here relies on an autodiff framework. The contract is
checked against central finite differences in the test suite.

The contrastive term's similarity and softmax matrices dominate the step
cost on real data, so the training loop uses loss_and_grads, which builds
them once and reads both the loss value and its gradients off the same
intermediates; total_loss and backward are thin views of the same code.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import DataError
from .linalg import svd_propagate
from .model import ForwardTrace, HyperParams, ModelState, leaky_relu_grad
from .sparse import spmm, spmm_t

logger = logging.getLogger("svdgcl.objective")

MAX_NEG_TRIES = 100


@dataclass(frozen=True)
class TrainBatch:
    """Parallel index arrays: one (user, positive item, negative item)
    triple per row."""

    users: np.ndarray
    pos_items: np.ndarray
    neg_items: np.ndarray

    def __post_init__(self):
        for name in ("users", "pos_items", "neg_items"):
            object.__setattr__(self, name, np.ascontiguousarray(getattr(self, name), dtype=np.int64))
        if not (self.users.shape == self.pos_items.shape == self.neg_items.shape) or self.users.ndim != 1:
            raise ValueError("batch arrays must be 1-D and equally long")
        if self.users.shape[0] == 0:
            raise ValueError("batch must be non-empty")

    @property
    def size(self) -> int:
        return self.users.shape[0]


@dataclass(frozen=True)
class LossReport:
    """One step's loss decomposition; total recombines the parts exactly."""

    total: float
    rec_loss: float
    cl_loss_user: float
    cl_loss_item: float
    reg_loss: float


class _TrainKeys:
    """Sorted encodings of train pairs for O(log n) membership tests."""

    def __init__(self, ds):
        self.num_items = ds.num_items
        self.keys = np.sort(ds.train[:, 0] * np.int64(ds.num_items) + ds.train[:, 1])

    def contains(self, users: np.ndarray, items: np.ndarray) -> np.ndarray:
        probe = users * np.int64(self.num_items) + items
        pos = np.searchsorted(self.keys, probe)
        hit = pos < self.keys.shape[0]
        hit[hit] = self.keys[pos[hit]] == probe[hit]
        return hit


def _train_keys(ds) -> _TrainKeys:
    cached = ds.__dict__.get("_train_keys_cache")
    if cached is None:
        cached = _TrainKeys(ds)
        ds.__dict__["_train_keys_cache"] = cached
    return cached


def sample_batch(ds, batch_size: int, rng: np.random.Generator) -> TrainBatch:
    """Uniform-with-replacement positives plus rejection-sampled negatives.

    Each negative gets up to 100 uniform draws; stragglers fall back to an
    explicit pick among the user's non-interacted items. A user holding
    every item has no negatives and is a data error.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be at least 1")
    if ds.train.shape[0] == 0:
        raise DataError("cannot sample from an empty train split")
    keys = _train_keys(ds)
    idx = rng.integers(ds.train.shape[0], size=batch_size)
    users = ds.train[idx, 0]
    pos = ds.train[idx, 1]
    neg = np.empty(batch_size, dtype=np.int64)
    pending = np.arange(batch_size)
    for _ in range(MAX_NEG_TRIES):
        cand = rng.integers(ds.num_items, size=pending.shape[0])
        neg[pending] = cand
        pending = pending[keys.contains(users[pending], cand)]
        if pending.size == 0:
            break
    for j in pending:
        u = int(users[j])
        held = np.unique(ds.train[ds.train[:, 0] == u, 1])
        if held.shape[0] >= ds.num_items:
            raise DataError(f"user {u} interacts with every item; no negative exists")
        allowed = np.setdiff1d(np.arange(ds.num_items, dtype=np.int64), held, assume_unique=True)
        neg[j] = allowed[rng.integers(allowed.shape[0])]
    return TrainBatch(users=users, pos_items=pos, neg_items=neg)


def _margins(trace: ForwardTrace, batch: TrainBatch) -> np.ndarray:
    fu = trace.final_user[batch.users]
    return np.einsum("ij,ij->i", fu, trace.final_item[batch.pos_items]) - np.einsum(
        "ij,ij->i", fu, trace.final_item[batch.neg_items]
    )


def bpr_loss(trace: ForwardTrace, batch: TrainBatch) -> float:
    """Mean softplus of the negated positive-minus-negative score margin."""
    return float(np.mean(np.logaddexp(0.0, -_margins(trace, batch))))


def l2_reg(state: ModelState) -> float:
    """Squared Frobenius norm of both embedding tables."""
    return float(np.sum(state.e_user * state.e_user) + np.sum(state.e_item * state.e_item))


def _normalize_rows(x: np.ndarray):
    norms = np.linalg.norm(x, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    return x / safe[:, None], norms


def _infonce_layer(z: np.ndarray, g: np.ndarray, members: np.ndarray, tau: float, want_grads: bool):
    """One layer's summed contrastive terms between two views.

    Returns (loss_sum, ga, gb): loss_sum is the plain per-anchor sum (no
    averaging, no weighting); ga/gb are d(loss_sum)/d(z rows), d/d(g rows)
    restricted to the member rows, or None when grads were not asked for.
    Zero-norm rows contribute similarity 0 and receive zero gradient.
    """
    m = members.shape[0]
    an, na = _normalize_rows(z[members])
    bn, nb = _normalize_rows(g[members])
    s = an @ bn.T
    logits = s / tau
    peak = logits.max(axis=1, keepdims=True)
    e = np.exp(logits - peak)
    rowsum = e.sum(axis=1, keepdims=True)
    lse = peak[:, 0] + np.log(rowsum[:, 0])
    loss_sum = float(np.sum(lse - np.diagonal(logits)))
    if not want_grads:
        return loss_sum, None, None
    p = e / rowsum
    ds = p - np.eye(m)
    ds /= tau
    ds_s = ds * s
    ga = ds @ bn - ds_s.sum(axis=1)[:, None] * an
    gb = ds.T @ an - ds_s.sum(axis=0)[:, None] * bn
    na_ok = na > 0
    nb_ok = nb > 0
    ga[na_ok] /= na[na_ok, None]
    ga[~na_ok] = 0.0
    gb[nb_ok] /= nb[nb_ok, None]
    gb[~nb_ok] = 0.0
    return loss_sum, ga, gb


def infonce_loss(z_layers, g_layers, members: np.ndarray, tau: float) -> float:
    """Per-layer cosine InfoNCE between the two views, averaged over members.

    Each member is its own positive: the anchor row of one view against the
    same row of the other, contrasted with every other member. Fewer than
    two members makes the contrast degenerate, so the term is skipped with
    a warning.
    """
    members = np.asarray(members, dtype=np.int64)
    if members.shape[0] < 2:
        logger.warning("contrastive set has %d member(s); skipping the term", members.shape[0])
        return 0.0
    if tau <= 0:
        raise ValueError("temperature must be positive")
    total = 0.0
    for z, g in zip(z_layers, g_layers):
        loss_sum, _, _ = _infonce_layer(z, g, members, tau, want_grads=False)
        total += loss_sum
    return total / members.shape[0]


def _cl_members(batch: TrainBatch, hp: HyperParams, num_users: int, num_items: int):
    if hp.cl_scope == "full-population":
        return np.arange(num_users, dtype=np.int64), np.arange(num_items, dtype=np.int64)
    return np.unique(batch.users), np.unique(np.concatenate([batch.pos_items, batch.neg_items]))


def total_loss(trace: ForwardTrace, batch: TrainBatch, state: ModelState, hp: HyperParams) -> LossReport:
    """Full objective: ranking + lambda1 * contrast + lambda2 * weight norm.

    With lambda1 == 0 the contrastive terms are not computed at all, which
    is what lets a run skip the reconstruction branch entirely.
    """
    report, _, _ = _objective(trace, batch, state, hp, want_grads=False)
    return report


def backward(trace: ForwardTrace, batch: TrainBatch, state: ModelState, hp: HyperParams):
    """Hand-accumulated gradients of the total loss w.r.t. both tables.

    Needs the train-mode trace that produced the loss; eval traces carry no
    dropout record and are rejected.
    """
    _, gu, gv = _objective(trace, batch, state, hp, want_grads=True)
    return gu, gv


def loss_and_grads(trace: ForwardTrace, batch: TrainBatch, state: ModelState, hp: HyperParams):
    """Loss report and both gradients off one set of intermediates."""
    return _objective(trace, batch, state, hp, want_grads=True)


def _objective(trace: ForwardTrace, batch: TrainBatch, state: ModelState, hp: HyperParams, want_grads: bool):
    """Shared engine behind total_loss / backward / loss_and_grads.

    The gradient walks the residual stack top-down: each running state
    collects its direct share of the final sum, the residual carry, the
    graph-propagated term from the opposite side, and (when the contrast
    is active) the reconstruction branch's term.
    """
    if want_grads and trace.mode != "train":
        raise ValueError("backward needs a train-mode forward trace")
    layers = state.layers
    with_view = hp.lambda1 > 0
    if with_view and (trace.g_user is None or trace.g_item is None):
        raise ValueError("lambda1 > 0 needs a trace carrying the global view")

    rec = bpr_loss(trace, batch)
    cl_u = cl_i = 0.0
    z_grads_u: list = []
    g_grads_u: list = []
    z_grads_i: list = []
    g_grads_i: list = []
    members = None
    if with_view:
        members_u, members_i = _cl_members(batch, hp, state.num_users, state.num_items)
        members = (members_u, members_i)
        for side, (mem, zs, gs, zg, gg) in enumerate(
            (
                (members_u, trace.z_user, trace.g_user, z_grads_u, g_grads_u),
                (members_i, trace.z_item, trace.g_item, z_grads_i, g_grads_i),
            )
        ):
            if mem.shape[0] < 2:
                logger.warning("contrastive set has %d member(s); skipping the term", mem.shape[0])
                zg.extend([None] * layers)
                gg.extend([None] * layers)
                continue
            acc = 0.0
            for t in range(layers):
                loss_sum, ga, gb = _infonce_layer(zs[t], gs[t], mem, hp.temperature, want_grads)
                acc += loss_sum
                zg.append(ga)
                gg.append(gb)
            if side == 0:
                cl_u = acc / members_u.shape[0]
            else:
                cl_i = acc / members_i.shape[0]
    reg = l2_reg(state)
    total = rec + hp.lambda1 * (cl_u + cl_i) + hp.lambda2 * reg
    report = LossReport(total=total, rec_loss=rec, cl_loss_user=cl_u, cl_loss_item=cl_i, reg_loss=reg)
    if not want_grads:
        return report, None, None

    # ranking head: margins push the batched finals apart
    coeff = (expit(_margins(trace, batch)) - 1.0) / batch.size
    fu = trace.final_user[batch.users]
    diff = trace.final_item[batch.pos_items] - trace.final_item[batch.neg_items]
    gfu = np.zeros_like(trace.final_user)
    gfv = np.zeros_like(trace.final_item)
    np.add.at(gfu, batch.users, coeff[:, None] * diff)
    np.add.at(gfv, batch.pos_items, coeff[:, None] * fu)
    np.add.at(gfv, batch.neg_items, -coeff[:, None] * fu)

    gu = gfu.copy()
    gv = gfv.copy()
    for t in reversed(range(layers)):
        dzu = gu
        dzv = gv
        if with_view:
            members_u, members_i = members
            if z_grads_u[t] is not None:
                dzu = gu.copy()
                dzu[members_u] += z_grads_u[t] * (hp.lambda1 / members_u.shape[0])
            if z_grads_i[t] is not None:
                dzv = gv.copy()
                dzv[members_i] += z_grads_i[t] * (hp.lambda1 / members_i.shape[0])
        dpre_zu = dzu * leaky_relu_grad(trace.pre_z_user[t])
        dpre_zv = dzv * leaky_relu_grad(trace.pre_z_item[t])
        dropped = trace.dropped_adj[t]
        next_gu = gu + gfu + spmm(dropped, dpre_zv)
        next_gv = gv + gfv + spmm_t(dropped, dpre_zu)
        if with_view:
            members_u, members_i = members
            if g_grads_u[t] is not None:
                dpre_gu = np.zeros_like(trace.pre_g_user[t])
                dpre_gu[members_u] = g_grads_u[t] * (hp.lambda1 / members_u.shape[0])
                dpre_gu *= leaky_relu_grad(trace.pre_g_user[t])
                next_gv += svd_propagate(trace.svd_factors, dpre_gu, "item")
            if g_grads_i[t] is not None:
                dpre_gv = np.zeros_like(trace.pre_g_item[t])
                dpre_gv[members_i] = g_grads_i[t] * (hp.lambda1 / members_i.shape[0])
                dpre_gv *= leaky_relu_grad(trace.pre_g_item[t])
                next_gu += svd_propagate(trace.svd_factors, dpre_gv, "user")
        gu, gv = next_gu, next_gv

    gu += 2.0 * hp.lambda2 * state.e_user
    gv += 2.0 * hp.lambda2 * state.e_item
    return report, gu, gv
