"""Minimal full-batch trainer.

Runs in float64 with library matmuls (this is the reference path; the
bit-exact float32 engine in layers.py is for inference).  Adam with L2
weight decay on the masked negative log-likelihood, dropout during training
only, checkpoint taken at the best-validation epoch.  Deterministic for a
fixed seed.  loss_and_grads() is exposed so gradients can be checked against
finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..graphs import StructuralError
from . import checkpoint as ckpt_mod

LEAKY_SLOPE = 0.2


class TrainingError(RuntimeError):
    def __init__(self, message, epoch):
        super().__init__(f"{message} (epoch {epoch})")
        self.epoch = epoch


@dataclass
class TrainConfig:
    lr: float = 0.01
    weight_decay: float = 5e-4
    epochs: int = 200
    dropout: float = 0.5
    seed: int = 0

    def validate(self):
        if self.lr <= 0 or self.epochs < 1 or self.weight_decay < 0:
            raise StructuralError("lr/epochs must be positive, weight_decay >= 0")
        if not 0 <= self.dropout < 1:
            raise StructuralError("dropout must be in [0, 1)")
        return self


# per-architecture recipes for the citation benchmarks
def tuned_config(arch, seed=0):
    if arch == "gat":
        return TrainConfig(lr=0.005, weight_decay=5e-4, epochs=300, dropout=0.6, seed=seed)
    if arch == "sgc":
        return TrainConfig(lr=0.2, weight_decay=2e-5, epochs=150, dropout=0.0, seed=seed)
    return TrainConfig(seed=seed)


@dataclass
class TrainContext:
    x: np.ndarray  # float64 features
    labels: np.ndarray
    train_mask: np.ndarray
    val_mask: np.ndarray
    adj: sp.csr_matrix  # normalized adjacency
    lap: sp.csr_matrix  # -D^-1/2 A D^-1/2
    sl_ptr: np.ndarray  # self-loop CSR (GAT neighborhoods)
    sl_idx: np.ndarray
    sl_row: np.ndarray  # row index per stored edge
    sl_perm: np.ndarray  # permutation sorting edges by (col, row)


def build_context(dataset):
    g = dataset.graph
    n = g.num_nodes
    adj = g.normalized_adjacency()
    lap = g.neg_half_laplacian()
    sl = g.with_self_loops()
    deg = sl.row_ptr[1:] - sl.row_ptr[:-1]
    sl_row = np.repeat(np.arange(n), deg)
    sl_perm = np.lexsort((sl_row, sl.col_idx))
    return TrainContext(
        x=dataset.features.astype(np.float64),
        labels=dataset.split.labels,
        train_mask=dataset.split.train_mask,
        val_mask=dataset.split.val_mask,
        adj=sp.csr_matrix(
            (adj.values.astype(np.float64), adj.col_idx, adj.row_ptr), shape=(n, n)
        ),
        lap=sp.csr_matrix(
            (lap.values.astype(np.float64), lap.col_idx, lap.row_ptr), shape=(n, n)
        ),
        sl_ptr=sl.row_ptr.astype(np.int64),
        sl_idx=sl.col_idx.astype(np.int64),
        sl_row=sl_row,
        sl_perm=sl_perm,
    )


def _log_softmax(z):
    m = z.max(axis=1, keepdims=True)
    d = z - m
    return d - np.log(np.exp(d).sum(axis=1, keepdims=True))


def _nll(logits, labels, mask):
    idx = np.nonzero(mask)[0]
    ls = _log_softmax(logits)
    loss = -ls[idx, labels[idx]].mean()
    g = np.zeros_like(logits)
    g[idx] = np.exp(ls[idx])
    g[idx, labels[idx]] -= 1.0
    g[idx] /= idx.size
    return loss, g


def _dropout_masks(rng, x_shape, hid_shape, p):
    """Inverted-dropout multipliers for the architecture's drop sites."""
    if p <= 0:
        return None
    keep = 1.0 - p
    m0 = (rng.random(x_shape) < keep) / keep
    if hid_shape is None:
        return {"input": m0}
    m1 = (rng.random(hid_shape) < keep) / keep
    return {"input": m0, "hidden": m1}


# -- per-architecture forward/backward ----------------------------------------


def _gat_head_fwd(hin, w, a, ctx):
    heads, _, d = w.shape
    n = hin.shape[0]
    z = np.empty((n, heads, d))
    for h in range(heads):
        z[:, h, :] = hin @ w[h]
    sd = np.einsum("nhd,hd->nh", z, a[:, :d])
    ss = np.einsum("nhd,hd->nh", z, a[:, d:])
    row, col, ptr = ctx.sl_row, ctx.sl_idx, ctx.sl_ptr
    score = sd[row] + ss[col]
    pre = np.where(score > 0, score, LEAKY_SLOPE * score)
    mx = np.maximum.reduceat(pre, ptr[:-1], axis=0)
    wgt = np.exp(pre - mx[row])
    tot = np.add.reduceat(wgt, ptr[:-1], axis=0)
    alpha = wgt / tot[row]
    msg = alpha[:, :, None] * z[col]
    out = np.add.reduceat(msg, ptr[:-1], axis=0)
    cache = (hin, w, a, z, score, alpha)
    return out, cache


def _gat_head_bwd(dout, cache, ctx):
    hin, w, a, z, score, alpha = cache
    heads, _, d = w.shape
    row, col, ptr, perm = ctx.sl_row, ctx.sl_idx, ctx.sl_ptr, ctx.sl_perm

    dalpha = np.einsum("ehd,ehd->eh", dout[row], z[col])
    dz = np.zeros_like(z)
    contrib = alpha[:, :, None] * dout[row]
    dz += np.add.reduceat(contrib[perm], ptr[:-1], axis=0)

    s_dot = np.add.reduceat(alpha * dalpha, ptr[:-1], axis=0)
    dpre = alpha * (dalpha - s_dot[row])
    dscore = np.where(score > 0, dpre, LEAKY_SLOPE * dpre)

    dsd = np.add.reduceat(dscore, ptr[:-1], axis=0)
    dss = np.add.reduceat(dscore[perm], ptr[:-1], axis=0)
    da = np.concatenate(
        [np.einsum("nh,nhd->hd", dsd, z), np.einsum("nh,nhd->hd", dss, z)], axis=1
    )
    dz += dsd[:, :, None] * a[:, :d][None, :, :]
    dz += dss[:, :, None] * a[:, d:][None, :, :]

    dw = np.empty_like(w)
    dhin = np.zeros_like(hin)
    for h in range(heads):
        dw[h] = hin.T @ dz[:, h, :]
        dhin += dz[:, h, :] @ w[h].T
    return dhin, dw, da


def _forward(arch, params, hyper, ctx, masks):
    """Returns (raw output logits, cache) for the architecture pipeline."""
    x = ctx.x
    if masks and arch != "sgc":
        x = x * masks["input"]
    if arch == "gcn":
        h0 = x
        z1 = ctx.adj @ (h0 @ params["gnn1.weight"])
        h1 = np.maximum(z1, 0.0)
        h1d = h1 * masks["hidden"] if masks else h1
        z2 = ctx.adj @ (h1d @ params["gnn2.weight"])
        return z2, ("gcn", h0, z1, h1d)
    if arch == "cheb":
        k = hyper["order"]
        w1 = [params[f"gnn1.w{i}"] for i in range(k)]
        w2 = [params[f"gnn2.w{i}"] for i in range(k)]
        p1 = _cheb_basis(ctx.lap, x, k)
        z1 = sum(p1[i] @ w1[i] for i in range(k))
        h1 = np.maximum(z1, 0.0)
        h1d = h1 * masks["hidden"] if masks else h1
        p2 = _cheb_basis(ctx.lap, h1d, k)
        z2 = sum(p2[i] @ w2[i] for i in range(k))
        return z2, ("cheb", p1, z1, h1d, p2)
    if arch == "gat":
        o1, c1 = _gat_head_fwd(x, params["gnn1.weight"], params["gnn1.att"], ctx)
        n = o1.shape[0]
        cat = o1.reshape(n, -1)
        h1 = np.where(cat > 0, cat, np.expm1(np.minimum(cat, 0.0)))
        h1d = h1 * masks["hidden"] if masks else h1
        w2 = params["gnn2.weight"][None, :, :]
        a2 = params["gnn2.att"][None, :]
        o2, c2 = _gat_head_fwd(h1d, w2, a2, ctx)
        return o2[:, 0, :], ("gat", c1, cat, h1d, c2)
    if arch == "sgc":
        # propagation is parameter-free; cache it on the context
        xt = getattr(ctx, "_sgc_prop", None)
        if xt is None:
            xt = ctx.x
            for _ in range(hyper["steps"]):
                xt = ctx.adj @ xt
            ctx._sgc_prop = xt
        h0 = xt * masks["input"] if masks else xt
        return h0 @ params["gnn1.weight"], ("sgc", h0)
    raise StructuralError(f"unknown architecture {arch!r}")


def _cheb_basis(lap, h, k):
    basis = [h]
    if k > 1:
        basis.append(lap @ h)
    for i in range(2, k):
        basis.append(2.0 * (lap @ basis[-1]) - basis[-2])
    return basis


def _backward(arch, params, hyper, ctx, cache, dz, masks):
    grads = {}
    if arch == "gcn":
        _, h0, z1, h1d = cache
        g2 = ctx.adj @ dz
        grads["gnn2.weight"] = h1d.T @ g2
        dh1d = g2 @ params["gnn2.weight"].T
        dh1 = dh1d * masks["hidden"] if masks else dh1d
        dz1 = dh1 * (z1 > 0)
        g1 = ctx.adj @ dz1
        grads["gnn1.weight"] = h0.T @ g1
        return grads
    if arch == "cheb":
        _, p1, z1, h1d, p2 = cache
        k = hyper["order"]
        q2 = _cheb_basis(ctx.lap, dz, k)
        dh1d = np.zeros_like(h1d)
        for i in range(k):
            grads[f"gnn2.w{i}"] = p2[i].T @ dz
            dh1d += q2[i] @ params[f"gnn2.w{i}"].T
        dh1 = dh1d * masks["hidden"] if masks else dh1d
        dz1 = dh1 * (z1 > 0)
        for i in range(k):
            grads[f"gnn1.w{i}"] = p1[i].T @ dz1
        return grads
    if arch == "gat":
        _, c1, cat, h1d, c2 = cache
        dh1d, dw2, da2 = _gat_head_bwd(dz[:, None, :], c2, ctx)
        grads["gnn2.weight"] = dw2[0]
        grads["gnn2.att"] = da2[0]
        dh1 = dh1d * masks["hidden"] if masks else dh1d
        dcat = dh1 * np.where(cat > 0, 1.0, np.exp(np.minimum(cat, 0.0)))
        heads = hyper["heads"]
        n, d = cat.shape[0], hyper["head_dim"]
        _, dw1, da1 = _gat_head_bwd(dcat.reshape(n, heads, d), c1, ctx)
        grads["gnn1.weight"] = dw1
        grads["gnn1.att"] = da1
        return grads
    if arch == "sgc":
        _, h0 = cache
        grads["gnn1.weight"] = h0.T @ dz
        return grads
    raise StructuralError(f"unknown architecture {arch!r}")


def loss_and_grads(arch, params, hyper, ctx, weight_decay, masks=None):
    """Training loss (masked NLL + L2) and its gradients w.r.t. every tensor."""
    z, cache = _forward(arch, params, hyper, ctx, masks)
    loss, dz = _nll(z, ctx.labels, ctx.train_mask)
    grads = _backward(arch, params, hyper, ctx, cache, dz, masks)
    for name, w in params.items():
        loss += 0.5 * weight_decay * float((w * w).sum())
        grads[name] = grads[name] + weight_decay * w
    return loss, grads


def loss_only(arch, params, hyper, ctx, weight_decay, masks=None):
    z, _ = _forward(arch, params, hyper, ctx, masks)
    loss, _ = _nll(z, ctx.labels, ctx.train_mask)
    for w in params.values():
        loss += 0.5 * weight_decay * float((w * w).sum())
    return loss


def _accuracy(z, labels, mask):
    pred = z.argmax(axis=1)
    return float((pred[mask] == labels[mask]).mean())


def train_model(arch, dataset, cfg=None, hyper=None):
    """Full-batch training; returns the best-validation-epoch checkpoint."""
    cfg = (cfg or tuned_config(arch)).validate()
    if not dataset.split.train_mask.any() or not dataset.split.val_mask.any():
        raise StructuralError("dataset lacks train/val masks")
    hyper = dict(
        hyper
        or ckpt_mod.default_hyper(arch, dataset.num_features, dataset.num_classes)
    )
    ctx = build_context(dataset)
    init = ckpt_mod.init_checkpoint(
        arch, dataset.num_features, dataset.num_classes, seed=cfg.seed, hyper=hyper
    )
    params = {n: t.astype(np.float64) for n, t in init.tensors}
    names = list(params)

    drop_rng = np.random.default_rng([cfg.seed, 0xD506])
    hid_shape = None
    if arch in ("gcn", "cheb"):
        hid_shape = (dataset.graph.num_nodes, hyper["hidden"])
    elif arch == "gat":
        hid_shape = (dataset.graph.num_nodes, hyper["heads"] * hyper["head_dim"])
    x_shape = (
        ctx.x.shape if arch != "sgc" else (dataset.graph.num_nodes, dataset.num_features)
    )

    m = {n: np.zeros_like(params[n]) for n in names}
    v = {n: np.zeros_like(params[n]) for n in names}
    beta1, beta2, eps = 0.9, 0.999, 1e-8

    best_val, best_params, best_epoch = -1.0, None, -1
    for epoch in range(1, cfg.epochs + 1):
        masks = _dropout_masks(drop_rng, x_shape, hid_shape, cfg.dropout)
        loss, grads = loss_and_grads(arch, params, hyper, ctx, cfg.weight_decay, masks)
        if not np.isfinite(loss):
            raise TrainingError("training loss diverged to non-finite", epoch)
        for n in names:
            g = grads[n]
            m[n] = beta1 * m[n] + (1 - beta1) * g
            v[n] = beta2 * v[n] + (1 - beta2) * g * g
            mh = m[n] / (1 - beta1**epoch)
            vh = v[n] / (1 - beta2**epoch)
            params[n] = params[n] - cfg.lr * mh / (np.sqrt(vh) + eps)
        z_eval, _ = _forward(arch, params, hyper, ctx, None)
        val = _accuracy(z_eval, ctx.labels, ctx.val_mask)
        if val > best_val:
            best_val, best_epoch = val, epoch
            best_params = {n: params[n].copy() for n in names}

    tensors = [(n, best_params[n].astype(np.float32)) for n in names]
    out = ckpt_mod.ModelCheckpoint(arch, hyper, tensors, dataset.name)
    out.extra.update(best_val_accuracy=best_val, best_epoch=best_epoch)
    return out.validate()
