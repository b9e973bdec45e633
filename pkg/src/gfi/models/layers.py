"""Inference-path layer math: float32, canonical summation order.

All reductions run ascending (neighbor position, then feature index) through
the kernel backend, so fault-free forward passes are bit-reproducible and
checkable against explicit dense oracles.  Nonlinearities are shared numpy
code: elementwise, transcendentals evaluated in float64 and cast back.
"""

import numpy as np

from .. import _kernels as K
from ..graphs import StructuralError

F32 = np.float32

LEAKY_SLOPE = 0.2  # GAT attention nonlinearity


def relu(x):
    out = np.where(x > F32(0), x, F32(0))
    return np.where(np.isnan(x), x, out)


def elu(x):
    neg = np.expm1(x.astype(np.float64)).astype(F32)
    return np.where(x > F32(0), x, neg)


def log_softmax(x):
    m = np.max(x, axis=1, keepdims=True)
    d = (x - m).astype(np.float64)
    s = np.log(np.sum(np.exp(d), axis=1, keepdims=True))
    return (d - s).astype(F32)


def _check_dims(name, got, want):
    if got != want:
        raise StructuralError(f"{name}: dimension mismatch {got} != {want}")


def gcn_layer(h, adj, w, apply_relu):
    """act(Â · h · W), associating as Â·(h·W)."""
    _check_dims("gcn_layer", h.shape[1], w.shape[0])
    _check_dims("gcn_layer", adj.row_ptr.shape[0] - 1, h.shape[0])
    out = K.spmm(adj.row_ptr, adj.col_idx, adj.values, K.matmul(h, w))
    return relu(out) if apply_relu else out


def cheb_layer(h, lap, weights, apply_relu):
    """act(sum_k T_k(L~)·h·W_k), T_0=I, T_1=L~, T_k = 2·L~·T_{k-1} - T_{k-2}."""
    if not weights:
        raise StructuralError("cheb_layer: needs at least one weight matrix")
    for w in weights:
        _check_dims("cheb_layer", h.shape[1], w.shape[0])
    out = K.matmul(h, weights[0])
    p_prev, p = None, h
    for k in range(1, len(weights)):
        nxt = K.spmm(lap.row_ptr, lap.col_idx, lap.values, p)
        if k > 1:
            nxt = F32(2.0) * nxt - p_prev
        p_prev, p = p, nxt
        out = out + K.matmul(p, weights[k])
    return relu(out) if apply_relu else out


def gat_layer(h, self_loop_adj, weights, att, combine, apply_elu):
    """Multi-head attention layer over N(u) ∪ {u}.

    weights: (heads, in_dim, head_dim); att: (heads, 2*head_dim) with the
    first half scoring the aggregating node and the second half the neighbor.
    combine="concat" joins head outputs; "single" requires one head.
    """
    heads, in_dim, d = weights.shape
    _check_dims("gat_layer", h.shape[1], in_dim)
    _check_dims("gat_layer", att.shape, (heads, 2 * d))
    if combine == "single" and heads != 1:
        raise StructuralError("gat_layer: combine='single' requires one head")
    if combine not in ("concat", "single"):
        raise StructuralError(f"gat_layer: unknown combine {combine!r}")
    outs = []
    for hd in range(heads):
        z = K.matmul(h, weights[hd])
        s_dst = K.matmul(z, np.ascontiguousarray(att[hd, :d]).reshape(d, 1))[:, 0]
        s_src = K.matmul(z, np.ascontiguousarray(att[hd, d:]).reshape(d, 1))[:, 0]
        outs.append(
            K.gat_head(
                self_loop_adj.row_ptr,
                self_loop_adj.col_idx,
                z,
                np.ascontiguousarray(s_dst),
                np.ascontiguousarray(s_src),
                LEAKY_SLOPE,
            )
        )
    out = outs[0] if len(outs) == 1 else np.concatenate(outs, axis=1)
    return elu(out) if apply_elu else out


def sgc_forward(x, adj, w, steps):
    """LogSoftmax(Â^K · X · W); no intermediate nonlinearity."""
    if steps < 1:
        raise StructuralError("sgc_forward: steps must be >= 1")
    _check_dims("sgc_forward", x.shape[1], w.shape[0])
    p = x
    for _ in range(steps):
        p = K.spmm(adj.row_ptr, adj.col_idx, adj.values, p)
    return log_softmax(K.matmul(p, w))
