"""Numba kernels. Semantics mirror numpy_impl bit-for-bit; see its docstring."""

import math

import numpy as np
from numba import njit

F32 = np.float32

_JIT = dict(cache=True, nogil=True)


@njit(**_JIT)
def matmul(a, b):
    n, k = a.shape
    m = b.shape[1]
    out = np.zeros((n, m), dtype=F32)
    for i in range(n):
        for j in range(m):
            acc = F32(0.0)
            for kk in range(k):
                acc += a[i, kk] * b[kk, j]
            out[i, j] = acc
    return out


@njit(**_JIT)
def spmm(row_ptr, col_idx, values, dense):
    n = row_ptr.shape[0] - 1
    m = dense.shape[1]
    out = np.zeros((n, m), dtype=F32)
    for i in range(n):
        for e in range(row_ptr[i], row_ptr[i + 1]):
            v = values[e]
            c = col_idx[e]
            for j in range(m):
                out[i, j] += v * dense[c, j]
    return out


@njit(**_JIT)
def gat_head(row_ptr, col_idx, z, score_dst, score_src, slope):
    n = row_ptr.shape[0] - 1
    d = z.shape[1]
    nnz = col_idx.shape[0]
    sl = F32(slope)

    s = np.empty(nnz, dtype=F32)
    for u in range(n):
        for e in range(row_ptr[u], row_ptr[u + 1]):
            t = score_dst[u] + score_src[col_idx[e]]
            if not (t > F32(0.0)):
                t = sl * t
            s[e] = t

    out = np.zeros((n, d), dtype=F32)
    for u in range(n):
        lo, hi = row_ptr[u], row_ptr[u + 1]
        m = F32(-np.inf)
        for e in range(lo, hi):
            t = s[e]
            # sticky-NaN maximum, matching np.maximum
            if m == m and (t != t or t > m):
                m = t
        tot = F32(0.0)
        for e in range(lo, hi):
            w = F32(math.exp(np.float64(s[e] - m)))
            s[e] = w
            tot += w
        for e in range(lo, hi):
            alpha = s[e] / tot
            c = col_idx[e]
            for j in range(d):
                out[u, j] += alpha * z[c, j]
    return out


@njit(**_JIT)
def topo_filter(row_ptr, col_idx, x):
    n = row_ptr.shape[0] - 1
    f = x.shape[1]
    out = x.copy()
    for u in range(n):
        lo, hi = row_ptr[u], row_ptr[u + 1]
        if hi - lo <= 1:
            continue
        for j in range(f):
            cmax = F32(np.nan)
            cmin = F32(np.nan)
            for e in range(lo, hi):
                t = x[col_idx[e], j]
                if t == t:  # NaN neighbor values never enter the interval
                    if cmax != cmax or t > cmax:
                        cmax = t
                    if cmin != cmin or t < cmin:
                        cmin = t
            if cmax != cmax:
                continue
            v = x[u, j]
            if v != v:
                v = F32(0.0)
            if v < cmin:
                v = cmin
            if v > cmax:
                v = cmax
            out[u, j] = v
    return out
