"""Independent verification oracles.

Each check_* function recomputes an operation through a deliberately separate
route (explicit dense loops, per-bit sampling, finite differences) and raises
AssertionError on disagreement.  The test suite and `gfi selftest` both run
these; keep them free of any dependency on the kernel backend they check.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.stats

from . import faults, mitigation
from .graphs import Graph, synthetic_graph
from .models import checkpoint as ckpt_mod
from .models import forward, layers, train

F32 = np.float32


# -- canonical-order dense oracles ----------------------------------------------


def dense_matmul_f32(a, b):
    """Scalar-loop float32 matmul, ascending k; independent of the kernels."""
    n, k = a.shape
    m = b.shape[1]
    out = np.zeros((n, m), dtype=F32)
    for i in range(n):
        for j in range(m):
            acc = F32(0.0)
            for kk in range(k):
                acc = F32(acc + F32(a[i, kk] * b[kk, j]))
            out[i, j] = acc
    return out


def dense_normalized_adjacency(graph):
    n = graph.num_nodes
    a = np.zeros((n, n), dtype=np.float64)
    for v in range(n):
        for u in graph.neighbors(v):
            a[v, u] = 1.0
    a += np.eye(n)
    d = a.sum(axis=1)
    inv = 1.0 / np.sqrt(d)
    return (np.outer(inv, inv) * a).astype(F32) * (a > 0).astype(F32)


def dense_neg_half_laplacian(graph):
    n = graph.num_nodes
    a = np.zeros((n, n), dtype=np.float64)
    for v in range(n):
        for u in graph.neighbors(v):
            a[v, u] = 1.0
    d = a.sum(axis=1)
    inv = np.where(d > 0, 1.0 / np.sqrt(np.maximum(d, 1.0)), 0.0)
    return (-(np.outer(inv, inv) * a)).astype(F32) * (a > 0).astype(F32)


def _dense_rowsum_f32(weights, h):
    """out[i,:] = sum_j weights[i,j]*h[j,:] over the nonzero j ascending."""
    n = weights.shape[0]
    m = h.shape[1]
    out = np.zeros((n, m), dtype=F32)
    for i in range(n):
        for j in range(n):
            w = weights[i, j]
            if w == F32(0.0):
                continue
            for kk in range(m):
                out[i, kk] = F32(out[i, kk] + F32(w * h[j, kk]))
    return out


def dense_gcn_layer(graph, h, w, apply_relu):
    a_hat = dense_normalized_adjacency(graph)
    out = _dense_rowsum_f32(a_hat, dense_matmul_f32(h, w))
    if apply_relu:
        out = np.where(np.isnan(out), out, np.where(out > 0, out, F32(0.0)))
    return out


def dense_cheb_layer(graph, h, weights, apply_relu):
    lap = dense_neg_half_laplacian(graph)
    out = dense_matmul_f32(h, weights[0])
    p_prev, p = None, h
    for k in range(1, len(weights)):
        nxt = _dense_rowsum_f32(lap, p)
        if k > 1:
            nxt = F32(2.0) * nxt - p_prev
        p_prev, p = p, nxt
        out = out + dense_matmul_f32(p, weights[k])
    if apply_relu:
        out = np.where(np.isnan(out), out, np.where(out > 0, out, F32(0.0)))
    return out


def brute_force_gat_head(graph, z, a_dst, a_src, slope=layers.LEAKY_SLOPE):
    """Materialize every attention logit explicitly; python loops, float32."""
    n = graph.num_nodes
    d = z.shape[1]
    out = np.zeros((n, d), dtype=F32)
    for u in range(n):
        hood = sorted(set(graph.neighbors(u).tolist()) | {u})
        sd = F32(0.0)
        for k in range(d):
            sd = F32(sd + F32(a_dst[k] * z[u, k]))
        logits = []
        for v in hood:
            sv = F32(0.0)
            for k in range(d):
                sv = F32(sv + F32(a_src[k] * z[v, k]))
            e = F32(sd + sv)
            if not e > F32(0.0):
                e = F32(F32(slope) * e)
            logits.append(e)
        m = logits[0]
        for e in logits[1:]:
            if e > m:
                m = e
        ws = [F32(math.exp(float(e) - float(m))) for e in logits]
        tot = F32(0.0)
        for wv in ws:
            tot = F32(tot + wv)
        for v, wv in zip(hood, ws):
            alpha = F32(wv / tot)
            for k in range(d):
                out[u, k] = F32(out[u, k] + F32(alpha * z[v, k]))
    return out


def brute_force_topo_filter(graph, x):
    """Per-node, per-feature neighbor interval clamp; python loops."""
    n, f = x.shape
    out = x.copy()
    for v in range(n):
        nb = graph.neighbors(v)
        if nb.shape[0] <= 1:
            continue
        for i in range(f):
            vals = [x[u, i] for u in nb if not np.isnan(x[u, i])]
            if not vals:
                continue
            hi, lo = max(vals), min(vals)
            val = x[v, i]
            if np.isnan(val):
                val = F32(0.0)
            out[v, i] = min(max(val, lo), hi)
    return out


# -- checks ----------------------------------------------------------------------


def _rand_graph(rng, n, p=0.4):
    src, dst = [], []
    for u in range(n):
        for v in range(u + 1, n):
            if rng.random() < p:
                src.append(u)
                dst.append(v)
    from .graphs import edges_to_csr

    return edges_to_csr(n, np.array(src, dtype=np.int64), np.array(dst, dtype=np.int64))


def check_gcn_dense_oracle(cases=5, seed=7):
    rng = np.random.default_rng(seed)
    for _ in range(cases):
        g = _rand_graph(rng, 5)
        h = rng.standard_normal((5, 3)).astype(F32)
        w = rng.standard_normal((3, 4)).astype(F32)
        got = layers.gcn_layer(h, g.normalized_adjacency(), w, True)
        want = dense_gcn_layer(g, h, w, True)
        assert np.array_equal(got, want), "gcn_layer != canonical dense oracle"


def check_cheb_dense_oracle(cases=5, seed=11):
    rng = np.random.default_rng(seed)
    for _ in range(cases):
        g = _rand_graph(rng, 5)
        h = rng.standard_normal((5, 3)).astype(F32)
        ws = [rng.standard_normal((3, 4)).astype(F32) for _ in range(2)]
        got = layers.cheb_layer(h, g.neg_half_laplacian(), ws, True)
        want = dense_cheb_layer(g, h, ws, True)
        assert np.array_equal(got, want), "cheb_layer != dense recurrence oracle"


def check_gat_brute_force(cases=5, seed=13):
    rng = np.random.default_rng(seed)
    for _ in range(cases):
        g = _rand_graph(rng, 4, p=0.6)
        h = rng.standard_normal((4, 3)).astype(F32)
        w = rng.standard_normal((1, 3, 2)).astype(F32)
        att = rng.standard_normal((1, 4)).astype(F32)
        got = layers.gat_layer(h, g.with_self_loops(), w, att, "single", False)
        z = dense_matmul_f32(h, w[0])
        want = brute_force_gat_head(g, z, att[0, :2], att[0, 2:])
        assert np.allclose(got, want, rtol=2e-7, atol=0), "gat_layer != brute-force oracle"


def check_topo_filter_oracle(graphs=100, nodes=20, seed=17):
    rng = np.random.default_rng(seed)
    for i in range(graphs):
        g = _rand_graph(rng, nodes, p=0.2)
        x = (rng.standard_normal((nodes, 5)) * 3).astype(F32)
        if i % 3 == 0:  # sprinkle NaN/Inf corruption
            x[rng.integers(0, nodes), rng.integers(0, 5)] = np.nan
            x[rng.integers(0, nodes), rng.integers(0, 5)] = np.inf
        rec = forward.ActivationRecord("gnn1", x.copy())
        got = mitigation.topo_filter(rec, g).matrix
        want = brute_force_topo_filter(g, x)
        assert np.array_equal(got, want, equal_nan=True), f"topo_filter mismatch, case {i}"
    check_topo_worked_example()


def check_topo_worked_example():
    """Star node [3,6,-2] with neighbors [4,4,-1],[2,4,-2],[2,3,-3] -> [3,4,-2]."""
    row_ptr = np.array([0, 3, 4, 5, 6], dtype=np.int32)
    col_idx = np.array([1, 2, 3, 0, 0, 0], dtype=np.int32)
    g = Graph(4, row_ptr, col_idx).validate()
    x = np.array(
        [[3, 6, -2], [4, 4, -1], [2, 4, -2], [2, 3, -3]], dtype=F32
    )
    rec = forward.ActivationRecord("gnn1", x.copy())
    got = mitigation.topo_filter(rec, g).matrix
    assert np.array_equal(got[0], np.array([3, 4, -2], dtype=F32)), got[0]
    # degree-1 nodes are untouched
    assert np.array_equal(got[1:], x[1:]), "leaf rows must pass through"


def check_bitflip_involution(pairs=1_000_000, seed=23):
    rng = np.random.default_rng(seed)
    words = rng.integers(0, 2**32, size=pairs, dtype=np.uint64).astype(np.uint32)
    masks = rng.integers(0, 2**32, size=pairs, dtype=np.uint64).astype(np.uint32)
    once = words ^ masks
    twice = once ^ masks
    assert np.array_equal(twice, words), "word^mask^mask != word"
    # scalar API agrees on a sample
    for i in range(0, pairs, pairs // 100):
        bits = [b for b in range(32) if (int(masks[i]) >> b) & 1]
        assert faults.flip_bits_in_word(int(words[i]), bits) == int(once[i])


def check_error_map_bernoulli_equivalence(maps=10_000, bits=64, seed=31):
    """Chi-square GOF of per-bit flip frequencies against Bernoulli(ber),
    for both the binomial-count map generator and a direct per-bit sampler."""
    census = [("t", bits // 32)]
    for ber in (0.1, 0.5):
        freq = np.zeros(bits, dtype=np.int64)
        for i in range(maps):
            emap = faults.generate_error_map(census, ber, seed * maps + i)
            pos = emap.element * 32 + emap.bit
            freq[pos] += 1
        rng = np.random.default_rng(seed)
        oracle = np.zeros(bits, dtype=np.int64)
        for _ in range(maps):
            oracle += rng.random(bits) < ber

        crit = scipy.stats.chi2.ppf(0.99, df=bits)
        for name, counts in (("map", freq), ("bernoulli-oracle", oracle)):
            e1, e0 = maps * ber, maps * (1 - ber)
            stat = float((((counts - e1) ** 2) / e1 + ((maps - counts - e0) ** 2) / e0).sum())
            assert stat < crit, f"{name} ber={ber}: chi2 {stat:.1f} >= {crit:.1f}"


def check_mask_semantics():
    one = 0x3F800000  # 1.0
    neg_one = 0xBF800000  # -1.0
    inf = 0x7F800000

    # sign-bit flip, bit-mode: original bit was 0, repair restores
    flipped = faults.flip_bits_in_word(one, [31])
    assert flipped == neg_one
    repaired = mitigation.mask_repair(
        np.array([flipped], dtype=np.uint32).view(F32), [0], [31], "bit"
    )
    assert repaired.view(np.uint32)[0] == one

    # exponent flip, word-mode: whole word zeroed
    flipped = faults.flip_bits_in_word(one, [30])
    assert flipped == inf
    repaired = mitigation.mask_repair(
        np.array([flipped], dtype=np.uint32).view(F32), [0], [30], "word"
    )
    assert repaired.view(np.uint32)[0] == 0

    # sign-bit flip of -1.0, bit-mode: forced to 0 leaves +1.0, NOT restored
    flipped = faults.flip_bits_in_word(neg_one, [31])
    assert flipped == one
    repaired = mitigation.mask_repair(
        np.array([flipped], dtype=np.uint32).view(F32), [0], [31], "bit"
    )
    assert repaired.view(np.uint32)[0] == one, "bit-mode must not restore a 1-bit"


def check_gradients(rel_tol=1e-4, step=1e-3, seed=41):
    """Central finite differences vs analytic gradients, float64, all archs."""
    g, x, split = synthetic_graph(seed=seed, n=8, avg_degree=3, num_features=4, num_classes=2)

    class _DS:
        pass

    ds = _DS()
    ds.graph, ds.features, ds.split = g, x, split
    ds.num_features, ds.num_classes = 4, 2
    ds.name = "gradcheck"

    small_hyper = {
        "gcn": {"in_dim": 4, "out_dim": 2, "hidden": 3},
        "cheb": {"in_dim": 4, "out_dim": 2, "hidden": 3, "order": 2},
        "gat": {"in_dim": 4, "out_dim": 2, "heads": 2, "head_dim": 3},
        "sgc": {"in_dim": 4, "out_dim": 2, "steps": 2},
    }
    wd = 5e-4
    for arch in ckpt_mod.ARCHS:
        hyper = small_hyper[arch]
        init = ckpt_mod.init_checkpoint(arch, 4, 2, seed=seed, hyper=hyper)
        params = {n: t.astype(np.float64) for n, t in init.tensors}
        ctx = train.build_context(ds)
        _, grads = train.loss_and_grads(arch, params, hyper, ctx, wd)
        for name, w in params.items():
            flat = w.reshape(-1)
            g_flat = grads[name].reshape(-1)
            for j in range(flat.size):
                orig = flat[j]
                flat[j] = orig + step
                up = train.loss_only(arch, params, hyper, ctx, wd)
                flat[j] = orig - step
                dn = train.loss_only(arch, params, hyper, ctx, wd)
                flat[j] = orig
                fd = (up - dn) / (2 * step)
                rel = abs(g_flat[j] - fd) / max(abs(g_flat[j]), abs(fd), 1e-3)
                assert rel <= rel_tol, (
                    f"{arch} {name}[{j}]: analytic {g_flat[j]:.6g} vs fd {fd:.6g} "
                    f"(rel {rel:.2e})"
                )


ALL_CHECKS = [
    ("gcn-dense-oracle", check_gcn_dense_oracle),
    ("cheb-dense-oracle", check_cheb_dense_oracle),
    ("gat-brute-force", check_gat_brute_force),
    ("topo-filter-oracle", check_topo_filter_oracle),
    ("bitflip-involution", check_bitflip_involution),
    ("error-map-bernoulli", check_error_map_bernoulli_equivalence),
    ("mask-semantics", check_mask_semantics),
    ("gradient-check", check_gradients),
]


def run_all(report=print):
    """Run every oracle; returns the number of failures."""
    failures = 0
    for name, fn in ALL_CHECKS:
        try:
            fn()
        except AssertionError as exc:
            failures += 1
            report(f"FAIL {name}: {exc}")
        else:
            report(f"PASS {name}")
    return failures
