"""Citation-graph loading, validation, and normalization.

Graphs are undirected simple graphs in CSR form with neighbors stored in
ascending order, so every sparse computation downstream is deterministic.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

F32 = np.float32
IDX = np.int32


class ParseError(ValueError):
    """Malformed input line; carries the 1-based line number."""

    def __init__(self, path, line_no, message):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = path
        self.line_no = line_no


class StructuralError(ValueError):
    """Input or argument violates a structural contract."""


@dataclass
class Graph:
    """Undirected simple graph, CSR adjacency, no stored self-loops."""

    num_nodes: int
    row_ptr: np.ndarray  # int32, len num_nodes+1
    col_idx: np.ndarray  # int32, neighbors ascending per row

    def __post_init__(self):
        self.row_ptr = np.ascontiguousarray(self.row_ptr, dtype=IDX)
        self.col_idx = np.ascontiguousarray(self.col_idx, dtype=IDX)
        self._derived = {}

    @property
    def num_edges(self):
        """Undirected edge count."""
        return self.col_idx.shape[0] // 2

    def degrees(self):
        return self.row_ptr[1:] - self.row_ptr[:-1]

    def neighbors(self, v):
        return self.col_idx[self.row_ptr[v] : self.row_ptr[v + 1]]

    def validate(self):
        n = self.num_nodes
        if self.row_ptr.shape[0] != n + 1:
            raise StructuralError("row_ptr length != num_nodes+1")
        if self.row_ptr[0] != 0 or self.row_ptr[-1] != self.col_idx.shape[0]:
            raise StructuralError("row_ptr endpoints inconsistent with col_idx")
        if np.any(np.diff(self.row_ptr) < 0):
            raise StructuralError("row_ptr not non-decreasing")
        if self.col_idx.size and (self.col_idx.min() < 0 or self.col_idx.max() >= n):
            raise StructuralError("neighbor index out of range")
        for v in range(n):
            nb = self.neighbors(v)
            if np.any(np.diff(nb) <= 0):
                raise StructuralError(f"row {v}: neighbors not strictly ascending")
            if np.any(nb == v):
                raise StructuralError(f"row {v}: self-loop stored in raw graph")
        # symmetry: sorted (u,v) pairs must equal sorted (v,u) pairs
        rows = np.repeat(np.arange(n, dtype=IDX), self.degrees())
        fwd = rows.astype(np.int64) * n + self.col_idx
        rev = self.col_idx.astype(np.int64) * n + rows
        if not np.array_equal(np.sort(fwd), np.sort(rev)):
            raise StructuralError("adjacency not symmetric")
        return self

    # -- derived operators, built once per graph ------------------------------

    def _get(self, key, builder):
        if key not in self._derived:
            self._derived[key] = builder()
        return self._derived[key]

    def normalized_adjacency(self):
        return self._get("norm_adj", lambda: normalize_adjacency(self))

    def neg_half_laplacian(self):
        return self._get("neg_lap", lambda: neg_half_laplacian(self))

    def with_self_loops(self):
        return self._get("self_loops", lambda: _add_self_loops(self))


@dataclass
class SparseMatrix:
    """Symmetric CSR matrix with float32 values (same node order as Graph)."""

    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray  # float32


@dataclass
class LabeledSplit:
    labels: np.ndarray  # int64 class indices
    train_mask: np.ndarray
    val_mask: np.ndarray
    test_mask: np.ndarray
    num_classes: int

    def validate(self):
        n = self.labels.shape[0]
        for m in (self.train_mask, self.val_mask, self.test_mask):
            if m.shape[0] != n or m.dtype != np.bool_:
                raise StructuralError("mask shape/dtype mismatch")
        overlap = (
            (self.train_mask & self.val_mask)
            | (self.train_mask & self.test_mask)
            | (self.val_mask & self.test_mask)
        )
        if overlap.any():
            raise StructuralError("split masks overlap")
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise StructuralError("label outside [0, num_classes)")
        return self


@dataclass
class LoadStats:
    """Bookkeeping from load_planetoid."""

    raw_cite_lines: int = 0
    dropped_unknown: int = 0
    dropped_self: int = 0
    undirected_edges: int = 0
    label_names: list = field(default_factory=list)


def edges_to_csr(num_nodes, src, dst):
    """Symmetrize, deduplicate, and sort an edge list into CSR."""
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    keep = src != dst
    src, dst = src[keep], dst[keep]
    a = np.concatenate([src, dst])
    b = np.concatenate([dst, src])
    key = a * num_nodes + b
    key = np.unique(key)
    rows = (key // num_nodes).astype(IDX)
    cols = (key % num_nodes).astype(IDX)
    row_ptr = np.zeros(num_nodes + 1, dtype=IDX)
    np.add.at(row_ptr, rows + 1, 1)
    np.cumsum(row_ptr, out=row_ptr)
    return Graph(num_nodes, row_ptr, cols)


def load_planetoid(content_path, cites_path, return_stats=False):
    """Load a Planetoid-format citation graph.

    content lines: ``<node-id> <f_1..f_k> <label>`` (tab-separated);
    cites lines: ``<cited-id> <citing-id>``.  Node order follows the content
    file; label strings map to class indices by first appearance; edges are
    symmetrized and deduplicated; cite lines naming unknown ids are dropped
    (counted in the returned stats / a warning).
    """
    stats = LoadStats()
    ids = {}
    feat_rows = []
    label_ids = []
    label_map = {}
    width = None
    with open(content_path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) < 3:
                raise ParseError(content_path, line_no, "expected id, features, label")
            node_id, *feats, label = parts
            if node_id in ids:
                raise ParseError(content_path, line_no, f"duplicate node id {node_id!r}")
            if width is None:
                width = len(feats)
            elif len(feats) != width:
                raise StructuralError(
                    f"{content_path}:{line_no}: feature width {len(feats)} != {width}"
                )
            try:
                row = np.asarray(feats, dtype=F32)
            except ValueError as exc:
                raise ParseError(content_path, line_no, f"bad feature value: {exc}")
            if not np.all(np.isfinite(row)):
                raise ParseError(content_path, line_no, "non-finite feature value")
            ids[node_id] = len(ids)
            feat_rows.append(row)
            if label not in label_map:
                label_map[label] = len(label_map)
            label_ids.append(label_map[label])
    if not feat_rows:
        raise StructuralError(f"{content_path}: empty content file")

    n = len(ids)
    src, dst = [], []
    with open(cites_path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ParseError(cites_path, line_no, "expected two tab-separated ids")
            stats.raw_cite_lines += 1
            cited, citing = parts
            if cited not in ids or citing not in ids:
                stats.dropped_unknown += 1
                continue
            u, v = ids[cited], ids[citing]
            if u == v:
                stats.dropped_self += 1
                continue
            src.append(u)
            dst.append(v)

    graph = edges_to_csr(n, src, dst).validate()
    stats.undirected_edges = graph.num_edges
    stats.label_names = [name for name, _ in sorted(label_map.items(), key=lambda kv: kv[1])]
    if stats.dropped_unknown:
        log.warning(
            "%s: dropped %d cite line(s) naming unknown node ids",
            cites_path,
            stats.dropped_unknown,
        )

    features = np.vstack(feat_rows)
    labels = np.array(label_ids, dtype=np.int64)
    split = standard_split(labels, len(label_map))
    if return_stats:
        return graph, features, split, stats
    return graph, features, split


def save_planetoid(graph, features, labels, content_path, cites_path, label_names=None):
    """Write a graph back to Planetoid text (node ids ``n0..n{N-1}``).

    Each undirected edge becomes one cite line (lower index first), so a
    reload reproduces the identical Graph.
    """
    n = graph.num_nodes
    if label_names is None:
        label_names = [f"c{k}" for k in range(int(labels.max()) + 1 if n else 0)]
    with open(content_path, "w", encoding="utf-8") as fh:
        for v in range(n):
            feats = "\t".join(repr(float(x)) for x in features[v])
            fh.write(f"n{v}\t{feats}\t{label_names[labels[v]]}\n")
    with open(cites_path, "w", encoding="utf-8") as fh:
        for v in range(n):
            for u in graph.neighbors(v):
                if v < u:
                    fh.write(f"n{v}\tn{u}\n")


def normalize_adjacency(graph):
    """D^(-1/2) (A+I) D^(-1/2) with degrees counted after the self-loop."""
    n = graph.num_nodes
    deg = graph.degrees().astype(np.float64) + 1.0
    inv_sqrt = 1.0 / np.sqrt(deg)
    # splice the diagonal entry into each sorted row
    new_ptr = np.zeros(n + 1, dtype=IDX)
    new_ptr[1:] = np.cumsum(graph.degrees() + 1)
    nnz = int(new_ptr[-1])
    idx = np.empty(nnz, dtype=IDX)
    val = np.empty(nnz, dtype=F32)
    for v in range(n):
        nb = graph.neighbors(v)
        pos = int(np.searchsorted(nb, v))
        row = np.insert(nb, pos, v)
        idx[new_ptr[v] : new_ptr[v + 1]] = row
        val[new_ptr[v] : new_ptr[v + 1]] = (inv_sqrt[v] * inv_sqrt[row]).astype(F32)
    return SparseMatrix(new_ptr, idx, val)


def neg_half_laplacian(graph):
    """-D^(-1/2) A D^(-1/2): the rescaled Laplacian L_sym - I at lambda_max=2.

    Raw degrees, no self-loops; rows of isolated nodes are empty.
    """
    deg = graph.degrees().astype(np.float64)
    with np.errstate(divide="ignore"):
        inv_sqrt = np.where(deg > 0, 1.0 / np.sqrt(np.maximum(deg, 1.0)), 0.0)
    rows = np.repeat(np.arange(graph.num_nodes, dtype=IDX), graph.degrees())
    val = (-(inv_sqrt[rows] * inv_sqrt[graph.col_idx])).astype(F32)
    return SparseMatrix(graph.row_ptr.copy(), graph.col_idx.copy(), val)


def _add_self_loops(graph):
    """CSR structure of A+I (values unused); neighborhoods N(v) ∪ {v}."""
    n = graph.num_nodes
    new_ptr = np.zeros(n + 1, dtype=IDX)
    new_ptr[1:] = np.cumsum(graph.degrees() + 1)
    idx = np.empty(int(new_ptr[-1]), dtype=IDX)
    for v in range(n):
        nb = graph.neighbors(v)
        pos = int(np.searchsorted(nb, v))
        idx[new_ptr[v] : new_ptr[v + 1]] = np.insert(nb, pos, v)
    return SparseMatrix(new_ptr, idx, np.ones(idx.shape[0], dtype=F32))


def standard_split(labels, num_classes, scheme="planetoid"):
    """Semi-supervised split: first 20 per class train, next 500 val,
    final 1000 test (Planetoid convention).

    Small graphs reduce val/test proportionally so the masks stay disjoint.
    """
    if scheme != "planetoid":
        raise StructuralError(f"unknown split scheme {scheme!r}")
    labels = np.asarray(labels, dtype=np.int64)
    n = labels.shape[0]
    counts = np.bincount(labels, minlength=num_classes)
    if np.any(counts < 20):
        raise StructuralError(
            f"planetoid split needs >= 20 nodes per class, got {counts.min()}"
        )
    train = np.zeros(n, dtype=bool)
    taken = np.zeros(num_classes, dtype=np.int64)
    for v in range(n):
        c = labels[v]
        if taken[c] < 20:
            train[v] = True
            taken[c] += 1
        if taken.min() >= 20:
            break
    rest = np.nonzero(~train)[0]
    if rest.shape[0] >= 1500:
        val_n, test_n = 500, 1000
    else:
        val_n = rest.shape[0] // 3
        test_n = rest.shape[0] - val_n
    val = np.zeros(n, dtype=bool)
    val[rest[:val_n]] = True
    test = np.zeros(n, dtype=bool)
    test[np.setdiff1d(np.arange(n - test_n, n), np.nonzero(train | val)[0])] = True
    return LabeledSplit(labels, train, val, test, num_classes).validate()


def synthetic_graph(seed, n, avg_degree, num_features, num_classes, signal=0.6, homophily=0.9):
    """Deterministic planted-partition fixture.

    Balanced classes in random order, edges mostly intra-class, features =
    class centroid * signal + unit noise, row-normalized.  A linear model can
    beat chance by a wide margin.
    """
    if n < 2:
        raise StructuralError("synthetic_graph needs n >= 2")
    if avg_degree >= n:
        raise StructuralError("avg_degree must be < n")
    rng = np.random.default_rng(seed)
    labels = rng.permutation(np.arange(n, dtype=np.int64) % num_classes)
    members = [np.nonzero(labels == c)[0] for c in range(num_classes)]

    target = int(round(n * avg_degree / 2))
    chosen = set()
    src, dst = [], []
    guard = 0
    while len(src) < target and guard < 50:
        guard += 1
        need = target - len(src)
        batch = max(64, 2 * need)
        intra = rng.random(batch) < homophily
        ca = rng.integers(0, num_classes, size=batch)
        cb = np.where(intra, ca, (ca + 1 + rng.integers(0, num_classes - 1, size=batch)) % num_classes)
        for a_cls, b_cls in zip(ca, cb):
            u = int(members[a_cls][rng.integers(0, members[a_cls].shape[0])])
            v = int(members[b_cls][rng.integers(0, members[b_cls].shape[0])])
            if u == v:
                continue
            key = (u, v) if u < v else (v, u)
            if key in chosen:
                continue
            chosen.add(key)
            src.append(key[0])
            dst.append(key[1])
            if len(src) >= target:
                break
    graph = edges_to_csr(n, np.array(src), np.array(dst)).validate()

    centroids = rng.standard_normal((num_classes, num_features))
    feats = centroids[labels] * signal + rng.standard_normal((n, num_features))
    norms = np.sqrt((feats * feats).sum(axis=1, keepdims=True))
    feats = (feats / np.maximum(norms, 1e-12)).astype(F32)

    split = standard_split(labels, num_classes) if np.bincount(labels).min() >= 20 else _tiny_split(labels, num_classes)
    return graph, feats, split


def _tiny_split(labels, num_classes):
    """Fallback split for fixtures too small for the planetoid scheme."""
    n = labels.shape[0]
    train = np.zeros(n, dtype=bool)
    taken = np.zeros(num_classes, dtype=np.int64)
    per_class = max(1, min(20, n // (3 * num_classes)))
    for v in range(n):
        c = labels[v]
        if taken[c] < per_class:
            train[v] = True
            taken[c] += 1
    rest = np.nonzero(~train)[0]
    val = np.zeros(n, dtype=bool)
    val[rest[: rest.shape[0] // 2]] = True
    test = np.zeros(n, dtype=bool)
    test[rest[rest.shape[0] // 2 :]] = True
    return LabeledSplit(labels, train, val, test, num_classes).validate()
