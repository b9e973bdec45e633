"""Model execution with a layer-boundary interception contract.

After each layer's nonlinearity the activation matrix is wrapped in an
ActivationRecord and passed through every matching interceptor, in
registration order; the transformed matrix feeds the next layer.  Fault
injectors and mitigation policies are both plain interceptors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..graphs import StructuralError
from . import layers

F32 = np.float32


@dataclass
class ActivationRecord:
    layer_id: str
    matrix: np.ndarray
    post_nonlinearity: bool = True


@dataclass
class Interceptor:
    selector: str  # layer_id or "*"
    fn: Callable[[ActivationRecord], np.ndarray]
    name: str = "interceptor"

    def matches(self, layer_id):
        return self.selector == "*" or self.selector == layer_id


@dataclass
class InterceptorRegistry:
    interceptors: list = field(default_factory=list)

    def register(self, selector, fn, name="interceptor"):
        self.interceptors.append(Interceptor(selector, fn, name))
        return self

    def apply(self, record):
        for ic in self.interceptors:
            if not ic.matches(record.layer_id):
                continue
            shape = record.matrix.shape
            out = ic.fn(record)
            if out is None:
                out = record.matrix
            out = np.asarray(out)
            if out.shape != shape or out.dtype != F32:
                raise StructuralError(
                    f"interceptor {ic.name!r} on {record.layer_id}: "
                    f"shape/dtype changed to {out.shape}/{out.dtype}"
                )
            record.matrix = out
        return record


def activation_census(arch, hyper, num_nodes):
    """(layer_id, element count) for each post-nonlinearity record."""
    c = hyper["out_dim"]
    if arch in ("gcn", "cheb"):
        return [("gnn1", num_nodes * hyper["hidden"]), ("gnn2", num_nodes * c)]
    if arch == "gat":
        return [("gnn1", num_nodes * hyper["heads"] * hyper["head_dim"]), ("gnn2", num_nodes * c)]
    if arch == "sgc":
        return [("gnn1", num_nodes * c)]
    raise StructuralError(f"unknown architecture {arch!r}")


def model_forward(ckpt, graph, features, registry=None):
    """Run the two-stage pipeline; returns (logits, activation records).

    Records (and the returned logits) reflect post-interception values.
    """
    registry = registry or InterceptorRegistry()
    x = np.ascontiguousarray(features, dtype=F32)
    if x.shape[0] != graph.num_nodes:
        raise StructuralError("features row count != num_nodes")
    records = []

    def emit(layer_id, matrix):
        rec = registry.apply(ActivationRecord(layer_id, matrix))
        records.append(rec)
        return rec.matrix

    arch = ckpt.arch
    if arch == "gcn":
        adj = graph.normalized_adjacency()
        h1 = emit("gnn1", layers.gcn_layer(x, adj, ckpt.tensor("gnn1.weight"), True))
        out = layers.gcn_layer(h1, adj, ckpt.tensor("gnn2.weight"), False)
        logits = emit("gnn2", layers.log_softmax(out))
    elif arch == "cheb":
        lap = graph.neg_half_laplacian()
        k = ckpt.hyper["order"]
        w1 = [ckpt.tensor(f"gnn1.w{i}") for i in range(k)]
        w2 = [ckpt.tensor(f"gnn2.w{i}") for i in range(k)]
        h1 = emit("gnn1", layers.cheb_layer(x, lap, w1, True))
        logits = emit("gnn2", layers.log_softmax(layers.cheb_layer(h1, lap, w2, False)))
    elif arch == "gat":
        sl = graph.with_self_loops()
        h1 = emit(
            "gnn1",
            layers.gat_layer(x, sl, ckpt.tensor("gnn1.weight"), ckpt.tensor("gnn1.att"), "concat", True),
        )
        w2 = ckpt.tensor("gnn2.weight")
        out = layers.gat_layer(
            h1, sl, w2.reshape(1, *w2.shape), ckpt.tensor("gnn2.att").reshape(1, -1), "single", False
        )
        logits = emit("gnn2", layers.log_softmax(out))
    elif arch == "sgc":
        adj = graph.normalized_adjacency()
        logits = emit(
            "gnn1", layers.sgc_forward(x, adj, ckpt.tensor("gnn1.weight"), ckpt.hyper["steps"])
        )
    else:
        raise StructuralError(f"unknown architecture {arch!r}")
    return logits, records


def evaluate_accuracy(logits, split):
    """Fraction of test-mask nodes predicted correctly; NaN rows never match."""
    if not split.test_mask.any():
        raise StructuralError("empty test mask")
    if logits.shape[0] != split.labels.shape[0]:
        raise StructuralError("logits row count != node count")
    rows = logits[split.test_mask]
    labels = split.labels[split.test_mask]
    valid = ~np.isnan(rows).any(axis=1)
    pred = np.argmax(rows, axis=1)
    correct = valid & (pred == labels)
    return float(correct.sum() / labels.shape[0])
