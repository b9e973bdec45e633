"""Model checkpoints: architecture tag, hyperparameters, named float32 tensors.

Tensor names carry the layer prefix ("gnn1." / "gnn2.") that fault targets
and layer-sensitivity sweeps select on.  File format "GFI1": little-endian,
bit-exact round-trip.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from ..graphs import StructuralError

F32 = np.float32

ARCHS = ("gcn", "gat", "cheb", "sgc")

MAGIC = b"GFI1"


def default_hyper(arch, num_features, num_classes):
    base = {"in_dim": num_features, "out_dim": num_classes}
    if arch == "gcn":
        base["hidden"] = 16
    elif arch == "cheb":
        base.update(hidden=16, order=2)
    elif arch == "gat":
        base.update(heads=8, head_dim=8)
    elif arch == "sgc":
        base["steps"] = 2
    else:
        raise StructuralError(f"unknown architecture {arch!r}")
    return base


def tensor_specs(arch, hyper):
    """Ordered (name, shape) pairs defining each architecture's weights."""
    f, c = hyper["in_dim"], hyper["out_dim"]
    if arch == "gcn":
        h = hyper["hidden"]
        return [("gnn1.weight", (f, h)), ("gnn2.weight", (h, c))]
    if arch == "cheb":
        h, k = hyper["hidden"], hyper["order"]
        specs = [(f"gnn1.w{i}", (f, h)) for i in range(k)]
        specs += [(f"gnn2.w{i}", (h, c)) for i in range(k)]
        return specs
    if arch == "gat":
        heads, d = hyper["heads"], hyper["head_dim"]
        return [
            ("gnn1.weight", (heads, f, d)),
            ("gnn1.att", (heads, 2 * d)),
            ("gnn2.weight", (heads * d, c)),
            ("gnn2.att", (2 * c,)),
        ]
    if arch == "sgc":
        return [("gnn1.weight", (f, c))]
    raise StructuralError(f"unknown architecture {arch!r}")


@dataclass
class ModelCheckpoint:
    arch: str
    hyper: dict
    tensors: list  # ordered (name, float32 ndarray)
    dataset: str = ""
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.tensors = [(n, np.ascontiguousarray(t, dtype=F32)) for n, t in self.tensors]

    @property
    def num_params(self):
        return int(sum(t.size for _, t in self.tensors))

    def tensor(self, name):
        for n, t in self.tensors:
            if n == name:
                return t
        raise StructuralError(f"checkpoint has no tensor {name!r}")

    def tensor_names(self):
        return [n for n, _ in self.tensors]

    def layer_tensors(self, layer_id):
        names = [n for n, _ in self.tensors if n.startswith(layer_id + ".")]
        if not names:
            raise StructuralError(f"no layer {layer_id!r} in {self.arch} checkpoint")
        return names

    def copy(self):
        return ModelCheckpoint(
            self.arch,
            dict(self.hyper),
            [(n, t.copy()) for n, t in self.tensors],
            self.dataset,
            dict(self.extra),
        )

    def validate(self):
        expected = tensor_specs(self.arch, self.hyper)
        got = [(n, t.shape) for n, t in self.tensors]
        want = [(n, tuple(s)) for n, s in expected]
        if got != want:
            raise StructuralError(f"tensor layout mismatch: {got} != {want}")
        for n, t in self.tensors:
            if not np.all(np.isfinite(t)):
                raise StructuralError(f"non-finite values in tensor {n!r}")
        return self


def init_checkpoint(arch, num_features, num_classes, seed=0, hyper=None, dataset=""):
    """Glorot-uniform initialized checkpoint (deterministic per seed)."""
    hyper = dict(hyper or default_hyper(arch, num_features, num_classes))
    rng = np.random.default_rng(seed)
    tensors = []
    for name, shape in tensor_specs(arch, hyper):
        if len(shape) == 1:
            fan_in = fan_out = shape[0]
        elif len(shape) == 2:
            fan_in, fan_out = shape
        else:  # stacked per-head matrices
            fan_in, fan_out = shape[-2], shape[-1]
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        tensors.append((name, rng.uniform(-bound, bound, size=shape).astype(F32)))
    return ModelCheckpoint(arch, hyper, tensors, dataset).validate()


def param_count(arch, num_features, num_classes, hyper=None):
    hyper = hyper or default_hyper(arch, num_features, num_classes)
    return int(
        sum(int(np.prod(shape)) for _, shape in tensor_specs(arch, hyper))
    )


# -- GFI1 file format ---------------------------------------------------------


def save_checkpoint(ckpt, path):
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<B", 1))
        _write_str(fh, ckpt.arch)
        _write_str(fh, ckpt.dataset)
        fh.write(struct.pack("<H", len(ckpt.hyper)))
        for key in sorted(ckpt.hyper):
            _write_str(fh, key)
            fh.write(struct.pack("<d", float(ckpt.hyper[key])))
        fh.write(struct.pack("<I", len(ckpt.tensors)))
        for name, t in ckpt.tensors:
            _write_str(fh, name)
            fh.write(struct.pack("<B", t.ndim))
            fh.write(struct.pack(f"<{t.ndim}I", *t.shape))
            fh.write(np.ascontiguousarray(t, dtype="<f4").tobytes())


def load_checkpoint(path):
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise StructuralError(f"{path}: not a GFI1 checkpoint")
        (version,) = struct.unpack("<B", fh.read(1))
        if version != 1:
            raise StructuralError(f"{path}: unsupported version {version}")
        arch = _read_str(fh)
        dataset = _read_str(fh)
        (n_hyper,) = struct.unpack("<H", fh.read(2))
        hyper = {}
        for _ in range(n_hyper):
            key = _read_str(fh)
            (val,) = struct.unpack("<d", fh.read(8))
            hyper[key] = int(val) if float(val).is_integer() else val
        (n_tensors,) = struct.unpack("<I", fh.read(4))
        tensors = []
        for _ in range(n_tensors):
            name = _read_str(fh)
            (rank,) = struct.unpack("<B", fh.read(1))
            shape = struct.unpack(f"<{rank}I", fh.read(4 * rank))
            count = int(np.prod(shape)) if rank else 1
            data = np.frombuffer(fh.read(4 * count), dtype="<f4").reshape(shape)
            tensors.append((name, data.astype(F32, copy=True)))
    return ModelCheckpoint(arch, hyper, tensors, dataset)


def _write_str(fh, s):
    raw = s.encode("utf-8")
    fh.write(struct.pack("<H", len(raw)))
    fh.write(raw)


def _read_str(fh):
    (ln,) = struct.unpack("<H", fh.read(2))
    return fh.read(ln).decode("utf-8")
