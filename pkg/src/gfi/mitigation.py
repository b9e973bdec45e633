"""Error mitigation: masking repair, range clipping, topology-aware filtering.

All transforms are pure; activation-side policies are interceptors that
compose with the injector (injection first, then protection).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .graphs import StructuralError
from .models.forward import ActivationRecord, model_forward

F32 = np.float32
U32 = np.uint32


def clip_value(x, ceiling, floor):
    """max(F, min(x, C)); NaN x is zeroed first, then range-clamped."""
    if floor > ceiling:
        raise StructuralError(f"clip floor {floor} > ceiling {ceiling}")
    v = F32(x)
    if np.isnan(v):
        v = F32(0.0)
    return float(min(max(v, F32(floor)), F32(ceiling)))


def clip_array(values, ceiling, floor):
    if floor > ceiling:
        raise StructuralError(f"clip floor {floor} > ceiling {ceiling}")
    v = np.where(np.isnan(values), F32(0.0), values)
    return np.minimum(np.maximum(v, F32(floor)), F32(ceiling))


@dataclass
class RangeProfile:
    """Offline-profiled fault-free value envelopes, float32 endpoints."""

    model: str
    dataset: str
    weight_min: float
    weight_max: float
    act_min: float
    act_max: float

    def validate(self):
        if self.weight_min > self.weight_max or self.act_min > self.act_max:
            raise StructuralError("profile min > max")
        return self


def profile_ranges(ckpt, graph, features):
    """Scan weights and one clean forward pass for min/max envelopes."""
    w_min, w_max = np.inf, -np.inf
    for name, t in ckpt.tensors:
        if not np.all(np.isfinite(t)):
            raise StructuralError(f"non-finite weight in {name!r}: checkpoint not clean")
        w_min = min(w_min, float(t.min()))
        w_max = max(w_max, float(t.max()))
    _, records = model_forward(ckpt, graph, features)
    a_min, a_max = np.inf, -np.inf
    for rec in records:
        if not np.all(np.isfinite(rec.matrix)):
            raise StructuralError(f"non-finite activation in {rec.layer_id}: not clean")
        a_min = min(a_min, float(rec.matrix.min()))
        a_max = max(a_max, float(rec.matrix.max()))
    return RangeProfile(
        ckpt.arch,
        ckpt.dataset,
        float(F32(w_min)),
        float(F32(w_max)),
        float(F32(a_min)),
        float(F32(a_max)),
    ).validate()


def apply_weight_clip(ckpt, profile):
    """Clamp every weight into the profiled envelope; returns a new checkpoint."""
    out = ckpt.copy()
    for _, t in out.tensors:
        t[...] = clip_array(t, profile.weight_max, profile.weight_min)
    return out


def make_activation_clip_interceptor(profile):
    def clip_fn(record):
        return clip_array(record.matrix, profile.act_max, profile.act_min)

    return clip_fn


# -- Razor-style masking repair -------------------------------------------------


def mask_repair(words, detected_elements, detected_bits, mode):
    """Repair detected flip sites in a float32 array; returns a new array.

    bit mode forces each detected bit to 0 (not restored: a word whose
    original bit was 1 stays changed); word mode zeroes every word holding
    at least one detected site.
    """
    if mode not in ("bit", "word"):
        raise StructuralError(f"unknown mask mode {mode!r}")
    out = np.array(words, dtype=F32, copy=True)
    flat = out.reshape(-1).view(U32)
    elems = np.asarray(detected_elements, dtype=np.int64)
    bits = np.asarray(detected_bits, dtype=np.int64)
    if elems.size and (elems.min() < 0 or elems.max() >= flat.shape[0]):
        raise StructuralError("detected site outside array bounds")
    if mode == "word":
        flat[elems] = U32(0)
    else:
        np.bitwise_and.at(flat, elems, ~np.left_shift(U32(1), bits.astype(U32)))
    return out


def apply_weight_mask(ckpt, emap, target, mode):
    """Mask-repair an injected checkpoint at the map's (in-target) sites."""
    out = ckpt.copy()
    names = set(target.weight_tensor_names(ckpt))
    by_name = dict(out.tensors)
    for tid, _ in emap.census:
        if tid not in names:
            continue
        elems, bits = emap.sites_for(tid)
        if elems.size:
            by_name[tid][...] = mask_repair(by_name[tid], elems, bits, mode)
    return out


def make_mask_repair_interceptor(emap, mode):
    """Activation-side repair at the map's sites (detection is the map itself)."""

    def repair(record):
        elems, bits = emap.sites_for(record.layer_id)
        in_range = elems < record.matrix.size
        elems, bits = elems[in_range], bits[in_range]
        if not elems.size:
            return record.matrix
        return mask_repair(record.matrix, elems, bits, mode).reshape(record.matrix.shape)

    return repair


# -- topology-aware activation filtering ----------------------------------------


def topo_filter(record, graph):
    """Clamp each node's features into its neighbors' value interval.

    Applies only to nodes with more than one neighbor (self excluded); all
    bounds read pre-filter values.  Returns a new record; the input is not
    modified.
    """
    if record.matrix.shape[0] != graph.num_nodes:
        raise StructuralError("record row count != graph node count")
    filtered = K.topo_filter(graph.row_ptr, graph.col_idx, record.matrix)
    return ActivationRecord(record.layer_id, filtered, record.post_nonlinearity)


def make_topo_filter_interceptor(graph):
    def filt(record):
        return topo_filter(record, graph).matrix

    return filt


# -- profile serialization -------------------------------------------------------


def _hex32(x):
    return "0x%08X" % struct.unpack("<I", struct.pack("<f", x))[0]


def _unhex32(s):
    return struct.unpack("<f", struct.pack("<I", int(s, 16)))[0]


def save_profile(profile, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# model={profile.model} dataset={profile.dataset}\n")
        fh.write(f"weights\t{_hex32(profile.weight_min)}\t{_hex32(profile.weight_max)}\n")
        fh.write(f"activations\t{_hex32(profile.act_min)}\t{_hex32(profile.act_max)}\n")


def load_profile(path):
    model = dataset = ""
    vals = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for item in line[1:].split():
                    key, _, val = item.partition("=")
                    if key == "model":
                        model = val
                    elif key == "dataset":
                        dataset = val
                continue
            comp, lo, hi = line.split("\t")
            vals[comp] = (_unhex32(lo), _unhex32(hi))
    if "weights" not in vals or "activations" not in vals:
        raise StructuralError(f"{path}: incomplete range profile")
    return RangeProfile(
        model, dataset, vals["weights"][0], vals["weights"][1],
        vals["activations"][0], vals["activations"][1],
    ).validate()
