"""Bit-flip error model: deterministic error maps over binary32 storage.

An error map realizes a bit-error rate as an explicit site list
(tensor, element, bit), bit 0 being the least significant bit of the word.
Sampling draws the flip count from Binomial(total_bits, ber) and places it
uniformly without replacement, which is distributionally identical to
independent per-bit Bernoulli(ber) but runs in O(flips) instead of O(bits).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .graphs import StructuralError
from .models.forward import activation_census

U32 = np.uint32


class ValueClass(Enum):
    FINITE = "finite"
    NAN = "nan"
    INFINITE = "infinite"
    SUBNORMAL = "subnormal"
    ZERO = "zero"


@dataclass
class FaultTarget:
    """Where a map applies: all weights, one layer's weights, or activations."""

    kind: str  # "model" | "layer" | "activation"
    layer_id: str | None = None  # for kind="layer"
    selector: str = "*"  # for kind="activation"

    def __post_init__(self):
        if self.kind not in ("model", "layer", "activation"):
            raise StructuralError(f"unknown fault target kind {self.kind!r}")
        if self.kind == "layer" and not self.layer_id:
            raise StructuralError("layer target needs a layer_id")

    @property
    def is_weights(self):
        return self.kind in ("model", "layer")

    def label(self):
        if self.kind == "model":
            return "model"
        if self.kind == "layer":
            return self.layer_id
        return "activation" if self.selector == "*" else f"activation:{self.selector}"

    def weight_tensor_names(self, ckpt):
        if self.kind == "model":
            return ckpt.tensor_names()
        if self.kind == "layer":
            return ckpt.layer_tensors(self.layer_id)
        raise StructuralError("activation target has no weight tensors")

    def census(self, ckpt, num_nodes):
        """Shape census the error map is generated against."""
        if self.is_weights:
            names = set(self.weight_tensor_names(ckpt))
            return [(n, t.size) for n, t in ckpt.tensors if n in names]
        cens = activation_census(ckpt.arch, ckpt.hyper, num_nodes)
        if self.selector != "*":
            cens = [(lid, c) for lid, c in cens if lid == self.selector]
            if not cens:
                raise StructuralError(f"no activation layer {self.selector!r}")
        return cens


def model_target():
    return FaultTarget("model")


def layer_target(layer_id):
    return FaultTarget("layer", layer_id=layer_id)


def activation_target(selector="*"):
    return FaultTarget("activation", selector=selector)


@dataclass
class ErrorMap:
    ber: float
    seed: int
    census: list  # ordered (tensor_id, element count)
    tensor_id: np.ndarray  # index into census, per site
    element: np.ndarray  # flat element offset, per site
    bit: np.ndarray  # 0..31, per site
    stats: dict = field(default_factory=dict)

    @property
    def num_sites(self):
        return int(self.tensor_id.shape[0])

    def sites_for(self, name):
        """(element, bit) arrays of the sites hitting one tensor."""
        for i, (tid, _) in enumerate(self.census):
            if tid == name:
                m = self.tensor_id == i
                return self.element[m], self.bit[m]
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)


def generate_error_map(shape_census, ber, seed):
    """Draw an error map for the census at the given bit-error rate."""
    if not 0.0 <= ber <= 1.0:
        raise StructuralError(f"ber must be in [0,1], got {ber}")
    census = [(str(t), int(c)) for t, c in shape_census]
    counts = np.array([c for _, c in census], dtype=np.int64)
    bit_base = np.concatenate([[0], np.cumsum(counts * 32)])
    total_bits = int(bit_base[-1])
    rng = np.random.default_rng(seed)
    k = int(rng.binomial(total_bits, ber)) if total_bits else 0
    positions = _sample_without_replacement(rng, total_bits, k)
    positions.sort()
    tensor_id = (np.searchsorted(bit_base, positions, side="right") - 1).astype(np.int64)
    local = positions - bit_base[tensor_id]
    return ErrorMap(
        ber=float(ber),
        seed=int(seed),
        census=census,
        tensor_id=tensor_id,
        element=local // 32,
        bit=local % 32,
    )


def _sample_without_replacement(rng, total, k):
    """k distinct uniform draws from range(total): rejection in rounds."""
    if k <= 0:
        return np.empty(0, dtype=np.int64)
    if k >= total:
        return np.arange(total, dtype=np.int64)
    if k > total // 2:
        # dense regime: partial shuffle is cheaper than rejection
        return rng.permutation(total)[:k].astype(np.int64)
    picked = np.empty(0, dtype=np.int64)
    while picked.shape[0] < k:
        need = k - picked.shape[0]
        draw = rng.integers(0, total, size=need + max(16, need // 8), dtype=np.int64)
        both = np.concatenate([picked, draw])
        _, first = np.unique(both, return_index=True)
        both = both[np.sort(first)]  # first-occurrence order keeps draws uniform
        picked = both[: min(k, both.shape[0])]
    return picked


# -- word-level bit manipulation ----------------------------------------------


def flip_bits_in_word(word, bits):
    """XOR a 32-bit pattern with the mask built from bit indices (involutive)."""
    mask = 0
    for b in bits:
        if not 0 <= b <= 31:
            raise StructuralError(f"bit index {b} outside 0..31")
        mask |= 1 << b
    return (int(word) ^ mask) & 0xFFFFFFFF

def classify_word(word):
    """IEEE-754 binary32 class of a bit pattern; total over all 2^32 words."""
    word = int(word) & 0xFFFFFFFF
    exponent = (word >> 23) & 0xFF
    mantissa = word & 0x7FFFFF
    if exponent == 0xFF:
        return ValueClass.NAN if mantissa else ValueClass.INFINITE
    if exponent == 0:
        return ValueClass.SUBNORMAL if mantissa else ValueClass.ZERO
    return ValueClass.FINITE


def classify_array(values):
    """Vectorized classify_word over a float32 array; returns uint8 codes."""
    w = np.ascontiguousarray(values, dtype=np.float32).view(U32)
    exponent = (w >> U32(23)) & U32(0xFF)
    mantissa = w & U32(0x7FFFFF)
    out = np.full(w.shape, _CLASS_CODE[ValueClass.FINITE], dtype=np.uint8)
    out[(exponent == 0xFF) & (mantissa != 0)] = _CLASS_CODE[ValueClass.NAN]
    out[(exponent == 0xFF) & (mantissa == 0)] = _CLASS_CODE[ValueClass.INFINITE]
    out[(exponent == 0) & (mantissa != 0)] = _CLASS_CODE[ValueClass.SUBNORMAL]
    out[(exponent == 0) & (mantissa == 0)] = _CLASS_CODE[ValueClass.ZERO]
    return out


_CLASS_CODE = {c: i for i, c in enumerate(ValueClass)}
_CODE_CLASS = {i: c for i, c in enumerate(ValueClass)}


def apply_flips(values, element, bit):
    """XOR the selected bits into a float32 array, in place (repeats allowed)."""
    flat = values.reshape(-1).view(U32)
    if element.size and (element.min() < 0 or element.max() >= flat.shape[0]):
        raise StructuralError("flip site outside tensor bounds")
    np.bitwise_xor.at(flat, element, np.left_shift(U32(1), bit.astype(U32)))


# -- applying maps -------------------------------------------------------------


def inject_weights(ckpt, emap, target):
    """Return a new checkpoint with the map's bits flipped in target tensors.

    Sites naming tensors outside the target are ignored (counted in
    emap.stats['skipped_sites']); sites naming unknown tensors are an error.
    """
    if not target.is_weights:
        raise StructuralError("inject_weights needs a model or layer target")
    names = set(target.weight_tensor_names(ckpt))
    known = set(ckpt.tensor_names())
    skipped = 0
    out = ckpt.copy()
    by_name = dict(out.tensors)
    for tid, _ in emap.census:
        if tid not in known:
            raise StructuralError(f"error map references unknown tensor {tid!r}")
    for tid, _ in emap.census:
        elems, bits = emap.sites_for(tid)
        if not elems.size:
            continue
        if tid not in names:
            skipped += elems.size
            continue
        apply_flips(by_name[tid], elems, bits)
    emap.stats["skipped_sites"] = emap.stats.get("skipped_sites", 0) + skipped
    return out


class ActivationInjector:
    """Interceptor flipping mapped bits in matching activation records.

    Element indices are row-major over the record matrix; sites beyond the
    matrix extent are skipped and counted.  Per-site value-class transitions
    are accumulated into .census_counts for the trial report.
    """

    def __init__(self, emap, target):
        if target.is_weights:
            raise StructuralError("activation injector needs an activation target")
        self.emap = emap
        self.target = target
        self.skipped = 0
        self.flipped = 0
        self.census_counts = CensusCounts()

    def __call__(self, record):
        elems, bits = self.emap.sites_for(record.layer_id)
        if not elems.size:
            return record.matrix
        size = record.matrix.size
        in_range = elems < size
        self.skipped += int((~in_range).sum())
        elems, bits = elems[in_range], bits[in_range]
        before = record.matrix.reshape(-1)[elems].copy()
        apply_flips(record.matrix, elems, bits)
        after = record.matrix.reshape(-1)[elems]
        self.flipped += int(elems.size)
        self.census_counts.add_arrays(before, after)
        return record.matrix


def make_activation_injector(emap, target):
    return ActivationInjector(emap, target)


# -- error census ---------------------------------------------------------------


@dataclass
class CensusCounts:
    """Changed elements bucketed into NaN-producing vs non-NaN perturbations."""

    nan_producing: int = 0
    non_nan_perturbing: int = 0
    transitions: dict = field(default_factory=dict)

    def add_arrays(self, before, after):
        if before.shape != after.shape:
            raise StructuralError("census arrays differ in shape")
        b32 = np.ascontiguousarray(before, np.float32).view(U32)
        a32 = np.ascontiguousarray(after, np.float32).view(U32)
        changed = b32 != a32
        if not changed.any():
            return self
        cb = classify_array(before)[changed]
        ca = classify_array(after)[changed]
        nan_code = _CLASS_CODE[ValueClass.NAN]
        made_nan = (ca == nan_code) & (cb != nan_code)
        self.nan_producing += int(made_nan.sum())
        self.non_nan_perturbing += int((~made_nan).sum())
        pairs, counts = np.unique(np.stack([cb, ca]), axis=1, return_counts=True)
        for (fb, fa), cnt in zip(pairs.T, counts):
            key = (_CODE_CLASS[int(fb)], _CODE_CLASS[int(fa)])
            self.transitions[key] = self.transitions.get(key, 0) + int(cnt)
        return self

    def merged(self, other):
        out = CensusCounts(
            self.nan_producing + other.nan_producing,
            self.non_nan_perturbing + other.non_nan_perturbing,
            dict(self.transitions),
        )
        for k, v in other.transitions.items():
            out.transitions[k] = out.transitions.get(k, 0) + v
        return out


def census_errors(before, after):
    """Census between two checkpoints or two equally-shaped arrays."""
    counts = CensusCounts()
    if hasattr(before, "tensors") and hasattr(after, "tensors"):
        if before.tensor_names() != after.tensor_names():
            raise StructuralError("checkpoints have different tensor layouts")
        for (_, tb), (_, ta) in zip(before.tensors, after.tensors):
            if tb.shape != ta.shape:
                raise StructuralError("checkpoint tensor shapes differ")
            counts.add_arrays(tb.reshape(-1), ta.reshape(-1))
        return counts
    b = before.matrix if hasattr(before, "matrix") else before
    a = after.matrix if hasattr(after, "matrix") else after
    if np.shape(b) != np.shape(a):
        raise StructuralError("census inputs differ in shape")
    return counts.add_arrays(np.reshape(b, -1), np.reshape(a, -1))


# -- serialization ---------------------------------------------------------------


def save_error_map(emap, path):
    """Text replay format: header line, then tensor_id<TAB>element<TAB>bit."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# ber={emap.ber!r} seed={emap.seed}\n")
        for tid, cnt in emap.census:
            fh.write(f"## census {tid}\t{cnt}\n")
        for i in range(emap.num_sites):
            tid = emap.census[emap.tensor_id[i]][0]
            fh.write(f"{tid}\t{emap.element[i]}\t{emap.bit[i]}\n")


def load_error_map(path):
    ber = seed = None
    census = []
    names = {}
    tensor_id, element, bit = [], [], []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("## census "):
                tid, cnt = line[len("## census ") :].split("\t")
                names[tid] = len(census)
                census.append((tid, int(cnt)))
            elif line.startswith("#"):
                for item in line[1:].split():
                    key, _, val = item.partition("=")
                    if key == "ber":
                        ber = float(val)
                    elif key == "seed":
                        seed = int(val)
            else:
                parts = line.split("\t")
                if len(parts) != 3 or parts[0] not in names:
                    raise StructuralError(f"{path}:{line_no}: bad error-map line")
                tensor_id.append(names[parts[0]])
                element.append(int(parts[1]))
                bit.append(int(parts[2]))
    if ber is None or seed is None:
        raise StructuralError(f"{path}: missing ber/seed header")
    return ErrorMap(
        ber,
        seed,
        census,
        np.array(tensor_id, dtype=np.int64),
        np.array(element, dtype=np.int64),
        np.array(bit, dtype=np.int64),
    )
