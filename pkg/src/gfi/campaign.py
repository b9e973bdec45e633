"""Sweep orchestration: BER grids over models, datasets, targets, policies.

One trial = generate map, inject (weights offline or activations at runtime),
apply the mitigation policy, run the forward pass, score.  Trials are pure
functions of their derived seed, so parallel execution cannot change results;
rows are emitted in grid order regardless of completion order.
"""

from __future__ import annotations

import hashlib
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import faults, mitigation
from .graphs import StructuralError
from .models.forward import InterceptorRegistry, evaluate_accuracy, model_forward

DEFAULT_BERS = tuple(float(b) for b in np.logspace(-9, -2, 8))

# which mitigation mechanisms compose with which injection side
WEIGHT_MITIGATIONS = ("none", "bit_mask", "word_mask", "weight_clip")
ACTIVATION_MITIGATIONS = ("none", "bit_mask", "word_mask", "act_clip", "topo_filter")

TARGET_NAMES = ("model", "gnn1", "gnn2", "activation")


def make_target(name):
    if name == "model":
        return faults.model_target()
    if name in ("gnn1", "gnn2"):
        return faults.layer_target(name)
    if name == "activation":
        return faults.activation_target()
    if name.startswith("activation:"):
        return faults.activation_target(name.split(":", 1)[1])
    raise StructuralError(f"unknown target {name!r}")


def mitigation_applies(mitigation_name, target_name):
    table = (
        ACTIVATION_MITIGATIONS if target_name.startswith("activation") else WEIGHT_MITIGATIONS
    )
    return mitigation_name in table


def derive_seed(master_seed, model, dataset, target, ber, trial):
    """Stable 63-bit trial seed; mitigation is deliberately excluded so
    policies are compared on identical corruptions."""
    text = f"{master_seed}|{model}|{dataset}|{target}|{ber!r}|{trial}"
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & 0x7FFFFFFFFFFFFFFF


@dataclass
class CampaignSpec:
    models: tuple = ("gcn",)
    datasets: tuple = ("cora",)
    targets: tuple = TARGET_NAMES
    mitigations: tuple = ("none",)
    bers: tuple = DEFAULT_BERS
    trials: int = 10
    master_seed: int = 20240001

    def validate(self):
        if self.trials < 1:
            raise StructuralError("trials must be >= 1")
        bers = tuple(float(b) for b in self.bers)
        if any(not 0 < b <= 1 for b in bers):
            raise StructuralError("bers must lie in (0, 1]")
        if any(b2 <= b1 for b1, b2 in zip(bers, bers[1:])):
            raise StructuralError("bers must be strictly increasing")
        for t in self.targets:
            make_target(t)
        return self

    def grid(self):
        """Deterministic trial coordinates; ber=0 control rows included."""
        out = []
        for model in self.models:
            for dataset in self.datasets:
                for target in self.targets:
                    if model == "sgc" and target == "gnn2":
                        continue  # single-layer architecture
                    for mit in self.mitigations:
                        if not mitigation_applies(mit, target):
                            continue
                        for ber in (0.0,) + tuple(self.bers):
                            for trial in range(self.trials):
                                out.append((model, dataset, target, mit, ber, trial))
        return out


@dataclass
class TrialResult:
    model: str
    dataset: str
    target: str
    mitigation: str
    ber: float
    trial: int
    seed: int
    accuracy: float = float("nan")
    bits_flipped: int = 0
    nan_count: int = 0
    non_nan_count: int = 0
    wall_time: float = 0.0
    status: str = "ok"

    def key(self):
        return (self.model, self.dataset, self.target, self.mitigation, self.ber, self.trial)


def run_trial(ckpt, dataset, target, policy, ber, seed, profile=None, graph=None, trial=0):
    """Execute one injection+mitigation trial; deterministic given the seed."""
    graph = graph if graph is not None else dataset.graph
    t0 = time.perf_counter()
    tgt = make_target(target) if isinstance(target, str) else target
    census = tgt.census(ckpt, graph.num_nodes)
    emap = faults.generate_error_map(census, ber, seed)

    if policy in ("weight_clip", "act_clip") and profile is None:
        raise StructuralError(f"mitigation {policy!r} requires a range profile")

    registry = InterceptorRegistry()
    counts = faults.CensusCounts()
    run_ckpt = ckpt
    if tgt.is_weights:
        injected = faults.inject_weights(ckpt, emap, tgt)
        counts = faults.census_errors(ckpt, injected)
        if policy == "weight_clip":
            run_ckpt = mitigation.apply_weight_clip(injected, profile)
        elif policy in ("bit_mask", "word_mask"):
            run_ckpt = mitigation.apply_weight_mask(
                injected, emap, tgt, policy.split("_")[0]
            )
        else:
            run_ckpt = injected
    else:
        injector = faults.make_activation_injector(emap, tgt)
        registry.register(tgt.selector, injector, name="injector")
        if policy == "act_clip":
            registry.register(
                "*", mitigation.make_activation_clip_interceptor(profile), name="act_clip"
            )
        elif policy == "topo_filter":
            registry.register(
                "*", mitigation.make_topo_filter_interceptor(graph), name="topo_filter"
            )
        elif policy in ("bit_mask", "word_mask"):
            registry.register(
                "*",
                mitigation.make_mask_repair_interceptor(emap, policy.split("_")[0]),
                name=f"{policy}_repair",
            )

    logits, _ = model_forward(run_ckpt, graph, dataset.features, registry)
    acc = evaluate_accuracy(logits, dataset.split)
    if not tgt.is_weights:
        counts = injector.census_counts

    return TrialResult(
        model=ckpt.arch,
        dataset=dataset.name,
        target=target if isinstance(target, str) else tgt.label(),
        mitigation=policy,
        ber=float(ber),
        trial=trial,
        seed=seed,
        accuracy=acc,
        bits_flipped=emap.num_sites,
        nan_count=counts.nan_producing,
        non_nan_count=counts.non_nan_perturbing,
        wall_time=time.perf_counter() - t0,
    )


@dataclass
class AggregateRow:
    model: str
    dataset: str
    target: str
    mitigation: str
    ber: float
    mean_accuracy: float
    stddev: float
    trials: int


@dataclass
class SweepTable:
    rows: list = field(default_factory=list)

    def aggregates(self):
        groups: dict = {}
        for r in self.rows:
            if r.status != "ok":
                continue
            groups.setdefault((r.model, r.dataset, r.target, r.mitigation, r.ber), []).append(
                r.accuracy
            )
        out = []
        for key in sorted(groups):
            accs = np.array(groups[key])
            std = float(accs.std(ddof=1)) if accs.size > 1 else 0.0
            out.append(AggregateRow(*key, float(accs.mean()), std, int(accs.size)))
        return out

    def curve(self, model, dataset, target, mitigation):
        """ber -> mean accuracy for one curve (excludes the ber=0 control)."""
        pts = {}
        baseline = None
        for a in self.aggregates():
            if (a.model, a.dataset, a.target, a.mitigation) == (model, dataset, target, mitigation):
                if a.ber == 0.0:
                    baseline = a.mean_accuracy
                else:
                    pts[a.ber] = a.mean_accuracy
        return baseline, pts


def run_sweep(spec, resources, jobs=1):
    """Run every grid point.  `resources` maps (model, dataset) to a dict with
    keys "ckpt", "dataset", and optionally "profile"."""
    spec.validate()
    grid = spec.grid()

    def one(coord):
        model, ds_name, target, mit, ber, trial = coord
        res = resources[(model, ds_name)]
        seed = derive_seed(spec.master_seed, model, ds_name, target, ber, trial)
        try:
            return run_trial(
                res["ckpt"], res["dataset"], target, mit, ber, seed,
                res.get("profile"), trial=trial,
            )
        except StructuralError as exc:
            return TrialResult(
                model, ds_name, target, mit, float(ber), trial, seed,
                status=f"error:{exc}",
            )

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(one, grid))
    else:
        rows = [one(c) for c in grid]
    rows.sort(key=TrialResult.key)
    return SweepTable(rows)


@dataclass
class CutoffEntry:
    model: str
    dataset: str
    target: str
    mitigation: str
    baseline: float
    cutoff_ber: float | None  # None = below minimum swept
    delta: float

    def label(self):
        return "below-min" if self.cutoff_ber is None else f"{self.cutoff_ber:.0e}"


def cutoff_rate(table, model, dataset, target, mitigation, baseline=None, delta=0.01):
    """Largest swept BER whose mean accuracy stays within delta of baseline."""
    base, pts = table.curve(model, dataset, target, mitigation)
    if baseline is None:
        baseline = base
    if baseline is None:
        raise StructuralError("no baseline available: add a ber=0 control or pass one")
    if not pts:
        raise StructuralError("empty curve")
    qualifying = [b for b, acc in pts.items() if acc >= baseline - delta]
    cutoff = max(qualifying) if qualifying else None
    return CutoffEntry(model, dataset, target, mitigation, baseline, cutoff, delta)


def cutoff_report(table, delta=0.01, baselines=None):
    """Cutoff entries for every curve present in the table."""
    seen = []
    for a in table.aggregates():
        key = (a.model, a.dataset, a.target, a.mitigation)
        if key not in seen:
            seen.append(key)
    out = []
    for key in seen:
        baseline = (baselines or {}).get(key[:2])
        out.append(cutoff_rate(table, *key, baseline=baseline, delta=delta))
    return out


def decades_gained(entry, reference, min_swept):
    """log10 cutoff difference; below-min cutoffs count as one decade under."""

    def level(e):
        return np.log10(e.cutoff_ber) if e.cutoff_ber is not None else np.log10(min_swept) - 1.0

    return float(level(entry) - level(reference))
