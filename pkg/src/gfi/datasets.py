"""Named dataset resolution.

The three citation benchmarks are loaded from Planetoid text files when
available (``<data_dir>/<name>.content`` / ``.cites``, with ``data_dir`` from
the argument, the GFI_DATA_DIR environment variable, or ``./data``).  When the
files are absent, a shape-faithful synthetic stand-in is generated instead:
same node/feature/class counts and edge density, planted-partition structure.
Stand-ins keep every structural and fault-injection experiment meaningful;
only the absolute baseline accuracies of the real datasets are not
reproducible from them.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import graphs

log = logging.getLogger(__name__)

# name -> (nodes, undirected-ish cite lines, features, classes)
CITATION_STATS = {
    "cora": (2708, 5429, 1433, 7),
    "citeseer": (3327, 4732, 3703, 6),
    "pubmed": (19717, 44338, 500, 3),
}

_STANDIN_SEED = {"cora": 11, "citeseer": 13, "pubmed": 17}


@dataclass
class Dataset:
    name: str
    graph: graphs.Graph
    features: np.ndarray
    split: graphs.LabeledSplit
    source: str  # "planetoid" | "standin" | "synthetic"

    @property
    def num_features(self):
        return self.features.shape[1]

    @property
    def num_classes(self):
        return self.split.num_classes


_cache: dict = {}


def data_dir(explicit=None):
    if explicit:
        return Path(explicit)
    env = os.environ.get("GFI_DATA_DIR")
    if env:
        return Path(env)
    return Path("data")


def planetoid_files(name, directory=None):
    d = data_dir(directory)
    content = d / f"{name}.content"
    cites = d / f"{name}.cites"
    if content.is_file() and cites.is_file():
        return content, cites
    return None


def load(name, directory=None):
    """Resolve a dataset by name; results are cached per process."""
    name = name.lower()
    key = (name, str(data_dir(directory)))
    if key in _cache:
        return _cache[key]
    if name in CITATION_STATS:
        found = planetoid_files(name, directory)
        if found:
            g, x, split = graphs.load_planetoid(*found)
            ds = Dataset(name, g, x, split, "planetoid")
        else:
            ds = standin(name)
            log.warning(
                "dataset %r: Planetoid files not found under %s, using the "
                "synthetic stand-in (baseline accuracies will differ from the "
                "real benchmark)",
                name,
                data_dir(directory),
            )
    else:
        ds = _parse_synth_spec(name)
    _cache[key] = ds
    return ds


def standin(name):
    """Synthetic stand-in matching a citation benchmark's shape statistics."""
    n, cite_lines, f, c = CITATION_STATS[name]
    avg_degree = 2.0 * cite_lines / n
    g, x, split = graphs.synthetic_graph(
        seed=_STANDIN_SEED[name],
        n=n,
        avg_degree=avg_degree,
        num_features=f,
        num_classes=c,
        signal=0.35,
        homophily=0.9,
    )
    return Dataset(name, g, x, split, "standin")


def _parse_synth_spec(name):
    """``synth:n=100,f=16,c=2,deg=4,seed=1`` -> synthetic Dataset."""
    if not name.startswith("synth:"):
        raise graphs.StructuralError(
            f"unknown dataset {name!r} (expected cora/citeseer/pubmed or synth:...)"
        )
    params = {"n": 200, "f": 16, "c": 2, "deg": 4.0, "seed": 1}
    body = name[len("synth:") :]
    if body:
        for item in body.split(","):
            k, _, v = item.partition("=")
            if k not in params:
                raise graphs.StructuralError(f"unknown synth parameter {k!r}")
            params[k] = float(v) if k == "deg" else int(v)
    g, x, split = graphs.synthetic_graph(
        seed=params["seed"],
        n=params["n"],
        avg_degree=params["deg"],
        num_features=params["f"],
        num_classes=params["c"],
    )
    return Dataset(name, g, x, split, "synthetic")
