"""CSV and SVG emission for sweep tables.

Outputs are byte-deterministic for a fixed table: stable float formatting,
fixed palette, no timestamps.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from .campaign import SweepTable, TrialResult

ROW_COLUMNS = [
    "model", "dataset", "target", "mitigation", "ber", "trial", "seed",
    "accuracy", "bits_flipped", "nan_count", "non_nan_count", "status",
]
AGG_COLUMNS = [
    "model", "dataset", "target", "mitigation", "ber",
    "mean_accuracy", "stddev", "trials",
]

PALETTE = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
    "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
]


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def rows_to_csv(table):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ROW_COLUMNS)
    for r in table.rows:
        w.writerow(
            [r.model, r.dataset, r.target, r.mitigation, _fmt(r.ber), r.trial, r.seed,
             _fmt(r.accuracy), r.bits_flipped, r.nan_count, r.non_nan_count, r.status]
        )
    return buf.getvalue()


def aggregates_to_csv(table):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(AGG_COLUMNS)
    for a in table.aggregates():
        w.writerow(
            [a.model, a.dataset, a.target, a.mitigation, _fmt(a.ber),
             _fmt(a.mean_accuracy), _fmt(a.stddev), a.trials]
        )
    return buf.getvalue()


def rows_from_csv(text):
    rows = []
    reader = csv.DictReader(io.StringIO(text))
    for rec in reader:
        rows.append(
            TrialResult(
                model=rec["model"], dataset=rec["dataset"], target=rec["target"],
                mitigation=rec["mitigation"], ber=float(rec["ber"]),
                trial=int(rec["trial"]), seed=int(rec["seed"]),
                accuracy=float(rec["accuracy"]), bits_flipped=int(rec["bits_flipped"]),
                nan_count=int(rec["nan_count"]), non_nan_count=int(rec["non_nan_count"]),
                status=rec["status"],
            )
        )
    return SweepTable(rows)


# -- SVG robustness curves ------------------------------------------------------

_W, _H = 800, 600
_ML, _MR, _MT, _MB = 70, 180, 40, 60  # margins; right side holds the legend


def _x(ber, lo, hi):
    t = (np.log10(ber) - np.log10(lo)) / (np.log10(hi) - np.log10(lo))
    return _ML + t * (_W - _ML - _MR)


def _y(acc):
    return _MT + (1.0 - acc) * (_H - _MT - _MB)


def sweep_svg(table, model, dataset):
    """One 800x600 chart: accuracy vs log10(BER), a series per (target, mitigation)."""
    aggs = [a for a in table.aggregates() if a.model == model and a.dataset == dataset]
    series: dict = {}
    baselines: dict = {}
    for a in aggs:
        key = (a.target, a.mitigation)
        if a.ber == 0.0:
            baselines[key] = a.mean_accuracy
        else:
            series.setdefault(key, []).append((a.ber, a.mean_accuracy))
    bers = sorted({b for pts in series.values() for b, _ in pts})
    if not bers:
        raise ValueError(f"no swept points for {model}/{dataset}")
    lo, hi = min(bers), max(bers)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {_W} {_H}" '
        f'width="{_W}" height="{_H}">',
        f'<rect width="{_W}" height="{_H}" fill="#ffffff"/>',
        f'<text x="{_ML}" y="24" font-family="monospace" font-size="16">'
        f"{model} / {dataset}: accuracy vs bit-error rate</text>",
    ]
    # frame and y grid
    x0, x1 = _ML, _W - _MR
    y0, y1 = _MT, _H - _MB
    out.append(
        f'<rect x="{x0}" y="{y0}" width="{x1 - x0}" height="{y1 - y0}" '
        f'fill="none" stroke="#000000"/>'
    )
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        yy = _y(frac)
        out.append(
            f'<line x1="{x0}" y1="{yy:.2f}" x2="{x1}" y2="{yy:.2f}" '
            f'stroke="#dddddd"/>'
        )
        out.append(
            f'<text x="{x0 - 8}" y="{yy + 4:.2f}" text-anchor="end" '
            f'font-family="monospace" font-size="12">{frac:.2f}</text>'
        )
    # x ticks at the swept decades
    for b in bers:
        xx = _x(b, lo, hi)
        out.append(
            f'<line x1="{xx:.2f}" y1="{y1}" x2="{xx:.2f}" y2="{y1 + 5}" stroke="#000000"/>'
        )
        out.append(
            f'<text x="{xx:.2f}" y="{y1 + 20}" text-anchor="middle" '
            f'font-family="monospace" font-size="11">{b:.0e}</text>'
        )
    out.append(
        f'<text x="{(x0 + x1) / 2:.2f}" y="{_H - 18}" text-anchor="middle" '
        f'font-family="monospace" font-size="13">bit-error rate (log scale)</text>'
    )

    for si, key in enumerate(sorted(series)):
        color = PALETTE[si % len(PALETTE)]
        pts = sorted(series[key])
        path = " ".join(f"{_x(b, lo, hi):.2f},{_y(acc):.2f}" for b, acc in pts)
        out.append(
            f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="2"/>'
        )
        for b, acc in pts:
            out.append(
                f'<circle cx="{_x(b, lo, hi):.2f}" cy="{_y(acc):.2f}" r="3" '
                f'fill="{color}"/>'
            )
        base = baselines.get(key)
        if base is not None:
            out.append(
                f'<line x1="{x0}" y1="{_y(base):.2f}" x2="{x1}" y2="{_y(base):.2f}" '
                f'stroke="{color}" stroke-dasharray="6,4" stroke-width="1"/>'
            )
        ly = _MT + 16 + 18 * si
        out.append(
            f'<line x1="{x1 + 12}" y1="{ly - 4}" x2="{x1 + 36}" y2="{ly - 4}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        out.append(
            f'<text x="{x1 + 42}" y="{ly}" font-family="monospace" font-size="11">'
            f"{key[0]}/{key[1]}</text>"
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_report(table, out_dir):
    """Write rows.csv, agg.csv, and one SVG per (model, dataset); returns paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    rows_path = out_dir / "rows.csv"
    rows_path.write_text(rows_to_csv(table), encoding="utf-8")
    paths.append(rows_path)
    agg_path = out_dir / "agg.csv"
    agg_path.write_text(aggregates_to_csv(table), encoding="utf-8")
    paths.append(agg_path)
    combos = []
    for r in table.rows:
        if (r.model, r.dataset) not in combos:
            combos.append((r.model, r.dataset))
    for model, dataset in combos:
        svg_path = out_dir / f"{model}_{dataset}.svg"
        svg_path.write_text(sweep_svg(table, model, dataset), encoding="utf-8")
        paths.append(svg_path)
    return paths
