"""Report emission as CSV, JSON or a hand-written SVG line chart."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

COLUMNS = ["variant", "split", "acc", "acc_per_dim", "l1", "n"]
PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"]


def _num(v):
    return None if isinstance(v, float) and math.isnan(v) else v


def to_csv(reports, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in reports:
            w.writerow(["" if _num(v) is None else (repr(v) if isinstance(v, float) else v) for v in r.row()])


def to_json(reports, path):
    rows = [dict(zip(COLUMNS, [_num(v) for v in r.row()]), bins=[list(b) for b in r.bins]) for r in reports]
    Path(path).write_text(json.dumps({"columns": COLUMNS, "reports": rows}, indent=2) + "\n")


def _variant_curves(reports):
    curves = {}
    for r in reports:
        acc = curves.setdefault(r.variant, {})
        for centre, l1, n in r.bins:
            s, c = acc.get(centre, (0.0, 0))
            acc[centre] = (s + l1 * n, c + n)
    return {v: sorted((x, s / c) for x, (s, c) in pts.items()) for v, pts in curves.items()}


def to_svg(reports, path, width=480, height=320):
    curves = _variant_curves(reports)
    pad = 48
    xs = [x for pts in curves.values() for x, _ in pts] or [0.0, 1.0]
    ys = [y for pts in curves.values() for _, y in pts] or [0.0, 1.0]
    x0, x1 = min(xs), max(xs)
    y1 = max(ys) * 1.1 or 1.0
    if x1 == x0:
        x0, x1 = x0 - 0.01, x1 + 0.01

    def px(x):
        return pad + (x - x0) / (x1 - x0) * (width - 2 * pad)

    def py(y):
        return height - pad - y / y1 * (height - 2 * pad)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
           f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
           f'<text x="{width / 2}" y="{height - 12}" text-anchor="middle" font-size="12">occupancy</text>',
           f'<text x="14" y="{height / 2}" font-size="12" transform="rotate(-90 14 {height / 2})" text-anchor="middle">mean L1</text>',
           f'<text x="{pad}" y="{height - pad + 14}" font-size="10" text-anchor="middle">{x0:.3f}</text>',
           f'<text x="{width - pad}" y="{height - pad + 14}" font-size="10" text-anchor="middle">{x1:.3f}</text>',
           f'<text x="{pad - 4}" y="{pad + 4}" font-size="10" text-anchor="end">{y1:.3f}</text>']
    for i, (name, pts) in enumerate(curves.items()):
        color = PALETTE[i % len(PALETTE)]
        coords = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in pts)
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{coords}"><title>{name}</title></polyline>')
        out.append(f'<text x="{width - pad + 4}" y="{pad + 14 * i}" font-size="10" fill="{color}">{name}</text>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n")


def emit_report(reports, path, fmt="csv"):
    if not reports:
        raise ValueError("no reports to emit")
    writer = {"csv": to_csv, "json": to_json, "svg": to_svg}.get(fmt)
    if writer is None:
        raise ValueError(f"unknown report format {fmt!r}")
    writer(reports, path)
    return Path(path)
