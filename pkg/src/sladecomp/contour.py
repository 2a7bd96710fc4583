"""Acceptance-probability maps over the delay x throughput box (CSV + SVG)."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .slo import FeatureSpec

# Lower edges of the iso-probability bands, loosest first, with fill colours.
BANDS = (
    (0.99, "#006d2c"),
    (0.9, "#74c476"),
    (0.5, "#fd8d3c"),
    (0.1, "#fb6a4a"),
    (0.01, "#a50f15"),
)
BELOW_COLOR = "#bdbdbd"


@dataclass
class ContourGrid:
    delays: np.ndarray
    throughputs: np.ndarray
    prob: np.ndarray  # shape (len(throughputs), len(delays))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["delay_ms", "throughput_gbps", "prob"])
        for j, t in enumerate(self.throughputs):
            for i, d in enumerate(self.delays):
                w.writerow([repr(float(d)), repr(float(t)), repr(float(self.prob[j, i]))])
        return buf.getvalue()


def evaluate_grid(model, spec: FeatureSpec, resolution: int) -> ContourGrid:
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    delays = np.linspace(*spec.delay_interval, resolution)
    thr = np.linspace(*spec.throughput_interval, resolution)
    dd, tt = np.meshgrid(delays, thr)
    prob = np.asarray(model.predict(dd.ravel(), tt.ravel())).reshape(dd.shape)
    return ContourGrid(delays, thr, prob)


def band_color(p: float) -> str:
    for edge, color in BANDS:
        if p > edge:
            return color
    return BELOW_COLOR


def to_svg(grid: ContourGrid, title: str = "", size: int = 400) -> str:
    """Render one rectangle per grid cell, filled by probability band."""
    nx_, ny = len(grid.delays), len(grid.throughputs)
    margin = 50
    cw, ch = size / nx_, size / ny
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size + 2 * margin}" '
        f'height="{size + 2 * margin}" viewBox="0 0 {size + 2 * margin} {size + 2 * margin}">',
        f'<text x="{margin}" y="{margin / 2}" font-size="14">{title}</text>',
    ]
    for j in range(ny):
        # throughput grows upwards
        y = margin + size - (j + 1) * ch
        for i in range(nx_):
            x = margin + i * cw
            out.append(
                f'<rect x="{x:.3f}" y="{y:.3f}" width="{cw:.3f}" height="{ch:.3f}" '
                f'fill="{band_color(float(grid.prob[j, i]))}" stroke="none"/>'
            )
    d0, d1 = grid.delays[0], grid.delays[-1]
    t0, t1 = grid.throughputs[0], grid.throughputs[-1]
    out += [
        f'<rect x="{margin}" y="{margin}" width="{size}" height="{size}" fill="none" stroke="black"/>',
        f'<text x="{margin}" y="{size + margin + 18}" font-size="11">{d0:g}</text>',
        f'<text x="{margin + size}" y="{size + margin + 18}" font-size="11" text-anchor="end">{d1:g}</text>',
        f'<text x="{margin + size / 2}" y="{size + margin + 36}" font-size="12" '
        f'text-anchor="middle">delay (ms)</text>',
        f'<text x="{margin - 6}" y="{size + margin}" font-size="11" text-anchor="end">{t0:g}</text>',
        f'<text x="{margin - 6}" y="{margin + 10}" font-size="11" text-anchor="end">{t1:g}</text>',
        f'<text x="14" y="{margin + size / 2}" font-size="12" text-anchor="middle" '
        f'transform="rotate(-90 14 {margin + size / 2})">throughput (Gbps)</text>',
        "</svg>",
    ]
    return "\n".join(out) + "\n"


def export_contour(model_or_gt, spec: FeatureSpec, resolution: int, out_prefix=None,
                   title: str = "") -> ContourGrid:
    """Evaluate on a ``resolution x resolution`` grid; write ``<prefix>.csv``/``.svg`` if asked."""
    grid = evaluate_grid(model_or_gt, spec, resolution)
    if out_prefix is not None:
        prefix = Path(out_prefix)
        prefix.parent.mkdir(parents=True, exist_ok=True)
        prefix.with_suffix(".csv").write_text(grid.to_csv())
        prefix.with_suffix(".svg").write_text(to_svg(grid, title))
    return grid
