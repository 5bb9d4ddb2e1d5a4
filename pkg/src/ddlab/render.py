"""Deterministic SVG figures: nearest-in-log-space heatmaps and loss curves.

Output is plain SVG 1.1 written element by element with fixed number
formatting, so identical inputs give identical bytes.

Colour ramp: viridis sampled at nine evenly spaced stops (below), linearly
interpolated in sRGB. Losses map onto it through ``log10`` (default) or
linearly, between the smallest and largest value shown.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np

VIRIDIS_STOPS = (
    (0x44, 0x01, 0x54), (0x47, 0x2C, 0x7A), (0x3B, 0x51, 0x8B), (0x2C, 0x71, 0x8E),
    (0x21, 0x90, 0x8D), (0x27, 0xAD, 0x81), (0x5C, 0xC8, 0x63), (0xAA, 0xDC, 0x32),
    (0xFD, 0xE7, 0x25),
)
CURVE_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b")
DEFAULT_RESOLUTION = (256, 256)


@dataclass
class HeatmapRaster:
    """Loss per cell; ``cell_values[j, i]`` is row ``j`` (latent) and column ``i`` (hidden).

    Row 0 is the smallest latent width. Cell centres are evenly spaced in
    log space across ``x_range`` and ``y_range``.
    """

    cell_values: np.ndarray
    nearest: np.ndarray
    x_range: tuple[float, float]
    y_range: tuple[float, float]
    samples: list

    @property
    def shape(self):
        return self.cell_values.shape

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        rows, cols = self.cell_values.shape
        return _log_centers(self.x_range, cols), _log_centers(self.y_range, rows)


def _log_centers(rng: tuple[float, float], count: int) -> np.ndarray:
    lo, hi = math.log(rng[0]), math.log(rng[1])
    return np.exp(lo + (np.arange(count) + 0.5) / count * (hi - lo))


def _check_samples(samples):
    if not samples:
        raise ValueError("need at least one sample")
    arr = np.asarray([(s[0], s[1]) for s in samples], dtype=np.float64)
    if np.any(arr <= 0):
        raise ValueError("sample coordinates must be positive (log distance)")
    return arr


def nearest_log_index(samples, h: float, l: float) -> int:
    """Index of the sample closest to ``(h, l)`` in ``(log h, log l)``; first wins ties."""
    pts = np.log(_check_samples(samples))
    d = (pts[:, 0] - math.log(h)) ** 2 + (pts[:, 1] - math.log(l)) ** 2
    return int(np.argmin(d))


def _bounding_range(values: np.ndarray) -> tuple[float, float]:
    lo, hi = float(values.min()), float(values.max())
    if lo == hi:
        lo, hi = lo / 2.0, hi * 2.0
    return lo, hi


def nearest_log_heatmap(samples: Sequence[tuple[float, float, float]],
                        resolution: tuple[int, int] = DEFAULT_RESOLUTION,
                        x_range: Optional[tuple[float, float]] = None,
                        y_range: Optional[tuple[float, float]] = None) -> HeatmapRaster:
    """Colour every cell with the loss of the measured point nearest in log space.

    ``samples`` are ``(hidden, latent, loss)`` triples; ``resolution`` is
    ``(width, height)``. Ranges default to the samples' bounding box.
    """
    pts = _check_samples(samples)
    losses = np.asarray([s[2] for s in samples], dtype=np.float64)
    width, height = resolution
    x_range = x_range or _bounding_range(pts[:, 0])
    y_range = y_range or _bounding_range(pts[:, 1])
    if min(*x_range, *y_range) <= 0:
        raise ValueError("axis ranges must be positive")
    xs = np.log(_log_centers(x_range, width))
    ys = np.log(_log_centers(y_range, height))
    lp = np.log(pts)
    dx = (xs[None, :, None] - lp[None, None, :, 0]) ** 2
    dy = (ys[:, None, None] - lp[None, None, :, 1]) ** 2
    nearest = np.argmin(dx + dy, axis=2)
    return HeatmapRaster(losses[nearest], nearest, tuple(x_range), tuple(y_range),
                         [tuple(s) for s in samples])


def ramp_color(t: float) -> str:
    """Hex colour at position ``t`` in [0, 1] of the viridis ramp."""
    t = min(1.0, max(0.0, float(t)))
    pos = t * (len(VIRIDIS_STOPS) - 1)
    k = min(int(pos), len(VIRIDIS_STOPS) - 2)
    f = pos - k
    a, b = VIRIDIS_STOPS[k], VIRIDIS_STOPS[k + 1]
    return "#" + "".join(f"{round(a[c] + (b[c] - a[c]) * f):02x}" for c in range(3))


def color_positions(values, color_scale: str = "log", vmin=None, vmax=None) -> np.ndarray:
    """Ramp positions in [0, 1] for ``values``."""
    values = np.asarray(values, dtype=np.float64)
    vmin = float(values.min()) if vmin is None else vmin
    vmax = float(values.max()) if vmax is None else vmax
    if color_scale == "log":
        if vmin <= 0:
            raise ValueError("log colour scale needs positive values")
        values, vmin, vmax = np.log10(values), math.log10(vmin), math.log10(vmax)
    elif color_scale != "linear":
        raise ValueError(f"unknown colour scale {color_scale!r}")
    if vmax == vmin:
        return np.zeros_like(values)
    return np.clip((values - vmin) / (vmax - vmin), 0.0, 1.0)


# -- SVG plumbing ----------------------------------------------------------------


def _f(v: float) -> str:
    s = f"{v:.2f}".rstrip("0").rstrip(".")
    return "0" if s == "-0" else s


def _tick_label(v: float) -> str:
    if v == 0:
        return "0"
    if 1e-3 <= abs(v) < 1e4:
        return f"{v:g}"
    return f"{v:.0e}".replace("e+0", "e").replace("e-0", "e-")


class _Axis:
    def __init__(self, lo, hi, start, stop, scale):
        if scale not in ("log", "linear"):
            raise ValueError(f"unknown axis scale {scale!r}")
        self.scale = scale
        self.lo, self.hi = (math.log10(lo), math.log10(hi)) if scale == "log" else (lo, hi)
        self.start, self.stop = start, stop

    def __call__(self, v):
        u = math.log10(v) if self.scale == "log" else v
        return self.start + (u - self.lo) / (self.hi - self.lo) * (self.stop - self.start)

    def ticks(self):
        if self.scale == "log":
            decades = range(math.floor(self.lo) - 1, math.ceil(self.hi) + 1)
            inside = lambda v: self.lo - 1e-9 <= math.log10(v) <= self.hi + 1e-9  # noqa: E731
            for mults in ((1,), (1, 2, 5), (1, 2, 3, 5, 7)):
                ticks = [m * 10.0**e for e in decades for m in mults if inside(m * 10.0**e)]
                if len(ticks) >= 2:
                    return ticks
            return _nice_ticks(10**self.lo, 10**self.hi)
        return _nice_ticks(self.lo, self.hi)


def _nice_ticks(lo, hi):
    """Round-number ticks (steps of 1, 2 or 5 times a power of ten) in [lo, hi]."""
    span = hi - lo
    step = 10 ** math.floor(math.log10(span / 4)) if span > 0 else 1.0
    for mult in (1, 2, 5, 10):
        if span / (step * mult) <= 6:
            step *= mult
            break
    first = math.ceil(lo / step - 1e-9)
    return [k * step for k in range(first, math.floor(hi / step + 1e-9) + 1)]


class _Svg:
    def __init__(self, width, height):
        self.parts = [
            '<?xml version="1.0" encoding="UTF-8" standalone="no"?>',
            f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" '
            f'height="{height}" viewBox="0 0 {width} {height}" '
            'font-family="DejaVu Sans, Arial, sans-serif" font-size="11">',
            f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>',
        ]

    def add(self, element: str):
        self.parts.append(element)

    def text(self, x, y, s, anchor="middle", extra=""):
        self.add(f'<text x="{_f(x)}" y="{_f(y)}" text-anchor="{anchor}"{extra}>{escape(s)}</text>')

    def line(self, x1, y1, x2, y2, stroke="#000000", extra=""):
        self.add(f'<line x1="{_f(x1)}" y1="{_f(y1)}" x2="{_f(x2)}" y2="{_f(y2)}" '
                 f'stroke="{stroke}"{extra}/>')

    def write(self, path):
        data = ("\n".join(self.parts + ["</svg>"]) + "\n").encode("utf-8")
        Path(path).write_bytes(data)
        return Path(path)


def _frame(svg, ax_x, ax_y, x_label, y_label, left, top, right, bottom):
    svg.add(f'<rect x="{_f(left)}" y="{_f(top)}" width="{_f(right - left)}" '
            f'height="{_f(bottom - top)}" fill="none" stroke="#000000"/>')
    for t in ax_x.ticks():
        x = ax_x(t)
        svg.line(x, bottom, x, bottom + 4)
        svg.text(x, bottom + 16, _tick_label(t))
    for t in ax_y.ticks():
        y = ax_y(t)
        svg.line(left - 4, y, left, y)
        svg.text(left - 6, y + 4, _tick_label(t), anchor="end")
    svg.text((left + right) / 2, bottom + 34, x_label)
    cy = (top + bottom) / 2
    svg.text(left - 46, cy, y_label, extra=f' transform="rotate(-90 {_f(left - 46)} {_f(cy)})"')


def emit_heatmap(raster: HeatmapRaster, loci: Sequence[Sequence[tuple[float, float]]] = (),
                 color_scale: str = "log", path="heatmap.svg", title: str = "",
                 x_label: str = "hidden width", y_label: str = "latent width",
                 value_label: str = "loss") -> Path:
    """Write the raster as SVG with optional black loci polylines and a colour bar.

    ``loci`` is a list of curves, each a list of ``(hidden, latent)`` points.
    Runs of equal colour along a raster row are merged into one rectangle.
    """
    rows, cols = raster.shape
    left, top, right, bottom = 70.0, 40.0, 500.0, 430.0
    svg = _Svg(620, 490)
    if title:
        svg.text((left + right) / 2, 22, title, extra=' font-size="13"')
    ax_x = _Axis(*raster.x_range, left, right, "log")
    ax_y = _Axis(*raster.y_range, bottom, top, "log")
    vals = raster.cell_values
    vmin, vmax = float(vals.min()), float(vals.max())
    colors = [[ramp_color(t) for t in row]
              for row in color_positions(vals, color_scale, vmin, vmax)]
    cw, ch = (right - left) / cols, (bottom - top) / rows

    svg.add('<g id="cells" shape-rendering="crispEdges">')
    # edges are rounded once and shared by neighbours so cells tile without seams
    xe = [round(left + i * cw, 2) for i in range(cols + 1)]
    ye = [round(bottom - j * ch, 2) for j in range(rows + 1)]
    for j in range(rows):
        i = 0
        while i < cols:
            k = i
            while k + 1 < cols and colors[j][k + 1] == colors[j][i]:
                k += 1
            svg.add(f'<rect x="{_f(xe[i])}" y="{_f(ye[j + 1])}" width="{_f(xe[k + 1] - xe[i])}" '
                    f'height="{_f(ye[j] - ye[j + 1])}" fill="{colors[j][i]}"/>')
            i = k + 1
    svg.add("</g>")

    svg.add('<clipPath id="plot-area"><rect x="%s" y="%s" width="%s" height="%s"/></clipPath>'
            % (_f(left), _f(top), _f(right - left), _f(bottom - top)))
    for curve in loci:
        pts = [(h, l) for h, l in curve if h > 0 and l > 0]
        if len(pts) < 2:
            continue
        coords = " ".join(f"{_f(ax_x(h))},{_f(ax_y(l))}" for h, l in pts)
        svg.add(f'<polyline points="{coords}" fill="none" stroke="#000000" stroke-width="2" '
                'clip-path="url(#plot-area)"/>')

    _frame(svg, ax_x, ax_y, x_label, y_label, left, top, right, bottom)

    # colour bar
    bx, bw = 530.0, 16.0
    steps = 64
    sh = (bottom - top) / steps
    svg.add('<g id="colorbar" shape-rendering="crispEdges">')
    be = [round(bottom - s * sh, 2) for s in range(steps + 1)]
    for s in range(steps):
        svg.add(f'<rect x="{_f(bx)}" y="{_f(be[s + 1])}" width="{_f(bw)}" '
                f'height="{_f(be[s] - be[s + 1])}" fill="{ramp_color((s + 0.5) / steps)}"/>')
    svg.add("</g>")
    svg.add(f'<rect x="{_f(bx)}" y="{_f(top)}" width="{_f(bw)}" height="{_f(bottom - top)}" '
            'fill="none" stroke="#000000"/>')
    if vmin > 0 or color_scale == "linear":
        ax_c = _Axis(vmin, vmax if vmax > vmin else vmin * 10, bottom, top, color_scale)
        for t in ax_c.ticks():
            y = ax_c(t)
            if top - 0.5 <= y <= bottom + 0.5:
                svg.line(bx + bw, y, bx + bw + 4, y)
                svg.text(bx + bw + 6, y + 4, _tick_label(t), anchor="start")
    svg.text(bx + bw / 2, top - 8, value_label)
    return svg.write(path)


def emit_curve(curves, x_scale: str = "log", markers: Sequence[float] = (),
               path="curve.svg", y_scale: str = "log", title: str = "",
               x_label: Optional[str] = None, y_label: str = "test MSE") -> Path:
    """Write one polyline per ``LossCurve`` plus dashed vertical markers."""
    if not curves:
        raise ValueError("need at least one curve")
    xs = np.concatenate([c.capacities for c in curves] + [np.asarray(markers, dtype=float)])
    ys = np.concatenate([c.losses for c in curves])
    left, top, right, bottom = 80.0, 40.0, 580.0, 400.0
    svg = _Svg(640, 460)
    if title:
        svg.text((left + right) / 2, 22, title, extra=' font-size="13"')

    def padded(lo, hi, scale):
        if scale == "log":
            lo, hi = math.log10(lo), math.log10(hi)
        pad = 0.05 * (hi - lo) if hi > lo else 0.5
        lo, hi = lo - pad, hi + pad
        return (10**lo, 10**hi) if scale == "log" else (lo, hi)

    ax_x = _Axis(*padded(float(xs.min()), float(xs.max()), x_scale), left, right, x_scale)
    ax_y = _Axis(*padded(float(ys.min()), float(ys.max()), y_scale), bottom, top, y_scale)

    for m in markers:
        x = ax_x(m)
        svg.line(x, top, x, bottom, stroke="#555555", extra=' stroke-dasharray="5,4"')
    for k, curve in enumerate(curves):
        color = CURVE_COLORS[k % len(CURVE_COLORS)]
        coords = " ".join(f"{_f(ax_x(x))},{_f(ax_y(y))}"
                          for x, y in zip(curve.capacities, curve.losses))
        svg.add(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="2"/>')
        for x, y in zip(curve.capacities, curve.losses):
            svg.add(f'<circle cx="{_f(ax_x(x))}" cy="{_f(ax_y(y))}" r="3" fill="{color}"/>')
    labelled = [(k, c) for k, c in enumerate(curves) if c.label]
    if labelled:
        # legend box in the top-right corner, over the data
        width = 40 + 6.5 * max(len(c.label) for _, c in labelled)
        lx = right - 8 - width
        svg.add(f'<rect x="{_f(lx)}" y="{_f(top + 6)}" width="{_f(width)}" '
                f'height="{_f(8 + 16 * len(labelled))}" fill="#ffffff" fill-opacity="0.85" '
                'stroke="#999999"/>')
        for row, (k, curve) in enumerate(labelled):
            color = CURVE_COLORS[k % len(CURVE_COLORS)]
            ly = top + 22 + 16 * row
            svg.line(lx + 8, ly - 4, lx + 28, ly - 4, stroke=color, extra=' stroke-width="2"')
            svg.text(lx + 32, ly, curve.label, anchor="start")

    _frame(svg, ax_x, ax_y, x_label or curves[0].axis_label, y_label, left, top, right, bottom)
    return svg.write(path)
