"""Site-resolved Hall marker field on a grid of junctions.

The colour scale is fixed: sigma = -1 maps to blue ``#2166ac``, 0 to light
grey ``#f7f7f7`` and +1 to red ``#b2182b``, linear in RGB in between; values
outside [-1, 1] are clipped.  The same scale is drawn as a legend in every
SVG so images from different runs compare directly.
"""
from __future__ import annotations

import csv
import io
from typing import Sequence

import numpy as np

from .filters import FilterSpec
from .lattice import GeometryError, Lattice, triple_partition
from .parallel import pmap
from .quadratic import QuadraticModel
from .transport import FrameEngine, TransportResult, hall_marker

__all__ = ["COLOR_SCALE", "FIELD_COLUMNS", "grid_points", "marker_field", "color",
           "field_csv", "render_svg"]

COLOR_SCALE = ((-1.0, (0x21, 0x66, 0xac)), (0.0, (0xf7, 0xf7, 0xf7)), (1.0, (0xb2, 0x18, 0x2b)))
FIELD_COLUMNS = ("x", "y", "sigma", "cutoff", "tolerance", "status")


def _axis(lo: float, hi: float, spacing: float, offset: float) -> np.ndarray:
    n = int(np.floor((hi - lo) / spacing + 1e-9)) + 1
    return lo + offset + spacing * np.arange(n)


def grid_points(lat: Lattice, cutoff: float, spacing: float = 2.0,
                x: Sequence[float] | None = None, y: Sequence[float] | None = None,
                offset: Sequence[float] = (0.13, 0.07)) -> list[np.ndarray]:
    """Junction points ``lo + offset + k * spacing`` inside the given bounds.

    Bounds default to the part of the lattice where a disk of radius
    ``cutoff`` fits (the whole cell on a torus).  Bounds reaching outside
    that interior raise :class:`GeometryError`.
    """
    if spacing < 1.0:
        raise GeometryError(f"grid spacing must be at least one site, got {spacing}")
    lo, hi = lat.bbox
    if lat.periodic:
        if 2 * cutoff >= min(lat.period):
            raise GeometryError(f"cutoff {cutoff} does not fit in the torus {lat.period}")
        ilo, ihi = lo, hi
    else:
        ilo, ihi = lo + cutoff, hi - cutoff
        if np.any(ilo > ihi):
            raise GeometryError(f"lattice has no interior at cutoff {cutoff}")
    bounds = []
    for k, b in enumerate((x, y)):
        if b is None:
            # on a torus the last column would repeat the first one
            top = ihi[k] - spacing if lat.periodic else ihi[k] - offset[k]
            b = (float(ilo[k]), float(top))
        else:
            b = (float(b[0]), float(b[1]))
        if b[0] > b[1]:
            raise GeometryError(f"empty grid range {b}")
        if b[0] < ilo[k] - 1e-9 or b[1] + offset[k] > ihi[k] + 1e-9:
            raise GeometryError(
                f"grid range {b} exceeds the lattice interior [{ilo[k]:.3f}, {ihi[k]:.3f}]")
        bounds.append(b)
    xs = _axis(*bounds[0], spacing, offset[0])
    ys = _axis(*bounds[1], spacing, offset[1])
    return [np.array([xv, yv]) for yv in ys for xv in xs]


def marker_field(model: QuadraticModel, spec: FilterSpec, points: Sequence[np.ndarray],
                 cutoff: float = 6.0, angles=(90.0, 210.0, 330.0), orientation: int = 1,
                 workers: int | None = None) -> list[TransportResult]:
    """Hall marker at every junction, sharing one eigenbasis frame."""
    eng = FrameEngine(model, spec)

    def one(p):
        part = triple_partition(model.lattice, p, angles, orientation)
        return hall_marker(model, spec, part, cutoff, engine=eng)

    return pmap(one, points, workers)


def color(value: float) -> str:
    v = float(np.clip(value, -1.0, 1.0)) if np.isfinite(value) else 0.0
    (a, ca), (b, cb) = (COLOR_SCALE[0], COLOR_SCALE[1]) if v <= 0 else (COLOR_SCALE[1],
                                                                          COLOR_SCALE[2])
    t = (v - a) / (b - a)
    rgb = [int(round(x + t * (y - x))) for x, y in zip(ca, cb)]
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def field_csv(points, results, tolerance: float) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FIELD_COLUMNS)
    for p, r in zip(points, results):
        status = "ok" if r.converged else "UNCONVERGED"
        w.writerow([repr(float(p[0])), repr(float(p[1])), repr(float(r.value)),
                    repr(float(r.cutoff)), repr(float(tolerance)), status])
    return buf.getvalue()


def render_svg(points, values, spacing: float, title: str = "Hall marker",
               scale: float = 24.0) -> str:
    """Self-contained SVG: one square per junction plus the colour legend."""
    pts = np.asarray(points, float)
    vals = np.asarray(values, float)
    x0, y0 = pts.min(axis=0) - 0.5 * spacing
    x1, y1 = pts.max(axis=0) + 0.5 * spacing
    pad, legend_h = 30.0, 60.0
    width = (x1 - x0) * scale + 2 * pad
    height = (y1 - y0) * scale + 2 * pad + legend_h
    top = pad + (y1 - y0) * scale
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.1f}" height="{height:.1f}" '
        f'viewBox="0 0 {width:.1f} {height:.1f}">',
        f'<title>{title}</title>',
        f'<rect x="0" y="0" width="{width:.1f}" height="{height:.1f}" fill="#ffffff"/>',
    ]
    s = spacing * scale
    for (px, py), v in zip(pts, vals):
        cx = pad + (px - x0) * scale
        cy = top - (py - y0) * scale  # y grows upwards on the lattice
        out.append(f'<rect x="{cx - s / 2:.2f}" y="{cy - s / 2:.2f}" width="{s:.2f}" '
                   f'height="{s:.2f}" fill="{color(v)}"><title>({px:.2f}, {py:.2f}): '
                   f'{v:.4f}</title></rect>')
    # legend: fixed scale [-1, 1]
    lx, ly, lw = pad, top + pad, min(240.0, width - 2 * pad)
    n = 40
    for k in range(n):
        v = -1 + 2 * (k + 0.5) / n
        out.append(f'<rect x="{lx + k * lw / n:.2f}" y="{ly:.2f}" width="{lw / n + 0.01:.2f}" '
                   f'height="12" fill="{color(v)}"/>')
    for v, anchor in ((-1, "start"), (0, "middle"), (1, "end")):
        tx = lx + (v + 1) / 2 * lw
        out.append(f'<text x="{tx:.2f}" y="{ly + 26:.2f}" font-size="11" '
                   f'font-family="sans-serif" text-anchor="{anchor}">{v:+d}</text>')
    out.append(f'<text x="{lx + lw + 10:.2f}" y="{ly + 11:.2f}" font-size="11" '
               f'font-family="sans-serif">{title}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
