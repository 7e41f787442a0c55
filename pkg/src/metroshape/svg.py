"""SVG emission for final and intermediate layouts.

One stroked path per line per connection, a disc per real station, and
the guide shape in gray underneath.  Connections carrying several lines
draw them with a small perpendicular offset so all colors stay visible.
Output is deterministic for a fixed layout.
"""

from __future__ import annotations

import numpy as np

from .geometry import GuideShape
from .model import StationKind, TransitNetwork

STROKE = 0.08          # stroke width, in multiples of the mean edge length
STATION_RADIUS = 0.11
MARGIN = 0.06          # canvas margin as a fraction of the drawing extent
CANVAS = 900.0


def _f(x: float) -> str:
    return f"{x:.2f}"


def _offset_polyline(pts: np.ndarray, offset: float) -> np.ndarray:
    """Shift a polyline sideways by the averaged per-vertex normal."""
    if offset == 0.0 or len(pts) < 2:
        return pts
    seg = np.diff(pts, axis=0)
    norm = np.stack([-seg[:, 1], seg[:, 0]], axis=1)
    norm /= np.maximum(np.hypot(norm[:, 0], norm[:, 1]), 1e-12)[:, None]
    per_vertex = np.vstack([norm[:1], 0.5 * (norm[:-1] + norm[1:]), norm[-1:]])
    per_vertex /= np.maximum(
        np.hypot(per_vertex[:, 0], per_vertex[:, 1]), 1e-12
    )[:, None]
    return pts + per_vertex * offset


def _merge_fragments(net: TransitNetwork, positions, paths):
    """Snap split fragments back onto one merged station position."""
    groups: dict[str, list[str]] = {}
    for s in net.stations.values():
        if s.merged_id:
            groups.setdefault(s.merged_id, []).append(s.id)
    if not groups:
        return positions, paths
    positions = dict(positions)
    moved: dict[tuple[float, float], tuple[float, float]] = {}
    for origin, members in sorted(groups.items()):
        center = tuple(np.mean([positions[m] for m in members], axis=0))
        for m in members:
            moved[tuple(np.round(positions[m], 9))] = center
            positions[m] = center
    fixed_paths = {}
    for cid, pts in paths.items():
        pts = np.array(pts, dtype=float)
        for end in (0, -1):
            key = tuple(np.round(pts[end], 9))
            if key in moved:
                pts[end] = moved[key]
        fixed_paths[cid] = pts
    return positions, fixed_paths


def emit_svg(net: TransitNetwork, positions: dict[str, tuple[float, float]],
             paths: dict[str, np.ndarray] | None = None,
             shape: GuideShape | None = None,
             failed: tuple[str, ...] = (),
             show_shape: bool = True) -> str:
    """Render a layout; ``paths`` defaults to straight connections."""
    if paths is None:
        paths = {
            c.id: np.array([positions[c.a], positions[c.b]], dtype=float)
            for c in net.connections.values()
        }
    positions, paths = _merge_fragments(net, positions, paths)

    pts = np.array(list(positions.values()), dtype=float)
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    if shape is not None and show_shape:
        s_lo, s_hi = shape.bbox()
        lo = np.minimum(lo, s_lo)
        hi = np.maximum(hi, s_hi)
    span = float(max(hi[0] - lo[0], hi[1] - lo[1], 1e-9))
    pad = MARGIN * span
    scale = CANVAS / (span + 2 * pad)

    def to_px(p) -> tuple[float, float]:
        return (
            (p[0] - lo[0] + pad) * scale,
            (hi[1] - p[1] + pad) * scale,
        )

    mean_edge = float(np.mean([
        np.hypot(*(np.array(positions[c.a]) - np.array(positions[c.b])))
        for c in net.connections.values()
    ])) if net.connections else 1.0
    stroke = max(STROKE * mean_edge * scale, 1.0)
    radius = max(STATION_RADIUS * mean_edge * scale, 1.5)

    w = (hi[0] - lo[0] + 2 * pad) * scale
    h = (hi[1] - lo[1] + 2 * pad) * scale
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_f(w)}" '
        f'height="{_f(h)}" viewBox="0 0 {_f(w)} {_f(h)}">',
        '<rect width="100%" height="100%" fill="white"/>',
    ]

    if shape is not None and show_shape:
        for line in shape.polylines:
            chain = line.chain_vertices()
            d = "M " + " L ".join(f"{_f(x)} {_f(y)}" for x, y in map(to_px, chain))
            out.append(
                f'<path d="{d}" fill="none" stroke="#c8c8c8" '
                f'stroke-width="{_f(stroke * 1.6)}" stroke-linejoin="round"/>'
            )

    line_color = {lid: l.color for lid, l in net.lines.items()}
    for conn in net.connections.values():
        pts_c = np.asarray(paths.get(conn.id), dtype=float)
        if pts_c is None or len(pts_c) < 2:
            continue
        members = sorted(conn.lines) or [None]
        dashed = conn.id in failed
        for k, lid in enumerate(members):
            off = (k - (len(members) - 1) / 2.0) * stroke * 1.1 / scale
            shifted = _offset_polyline(pts_c, off)
            d = "M " + " L ".join(
                f"{_f(x)} {_f(y)}" for x, y in map(to_px, shifted)
            )
            color = line_color.get(lid, "#666666") if lid else "#666666"
            dash = ' stroke-dasharray="6 5"' if dashed else ""
            out.append(
                f'<path d="{d}" fill="none" stroke="{color}" '
                f'stroke-width="{_f(stroke)}" stroke-linecap="round" '
                f'stroke-linejoin="round"{dash}/>'
            )

    drawn: set[tuple[float, float]] = set()
    for sid, s in net.stations.items():
        if s.kind is not StationKind.REAL:
            continue
        x, y = to_px(positions[sid])
        key = (round(x, 2), round(y, 2))
        if key in drawn:
            continue
        drawn.add(key)
        out.append(
            f'<circle cx="{_f(x)}" cy="{_f(y)}" r="{_f(radius)}" '
            f'fill="white" stroke="#1a1a1a" stroke-width="{_f(stroke * 0.45)}"/>'
        )

    out.append("</svg>")
    return "\n".join(out) + "\n"
