"""Deterministic synthetic networks and guide shapes for demos and tests.

Grid, ring and tree topologies in the 20..260 station range, plus a few
classic guide motifs (heart, flower, eye, square, stadium).  Everything
is seeded, so repeated calls produce identical instances.
"""

from __future__ import annotations

import math

import numpy as np

from .geometry import GuideShape, Polyline
from .model import Connection, Line, Station, TransitNetwork

_PALETTE = (
    "#e4002b", "#0057b8", "#00843d", "#ffd100", "#8e258d",
    "#ff7f32", "#00a3e0", "#6e3219", "#b5bd00", "#98002e",
)


def _color(k: int) -> str:
    return _PALETTE[k % len(_PALETTE)]


def grid_network(cols: int, rows: int, spacing: float = 1.0,
                 jitter: float = 0.0, seed: int = 0) -> TransitNetwork:
    """Rectangular lattice; one line per row and per column."""
    rng = np.random.default_rng(seed)

    def sid(i, j):
        return f"s{i}_{j}"

    stations = []
    for i in range(cols):
        for j in range(rows):
            dx, dy = (rng.uniform(-jitter, jitter, 2) if jitter > 0 else (0.0, 0.0))
            stations.append(
                Station(sid(i, j), (i * spacing + dx, j * spacing + dy),
                        name=f"{i}/{j}")
            )
    connections = []
    n = 0
    for i in range(cols):
        for j in range(rows):
            if i + 1 < cols:
                connections.append(Connection(
                    f"c{n:04d}", sid(i, j), sid(i + 1, j), frozenset({f"row{j}"})))
                n += 1
            if j + 1 < rows:
                connections.append(Connection(
                    f"c{n:04d}", sid(i, j), sid(i, j + 1), frozenset({f"col{i}"})))
                n += 1
    lines = [
        Line(f"row{j}", _color(j), tuple(sid(i, j) for i in range(cols)))
        for j in range(rows)
    ] + [
        Line(f"col{i}", _color(rows + i), tuple(sid(i, j) for j in range(rows)))
        for i in range(cols)
    ]
    return TransitNetwork.build(stations, connections, lines)


def ring_network(n_ring: int, spokes: int = 0, radius: float = 4.0,
                 spoke_len: int = 2) -> TransitNetwork:
    """Circle line with optional radial branch lines."""
    stations = []
    connections = []
    lines = []
    ring_ids = []
    for k in range(n_ring):
        ang = 2 * math.pi * k / n_ring
        sid = f"r{k:02d}"
        ring_ids.append(sid)
        stations.append(Station(sid, (radius * math.cos(ang), radius * math.sin(ang)),
                                name=f"ring {k}"))
    for k in range(n_ring):
        connections.append(Connection(
            f"cr{k:02d}", ring_ids[k], ring_ids[(k + 1) % n_ring],
            frozenset({"ring"})))
    lines.append(Line("ring", _color(0), tuple(ring_ids + [ring_ids[0]])))

    if spokes > 0:
        step = n_ring // spokes
        for s in range(spokes):
            base = ring_ids[s * step]
            ang = 2 * math.pi * (s * step) / n_ring
            prev = base
            branch = [base]
            for seg in range(1, spoke_len + 1):
                r = radius * (1.0 + 0.45 * seg)
                sid = f"b{s}_{seg}"
                stations.append(Station(sid, (r * math.cos(ang), r * math.sin(ang)),
                                        name=f"branch {s}.{seg}"))
                connections.append(Connection(
                    f"cb{s}_{seg}", prev, sid, frozenset({f"spoke{s}"})))
                prev = sid
                branch.append(sid)
            lines.append(Line(f"spoke{s}", _color(1 + s), tuple(branch)))
    return TransitNetwork.build(stations, connections, lines)


def radial_network(ring_sizes=(24, 36, 48), n_spokes: int = 12,
                   inner_radius: float = 2.0, ring_gap: float = 1.4,
                   mids_between: int = 1, spoke_tail: int = 2) -> TransitNetwork:
    """Concentric ring lines crossed by radial lines at shared stations.

    Mimics real metro topology: mostly degree-2 chains, interchanges of
    degree four where spokes meet rings, no crossings away from stations.
    ``n_spokes`` must divide every ring size.
    """
    for n in ring_sizes:
        if n % n_spokes:
            raise ValueError("n_spokes must divide every ring size")
    stations: list[Station] = []
    connections: list[Connection] = []
    lines: list[Line] = []
    radii = [inner_radius + k * ring_gap for k in range(len(ring_sizes))]

    ring_ids: list[list[str]] = []
    for r_idx, (n, radius) in enumerate(zip(ring_sizes, radii)):
        ids = []
        for k in range(n):
            ang = 2 * math.pi * k / n
            sid = f"r{r_idx}_{k:02d}"
            ids.append(sid)
            stations.append(Station(
                sid, (radius * math.cos(ang), radius * math.sin(ang)),
                name=f"ring{r_idx} {k}"))
        for k in range(n):
            connections.append(Connection(
                f"cr{r_idx}_{k:02d}", ids[k], ids[(k + 1) % n],
                frozenset({f"ring{r_idx}"})))
        lines.append(Line(f"ring{r_idx}", _color(r_idx), tuple(ids + [ids[0]])))
        ring_ids.append(ids)

    conn_counter = 0
    for s in range(n_spokes):
        ang = 2 * math.pi * s / n_spokes
        cos_a, sin_a = math.cos(ang), math.sin(ang)
        path = []
        for r_idx, (n, radius) in enumerate(zip(ring_sizes, radii)):
            path.append(ring_ids[r_idx][s * (n // n_spokes)])
            nxt_radius = radii[r_idx + 1] if r_idx + 1 < len(radii) else None
            if nxt_radius is not None:
                for m in range(1, mids_between + 1):
                    rr = radius + (nxt_radius - radius) * m / (mids_between + 1)
                    sid = f"m{s}_{r_idx}_{m}"
                    stations.append(Station(
                        sid, (rr * cos_a, rr * sin_a), name=f"mid {s}.{r_idx}.{m}"))
                    path.append(sid)
        for t in range(1, spoke_tail + 1):
            rr = radii[-1] + t * ring_gap * 0.8
            sid = f"x{s}_{t}"
            stations.append(Station(
                sid, (rr * cos_a, rr * sin_a), name=f"tail {s}.{t}"))
            path.append(sid)
        lid = f"spoke{s}"
        for a, b in zip(path[:-1], path[1:]):
            connections.append(Connection(
                f"cs{conn_counter:03d}", a, b, frozenset({lid})))
            conn_counter += 1
        lines.append(Line(lid, _color(len(ring_sizes) + s), tuple(path)))

    return TransitNetwork.build(stations, connections, lines)


def tree_network(depth: int, spread: float = 1.0) -> TransitNetwork:
    """Full binary tree laid out radially; one line per root-leaf path."""
    stations = [Station("t0", (0.0, 0.0), name="root")]
    connections = []
    parents = {"t0": None}
    level = ["t0"]
    counter = 1
    for d in range(1, depth + 1):
        nxt = []
        radius = spread * d * 1.6
        slots = 2 ** d
        for idx, parent in enumerate(level):
            for side in range(2):
                slot = idx * 2 + side
                ang = math.pi * (0.25 + 1.5 * (slot + 0.5) / slots)
                sid = f"t{counter}"
                counter += 1
                stations.append(Station(
                    sid, (radius * math.cos(ang), radius * math.sin(ang)),
                    name=f"node {sid}"))
                connections.append(Connection(
                    f"ct{sid}", parent, sid, frozenset()))
                parents[sid] = parent
                nxt.append(sid)
        level = nxt

    # one line per leaf, walking back to the root
    lines = []
    leaf_paths = []
    for leaf in level:
        path = [leaf]
        while parents[path[-1]] is not None:
            path.append(parents[path[-1]])
        leaf_paths.append(tuple(reversed(path)))
    line_of_conn: dict[str, set[str]] = {c.id: set() for c in connections}
    for k, path in enumerate(leaf_paths):
        lid = f"leaf{k}"
        lines.append(Line(lid, _color(k), path))
        for a, b in zip(path[:-1], path[1:]):
            for c in connections:
                if {c.a, c.b} == {a, b}:
                    line_of_conn[c.id].add(lid)
    connections = [
        Connection(c.id, c.a, c.b, frozenset(line_of_conn[c.id]), c.kind)
        for c in connections
    ]
    return TransitNetwork.build(stations, connections, lines)


# ---------------------------------------------------------------------------
# Guide shapes
# ---------------------------------------------------------------------------


def heart_shape(scale: float = 1.0, n: int = 40) -> GuideShape:
    t = np.linspace(0.0, 2 * math.pi, n, endpoint=False)
    x = 16 * np.sin(t) ** 3
    y = 13 * np.cos(t) - 5 * np.cos(2 * t) - 2 * np.cos(3 * t) - np.cos(4 * t)
    pts = np.stack([x, y], axis=1) * (scale / 16.0)
    return GuideShape((Polyline(pts, closed=True),))


def flower_shape(scale: float = 1.0, petals: int = 5, n: int = 60) -> GuideShape:
    t = np.linspace(0.0, 2 * math.pi, n, endpoint=False)
    r = scale * (0.8 + 0.25 * np.cos(petals * t))
    pts = np.stack([r * np.cos(t), r * np.sin(t)], axis=1)
    return GuideShape((Polyline(pts, closed=True),))


def eye_shape(scale: float = 1.0, n: int = 32) -> GuideShape:
    """Almond outline plus an iris circle; two polylines."""
    t = np.linspace(0.0, 2 * math.pi, n, endpoint=False)
    outline = np.stack([
        scale * np.cos(t),
        scale * 0.45 * np.sin(t) * (1.0 + 0.25 * np.cos(t) ** 2),
    ], axis=1)
    t2 = np.linspace(0.0, 2 * math.pi, n // 2, endpoint=False)
    iris = np.stack([
        scale * 0.28 * np.cos(t2),
        scale * 0.28 * np.sin(t2),
    ], axis=1)
    return GuideShape((Polyline(outline, closed=True), Polyline(iris, closed=True)))


def square_shape(side: float = 2.0, origin=(0.0, 0.0)) -> GuideShape:
    x0, y0 = origin
    pts = [[x0, y0], [x0 + side, y0], [x0 + side, y0 + side], [x0, y0 + side]]
    return GuideShape((Polyline(pts, closed=True),))


def stadium_shape(scale: float = 1.0, n_cap: int = 12) -> GuideShape:
    """Rectangle with semicircular caps."""
    half = 1.2 * scale
    r = 0.7 * scale
    right = [
        (half + r * math.sin(a), r * -math.cos(a))
        for a in np.linspace(0, math.pi, n_cap)
    ]
    left = [
        (-half - r * math.sin(a), r * math.cos(a))
        for a in np.linspace(0, math.pi, n_cap)
    ]
    pts = [(-half, -r), (half, -r)] + right + [(half, r), (-half, r)] + left
    dedup = [pts[0]]
    for p in pts[1:]:
        if math.hypot(p[0] - dedup[-1][0], p[1] - dedup[-1][1]) > 1e-9:
            dedup.append(p)
    if math.hypot(dedup[0][0] - dedup[-1][0], dedup[0][1] - dedup[-1][1]) < 1e-9:
        dedup.pop()
    return GuideShape((Polyline(np.array(dedup), closed=True),))


# ---------------------------------------------------------------------------
# Bundled instance sets
# ---------------------------------------------------------------------------


def invariance_instances():
    """(name, network, shape) triples for the matching invariance suite."""
    return [
        ("grid20-heart", grid_network(5, 4), heart_shape(2.0)),
        ("grid36-flower", grid_network(6, 6), flower_shape(2.0)),
        ("grid100-heart", grid_network(10, 10), heart_shape(4.0)),
        ("ring24-flower", ring_network(24), flower_shape(3.0)),
        ("ring36-eye", ring_network(36, spokes=6), eye_shape(3.0)),
        ("ring56-heart", ring_network(40, spokes=8), heart_shape(3.0)),
        ("tree31-eye", tree_network(4), eye_shape(2.0)),
        ("tree63-flower", tree_network(5), flower_shape(2.5)),
    ]


def pipeline_instances():
    """(name, network, shape) triples exercised by the full pipeline."""
    return [
        ("ring28-stadium", ring_network(24, spokes=4, spoke_len=1), stadium_shape()),
        ("ring44-flower", ring_network(36, spokes=4), flower_shape(3.0)),
        ("radial96-heart", radial_network((16, 24, 32), n_spokes=8, mids_between=0,
                                          spoke_tail=3), heart_shape(4.0)),
        ("radial264-heart", radial_network((24, 36, 48, 60), n_spokes=12,
                                           mids_between=2, spoke_tail=2),
         heart_shape(5.0)),
    ]
