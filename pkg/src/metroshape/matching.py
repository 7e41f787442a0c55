"""Route matching: find a network path that traces the guide shape.

Grows candidate paths station by station, accepting an extension only
when it lowers the direction-based integral Frechet distance to the
shape, ranking queued candidates by their partial (subcurve) distance.
The best path over all starting stations wins and fixes the shape's
placement via bounding-box alignment.  Dummy shortcut edges may be used
but are penalized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import (
    DEFAULT_SAMPLES,
    GuideShape,
    Polyline,
    bbox_align,
    coupling_distances,
    direction_profile,
    partial_window,
)
from .model import ConnectionKind, TransitNetwork

# Additive dummy-edge penalty, in units of the path's mean per-edge cost.
DUMMY_PENALTY = 5.0

# Extensions may tie the current distance within this slack.  A straight
# continuation leaves the direction profile unchanged (the distance is
# scale invariant), so exact ties are common and must be accepted for
# paths to traverse straight runs.
TIE_SLACK = 1e-9


class MatchError(Exception):
    """No path with finite score exists for the given shape."""


@dataclass(frozen=True)
class MatchedRoute:
    """A network path matched to the guide shape's anchor polyline."""

    stations: tuple[str, ...]
    edges: tuple[str, ...]
    score: float
    placement: tuple[float, tuple[float, float]] | None
    dummy_count: int

    @property
    def is_cycle(self) -> bool:
        return len(self.stations) > 1 and self.stations[0] == self.stations[-1]


# ---------------------------------------------------------------------------
# Path growth
# ---------------------------------------------------------------------------


def _route_polyline(net: TransitNetwork, stations: list[str]) -> Polyline | None:
    pts = [net.stations[stations[0]].xy()]
    for sid in stations[1:]:
        p = net.stations[sid].xy()
        if np.hypot(*(p - pts[-1])) > 0:
            pts.append(p)
    if len(pts) < 2:
        return None
    return Polyline(np.array(pts))


def _profile_angles(net: TransitNetwork, stations: list[str], n: int) -> np.ndarray | None:
    line = _route_polyline(net, stations)
    if line is None:
        return None
    return direction_profile(line, n).angles


def grow_path(net: TransitNetwork, shape: GuideShape, start: str,
              n_samples: int = DEFAULT_SAMPLES,
              dummy_penalty: float = DUMMY_PENALTY,
              _adjacency=None, _shape_angles=None) -> MatchedRoute:
    """Grow a path from ``start`` while extensions keep lowering the
    distance to the shape's anchor polyline.

    Each step examines the neighbors of the path tail, queues those that
    reduce the full distance, appends the queued candidate with the
    smallest partial distance (dummy edges penalized), and stops when the
    queue is empty.  Closed shapes may close a cycle through the start.
    """
    if start not in net.stations:
        raise KeyError(f"unknown station {start!r}")
    adjacency = _adjacency if _adjacency is not None else net.adjacency()
    anchor = shape.anchor
    p_angles = (
        _shape_angles
        if _shape_angles is not None
        else direction_profile(anchor, n_samples).angles
    )

    path = [start]
    edges: list[str] = []
    visited = {start}
    dummy_count = 0
    current = math.inf
    closed = False

    while not closed:
        tail = path[-1]
        options = []
        for cid, other in adjacency[tail]:
            if other in visited:
                if (anchor.closed and other == path[0] and len(path) >= 3
                        and not closed):
                    options.append((cid, other, True))
                continue
            options.append((cid, other, False))
        if not options:
            break

        profiles = []
        kept = []
        for cid, other, closes in options:
            angles = _profile_angles(net, path + [other], n_samples)
            if angles is None:
                continue
            profiles.append(angles)
            kept.append((cid, other, closes))
        if not kept:
            break

        stack = np.stack(profiles)
        full = coupling_distances(stack, p_angles)
        improving = [k for k in range(len(kept)) if full[k] < current + TIE_SLACK]
        if not improving:
            break
        partial = coupling_distances(stack[improving], p_angles, partial=True)

        # Rank by penalized partial distance.  Candidates within the
        # discretization resolution of the best are tied; among those,
        # prefer the earliest matched window on the shape (tail-only
        # growth can never recover a skipped prefix), then the smaller
        # full distance.
        rank_slack = math.pi / (2.0 * (n_samples - 1))
        scores = {}
        for pos, k in enumerate(improving):
            cid, other, closes = kept[k]
            is_dummy = net.connections[cid].kind is ConnectionKind.SHORTCUT
            n_edges = len(edges) + 1
            n_dummy = dummy_count + (1 if is_dummy else 0)
            scores[k] = float(partial[pos]) * (1.0 + dummy_penalty * n_dummy / n_edges)
        top = min(scores.values())
        tied = [k for k in improving if scores[k] <= top + rank_slack]
        if len(tied) > 1:
            def rank_key(k):
                _, start, _ = partial_window(stack[k], p_angles)
                cid, other, _ = kept[k]
                is_dummy = net.connections[cid].kind is ConnectionKind.SHORTCUT
                return (start, float(full[k]), is_dummy, other)

            k = min(tied, key=rank_key)
        else:
            k = tied[0]
        cid, other, closes = kept[k]
        path.append(other)
        edges.append(cid)
        if net.connections[cid].kind is ConnectionKind.SHORTCUT:
            dummy_count += 1
        if closes:
            closed = True
        else:
            visited.add(other)
        current = float(full[k])

    score = current if len(path) >= 2 else math.inf
    placement = None
    if math.isfinite(score):
        line = _route_polyline(net, path)
        try:
            scale, offset = bbox_align(shape, line)
            placement = (scale, (float(offset[0]), float(offset[1])))
        except ValueError:
            placement = None
    return MatchedRoute(tuple(path), tuple(edges), score, placement, dummy_count)


def match_route(net: TransitNetwork, shape: GuideShape,
                n_samples: int = DEFAULT_SAMPLES,
                dummy_penalty: float = DUMMY_PENALTY,
                starts: list[str] | None = None) -> MatchedRoute:
    """Best growth result over all starting stations.

    Ties break deterministically by (score, dummy count, station ids).
    ``starts`` optionally restricts the enumerated starting stations.
    """
    adjacency = net.adjacency()
    p_angles = direction_profile(shape.anchor, n_samples).angles
    candidates = sorted(starts) if starts is not None else sorted(net.stations)
    best: MatchedRoute | None = None
    for start in candidates:
        route = grow_path(
            net, shape, start, n_samples, dummy_penalty,
            _adjacency=adjacency, _shape_angles=p_angles,
        )
        if not math.isfinite(route.score):
            continue
        if best is None or (route.score, route.dummy_count, route.stations) < (
            best.score, best.dummy_count, best.stations
        ):
            best = route
    if best is None:
        raise MatchError("no path in the network can trace the guide shape")
    return best


def manual_route(net: TransitNetwork, station_ids, shape: GuideShape | None = None,
                 n_samples: int = DEFAULT_SAMPLES) -> MatchedRoute:
    """Wrap a designer-provided station sequence as a matched route."""
    ids = list(station_ids)
    if len(ids) < 2:
        raise ValueError("manual route needs at least two stations")
    adjacency = net.adjacency()
    edges = []
    dummy_count = 0
    for a, b in zip(ids[:-1], ids[1:]):
        if a not in net.stations:
            raise ValueError(f"unknown station {a!r}")
        hit = [cid for cid, other in adjacency[a] if other == b]
        if not hit:
            raise ValueError(f"stations {a!r} and {b!r} are not adjacent")
        edges.append(hit[0])
        if net.connections[hit[0]].kind is ConnectionKind.SHORTCUT:
            dummy_count += 1
    score = math.nan
    placement = None
    line = _route_polyline(net, ids)
    if shape is not None and line is not None:
        p_angles = direction_profile(shape.anchor, n_samples).angles
        w_angles = direction_profile(line, n_samples).angles
        score = float(coupling_distances(w_angles, p_angles)[0])
        try:
            scale, offset = bbox_align(shape, line)
            placement = (scale, (float(offset[0]), float(offset[1])))
        except ValueError:
            placement = None
    return MatchedRoute(tuple(ids), tuple(edges), score, placement, dummy_count)


def place_shape(shape: GuideShape, route: MatchedRoute, net: TransitNetwork) -> GuideShape:
    """Transform all shape polylines by the route's fitted alignment.

    The anchor polyline's bounding box maps onto the route's; every other
    polyline follows with the same similarity.  The result is frozen for
    all later stages.
    """
    if len(route.stations) < 2:
        raise ValueError("route needs at least two stations")
    if route.placement is not None:
        scale, offset = route.placement
    else:
        line = _route_polyline(net, list(route.stations))
        if line is None:
            raise ValueError("route collapses to a point; cannot place shape")
        scale, offset = bbox_align(shape, line)
    return shape.transformed(scale, np.asarray(offset, dtype=float))
