"""Geometric kernels shared by every layout stage.

Polylines with arc-length direction profiles, the direction-based
integral Frechet distance (full and partial/subcurve matching) computed
by dynamic programming over monotone couplings, segment-intersection
predicates, and bounding-box alignment transforms.

All operations are pure functions over immutable values and are safe to
call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

EPS = 1e-9
TWO_PI = 2.0 * math.pi

# Default sampling density per curve for the coupling DP.
DEFAULT_SAMPLES = 64


# ---------------------------------------------------------------------------
# Polylines and guide shapes
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Polyline:
    """Open or closed chain of 2-D vertices.

    Closed chains do not store the repeated first vertex; closure is
    implicit.  Consecutive vertices must be distinct.
    """

    vertices: np.ndarray
    closed: bool = False

    def __post_init__(self) -> None:
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 2:
            raise ValueError("polyline needs at least two 2-D vertices")
        if not np.all(np.isfinite(v)):
            raise ValueError("polyline vertices must be finite")
        object.__setattr__(self, "vertices", v)
        seg = np.diff(self.chain_vertices(), axis=0)
        if np.any(np.hypot(seg[:, 0], seg[:, 1]) <= 0.0):
            raise ValueError("consecutive polyline vertices must be distinct")

    def chain_vertices(self) -> np.ndarray:
        """Vertices with the closing vertex appended for closed chains."""
        if self.closed:
            return np.vstack([self.vertices, self.vertices[:1]])
        return self.vertices

    def segment_lengths(self) -> np.ndarray:
        seg = np.diff(self.chain_vertices(), axis=0)
        return np.hypot(seg[:, 0], seg[:, 1])

    def total_length(self) -> float:
        return float(self.segment_lengths().sum())

    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def transformed(self, scale: float, offset: np.ndarray) -> "Polyline":
        return Polyline(self.vertices * scale + np.asarray(offset, dtype=float), self.closed)


@dataclass(frozen=True, eq=False)
class GuideShape:
    """One or more open or closed polylines describing a target motif."""

    polylines: tuple[Polyline, ...]

    def __post_init__(self) -> None:
        lines = tuple(self.polylines)
        if not lines:
            raise ValueError("guide shape needs at least one polyline")
        object.__setattr__(self, "polylines", lines)

    @property
    def anchor_index(self) -> int:
        """Index of the polyline containing the top-left vertex.

        Top-left means smallest x, ties broken by largest y.
        """
        best = None
        best_key = None
        for idx, line in enumerate(self.polylines):
            v = line.vertices
            k = np.lexsort((-v[:, 1], v[:, 0]))[0]
            key = (v[k, 0], -v[k, 1])
            if best_key is None or key < best_key:
                best_key = key
                best = idx
        return int(best)

    @property
    def anchor(self) -> Polyline:
        return self.polylines[self.anchor_index]

    def transformed(self, scale: float, offset: np.ndarray) -> "GuideShape":
        return GuideShape(tuple(p.transformed(scale, offset) for p in self.polylines))

    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        lows = np.array([p.bbox()[0] for p in self.polylines])
        highs = np.array([p.bbox()[1] for p in self.polylines])
        return lows.min(axis=0), highs.max(axis=0)


def resample(line: Polyline, max_seg: float) -> Polyline:
    """Split segments longer than ``max_seg`` into equal parts.

    Every input vertex is preserved and the point set is unchanged.
    """
    if max_seg <= 0:
        raise ValueError("max_seg must be positive")
    chain = line.chain_vertices()
    out = [chain[0]]
    for a, b in zip(chain[:-1], chain[1:]):
        length = float(np.hypot(*(b - a)))
        parts = max(1, math.ceil(length / max_seg - EPS))
        for i in range(1, parts):
            out.append(a + (b - a) * (i / parts))
        out.append(b)
    pts = np.array(out)
    if line.closed:
        pts = pts[:-1]
    return Polyline(pts, line.closed)


# ---------------------------------------------------------------------------
# Direction profiles
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DirectionProfile:
    """Tangent angles sampled at uniform normalized arc-length positions."""

    fractions: np.ndarray
    angles: np.ndarray


def direction_profile(line: Polyline, n_samples: int) -> DirectionProfile:
    """Sample segment tangent angles at ``n_samples`` arc-length fractions.

    Positions exactly on a vertex take the angle of the following segment.
    """
    if n_samples < 2:
        raise ValueError("need at least two samples per curve")
    chain = line.chain_vertices()
    vec = np.diff(chain, axis=0)
    seg_len = np.hypot(vec[:, 0], vec[:, 1])
    angles = np.arctan2(vec[:, 1], vec[:, 0])
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    fractions = np.linspace(0.0, 1.0, n_samples)
    s = fractions * cum[-1]
    idx = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(seg_len) - 1)
    return DirectionProfile(fractions, angles[idx])


def wrap_angle_diff(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Absolute angular difference wrapped to [0, pi]; reversal is maximal."""
    d = np.abs(np.asarray(a) - np.asarray(b)) % TWO_PI
    return np.where(d > math.pi, TWO_PI - d, d)


# ---------------------------------------------------------------------------
# Integral Frechet distance (monotone coupling DP)
# ---------------------------------------------------------------------------
#
# The coupling cost integrates the wrapped tangent-angle difference with
# respect to normalized arc length on both curves (trapezoidal rule per
# DP transition).  Angles are unchanged by uniform scaling and
# translation, so the distance is exactly invariant under both.


@dataclass(frozen=True, eq=False)
class MatchResult:
    """Outcome of a coupling between a query curve and a target curve."""

    distance: float
    correspondence: np.ndarray  # (k, 2) sample-index pairs, monotone
    subcurve: tuple[float, float]  # matched window on the target, fractions


def _coupling_rows(cost: np.ndarray, du: float, dv: float, free_start: bool) -> np.ndarray:
    """Batched DP over (B, nu, nv) pointwise costs; returns the last row.

    Row recurrence uses a prefix-min scan so each row is vectorized:
    D[i,j] = min(m[j], D[i,j-1] + c[j]) with m folding the two i-1
    predecessors, solved as running_min(m - cumsum(c)) + cumsum(c).
    """
    B, nu, nv = cost.shape
    half_u, half_v, half_uv = 0.5 * du, 0.5 * dv, 0.5 * (du + dv)

    row = np.zeros((B, nv))
    if not free_start:
        d0 = cost[:, 0, :]
        row[:, 1:] = np.cumsum((d0[:, :-1] + d0[:, 1:]) * half_v, axis=1)

    for i in range(1, nu):
        dprev = cost[:, i - 1, :]
        dcur = cost[:, i, :]
        m = row + (dprev + dcur) * half_u
        diag = row[:, :-1] + (dprev[:, :-1] + dcur[:, 1:]) * half_uv
        np.minimum(m[:, 1:], diag, out=m[:, 1:])
        c = np.empty((B, nv))
        c[:, 0] = 0.0
        c[:, 1:] = (dcur[:, :-1] + dcur[:, 1:]) * half_v
        ccum = np.cumsum(c, axis=1)
        row = np.minimum.accumulate(m - ccum, axis=1) + ccum
    return row


def _coupling_table(cost: np.ndarray, du: float, dv: float, free_start: bool) -> np.ndarray:
    """Full (nu, nv) DP table for a single pair, for backtracking."""
    nu, nv = cost.shape
    table = np.empty((nu, nv))
    half_u, half_v, half_uv = 0.5 * du, 0.5 * dv, 0.5 * (du + dv)
    row = np.zeros(nv)
    if not free_start:
        row[1:] = np.cumsum((cost[0, :-1] + cost[0, 1:]) * half_v)
    table[0] = row
    for i in range(1, nu):
        dprev, dcur = cost[i - 1], cost[i]
        m = row + (dprev + dcur) * half_u
        diag = row[:-1] + (dprev[:-1] + dcur[1:]) * half_uv
        np.minimum(m[1:], diag, out=m[1:])
        c = np.empty(nv)
        c[0] = 0.0
        c[1:] = (dcur[:-1] + dcur[1:]) * half_v
        ccum = np.cumsum(c)
        row = np.minimum.accumulate(m - ccum) + ccum
        table[i] = row
    return table


def _backtrack(table: np.ndarray, cost: np.ndarray, du: float, dv: float,
               free_start: bool, j_end: int) -> list[tuple[int, int]]:
    """Walk predecessors from (nu-1, j_end) back to the coupling start."""
    half_u, half_v, half_uv = 0.5 * du, 0.5 * dv, 0.5 * (du + dv)
    i, j = table.shape[0] - 1, j_end
    path = [(i, j)]
    while i > 0 or (j > 0 and not free_start):
        if i == 0:
            j -= 1
        else:
            best = (i - 1, j)
            best_val = table[i - 1, j] + (cost[i - 1, j] + cost[i, j]) * half_u
            if j > 0:
                val = table[i - 1, j - 1] + (cost[i - 1, j - 1] + cost[i, j]) * half_uv
                if val <= best_val:
                    best_val, best = val, (i - 1, j - 1)
                val = table[i, j - 1] + (cost[i, j - 1] + cost[i, j]) * half_v
                if val < best_val:
                    best_val, best = val, (i, j - 1)
            i, j = best
        path.append((i, j))
    path.reverse()
    return path


def _pointwise_costs(a_angles: np.ndarray, b_angles: np.ndarray) -> np.ndarray:
    return wrap_angle_diff(a_angles[:, None], b_angles[None, :])


def integral_frechet(a: Polyline, b: Polyline, n_samples: int = DEFAULT_SAMPLES) -> MatchResult:
    """Direction-based integral Frechet distance between two polylines."""
    pa = direction_profile(a, n_samples)
    pb = direction_profile(b, n_samples)
    cost = _pointwise_costs(pa.angles, pb.angles)
    du = 1.0 / (n_samples - 1)
    dv = 1.0 / (n_samples - 1)
    table = _coupling_table(cost, du, dv, free_start=False)
    corr = _backtrack(table, cost, du, dv, free_start=False, j_end=n_samples - 1)
    return MatchResult(float(table[-1, -1]), np.array(corr, dtype=int), (0.0, 1.0))


def partial_frechet(w: Polyline, p: Polyline, n_samples: int = DEFAULT_SAMPLES) -> MatchResult:
    """Best match of ``w`` against a contiguous subcurve of ``p``.

    Free-start/free-end boundary conditions on ``p``: the coupling covers
    all of ``w`` and any sampled window of ``p``; arc length stays
    normalized over the full curves.  Never exceeds the full distance.
    """
    pw = direction_profile(w, n_samples)
    pp = direction_profile(p, n_samples)
    cost = _pointwise_costs(pw.angles, pp.angles)
    du = 1.0 / (n_samples - 1)
    dv = 1.0 / (n_samples - 1)
    table = _coupling_table(cost, du, dv, free_start=True)
    last = table[-1]
    # Prefer the widest window among ties: last occurrence of the minimum.
    j_end = int(len(last) - 1 - np.argmin(last[::-1]))
    corr = _backtrack(table, cost, du, dv, free_start=True, j_end=j_end)
    j_start = corr[0][1]
    step = 1.0 / (n_samples - 1)
    start = j_start * step
    end = max(j_end * step, start + step)
    return MatchResult(float(last[j_end]), np.array(corr, dtype=int), (start, min(end, 1.0)))


def partial_window(w_angles: np.ndarray, p_angles: np.ndarray) -> tuple[float, float, float]:
    """Distance and matched-window fractions for one profile pair.

    Free-endpoint coupling of ``w_angles`` against ``p_angles``; returns
    (distance, window start fraction, window end fraction).
    """
    w = np.asarray(w_angles, dtype=float)
    p = np.asarray(p_angles, dtype=float)
    cost = _pointwise_costs(w, p)
    du = 1.0 / (len(w) - 1)
    dv = 1.0 / (len(p) - 1)
    table = _coupling_table(cost, du, dv, free_start=True)
    last = table[-1]
    j_end = int(len(last) - 1 - np.argmin(last[::-1]))
    corr = _backtrack(table, cost, du, dv, free_start=True, j_end=j_end)
    step = 1.0 / (len(p) - 1)
    return float(last[j_end]), corr[0][1] * step, j_end * step


def coupling_distances(w_angles: np.ndarray, p_angles: np.ndarray,
                       partial: bool = False) -> np.ndarray:
    """Batched distances from direction-profile angles.

    ``w_angles`` may be (n,) or (B, n); ``p_angles`` is (m,).  Returns a
    (B,) array of distances (full or free-endpoint partial).
    """
    w = np.atleast_2d(np.asarray(w_angles, dtype=float))
    p = np.asarray(p_angles, dtype=float)
    cost = wrap_angle_diff(w[:, :, None], p[None, None, :])
    du = 1.0 / (w.shape[1] - 1)
    dv = 1.0 / (p.shape[0] - 1)
    last = _coupling_rows(cost, du, dv, free_start=partial)
    return last.min(axis=1) if partial else last[:, -1]


# ---------------------------------------------------------------------------
# Segment predicates
# ---------------------------------------------------------------------------


def _cross(o: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    return float((a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]))


def _on_segment(p: np.ndarray, q: np.ndarray, r: np.ndarray, tol: float) -> bool:
    """Whether q lies within the bounding box of segment pr (collinear assumed)."""
    return (min(p[0], r[0]) - tol <= q[0] <= max(p[0], r[0]) + tol
            and min(p[1], r[1]) - tol <= q[1] <= max(p[1], r[1]) + tol)


def segments_intersect(s1, s2, shared=None) -> bool:
    """Whether two closed segments share a point.

    ``shared`` optionally declares a common endpoint of both segments;
    contact at exactly that point then does not count.  Collinear overlap
    longer than a point always counts.
    """
    p1, q1 = (np.asarray(e, dtype=float) for e in s1)
    p2, q2 = (np.asarray(e, dtype=float) for e in s2)
    scale = max(np.abs(np.stack([p1, q1, p2, q2])).max(), 1.0)
    tol = EPS * scale
    tol2 = tol * scale

    d1 = _cross(p2, q2, p1)
    d2 = _cross(p2, q2, q1)
    d3 = _cross(p1, q1, p2)
    d4 = _cross(p1, q1, q2)

    proper = ((d1 > tol2 and d2 < -tol2) or (d1 < -tol2 and d2 > tol2)) and \
             ((d3 > tol2 and d4 < -tol2) or (d3 < -tol2 and d4 > tol2))
    if proper:
        if shared is None:
            return True
        denom = d1 - d2
        x = p1 + (q1 - p1) * (d1 / denom)
        return not np.allclose(x, shared, atol=tol)

    touches: list[np.ndarray] = []
    if abs(d1) <= tol2 and _on_segment(p2, p1, q2, tol):
        touches.append(p1)
    if abs(d2) <= tol2 and _on_segment(p2, q1, q2, tol):
        touches.append(q1)
    if abs(d3) <= tol2 and _on_segment(p1, p2, q1, tol):
        touches.append(p2)
    if abs(d4) <= tol2 and _on_segment(p1, q2, q1, tol):
        touches.append(q2)
    if not touches:
        return False
    pts = np.array(touches)
    spread = np.linalg.norm(pts.max(axis=0) - pts.min(axis=0))
    if spread > tol:
        return True  # collinear overlap longer than a point
    if shared is None:
        return True
    return not np.allclose(pts[0], shared, atol=tol)


def proper_crossings(starts: np.ndarray, ends: np.ndarray,
                     exclude: set[tuple[int, int]] | None = None) -> list[tuple[int, int]]:
    """Index pairs of segments that cross at an interior point.

    Strict straddle test on both segments, so contact at shared endpoints
    never counts.  ``exclude`` drops given (i, j) pairs with i < j.
    """
    a = np.asarray(starts, dtype=float)
    b = np.asarray(ends, dtype=float)
    n = len(a)
    if n < 2:
        return []
    d = b - a
    # orientation of each endpoint of segment j relative to segment i
    ax, ay = a[:, 0][:, None], a[:, 1][:, None]
    dx, dy = d[:, 0][:, None], d[:, 1][:, None]
    o_start = dx * (a[:, 1][None, :] - ay) - dy * (a[:, 0][None, :] - ax)
    o_end = dx * (b[:, 1][None, :] - ay) - dy * (b[:, 0][None, :] - ax)
    straddle = (o_start * o_end) < 0.0
    cross = straddle & straddle.T
    iu, ju = np.triu_indices(n, k=1)
    hits = cross[iu, ju]
    pairs = [(int(i), int(j)) for i, j in zip(iu[hits], ju[hits])]
    if exclude:
        pairs = [p for p in pairs if p not in exclude]
    return pairs


def segment_intersection_point(p1, q1, p2, q2) -> np.ndarray | None:
    """Intersection point of two properly crossing segments, else None."""
    p1, q1, p2, q2 = (np.asarray(e, dtype=float) for e in (p1, q1, p2, q2))
    r = q1 - p1
    s = q2 - p2
    denom = r[0] * s[1] - r[1] * s[0]
    if abs(denom) < EPS * max(np.linalg.norm(r) * np.linalg.norm(s), EPS):
        return None
    t = ((p2[0] - p1[0]) * s[1] - (p2[1] - p1[1]) * s[0]) / denom
    u = ((p2[0] - p1[0]) * r[1] - (p2[1] - p1[1]) * r[0]) / denom
    if 0.0 < t < 1.0 and 0.0 < u < 1.0:
        return p1 + t * r
    return None


# ---------------------------------------------------------------------------
# Projections and alignment
# ---------------------------------------------------------------------------


def project_on_polyline(line: Polyline, points: np.ndarray):
    """Closest points on a polyline for an array of query points.

    Returns (distances, projections, fractions): per query the distance,
    the closest point, and its normalized arc-length position.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    chain = line.chain_vertices()
    a = chain[:-1]
    d = np.diff(chain, axis=0)
    seg_len2 = (d * d).sum(axis=1)
    rel = pts[:, None, :] - a[None, :, :]
    t = np.clip((rel * d[None, :, :]).sum(axis=2) / seg_len2[None, :], 0.0, 1.0)
    proj = a[None, :, :] + t[:, :, None] * d[None, :, :]
    dist2 = ((pts[:, None, :] - proj) ** 2).sum(axis=2)
    best = np.argmin(dist2, axis=1)
    rows = np.arange(len(pts))
    seg_len = np.sqrt(seg_len2)
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    frac = (cum[best] + t[rows, best] * seg_len[best]) / cum[-1]
    return np.sqrt(dist2[rows, best]), proj[rows, best], frac


def project_on_shape(shape: GuideShape, points: np.ndarray):
    """Closest points over all polylines of a shape.

    Returns (distances, projections, polyline indices, fractions).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = len(pts)
    best_dist = np.full(n, np.inf)
    best_proj = np.zeros((n, 2))
    best_poly = np.zeros(n, dtype=int)
    best_frac = np.zeros(n)
    for idx, line in enumerate(shape.polylines):
        dist, proj, frac = project_on_polyline(line, pts)
        better = dist < best_dist
        best_dist[better] = dist[better]
        best_proj[better] = proj[better]
        best_poly[better] = idx
        best_frac[better] = frac[better]
    return best_dist, best_proj, best_poly, best_frac


def bbox_align(shape: GuideShape, target: Polyline) -> tuple[float, np.ndarray]:
    """Similarity transform (uniform scale, translation; no rotation)
    mapping the shape's anchor bounding box onto the target's.

    Scale is the smaller of the two axis ratios so the transformed shape
    fits the target extent; box centers coincide.
    """
    src_min, src_max = shape.anchor.bbox()
    tgt_min, tgt_max = target.bbox()
    src_size = src_max - src_min
    tgt_size = tgt_max - tgt_min
    span = max(np.abs(np.concatenate([src_min, src_max, tgt_min, tgt_max])).max(), 1.0)
    if np.any(src_size <= EPS * span) or np.any(tgt_size <= EPS * span):
        raise ValueError("bounding boxes must have nonzero area")
    scale = float(np.min(tgt_size / src_size))
    offset = (tgt_min + tgt_max) / 2.0 - scale * (src_min + src_max) / 2.0
    return scale, offset
