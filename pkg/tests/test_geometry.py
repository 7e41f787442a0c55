import math

import numpy as np
import pytest

from metroshape import geometry as geo


def naive_coupling(cost, du, dv, free_start=False):
    """Reference DP with plain loops; same trapezoidal transition costs."""
    nu, nv = cost.shape
    D = np.full((nu, nv), np.inf)
    if free_start:
        D[0, :] = 0.0
    else:
        D[0, 0] = 0.0
        for j in range(1, nv):
            D[0, j] = D[0, j - 1] + (cost[0, j - 1] + cost[0, j]) * 0.5 * dv
    for i in range(1, nu):
        for j in range(nv):
            best = D[i - 1, j] + (cost[i - 1, j] + cost[i, j]) * 0.5 * du
            if j > 0:
                diag = D[i - 1, j - 1] + (cost[i - 1, j - 1] + cost[i, j]) * 0.5 * (du + dv)
                step = D[i, j - 1] + (cost[i, j - 1] + cost[i, j]) * 0.5 * dv
                best = min(best, diag, step)
            D[i, j] = best
    return D


def smooth_polyline(rng, n_verts=200, harmonics=2, amp=0.5):
    s = np.linspace(0, 1, n_verts - 1)
    ang = np.zeros_like(s)
    for k in range(1, harmonics + 1):
        ang = ang + rng.uniform(0.2, 1.0) * amp * np.sin(2 * np.pi * k * s + rng.uniform(0, 2 * np.pi))
    steps = np.stack([np.cos(ang), np.sin(ang)], axis=1) / (n_verts - 1)
    return geo.Polyline(np.vstack([[0, 0], np.cumsum(steps, axis=0)]))


def random_polyline(rng, n=8, span=4.0):
    while True:
        pts = rng.uniform(-span, span, (n, 2))
        if np.all(np.hypot(*np.diff(pts, axis=0).T) > 1e-6):
            return geo.Polyline(pts)


# ---------------------------------------------------------------------------
# Polyline and resampling
# ---------------------------------------------------------------------------


def test_polyline_rejects_degenerate():
    with pytest.raises(ValueError):
        geo.Polyline([[0, 0]])
    with pytest.raises(ValueError):
        geo.Polyline([[0, 0], [0, 0]])
    with pytest.raises(ValueError):
        geo.Polyline([[0, 0], [1, 0], [1, 0], [2, 0]])


def test_resample_unit_segment():
    line = geo.Polyline([[0, 0], [1, 0]])
    out = geo.resample(line, 0.5)
    assert np.allclose(out.vertices, [[0, 0], [0.5, 0], [1, 0]])


def test_resample_noop_when_fine_enough():
    line = geo.Polyline([[0, 0], [0.2, 0], [0.4, 0.1]])
    out = geo.resample(line, 1.0)
    assert np.array_equal(out.vertices, line.vertices)


def test_resample_square_sides_split_equally():
    square = geo.Polyline([[0, 0], [1, 0], [1, 1], [0, 1]], closed=True)
    out = geo.resample(square, 0.3)
    # ceil(1 / 0.3) = 4 parts per side, 16 segments in total
    assert len(out.vertices) == 16
    assert out.closed
    lengths = out.segment_lengths()
    assert len(lengths) == 16
    assert np.allclose(lengths, 0.25)
    # every input vertex survives
    for v in square.vertices:
        assert np.min(np.hypot(*(out.vertices - v).T)) < 1e-12


def test_resample_rejects_bad_max_seg():
    with pytest.raises(ValueError):
        geo.resample(geo.Polyline([[0, 0], [1, 0]]), 0.0)


# ---------------------------------------------------------------------------
# Integral Frechet distance
# ---------------------------------------------------------------------------


def test_identity_distance_zero():
    line = geo.Polyline([[0, 0], [1, 0], [2, 1], [2, 3]])
    r = geo.integral_frechet(line, line, 32)
    assert r.distance == 0.0
    # diagonal correspondence
    assert np.array_equal(r.correspondence[:, 0], r.correspondence[:, 1])


def test_similarity_invariance_exact(rng):
    for _ in range(10):
        a = random_polyline(rng)
        scale = rng.uniform(0.5, 2.0)
        offset = rng.uniform(-50, 50, 2)
        b = a.transformed(scale, offset)
        base = geo.integral_frechet(a, a, 48).distance
        moved = geo.integral_frechet(a, b, 48).distance
        assert abs(moved - base) <= 1e-9
        c = random_polyline(rng)
        d1 = geo.integral_frechet(a, c, 48).distance
        d2 = geo.integral_frechet(b, c, 48).distance
        assert abs(d1 - d2) <= 1e-9


def test_right_angle_value_matches_fine_oracle():
    a = geo.Polyline([[0, 0], [1, 0]])
    b = geo.Polyline([[0, 0], [1, 0], [1, 1]])
    # oracle: naive DP at 10x sampling
    n = 640
    pa = geo.direction_profile(a, n).angles
    pb = geo.direction_profile(b, n).angles
    cost = geo.wrap_angle_diff(pa[:, None], pb[None, :])
    oracle = naive_coupling(cost, 1 / (n - 1), 1 / (n - 1))[-1, -1]
    assert abs(oracle - math.pi / 4) < 1e-6
    got = geo.integral_frechet(a, b, 64).distance
    assert abs(got - math.pi / 4) < 1e-6


def test_fast_dp_matches_naive(rng):
    for _ in range(8):
        a, b = random_polyline(rng), random_polyline(rng)
        n = 24
        pa = geo.direction_profile(a, n).angles
        pb = geo.direction_profile(b, n).angles
        cost = geo.wrap_angle_diff(pa[:, None], pb[None, :])
        du = dv = 1 / (n - 1)
        ref_full = naive_coupling(cost, du, dv)[-1, -1]
        ref_part = naive_coupling(cost, du, dv, free_start=True)[-1].min()
        assert abs(geo.integral_frechet(a, b, n).distance - ref_full) < 1e-12
        assert abs(geo.partial_frechet(a, b, n).distance - ref_part) < 1e-12


def test_partial_not_above_full(rng):
    for _ in range(15):
        w, p = random_polyline(rng, 6), random_polyline(rng, 9)
        full = geo.integral_frechet(w, p, 32).distance
        part = geo.partial_frechet(w, p, 32).distance
        assert part <= full + 1e-12


def test_partial_prefix_subcurve():
    # gently curving arc: short constant-direction runs keep the matched
    # window tight around the true prefix
    t = np.linspace(0, math.pi / 2, 25)
    p = geo.Polyline(np.stack([np.sin(t), 1 - np.cos(t)], axis=1))
    w = geo.Polyline(p.vertices[:13])  # first half of the arc
    r = geo.partial_frechet(w, p, 64)
    assert r.distance < 1e-9
    assert r.subcurve[0] < 0.06
    assert abs(r.subcurve[1] - 0.5) < 0.06


def test_partial_full_window_when_curves_match():
    p = geo.Polyline([[0, 0], [1, 0], [1, 1], [0, 1.5]])
    r = geo.partial_frechet(p, p, 48)
    assert r.distance == 0.0
    assert r.subcurve == (0.0, 1.0)


def test_partial_equals_window_enumeration(rng):
    """Free-endpoint DP equals exhaustive minimization over sampled windows."""
    n = 16
    for _ in range(6):
        w, p = random_polyline(rng, 5), random_polyline(rng, 7)
        pw = geo.direction_profile(w, n).angles
        pp = geo.direction_profile(p, n).angles
        cost = geo.wrap_angle_diff(pw[:, None], pp[None, :])
        du = dv = 1 / (n - 1)
        best = np.inf
        for s in range(n):
            window = naive_coupling(cost[:, s:], du, dv)
            best = min(best, window[-1].min())
        got = geo.partial_frechet(w, p, n).distance
        assert abs(got - best) < 1e-12


def test_convergence_under_refinement(rng):
    for _ in range(10):
        a, b = smooth_polyline(rng), smooth_polyline(rng)
        d1 = geo.coupling_distances(
            geo.direction_profile(a, 256).angles, geo.direction_profile(b, 256).angles
        )[0]
        d2 = geo.coupling_distances(
            geo.direction_profile(a, 1024).angles, geo.direction_profile(b, 1024).angles
        )[0]
        assert abs(d1 - d2) / max(d2, 1e-12) < 0.02


# ---------------------------------------------------------------------------
# Segment predicates
# ---------------------------------------------------------------------------


def test_segments_intersect_examples():
    assert geo.segments_intersect(((0, 0), (1, 1)), ((0, 1), (1, 0)))
    assert not geo.segments_intersect(((0, 0), (1, 0)), ((0, 1), (1, 1)))
    assert not geo.segments_intersect(
        ((0, 0), (1, 0)), ((1, 0), (2, 0)), shared=(1, 0)
    )
    # collinear overlap beyond the shared point still counts
    assert geo.segments_intersect(
        ((0, 0), (1, 0)), ((1, 0), (0.5, 0)), shared=(1, 0)
    )


def test_segments_intersect_agrees_with_orientation_brute_force(rng):
    def brute(s1, s2):
        # dense sampling of one segment against the other's point set
        a, b = np.array(s1[0]), np.array(s1[1])
        c, d = np.array(s2[0]), np.array(s2[1])

        def orient(p, q, r):
            v = (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
            if abs(v) < 1e-12:
                return 0
            return 1 if v > 0 else -1

        def on(p, q, r):
            return (min(p[0], r[0]) - 1e-12 <= q[0] <= max(p[0], r[0]) + 1e-12
                    and min(p[1], r[1]) - 1e-12 <= q[1] <= max(p[1], r[1]) + 1e-12)

        o1, o2 = orient(a, b, c), orient(a, b, d)
        o3, o4 = orient(c, d, a), orient(c, d, b)
        if o1 != o2 and o3 != o4:
            return True
        for (p, q, r, o) in ((a, c, b, o1), (a, d, b, o2), (c, a, d, o3), (c, b, d, o4)):
            if o == 0 and on(p, q, r):
                return True
        return False

    agree = 0
    for _ in range(10000):
        s1 = tuple(map(tuple, rng.integers(-4, 5, (2, 2)).astype(float)))
        s2 = tuple(map(tuple, rng.integers(-4, 5, (2, 2)).astype(float)))
        if s1[0] == s1[1] or s2[0] == s2[1]:
            continue
        assert geo.segments_intersect(s1, s2) == brute(s1, s2)
        agree += 1
    assert agree > 9000


def test_proper_crossings_excludes_shared_endpoints():
    starts = np.array([[0, 0], [0, 0], [0, 1]])
    ends = np.array([[2, 0], [2, 2], [2, -1]])
    pairs = geo.proper_crossings(starts, ends)
    assert (0, 2) in pairs
    assert (0, 1) not in pairs  # shared endpoint, no straddle


# ---------------------------------------------------------------------------
# Alignment and projections
# ---------------------------------------------------------------------------


def test_bbox_align_identity():
    shape = geo.GuideShape((geo.Polyline([[0, 0], [1, 0], [1, 1]]),))
    target = geo.Polyline([[0, 0], [1, 1]])
    s, t = geo.bbox_align(shape, target)
    assert s == pytest.approx(1.0)
    assert np.allclose(t, [0, 0])


def test_bbox_align_scale_and_center():
    shape = geo.GuideShape((geo.Polyline([[0, 0], [1, 0], [1, 1], [0, 1]], closed=True),))
    target = geo.Polyline([[10, 10], [12, 10], [12, 12], [10, 12]], closed=True)
    s, t = geo.bbox_align(shape, target)
    assert s == pytest.approx(2.0)
    assert np.allclose(s * np.array([0.5, 0.5]) + t, [11, 11])


def test_bbox_align_min_ratio():
    shape = geo.GuideShape((geo.Polyline([[0, 0], [1, 0], [1, 2], [0, 2]], closed=True),))
    target = geo.Polyline([[0, 0], [4, 0], [4, 4], [0, 4]], closed=True)
    s, _ = geo.bbox_align(shape, target)
    assert s == pytest.approx(2.0)  # min(4/1, 4/2)


def test_bbox_align_rejects_degenerate():
    shape = geo.GuideShape((geo.Polyline([[0, 0], [1, 0]]),))
    target = geo.Polyline([[0, 0], [1, 1]])
    with pytest.raises(ValueError):
        geo.bbox_align(shape, target)


def test_anchor_is_top_left_polyline():
    left = geo.Polyline([[0, 5], [1, 5]])
    right = geo.Polyline([[3, 0], [4, 0]])
    shape = geo.GuideShape((right, left))
    assert shape.anchor_index == 1


def test_project_on_polyline():
    line = geo.Polyline([[0, 0], [2, 0]])
    dist, proj, frac = geo.project_on_polyline(line, np.array([[1.0, 1.0]]))
    assert dist[0] == pytest.approx(1.0)
    assert np.allclose(proj[0], [1, 0])
    assert frac[0] == pytest.approx(0.5)
