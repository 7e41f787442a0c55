import math

import numpy as np
import pytest

from metroshape.geometry import GuideShape, Polyline, coupling_distances, direction_profile
from metroshape.instances import grid_network
from metroshape.matching import (
    MatchError,
    grow_path,
    manual_route,
    match_route,
    place_shape,
)
from metroshape.model import Connection, ConnectionKind, Line, Station, TransitNetwork


def straight_net():
    return TransitNetwork.build(
        [Station("a", (0.0, 0.0)), Station("b", (1.0, 0.0)), Station("c", (2.0, 0.0))],
        [
            Connection("e1", "a", "b", frozenset({"L"})),
            Connection("e2", "b", "c", frozenset({"L"})),
        ],
        [Line("L", "#222222", ("a", "b", "c"))],
    )


def square_shape(side=2.0):
    return GuideShape(
        (Polyline([[0, 0], [side, 0], [side, side], [0, side]], closed=True),)
    )


def route_polyline(net, route):
    return Polyline(np.array([net.stations[s].pos for s in route.stations]))


# ---------------------------------------------------------------------------
# grow_path / match_route
# ---------------------------------------------------------------------------


def test_straight_line_matches_fully():
    net = straight_net()
    shape = GuideShape((Polyline([[0, 0], [7, 0]]),))
    route = match_route(net, shape)
    assert route.stations == ("a", "b", "c")
    assert route.score < 1e-9


def test_square_on_grid_is_closed_cycle_with_zero_score():
    net = grid_network(4, 4)
    route = match_route(net, square_shape())
    assert route.is_cycle
    assert route.score < 1e-9
    # four sides in the shape's traversal order: E, N, W, S
    pts = np.array([net.stations[s].pos for s in route.stations])
    directions = np.diff(pts, axis=0)
    angles = np.arctan2(directions[:, 1], directions[:, 0])
    quarters = np.round(angles / (math.pi / 2)).astype(int) % 4
    assert list(dict.fromkeys(quarters)) == [0, 1, 2, 3]


def test_match_route_scale_translation_invariant(rng):
    net = grid_network(4, 4)
    base = match_route(net, square_shape())
    for _ in range(10):
        scale = rng.uniform(0.5, 2.0)
        offset = rng.uniform(-20, 20, 2)
        moved = match_route(net, square_shape().transformed(scale, offset))
        assert moved.stations == base.stations


def test_growth_score_never_increases():
    net = grid_network(5, 5)
    shape = square_shape()
    p_angles = direction_profile(shape.anchor, 64).angles
    route = grow_path(net, shape, "s0_0")
    # replay the accepted prefixes: full distance is non-increasing
    prev = math.inf
    for k in range(2, len(route.stations) + 1):
        pts = np.array([net.stations[s].pos for s in route.stations[:k]])
        keep = [0] + [i for i in range(1, len(pts)) if np.hypot(*(pts[i] - pts[i - 1])) > 0]
        d = coupling_distances(
            direction_profile(Polyline(pts[keep]), 64).angles, p_angles
        )[0]
        assert d <= prev + 1e-6
        prev = d


def test_growth_visits_no_station_twice_except_cycle_close():
    net = grid_network(5, 5)
    for start in ("s0_0", "s2_2", "s4_4"):
        route = grow_path(net, square_shape(), start)
        interior = route.stations[:-1] if route.is_cycle else route.stations
        assert len(interior) == len(set(interior))
        assert len(route.stations) <= len(net.stations) + 1


def test_dummy_penalty_monotonicity():
    # a gap in the middle of a straight corridor forces a shortcut
    stations = [Station(f"s{k}", (float(k), 0.0)) for k in range(6)]
    conns = [
        Connection(f"e{k}", f"s{k}", f"s{k + 1}", frozenset({"L"}))
        for k in range(5)
        if k != 2
    ]
    lines = [Line("L", "#000000", ("s0", "s1", "s2")), Line("M", "#000000", ("s3", "s4", "s5"))]
    conns = [
        Connection(c.id, c.a, c.b, frozenset({"L" if int(c.a[1]) < 3 else "M"}))
        for c in conns
    ]
    net = TransitNetwork.build(stations, conns, lines)
    from metroshape.model import insert_dummy_edges

    augmented = insert_dummy_edges(net, 1.2)
    shape = GuideShape((Polyline([[0, 0], [10, 0]]),))
    counts = []
    for penalty in (0.0, 2.0, 5.0, 20.0):
        route = match_route(augmented, shape, dummy_penalty=penalty)
        counts.append(route.dummy_count)
    assert all(b <= a for a, b in zip(counts, counts[1:]))


def test_match_route_error_when_nothing_matches():
    # two isolated stations, no connections at all
    net = TransitNetwork.build(
        [Station("a", (0.0, 0.0)), Station("b", (5.0, 5.0))], [], []
    )
    with pytest.raises(MatchError):
        match_route(net, square_shape())


def test_start_restriction():
    net = grid_network(4, 4)
    route = match_route(net, square_shape(), starts=["s0_0", "s1_0"])
    assert route.score < 1e-9


# ---------------------------------------------------------------------------
# place_shape
# ---------------------------------------------------------------------------


def test_place_shape_identity_when_boxes_match():
    net = grid_network(4, 4)
    route = match_route(net, square_shape())
    w_poly = route_polyline(net, route)
    lo, hi = w_poly.bbox()
    shape = GuideShape(
        (Polyline([[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]],
                  closed=True),)
    )
    placed = place_shape(shape, route, net)
    assert np.allclose(placed.polylines[0].vertices, shape.polylines[0].vertices)


def test_place_shape_scales_onto_route_bbox():
    net = grid_network(4, 4)
    route = match_route(net, square_shape())
    placed = place_shape(square_shape(side=1.0), route, net)
    w_lo, w_hi = route_polyline(net, route).bbox()
    p_lo, p_hi = placed.polylines[0].bbox()
    assert np.allclose(p_lo, w_lo)
    assert np.allclose(p_hi, w_hi)


def test_place_shape_multi_polyline_rigid():
    outline = Polyline([[0, 0], [4, 0], [4, 2], [0, 2]], closed=True)
    iris = Polyline([[1.5, 0.5], [2.5, 0.5], [2.5, 1.5], [1.5, 1.5]], closed=True)
    eye = GuideShape((outline, iris))
    net = grid_network(4, 4)
    route = match_route(net, eye)
    placed = place_shape(eye, route, net)
    # relative offset between the polylines is preserved up to the shared scale
    rel_before = iris.vertices[0] - outline.vertices[0]
    rel_after = placed.polylines[1].vertices[0] - placed.polylines[0].vertices[0]
    scale = (placed.polylines[0].vertices[1][0] - placed.polylines[0].vertices[0][0]) / 4.0
    assert np.allclose(rel_after, rel_before * scale)


# ---------------------------------------------------------------------------
# manual_route
# ---------------------------------------------------------------------------


def test_manual_route_valid():
    net = straight_net()
    route = manual_route(net, ["a", "b", "c"])
    assert route.edges == ("e1", "e2")


def test_manual_route_gap_names_pair():
    net = straight_net()
    with pytest.raises(ValueError, match="'a' and 'c'"):
        manual_route(net, ["a", "c"])


def test_manual_route_reports_score():
    net = straight_net()
    shape = GuideShape((Polyline([[0, 0], [3, 0]]),))
    route = manual_route(net, ["a", "b", "c"], shape)
    assert route.score == pytest.approx(0.0, abs=1e-9)
