import numpy as np
import pytest

from metroshape.model import (
    Connection,
    ConnectionKind,
    Line,
    Station,
    StationKind,
    TransitNetwork,
    insert_dummy_edges,
    planarize,
    split_high_degree,
    validate,
)


def simple_line_net():
    return TransitNetwork.build(
        [Station("a", (0.0, 0.0)), Station("b", (1.0, 0.0)), Station("c", (2.0, 0.0))],
        [
            Connection("e1", "a", "b", frozenset({"L"})),
            Connection("e2", "b", "c", frozenset({"L"})),
        ],
        [Line("L", "#222222", ("a", "b", "c"))],
    )


def star_net(n, radius=1.0, center_id="hub"):
    """One hub with n leaves, one line per leaf."""
    stations = [Station(center_id, (0.0, 0.0))]
    connections = []
    lines = []
    for k in range(n):
        ang = 2 * np.pi * k / n
        sid = f"leaf{k:02d}"
        stations.append(Station(sid, (radius * np.cos(ang), radius * np.sin(ang))))
        connections.append(Connection(f"c{k:02d}", center_id, sid, frozenset({f"l{k}"})))
        lines.append(Line(f"l{k}", "#123456", (center_id, sid)))
    return TransitNetwork.build(stations, connections, lines)


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------


def test_validate_well_formed():
    assert validate(simple_line_net()) == []


def test_validate_unknown_station():
    net = TransitNetwork.build(
        [Station("a", (0.0, 0.0)), Station("b", (1.0, 0.0))],
        [Connection("e1", "a", "ghost", frozenset({"L"}))],
        [Line("L", "#222222", ("a", "b"))],
    )
    problems = validate(net)
    assert any("ghost" in p for p in problems)


def test_validate_line_gap():
    net = TransitNetwork.build(
        [Station("a", (0.0, 0.0)), Station("b", (1.0, 0.0)), Station("c", (2.0, 0.0))],
        [Connection("e1", "a", "b", frozenset({"L"}))],
        [Line("L", "#222222", ("a", "b", "c"))],
    )
    problems = validate(net)
    assert any("no connection between" in p for p in problems)


def test_build_rejects_duplicates():
    with pytest.raises(ValueError):
        TransitNetwork.build(
            [Station("a", (0.0, 0.0)), Station("a", (1.0, 0.0))], [], []
        )


# ---------------------------------------------------------------------------
# planarize
# ---------------------------------------------------------------------------


def crossing_count(net):
    from metroshape.geometry import proper_crossings

    ids = sorted(net.connections)
    starts = np.array([net.stations[net.connections[c].a].pos for c in ids])
    ends = np.array([net.stations[net.connections[c].b].pos for c in ids])
    share = {
        (i, j)
        for i in range(len(ids))
        for j in range(i + 1, len(ids))
        if {net.connections[ids[i]].a, net.connections[ids[i]].b}
        & {net.connections[ids[j]].a, net.connections[ids[j]].b}
    }
    return len(proper_crossings(starts, ends, exclude=share))


def crossing_pair_net():
    return TransitNetwork.build(
        [
            Station("a", (0.0, 0.0)),
            Station("b", (2.0, 2.0)),
            Station("c", (0.0, 2.0)),
            Station("d", (2.0, 0.0)),
        ],
        [
            Connection("e1", "a", "b", frozenset({"L1"})),
            Connection("e2", "c", "d", frozenset({"L2"})),
        ],
        [Line("L1", "#ff0000", ("a", "b")), Line("L2", "#0000ff", ("c", "d"))],
    )


def test_planarize_planar_input_unchanged():
    net = simple_line_net()
    out = planarize(net)
    assert out == net


def test_planarize_single_crossing():
    out = planarize(crossing_pair_net())
    assert len(out.stations) == 5
    assert len(out.connections) == 4
    assert crossing_count(out) == 0
    dummy = [s for s in out.stations.values() if s.kind is StationKind.CROSSING]
    assert len(dummy) == 1
    assert np.allclose(dummy[0].pos, (1.0, 1.0))
    assert out.degree(dummy[0].id) == 4
    # line paths route through the new station
    for line in out.lines.values():
        assert dummy[0].id in line.stations
    assert validate(out) == []


def test_planarize_k4_convex_drawing():
    # K4 with vertices in convex position: the two diagonals cross once.
    # 4 + 1 stations and 4 + 4 connections after splitting both diagonals.
    sts = [
        Station("p", (0.0, 0.0)),
        Station("q", (1.0, 0.0)),
        Station("r", (1.0, 1.0)),
        Station("s", (0.0, 1.0)),
    ]
    pairs = [("p", "q"), ("q", "r"), ("r", "s"), ("s", "p"), ("p", "r"), ("q", "s")]
    cns = [
        Connection(f"k{i}", a, b, frozenset({f"l{i}"})) for i, (a, b) in enumerate(pairs)
    ]
    lns = [Line(f"l{i}", "#444444", (a, b)) for i, (a, b) in enumerate(pairs)]
    out = planarize(TransitNetwork.build(sts, cns, lns))
    assert len(out.stations) == 5
    assert len(out.connections) == 8
    assert crossing_count(out) == 0
    assert validate(out) == []


def test_planarize_idempotent():
    once = planarize(crossing_pair_net())
    twice = planarize(once)
    assert once == twice


def test_planarize_rejects_overlap():
    net = TransitNetwork.build(
        [
            Station("a", (0.0, 0.0)),
            Station("b", (2.0, 0.0)),
            Station("c", (1.0, 0.0)),
            Station("d", (3.0, 0.0)),
        ],
        [
            Connection("e1", "a", "b", frozenset({"L1"})),
            Connection("e2", "c", "d", frozenset({"L2"})),
        ],
        [Line("L1", "#ff0000", ("a", "b")), Line("L2", "#0000ff", ("c", "d"))],
    )
    with pytest.raises(ValueError, match="overlap"):
        planarize(net)


# ---------------------------------------------------------------------------
# split_high_degree
# ---------------------------------------------------------------------------


def line_is_connected(net, line):
    for a, b in zip(line.stations[:-1], line.stations[1:]):
        if net.connection_between(a, b) is None:
            return False
    return True


def test_split_leaves_low_degree_alone():
    net = star_net(6)
    out = split_high_degree(net)
    assert out == net


def test_split_degree_nine():
    out = split_high_degree(star_net(9))
    fragments = [s for s in out.stations.values() if s.merged_id == "hub"]
    assert len(fragments) == 2
    assert all(out.degree(f.id) <= 8 for f in fragments)
    aux = [c for c in out.connections.values() if c.kind is ConnectionKind.AUXILIARY]
    assert len(aux) == 1
    for line in out.lines.values():
        assert line_is_connected(out, line)


def test_split_degree_sixteen():
    out = split_high_degree(star_net(16))
    fragments = [s for s in out.stations.values() if s.merged_id == "hub"]
    assert len(fragments) >= 3
    assert max(out.degree(s) for s in out.stations) <= 8


def test_split_preserves_through_lines():
    # one line passing straight through a high-degree hub
    net = star_net(10)
    lines = dict(net.lines)
    lines["through"] = Line("through", "#000000", ("leaf00", "hub", "leaf05"))
    conns = {}
    for cid, c in net.connections.items():
        extra = {"through"} if c.b in ("leaf00", "leaf05") else set()
        conns[cid] = Connection(c.id, c.a, c.b, c.lines | frozenset(extra), c.kind)
    net = TransitNetwork(dict(net.stations), conns, lines)
    out = split_high_degree(net)
    assert max(out.degree(s) for s in out.stations) <= 8
    for line in out.lines.values():
        assert line_is_connected(out, line)
    assert validate(out) == []


# ---------------------------------------------------------------------------
# insert_dummy_edges
# ---------------------------------------------------------------------------


def test_dummy_edges_tiny_threshold():
    net = simple_line_net()
    out = insert_dummy_edges(net, 1e-9)
    assert out == net


def test_dummy_edge_between_close_pair():
    net = TransitNetwork.build(
        [Station("a", (0.0, 0.0)), Station("b", (1.0, 0.0)), Station("c", (5.0, 0.0))],
        [Connection("e1", "b", "c", frozenset({"L"}))],
        [Line("L", "#222222", ("b", "c"))],
    )
    out = insert_dummy_edges(net, 2.0)
    added = [c for c in out.connections.values() if c.kind is ConnectionKind.SHORTCUT]
    assert len(added) == 1
    assert {added[0].a, added[0].b} == {"a", "b"}
    assert added[0].lines == frozenset()


def test_dummy_edges_circle_enumeration():
    # five stations on the unit circle; chords shorter than 1.5 are the
    # adjacent pairs (chord 2 sin(pi/5) ~ 1.176); skip pairs reach ~1.902
    pts = [
        (np.cos(2 * np.pi * k / 5), np.sin(2 * np.pi * k / 5)) for k in range(5)
    ]
    stations = [Station(f"s{k}", pts[k]) for k in range(5)]
    net = TransitNetwork.build(stations, [], [])
    out = insert_dummy_edges(net, 1.5)
    expected_pairs = {
        frozenset((f"s{k}", f"s{(k + 1) % 5}")) for k in range(5)
    }
    got = {frozenset((c.a, c.b)) for c in out.connections.values()}
    assert got == expected_pairs


def test_dummy_edges_skip_existing_adjacency():
    net = simple_line_net()
    out = insert_dummy_edges(net, 1.5)
    pairs = [frozenset((c.a, c.b)) for c in out.connections.values()]
    assert len(pairs) == len(set(pairs))
    shortcuts = [
        c for c in out.connections.values() if c.kind is ConnectionKind.SHORTCUT
    ]
    assert all({c.a, c.b} != {"a", "b"} and {c.a, c.b} != {"b", "c"} for c in shortcuts)
