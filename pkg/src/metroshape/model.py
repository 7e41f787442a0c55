"""Transit network data model and normalization passes.

Stations, connections and service lines, plus the passes that prepare a
network for layout: validation, planarization (crossing connections get
a dummy station at the intersection), splitting of stations with degree
above eight, and dummy shortcut edges used only during route matching.

Network values are treated as immutable; every pass returns a new
network.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .geometry import proper_crossings, segment_intersection_point

MAX_DEGREE = 8
# Largest fan assigned to one fragment when splitting a high-degree
# station; leaves room for up to two chaining connections.
_FAN_SIZE = 6


class StationKind(str, Enum):
    REAL = "real"
    CROSSING = "dummy_planarization"
    SHORTCUT = "dummy_shortcut"


class ConnectionKind(str, Enum):
    REAL = "real"
    SHORTCUT = "dummy_shortcut"
    AUXILIARY = "auxiliary"  # zero-length link between split fragments


@dataclass(frozen=True)
class Station:
    id: str
    pos: tuple[float, float]
    name: str = ""
    kind: StationKind = StationKind.REAL
    merged_id: str | None = None  # original station when this is a split fragment

    def xy(self) -> np.ndarray:
        return np.array(self.pos, dtype=float)


@dataclass(frozen=True)
class Connection:
    id: str
    a: str
    b: str
    lines: frozenset[str] = frozenset()
    kind: ConnectionKind = ConnectionKind.REAL

    def other(self, sid: str) -> str:
        return self.b if sid == self.a else self.a

    def endpoints(self) -> tuple[str, str]:
        return self.a, self.b


@dataclass(frozen=True)
class Line:
    id: str
    color: str
    stations: tuple[str, ...]


@dataclass(eq=True)
class TransitNetwork:
    stations: dict[str, Station]
    connections: dict[str, Connection]
    lines: dict[str, Line]

    @classmethod
    def build(cls, stations, connections, lines) -> "TransitNetwork":
        st = {}
        for s in stations:
            if s.id in st:
                raise ValueError(f"duplicate station id {s.id!r}")
            st[s.id] = s
        cn = {}
        for c in connections:
            if c.id in cn:
                raise ValueError(f"duplicate connection id {c.id!r}")
            cn[c.id] = c
        ln = {}
        for l in lines:
            if l.id in ln:
                raise ValueError(f"duplicate line id {l.id!r}")
            ln[l.id] = l
        return cls(st, cn, ln)

    # -- derived views -----------------------------------------------------

    def adjacency(self) -> dict[str, list[tuple[str, str]]]:
        """Station id -> sorted list of (connection id, other station id)."""
        adj: dict[str, list[tuple[str, str]]] = {sid: [] for sid in self.stations}
        for c in self.connections.values():
            adj[c.a].append((c.id, c.b))
            adj[c.b].append((c.id, c.a))
        for entries in adj.values():
            entries.sort()
        return adj

    def degree(self, sid: str) -> int:
        return sum(1 for c in self.connections.values() if sid in (c.a, c.b))

    def connection_between(self, a: str, b: str) -> Connection | None:
        for c in self.connections.values():
            if {c.a, c.b} == {a, b}:
                return c
        return None

    def station_order(self) -> tuple[str, ...]:
        return tuple(self.stations)

    def coords(self, order: tuple[str, ...] | None = None) -> np.ndarray:
        order = order or self.station_order()
        return np.array([self.stations[s].pos for s in order], dtype=float)

    def average_connection_length(self) -> float:
        lengths = [
            float(np.hypot(*(self.stations[c.a].xy() - self.stations[c.b].xy())))
            for c in self.connections.values()
            if c.kind is ConnectionKind.REAL
        ]
        if not lengths:
            raise ValueError("network has no real connections")
        return float(np.mean(lengths))

    def with_changes(self, stations=None, connections=None, lines=None) -> "TransitNetwork":
        return TransitNetwork(
            dict(stations if stations is not None else self.stations),
            dict(connections if connections is not None else self.connections),
            dict(lines if lines is not None else self.lines),
        )


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def validate(net: TransitNetwork) -> list[str]:
    """Diagnostic pass; returns a list of violations (empty = well formed)."""
    problems: list[str] = []
    for c in net.connections.values():
        for end in (c.a, c.b):
            if end not in net.stations:
                problems.append(f"connection {c.id}: unknown station {end!r}")
        if c.a == c.b:
            problems.append(f"connection {c.id}: endpoints must differ")
        if c.kind is ConnectionKind.REAL and not c.lines:
            problems.append(f"connection {c.id}: real connection carries no line")
        if c.kind is ConnectionKind.SHORTCUT and c.lines:
            problems.append(f"connection {c.id}: dummy shortcut must carry no line")
        for lid in sorted(c.lines):
            if lid not in net.lines:
                problems.append(f"connection {c.id}: unknown line {lid!r}")
    for line in net.lines.values():
        for sid in line.stations:
            if sid not in net.stations:
                problems.append(f"line {line.id}: unknown station {sid!r}")
        for a, b in zip(line.stations[:-1], line.stations[1:]):
            if a not in net.stations or b not in net.stations:
                continue
            conn = net.connection_between(a, b)
            if conn is None:
                problems.append(f"line {line.id}: no connection between {a!r} and {b!r}")
            elif line.id not in conn.lines and conn.kind is ConnectionKind.REAL:
                problems.append(
                    f"line {line.id}: connection {conn.id} does not carry it"
                )
    return problems


# ---------------------------------------------------------------------------
# Planarization
# ---------------------------------------------------------------------------


def _segment_arrays(net: TransitNetwork, conn_ids: list[str]):
    starts = np.array([net.stations[net.connections[c].a].pos for c in conn_ids])
    ends = np.array([net.stations[net.connections[c].b].pos for c in conn_ids])
    return starts, ends


def _insert_into_lines(lines: dict[str, Line], a: str, b: str, new_id: str,
                       affected: frozenset[str]) -> dict[str, Line]:
    """Insert ``new_id`` between every consecutive (a, b) pair in ``affected`` lines."""
    out = dict(lines)
    for lid in sorted(affected):
        line = out[lid]
        seq: list[str] = []
        stations = line.stations
        for idx, sid in enumerate(stations):
            seq.append(sid)
            if idx + 1 < len(stations):
                nxt = stations[idx + 1]
                if {sid, nxt} == {a, b}:
                    seq.append(new_id)
        out[lid] = replace(line, stations=tuple(seq))
    return out


def planarize(net: TransitNetwork) -> TransitNetwork:
    """Insert a degree-4 dummy station wherever two connections cross.

    Repeats until the drawing is crossing-free.  Coincident overlapping
    segments are rejected: they have no unambiguous embedding.
    """
    stations = dict(net.stations)
    connections = dict(net.connections)
    lines = dict(net.lines)
    counter = 0

    def fresh_station_id() -> str:
        nonlocal counter
        while True:
            sid = f"x{counter}"
            counter += 1
            if sid not in stations:
                return sid

    while True:
        conn_ids = sorted(connections)
        starts, ends = _segment_arrays(
            TransitNetwork(stations, connections, lines), conn_ids
        )
        shared = {
            (i, j)
            for i in range(len(conn_ids))
            for j in range(i + 1, len(conn_ids))
            if {connections[conn_ids[i]].a, connections[conn_ids[i]].b}
            & {connections[conn_ids[j]].a, connections[conn_ids[j]].b}
        }
        _reject_overlaps(connections, conn_ids, starts, ends)
        pairs = proper_crossings(starts, ends, exclude=shared)
        if not pairs:
            break
        i, j = pairs[0]
        c1 = connections[conn_ids[i]]
        c2 = connections[conn_ids[j]]
        point = segment_intersection_point(starts[i], ends[i], starts[j], ends[j])
        if point is None:
            raise ValueError(
                f"connections {c1.id} and {c2.id} overlap; embedding is ambiguous"
            )
        for conn in (c1, c2):
            for end in conn.endpoints():
                if np.allclose(stations[end].pos, point, atol=1e-9):
                    raise ValueError(
                        f"connection {conn.id} passes through station {end!r}"
                    )
        new_id = fresh_station_id()
        stations[new_id] = Station(
            new_id, (float(point[0]), float(point[1])), kind=StationKind.CROSSING
        )
        for conn in (c1, c2):
            del connections[conn.id]
            for suffix, (pa, pb) in (("(a)", (conn.a, new_id)), ("(b)", (new_id, conn.b))):
                cid = conn.id + suffix
                connections[cid] = replace(conn, id=cid, a=pa, b=pb)
            lines = _insert_into_lines(lines, conn.a, conn.b, new_id, conn.lines)

    return TransitNetwork(stations, connections, lines)


def _reject_overlaps(connections, conn_ids, starts, ends) -> None:
    """Raise when two distinct connections overlap along a collinear stretch."""
    n = len(conn_ids)
    d = ends - starts
    for i in range(n):
        for j in range(i + 1, n):
            ci, cj = connections[conn_ids[i]], connections[conn_ids[j]]
            cross_i = d[i, 0] * d[j, 1] - d[i, 1] * d[j, 0]
            scale = max(np.abs(np.concatenate([starts[i], ends[i], starts[j], ends[j]])).max(), 1.0)
            if abs(cross_i) > 1e-9 * scale * scale:
                continue
            # Parallel; overlap only possible when collinear.
            off = starts[j] - starts[i]
            if abs(off[0] * d[i, 1] - off[1] * d[i, 0]) > 1e-9 * scale * scale:
                continue
            t = d[i] / (d[i] @ d[i])
            tj0 = float((starts[j] - starts[i]) @ t)
            tj1 = float((ends[j] - starts[i]) @ t)
            overlap = min(1.0, max(tj0, tj1)) - max(0.0, min(tj0, tj1))
            if overlap > 1e-9:
                raise ValueError(
                    f"connections {ci.id} and {cj.id} overlap; embedding is ambiguous"
                )


# ---------------------------------------------------------------------------
# High-degree splitting
# ---------------------------------------------------------------------------


def split_high_degree(net: TransitNetwork) -> TransitNetwork:
    """Split stations of degree above eight into a chain of fragments.

    Incident connections are partitioned by angular order into contiguous
    fans; fragments are joined by auxiliary connections and tagged with
    the original station id for re-merging at output time.
    """
    adj = net.adjacency()
    stations = dict(net.stations)
    connections = dict(net.connections)
    lines = dict(net.lines)

    for sid in sorted(net.stations):
        incident = adj[sid]
        if len(incident) <= MAX_DEGREE:
            continue
        origin = stations[sid]
        pos = origin.xy()
        # Sort incident connections by the angle toward the neighbor.
        def angle_of(entry):
            cid, other = entry
            d = stations[other].xy() - pos
            return math.atan2(d[1], d[0])

        ordered = sorted(incident, key=lambda e: (angle_of(e), e[0]))
        n_frag = math.ceil(len(ordered) / _FAN_SIZE)
        chunks = np.array_split(np.arange(len(ordered)), n_frag)
        frag_ids = [f"{sid}#{k}" for k in range(n_frag)]
        min_len = min(
            float(np.hypot(*(stations[other].xy() - pos))) for _, other in ordered
        )
        offset = 0.05 * min_len

        del stations[sid]
        frag_of_conn: dict[str, str] = {}
        for k, chunk in enumerate(chunks):
            fan = [ordered[i] for i in chunk]
            mean_angle = math.atan2(
                sum(math.sin(angle_of(e)) for e in fan),
                sum(math.cos(angle_of(e)) for e in fan),
            )
            fpos = pos + offset * np.array([math.cos(mean_angle), math.sin(mean_angle)])
            stations[frag_ids[k]] = Station(
                frag_ids[k],
                (float(fpos[0]), float(fpos[1])),
                name=origin.name,
                kind=origin.kind,
                merged_id=sid,
            )
            for cid, _ in fan:
                frag_of_conn[cid] = frag_ids[k]

        for cid, frag in frag_of_conn.items():
            conn = connections[cid]
            connections[cid] = replace(
                conn,
                a=frag if conn.a == sid else conn.a,
                b=frag if conn.b == sid else conn.b,
            )

        # Chain the fragments with auxiliary connections carrying the lines
        # whose paths cross between fans.
        aux_ids = []
        for k in range(n_frag - 1):
            aux_id = f"{sid}#aux{k}"
            connections[aux_id] = Connection(
                aux_id, frag_ids[k], frag_ids[k + 1], frozenset(), ConnectionKind.AUXILIARY
            )
            aux_ids.append(aux_id)

        lines, aux_lines = _reroute_lines_through_fragments(
            lines, sid, frag_ids, frag_of_conn, net
        )
        for k, aux_id in enumerate(aux_ids):
            carried = aux_lines.get((frag_ids[k], frag_ids[k + 1]), frozenset())
            connections[aux_id] = replace(connections[aux_id], lines=carried)

    return TransitNetwork(stations, connections, lines)


def _reroute_lines_through_fragments(lines, sid, frag_ids, frag_of_conn, net):
    """Rewrite line paths through a split station; returns updated lines and
    the line sets carried by each auxiliary link."""
    frag_index = {fid: k for k, fid in enumerate(frag_ids)}
    aux_lines: dict[tuple[str, str], set[str]] = {}
    out = dict(lines)
    for lid in sorted(lines):
        line = out[lid]
        if sid not in line.stations:
            continue
        seq: list[str] = []
        stations = line.stations
        for idx, cur in enumerate(stations):
            if cur != sid:
                seq.append(cur)
                continue
            prev_s = stations[idx - 1] if idx > 0 else None
            next_s = stations[idx + 1] if idx + 1 < len(stations) else None
            frag_prev = frag_next = None
            if prev_s is not None:
                conn = net.connection_between(prev_s, sid)
                frag_prev = frag_of_conn.get(conn.id) if conn else None
            if next_s is not None:
                conn = net.connection_between(sid, next_s)
                frag_next = frag_of_conn.get(conn.id) if conn else None
            if frag_prev is None and frag_next is None:
                seq.append(frag_ids[0])
                continue
            if frag_prev is None:
                seq.append(frag_next)
                continue
            if frag_next is None or frag_prev == frag_next:
                seq.append(frag_prev)
                continue
            lo, hi = sorted((frag_index[frag_prev], frag_index[frag_next]))
            chain = frag_ids[lo : hi + 1]
            if frag_index[frag_prev] > frag_index[frag_next]:
                chain = chain[::-1]
            seq.extend(chain)
            for fa, fb in zip(chain[:-1], chain[1:]):
                key = tuple(sorted((fa, fb), key=lambda f: frag_index[f]))
                aux_lines.setdefault((key[0], key[1]), set()).add(lid)
        out[lid] = replace(line, stations=tuple(seq))
    return out, {k: frozenset(v) for k, v in aux_lines.items()}


# ---------------------------------------------------------------------------
# Dummy shortcut edges
# ---------------------------------------------------------------------------


def insert_dummy_edges(net: TransitNetwork, threshold: float) -> TransitNetwork:
    """Add a shortcut between every unconnected station pair closer than
    ``threshold``.  Shortcuts carry no line and exist only to widen the
    search space of route matching."""
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    order = sorted(net.stations)
    coords = np.array([net.stations[s].pos for s in order])
    dist = np.hypot(
        coords[:, 0][:, None] - coords[:, 0][None, :],
        coords[:, 1][:, None] - coords[:, 1][None, :],
    )
    existing = {
        frozenset((c.a, c.b)) for c in net.connections.values()
    }
    connections = dict(net.connections)
    counter = 0
    for i in range(len(order)):
        for j in range(i + 1, len(order)):
            if dist[i, j] >= threshold:
                continue
            pair = frozenset((order[i], order[j]))
            if pair in existing:
                continue
            while f"d{counter}" in connections:
                counter += 1
            cid = f"d{counter}"
            counter += 1
            connections[cid] = Connection(
                cid, order[i], order[j], frozenset(), ConnectionKind.SHORTCUT
            )
    return net.with_changes(connections=connections)
