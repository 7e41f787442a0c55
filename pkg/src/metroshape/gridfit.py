"""Final snapping stage: route every connection through a port grid.

Builds an octolinear grid graph over the mixed layout (sink nodes with
per-direction port nodes, cross-cell hop edges, within-sink turn edges),
splices the guide shape's vertices into the grid as extra sinks with
cheap corridor edges, then routes connections one by one as shortest
paths.  Routed paths consume their sinks and hop edges so later paths
cannot overlap or cross them; collapsed degree-2 stations are reinserted
along the routed polylines at equal spacing.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .deformation import LayoutState, SECTOR_COUNT
from .geometry import GuideShape, Polyline, project_on_shape, resample
from .model import TransitNetwork

# node states
FREE, USED, STATION = 0, 1, 2
# node kinds
GRID_SINK, SHAPE_SINK, PORT = 0, 1, 2


class GridError(Exception):
    """The shape cannot be spliced into the grid."""


@dataclass(frozen=True)
class GridConfig:
    """Grid sizing and cost model.

    The cell size is ``cell_factor`` times the average connection length
    of the layout; splice distances and the candidate radius derive from
    the cell size.
    """

    cell_factor: float = 0.3       # 0.2 suits networks above ~150 stations
    hop_cost: float = 20.0
    sink_cost_factor: float = 10.0   # sink attachment = factor * hop_cost
    min_dist_factor: float = 0.2     # remove grid sinks closer than this * d
    low_dist_factor: float = 0.5     # shape-grid connect range lower bound * d
    up_dist_factor: float = 1.5      # shape-grid connect range upper bound * d
    candidate_radius_factor: float = 2.0  # candidate sinks within this * d

    def __post_init__(self) -> None:
        if not (self.min_dist_factor < 1.0):
            raise ValueError("min_dist_factor must stay below the cell size")
        if not (self.low_dist_factor < 1.0 < self.up_dist_factor):
            raise ValueError("connect range must bracket the cell size")

    @property
    def sink_cost(self) -> float:
        return self.sink_cost_factor * self.hop_cost


@dataclass
class RoutedEdge:
    edge_id: str
    polyline: np.ndarray | None
    status: str  # "routed" | "failed"
    cost: float = math.inf


@dataclass(frozen=True)
class ReducedEdge:
    """A routable edge of the collapsed network."""

    id: str
    a: str
    b: str
    interior: tuple[str, ...]      # removed stations, ordered a -> b
    conn_chain: tuple[str, ...]    # original connection ids, ordered a -> b
    is_shape: bool
    length: float                  # mixed-layout arc length


@dataclass
class GridLayout:
    """Final positions and per-connection polylines."""

    positions: dict[str, tuple[float, float]]
    connection_paths: dict[str, np.ndarray]
    failed_connections: tuple[str, ...]
    shape_sink_positions: np.ndarray
    cell_size: float
    routed: list[RoutedEdge] = field(default_factory=list)


# ---------------------------------------------------------------------------
# Grid graph
# ---------------------------------------------------------------------------

_OFFSETS = ((1, 0), (0, 1), (1, 1), (1, -1))


class GridGraph:
    """Port-augmented grid with occupancy state.

    Sinks hold positions; every sink reaches its ports at ``sink_cost``,
    ports of adjacent sinks connect with hop edges, and ports of one sink
    form a complete graph weighted by turn angle.  Hop edges carry ids so
    occupied or crossing-blocked edges can be skipped during search.
    """

    def __init__(self, cfg: GridConfig, cell_size: float):
        self.cfg = cfg
        self.d = cell_size
        self.positions: list[tuple[float, float]] = []
        self.kind: list[int] = []
        self.sink_of: list[int] = []
        self.adj: list[list[tuple[int, float, int]]] = []
        self.port_dir: dict[int, float] = {}
        self.ports_of: dict[int, list[int]] = {}
        self.removed: list[bool] = []
        self.node_state: list[int] = []
        self.station_at: dict[int, str] = {}
        self.hop_nodes: list[tuple[int, int]] = []   # port endpoints
        self.hop_sinks: list[tuple[int, int]] = []   # sink endpoints (geometry)
        self.hop_partners: dict[int, list[int]] = {}
        self.edge_used: list[bool] = []
        self.edge_blocked: list[bool] = []
        self.shape_sinks: list[int] = []
        self._turn_refs: dict[int, list[tuple[int, int, int, int]]] = {}
        # soft no-go counts around stations that still await routing
        self.protection: dict[int, int] = {}
        self.protect_penalty = cfg.hop_cost

    # -- construction ------------------------------------------------------

    def add_node(self, pos, kind: int, sink: int | None = None) -> int:
        idx = len(self.positions)
        self.positions.append((float(pos[0]), float(pos[1])))
        self.kind.append(kind)
        self.sink_of.append(idx if sink is None else sink)
        self.adj.append([])
        self.removed.append(False)
        self.node_state.append(FREE)
        if kind != PORT:
            self.ports_of[idx] = []
        return idx

    def add_port(self, sink: int, direction: float) -> int:
        port = self.add_node(self.positions[sink], PORT, sink)
        self.port_dir[port] = direction
        self.ports_of[sink].append(port)
        cost = self.cfg.sink_cost
        self.adj[sink].append((port, cost, -1))
        self.adj[port].append((sink, cost, -1))
        return port

    def add_hop(self, port_a: int, port_b: int, weight: float) -> int:
        eidx = len(self.hop_nodes)
        self.hop_nodes.append((port_a, port_b))
        self.hop_sinks.append((self.sink_of[port_a], self.sink_of[port_b]))
        self.edge_used.append(False)
        self.edge_blocked.append(False)
        self.adj[port_a].append((port_b, weight, eidx))
        self.adj[port_b].append((port_a, weight, eidx))
        return eidx

    def _turn_weight(self, p: int, q: int, arbitrary: bool) -> float:
        theta = abs(self.port_dir[p] - self.port_dir[q]) % (2 * math.pi)
        if theta > math.pi:
            theta = 2 * math.pi - theta
        if arbitrary:
            return 2 * math.pi - theta
        return (self.cfg.hop_cost / 2.0) * (math.pi - theta) / (0.75 * math.pi)

    def finish_sink_turns(self, sink: int, arbitrary: bool) -> None:
        """Complete graph over the sink's ports, weighted by turn angle.

        Octolinear sinks use four discrete levels scaled to hop_cost/2 at
        the sharpest turn; sinks with any non-principal port use the
        2*pi - theta rule, which keeps direct edges at least as cheap as
        any two-hop detour.
        """
        ports = self.ports_of[sink]
        refs = self._turn_refs.setdefault(sink, [])
        for s in range(len(ports)):
            for t in range(s + 1, len(ports)):
                p, q = ports[s], ports[t]
                w = self._turn_weight(p, q, arbitrary)
                refs.append((p, q, len(self.adj[p]), len(self.adj[q])))
                self.adj[p].append((q, w, -1))
                self.adj[q].append((p, w, -1))

    def extend_sink_arbitrary(self, sink: int, new_port: int) -> None:
        """Add a port to an already finished sink, switching the whole sink
        to the arbitrary-angle rule so no two-hop detour beats a direct
        turn edge."""
        refs = self._turn_refs.setdefault(sink, [])
        for p, q, ip, iq in refs:
            w = self._turn_weight(p, q, arbitrary=True)
            self.adj[p][ip] = (q, w, -1)
            self.adj[q][iq] = (p, w, -1)
        for q in self.ports_of[sink]:
            if q == new_port:
                continue
            w = self._turn_weight(new_port, q, arbitrary=True)
            refs.append((new_port, q, len(self.adj[new_port]), len(self.adj[q])))
            self.adj[new_port].append((q, w, -1))
            self.adj[q].append((new_port, w, -1))

    # -- state -------------------------------------------------------------

    def remove_node(self, idx: int) -> None:
        self.removed[idx] = True
        for port in self.ports_of.get(idx, []):
            self.removed[port] = True

    def protect(self, sinks: list[int], amount: int = 1) -> None:
        for s in sinks:
            n = self.protection.get(s, 0) + amount
            if n > 0:
                self.protection[s] = n
            else:
                self.protection.pop(s, None)

    def occupy_edge(self, eidx: int) -> None:
        self.edge_used[eidx] = True
        for partner in self.hop_partners.get(eidx, []):
            self.edge_blocked[partner] = True

    def sink_positions(self) -> np.ndarray:
        return np.array(
            [self.positions[i] for i in range(len(self.positions)) if self.kind[i] != PORT]
        )


def build_grid(layout: LayoutState, cfg: GridConfig,
               cell_size: float | None = None) -> GridGraph:
    """Octolinear port grid covering the layout's bounding box."""
    coords = layout.coords
    lo = coords.min(axis=0)
    hi = coords.max(axis=0)
    if cell_size is None:
        raise ValueError("cell_size is required")
    d = float(cell_size)
    cols = max(1, math.ceil((hi[0] - lo[0]) / d))
    rows = max(1, math.ceil((hi[1] - lo[1]) / d))

    grid = GridGraph(cfg, d)
    index: dict[tuple[int, int], int] = {}
    for iy in range(rows + 1):
        for ix in range(cols + 1):
            index[(ix, iy)] = grid.add_node(
                (lo[0] + ix * d, lo[1] + iy * d), GRID_SINK
            )

    diag_pairs: dict[tuple[int, int], list[int]] = {}
    for iy in range(rows + 1):
        for ix in range(cols + 1):
            a = index[(ix, iy)]
            for dx, dy in _OFFSETS:
                jx, jy = ix + dx, iy + dy
                if (jx, jy) not in index:
                    continue
                b = index[(jx, jy)]
                ang = math.atan2(dy, dx)
                pa = grid.add_port(a, ang)
                pb = grid.add_port(b, (ang + math.pi) % (2 * math.pi))
                eidx = grid.add_hop(pa, pb, cfg.hop_cost)
                if dx == 1 and dy == 1:
                    diag_pairs.setdefault((ix, iy), [None, None])[0] = eidx
                elif dx == 1 and dy == -1:
                    diag_pairs.setdefault((ix, iy - 1), [None, None])[1] = eidx

    # crossing diagonals of one cell exclude each other
    for pair in diag_pairs.values():
        if pair[0] is not None and pair[1] is not None:
            grid.hop_partners.setdefault(pair[0], []).append(pair[1])
            grid.hop_partners.setdefault(pair[1], []).append(pair[0])

    for sink in list(grid.ports_of):
        grid.finish_sink_turns(sink, arbitrary=False)
    return grid


# ---------------------------------------------------------------------------
# Shape overlay
# ---------------------------------------------------------------------------


def _segments_cross(a0, a1, b0, b1) -> np.ndarray:
    """Vectorized strict-straddle test: (N,) x (M,) -> (N, M) bool."""
    a0 = np.asarray(a0, float)[:, None, :]
    a1 = np.asarray(a1, float)[:, None, :]
    b0 = np.asarray(b0, float)[None, :, :]
    b1 = np.asarray(b1, float)[None, :, :]
    da = a1 - a0
    db = b1 - b0
    o1 = da[..., 0] * (b0 - a0)[..., 1] - da[..., 1] * (b0 - a0)[..., 0]
    o2 = da[..., 0] * (b1 - a0)[..., 1] - da[..., 1] * (b1 - a0)[..., 0]
    o3 = db[..., 0] * (a0 - b0)[..., 1] - db[..., 1] * (a0 - b0)[..., 0]
    o4 = db[..., 0] * (a1 - b0)[..., 1] - db[..., 1] * (a1 - b0)[..., 0]
    return (o1 * o2 < 0) & (o3 * o4 < 0)


def overlay_shape(grid: GridGraph, shape: GuideShape, cfg: GridConfig) -> GridGraph:
    """Splice the (already subsampled) shape vertices into the grid.

    Grid edges crossing the shape are dropped, grid sinks too close to a
    shape vertex are removed, and shape vertices connect to grid sinks in
    the [d_low, d_up] distance band.  Corridor edges along the shape cost
    hop/20, connect edges hop/2; connect edges that cross each other or
    remaining grid edges exclude one another at routing time.
    """
    d = grid.d
    d_min = cfg.min_dist_factor * d
    d_low = cfg.low_dist_factor * d
    d_up = cfg.up_dist_factor * d

    shape_segments: list[tuple[np.ndarray, np.ndarray]] = []
    vertex_nodes: list[list[int]] = []
    all_vertices: list[np.ndarray] = []
    for line in shape.polylines:
        nodes = [grid.add_node(v, SHAPE_SINK) for v in line.vertices]
        grid.shape_sinks.extend(nodes)
        vertex_nodes.append(nodes)
        all_vertices.extend(line.vertices)
        chain = line.chain_vertices()
        shape_segments.extend(
            (chain[k], chain[k + 1]) for k in range(len(chain) - 1)
        )
    verts = np.array(all_vertices)

    # Remove grid sinks crowding a shape vertex.
    grid_sinks = [i for i in range(len(grid.positions)) if grid.kind[i] == GRID_SINK]
    sink_pos = np.array([grid.positions[i] for i in grid_sinks])
    near = np.hypot(
        sink_pos[:, 0][:, None] - verts[:, 0][None, :],
        sink_pos[:, 1][:, None] - verts[:, 1][None, :],
    ).min(axis=1)
    for k in np.flatnonzero(near < d_min):
        grid.remove_node(grid_sinks[k])

    # Drop grid hop edges crossing the shape.
    hop_a = np.array([grid.positions[a] for a, _ in grid.hop_sinks])
    hop_b = np.array([grid.positions[b] for _, b in grid.hop_sinks])
    seg_a = np.array([s[0] for s in shape_segments])
    seg_b = np.array([s[1] for s in shape_segments])
    crossing = _segments_cross(hop_a, hop_b, seg_a, seg_b).any(axis=1)
    for eidx in np.flatnonzero(crossing):
        grid.edge_blocked[eidx] = True

    # Corridor edges along each polyline.
    for line, nodes in zip(shape.polylines, vertex_nodes):
        loop = nodes + [nodes[0]] if line.closed else nodes
        for a, b in zip(loop[:-1], loop[1:]):
            pa_pos, pb_pos = grid.positions[a], grid.positions[b]
            ang = math.atan2(pb_pos[1] - pa_pos[1], pb_pos[0] - pa_pos[0])
            pa = grid.add_port(a, ang % (2 * math.pi))
            pb = grid.add_port(b, (ang + math.pi) % (2 * math.pi))
            grid.add_hop(pa, pb, cfg.hop_cost / 20.0)

    # Connect shape vertices to surviving grid sinks in the distance band.
    alive = [i for i in grid_sinks if not grid.removed[i]]
    alive_pos = np.array([grid.positions[i] for i in alive])

    # Candidate connect segments: every (shape vertex, grid sink) pair in
    # the distance band whose segment stays clear of the shape itself.
    # Sides with nothing in the band fall back to shorter connects so
    # cramped pockets (e.g. between closed-shape lobes) stay reachable.
    candidates: list[tuple[float, int, int, int, np.ndarray, np.ndarray]] = []
    for nodes, line in zip(vertex_nodes, shape.polylines):
        chain = line.chain_vertices()
        for v_idx, node in enumerate(nodes):
            p = np.array(grid.positions[node])
            tangent = chain[min(v_idx + 1, len(chain) - 1)] - chain[max(v_idx - 1, 0)]
            dist = np.hypot(alive_pos[:, 0] - p[0], alive_pos[:, 1] - p[1])
            reachable = np.flatnonzero(dist <= d_up)
            if reachable.size == 0:
                continue
            ends = alive_pos[reachable]
            blocked = _segments_cross(
                np.repeat(p[None, :], len(reachable), axis=0), ends, seg_a, seg_b
            ).any(axis=1)
            by_side: dict[int, list[tuple[float, int, np.ndarray]]] = {0: [], 1: []}
            for m, k in enumerate(reachable):
                if blocked[m]:
                    continue
                q = ends[m]
                side = int(
                    tangent[0] * (q[1] - p[1]) - tangent[1] * (q[0] - p[0]) >= 0
                )
                by_side[side].append((float(dist[k]), alive[int(k)], q))
            for side, options in by_side.items():
                in_band = [o for o in options if o[0] >= d_low]
                pool = in_band if in_band else options
                for dist_pq, sink, q in pool:
                    candidates.append((dist_pq, node, sink, side, p, q))

    # Keep a crossing-free subset with a per-side quota.  Mutually
    # crossing connect edges would block each other once one is used, so
    # they are dropped up front; rank-major order hands every vertex side
    # its nearest surviving connect before any side gets a second one.
    groups: dict[tuple[int, int], list] = {}
    for cand in sorted(candidates, key=lambda c: (c[0], c[1], c[2])):
        groups.setdefault((cand[1], cand[3]), []).append(cand)
    rank_major: list = []
    rank = 0
    while True:
        layer = [g[rank] for g in groups.values() if len(g) > rank]
        if not layer:
            break
        rank_major.extend(sorted(layer, key=lambda c: (c[0], c[1], c[2])))
        rank += 1
    quota: dict[tuple[int, int], int] = {}
    kept: list[tuple[int, int, np.ndarray, np.ndarray]] = []
    kept_a: list[np.ndarray] = []
    kept_b: list[np.ndarray] = []
    for dist_pq, node, sink, side, p, q in rank_major:
        if quota.get((node, side), 0) >= 3:
            continue
        if kept_a:
            hits = _segments_cross(
                p[None, :], q[None, :], np.array(kept_a), np.array(kept_b)
            )
            if hits.any():
                continue
        quota[(node, side)] = quota.get((node, side), 0) + 1
        kept.append((node, sink, p, q))
        kept_a.append(p)
        kept_b.append(q)

    connect_edges: list[int] = []
    connect_geo: list[tuple[np.ndarray, np.ndarray]] = []
    for node, sink, p, q in kept:
        ang = math.atan2(q[1] - p[1], q[0] - p[0])
        pa = grid.add_port(node, ang % (2 * math.pi))
        pb = grid.add_port(sink, (ang + math.pi) % (2 * math.pi))
        grid.extend_sink_arbitrary(sink, pb)
        eidx = grid.add_hop(pa, pb, cfg.hop_cost / 2.0)
        connect_edges.append(eidx)
        connect_geo.append((p, q))
    if not connect_edges:
        raise GridError("guide shape is out of reach of the grid")

    # Shape sinks use the arbitrary-angle turn rule throughout.
    for nodes in vertex_nodes:
        for node in nodes:
            grid.finish_sink_turns(node, arbitrary=True)

    # Connect edges and the grid edges they cross exclude one another.
    con_a = np.array([g[0] for g in connect_geo])
    con_b = np.array([g[1] for g in connect_geo])
    connect_set = set(connect_edges)
    live_hops = [
        e for e in range(len(grid.hop_nodes))
        if e not in connect_set and not grid.edge_blocked[e]
    ]
    live_a = np.array([grid.positions[grid.hop_sinks[e][0]] for e in live_hops])
    live_b = np.array([grid.positions[grid.hop_sinks[e][1]] for e in live_hops])
    hits = _segments_cross(con_a, con_b, live_a, live_b)
    for row, eidx in enumerate(connect_edges):
        for col in np.flatnonzero(hits[row]):
            other = live_hops[col]
            grid.hop_partners.setdefault(eidx, []).append(other)
            grid.hop_partners.setdefault(other, []).append(eidx)

    return grid


# ---------------------------------------------------------------------------
# Network collapse and routing order
# ---------------------------------------------------------------------------


def collapse_network(state: LayoutState, net: TransitNetwork) -> list[ReducedEdge]:
    """Merge straight degree-2 octolinear runs into single routable edges.

    Keeps stations of degree other than two, all shape stations, and
    degree-2 stations whose incident sectors are not collinear.
    """
    adj = net.adjacency()

    def outward(cid: str, sid: str) -> int | None:
        sector = state.sectors.get(cid)
        if sector is None:
            return None
        conn = net.connections[cid]
        return sector if conn.a == sid else (sector + 4) % SECTOR_COUNT

    def removable(sid: str) -> bool:
        if sid in state.shape_stations:
            return False
        incident = adj[sid]
        if len(incident) != 2:
            return False
        (c1, _), (c2, _) = incident
        if c1 in state.shape_edges or c2 in state.shape_edges:
            return False
        s1, s2 = outward(c1, sid), outward(c2, sid)
        if s1 is None or s2 is None:
            return False
        return (s1 - s2) % SECTOR_COUNT == 4

    keep = {sid for sid in net.stations if not removable(sid)}
    # pure cycles of removable stations need anchors to terminate the walk
    seen: set[str] = set()
    for sid in sorted(net.stations):
        if sid in keep or sid in seen:
            continue
        component = [sid]
        seen.add(sid)
        queue = [sid]
        while queue:
            cur = queue.pop()
            for _, other in adj[cur]:
                if other not in keep and other not in seen:
                    seen.add(other)
                    component.append(other)
                    queue.append(other)
        if not any(other in keep for c in component for _, other in adj[c]):
            keep.update(sorted(component)[:2])

    pos = {sid: k for k, sid in enumerate(state.order)}

    def arc_length(chain: list[str]) -> float:
        pts = state.coords[[pos[s] for s in chain]]
        return float(np.hypot(*np.diff(pts, axis=0).T).sum())

    edges: list[ReducedEdge] = []
    visited_conns: set[str] = set()
    for start in sorted(keep):
        for cid, nxt in adj[start]:
            if cid in visited_conns:
                continue
            chain_stations = [start]
            chain_conns = [cid]
            cur = nxt
            prev_conn = cid
            while cur not in keep:
                chain_stations.append(cur)
                options = [(c, o) for c, o in adj[cur] if c != prev_conn]
                prev_conn, cur_next = options[0]
                chain_conns.append(prev_conn)
                cur = cur_next
            chain_stations.append(cur)
            visited_conns.update(chain_conns)
            is_shape = chain_conns[0] in state.shape_edges
            edges.append(
                ReducedEdge(
                    id=chain_conns[0] if len(chain_conns) == 1 else f"{chain_conns[0]}*",
                    a=start,
                    b=cur,
                    interior=tuple(chain_stations[1:-1]),
                    conn_chain=tuple(chain_conns),
                    is_shape=is_shape,
                    length=arc_length(chain_stations),
                )
            )
    return edges


def route_order(edges: list[ReducedEdge], state: LayoutState,
                shape: GuideShape) -> list[ReducedEdge]:
    """Shape edges first (ordered along the shape), then octolinear edges
    in breadth-first order from already fixed endpoints.

    Within the frontier, doubly anchored edges come first (they are the
    most constrained), then longer edges; connection id breaks ties.
    """
    pos = {sid: k for k, sid in enumerate(state.order)}
    shape_edges = [e for e in edges if e.is_shape]
    octo_edges = [e for e in edges if not e.is_shape]

    def shape_key(e: ReducedEdge):
        mid = 0.5 * (state.coords[pos[e.a]] + state.coords[pos[e.b]])
        _, _, poly, frac = project_on_shape(shape, mid[None, :])
        return (int(poly[0]), float(frac[0]), e.id)

    ordered = sorted(shape_edges, key=shape_key)
    fixed = {e.a for e in ordered} | {e.b for e in ordered}
    remaining = sorted(octo_edges, key=lambda e: e.id)
    while remaining:
        frontier = [e for e in remaining if e.a in fixed or e.b in fixed]
        pool = frontier if frontier else remaining
        nxt = min(
            pool,
            key=lambda e: (
                -(e.a in fixed) - (e.b in fixed),
                -e.length,
                e.id,
            ),
        )
        ordered.append(nxt)
        remaining.remove(nxt)
        fixed.update((nxt.a, nxt.b))
    return ordered


# ---------------------------------------------------------------------------
# Edge routing
# ---------------------------------------------------------------------------


def _candidate_sinks(grid: GridGraph, point: np.ndarray, is_shape: bool,
                     cfg: GridConfig) -> list[tuple[int, float]]:
    """Free candidate sinks for an unfixed endpoint with entry costs."""
    sinks = [
        i for i in range(len(grid.positions))
        if grid.kind[i] != PORT and not grid.removed[i] and grid.node_state[i] == FREE
    ]
    if not sinks:
        return []
    pts = np.array([grid.positions[i] for i in sinks])
    dist = np.hypot(pts[:, 0] - point[0], pts[:, 1] - point[1])
    entry = dist / grid.d * (cfg.hop_cost / 2.0)
    entry = entry + np.array(
        [grid.protect_penalty * grid.protection.get(s, 0) for s in sinks]
    )
    if is_shape:
        order = np.argsort(dist, kind="stable")[:2]
        return [(sinks[int(k)], float(entry[k])) for k in order]
    radius = cfg.candidate_radius_factor * grid.d
    keep = np.flatnonzero(dist <= radius)
    if keep.size == 0:
        # crowded neighborhood: fall back to the nearest free sinks, with
        # entry costs still growing with distance
        keep = np.argsort(dist, kind="stable")[:3]
    return [(sinks[int(k)], float(entry[k])) for k in keep]


def _dijkstra(grid: GridGraph, sources: list[tuple[int, float]],
              targets: dict[int, float]):
    """Shortest path respecting occupancy; returns (cost, node path, hop ids)."""
    allowed = {grid.sink_of[s] for s, _ in sources} | set(targets)
    dist: dict[int, float] = {}
    pred: dict[int, tuple[int, int]] = {}
    heap: list[tuple[float, int]] = []
    for node, cost in sources:
        if cost < dist.get(node, math.inf):
            dist[node] = cost
            pred[node] = (-1, -1)
            heapq.heappush(heap, (cost, node))
    best_total = math.inf
    best_node = -1
    state = grid.node_state
    sink_of = grid.sink_of
    removed = grid.removed
    while heap:
        cost, u = heapq.heappop(heap)
        if cost > dist.get(u, math.inf):
            continue
        if cost >= best_total:
            break
        if u in targets:
            total = cost + targets[u]
            if total < best_total:
                best_total = total
                best_node = u
        u_sink = sink_of[u]
        through_station = (
            grid.kind[u] == PORT and state[u_sink] == STATION and u_sink in allowed
        )
        for v, w, eidx in grid.adj[u]:
            if removed[v]:
                continue
            if eidx >= 0 and (grid.edge_used[eidx] or grid.edge_blocked[eidx]):
                continue
            if through_station and eidx < 0 and v != u_sink:
                continue  # do not tunnel through a station via its turn edges
            v_sink = sink_of[v]
            if state[v_sink] != FREE and v_sink not in allowed:
                continue
            nd = cost + w
            if eidx >= 0 and v_sink not in allowed:
                nd += grid.protect_penalty * grid.protection.get(v_sink, 0)
            if nd < dist.get(v, math.inf):
                dist[v] = nd
                pred[v] = (u, eidx)
                heapq.heappush(heap, (nd, v))
    if best_node < 0:
        return math.inf, [], []
    path = []
    hops = []
    node = best_node
    while node != -1:
        path.append(node)
        prev, eidx = pred[node]
        if eidx >= 0:
            hops.append(eidx)
        node = prev
    path.reverse()
    return best_total, path, hops


def route_edge(grid: GridGraph, edge: ReducedEdge, state: LayoutState,
               fixed: dict[str, int], shape_station_ids: frozenset[str],
               cfg: GridConfig) -> RoutedEdge:
    """Route one edge; on success fixes its endpoints and consumes the path."""
    pos = {sid: k for k, sid in enumerate(state.order)}

    def endpoint_candidates(sid: str):
        if sid in fixed:
            return [(fixed[sid], 0.0)]
        return _candidate_sinks(
            grid, state.coords[pos[sid]], sid in shape_station_ids, cfg
        )

    sources = endpoint_candidates(edge.a)
    source_sinks = {s for s, _ in sources}
    targets = {
        node: cost
        for node, cost in endpoint_candidates(edge.b)
        if node not in source_sinks
    }
    if not sources or not targets:
        return RoutedEdge(edge.id, None, "failed")

    cost, path, hops = _dijkstra(grid, sources, targets)
    if not path:
        return RoutedEdge(edge.id, None, "failed")

    start, end = path[0], path[-1]
    fixed[edge.a] = start
    fixed[edge.b] = end
    grid.node_state[start] = STATION
    grid.node_state[end] = STATION
    grid.station_at[start] = edge.a
    grid.station_at[end] = edge.b

    sink_seq = [start]
    for node in path[1:-1]:
        sink = grid.sink_of[node]
        if sink != sink_seq[-1]:
            sink_seq.append(sink)
    if sink_seq[-1] != end:
        sink_seq.append(end)
    for sink in sink_seq[1:-1]:
        if grid.node_state[sink] == FREE:
            grid.node_state[sink] = USED
    for eidx in hops:
        grid.occupy_edge(eidx)

    polyline = np.array([grid.positions[s] for s in sink_seq], dtype=float)
    return RoutedEdge(edge.id, polyline, "routed", cost)


# ---------------------------------------------------------------------------
# Reinsertion and assembly
# ---------------------------------------------------------------------------


def reinsert_stations(polyline: np.ndarray, interior: tuple[str, ...]):
    """Equally distribute removed stations along a routed polyline.

    Returns (positions per interior station, split polylines per original
    connection along the chain).
    """
    seg = np.diff(polyline, axis=0)
    seg_len = np.hypot(seg[:, 0], seg[:, 1])
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    total = cum[-1]
    k = len(interior)
    stops = [total * (m + 1) / (k + 1) for m in range(k)]

    def point_at(s: float) -> np.ndarray:
        idx = min(np.searchsorted(cum, s, side="right") - 1, len(seg_len) - 1)
        t = (s - cum[idx]) / max(seg_len[idx], 1e-12)
        return polyline[idx] + t * seg[idx]

    positions = [point_at(s) for s in stops]

    tol = max(total, 1.0) * 1e-9
    pieces: list[np.ndarray] = []
    bounds = [0.0] + stops + [total]
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        pts = [point_at(lo)]
        for idx in range(len(cum)):
            if lo < cum[idx] < hi:
                pts.append(polyline[idx])
        pts.append(point_at(hi))
        dedup = [pts[0]]
        for p in pts[1:]:
            if np.hypot(*(p - dedup[-1])) > tol:
                dedup.append(p)
        if len(dedup) < 2:
            dedup = [pts[0], pts[-1]]
        pieces.append(np.array(dedup))
    return positions, pieces


def align_layout(state: LayoutState, net: TransitNetwork, shape: GuideShape,
                 cfg: GridConfig | None = None) -> GridLayout:
    """Full grid-alignment stage over a mixed layout."""
    cfg = cfg or GridConfig()
    lengths = [
        float(np.hypot(*(state.position(c.a) - state.position(c.b))))
        for c in net.connections.values()
    ]
    d = cfg.cell_factor * float(np.mean(lengths))

    grid = build_grid(state, cfg, cell_size=d)
    placed = GuideShape(tuple(resample(p, d) for p in shape.polylines))
    grid = overlay_shape(grid, placed, cfg)

    reduced = collapse_network(state, net)
    ordered = route_order(reduced, state, shape)

    # Soft no-go zones around stations awaiting routing keep early
    # corridors from walling in later endpoints.
    routable = sorted({e.a for e in ordered} | {e.b for e in ordered})
    pos_index = {sid: k for k, sid in enumerate(state.order)}
    sink_ids = [
        i for i in range(len(grid.positions))
        if grid.kind[i] != PORT and not grid.removed[i]
    ]
    sink_pos = np.array([grid.positions[i] for i in sink_ids])
    protect_radius = cfg.candidate_radius_factor * d
    protected: dict[str, list[int]] = {}
    pending: dict[str, int] = {sid: 0 for sid in routable}
    for e in ordered:
        pending[e.a] += 1
        pending[e.b] += 1
    for sid in routable:
        p = state.coords[pos_index[sid]]
        near = np.flatnonzero(
            np.hypot(sink_pos[:, 0] - p[0], sink_pos[:, 1] - p[1]) <= protect_radius
        )
        protected[sid] = [sink_ids[int(k)] for k in near]
        grid.protect(protected[sid], +1)

    fixed: dict[str, int] = {}
    routed: list[RoutedEdge] = []
    results: dict[str, tuple[ReducedEdge, RoutedEdge]] = {}
    for edge in ordered:
        ends = (edge.a,) if edge.a == edge.b else (edge.a, edge.b)
        for sid in ends:
            if sid in protected:
                grid.protect(protected[sid], -1)
        r = route_edge(grid, edge, state, fixed, state.shape_stations, cfg)
        routed.append(r)
        results[edge.id] = (edge, r)
        for sid in ends:
            pending[sid] -= 1
            if sid in protected:
                if pending[sid] <= 0:
                    del protected[sid]  # station settled, zone released
                else:
                    grid.protect(protected[sid], +1)

    positions: dict[str, tuple[float, float]] = {}
    for sid, sink in fixed.items():
        positions[sid] = grid.positions[sink]
    pos_index = {sid: k for k, sid in enumerate(state.order)}

    connection_paths: dict[str, np.ndarray] = {}
    failed: list[str] = []
    for edge, r in results.values():
        if r.status == "routed":
            interior_pos, pieces = reinsert_stations(r.polyline, edge.interior)
            for sid, p in zip(edge.interior, interior_pos):
                positions[sid] = (float(p[0]), float(p[1]))
            for cid, piece in zip(edge.conn_chain, pieces):
                connection_paths[cid] = piece
        else:
            failed.extend(edge.conn_chain)

    # stations never placed fall back to their mixed positions
    for sid in state.order:
        if sid not in positions:
            positions[sid] = tuple(state.coords[pos_index[sid]])
    for cid in sorted(failed):
        conn = net.connections[cid]
        connection_paths[cid] = np.array(
            [positions[conn.a], positions[conn.b]], dtype=float
        )

    shape_sink_positions = np.array(
        [grid.positions[i] for i in grid.shape_sinks], dtype=float
    ).reshape(-1, 2)
    return GridLayout(
        positions=positions,
        connection_paths=connection_paths,
        failed_connections=tuple(sorted(failed)),
        shape_sink_positions=shape_sink_positions,
        cell_size=d,
        routed=routed,
    )
