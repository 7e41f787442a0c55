"""Two-stage least-squares deformation of a transit network.

The smooth stage spaces stations evenly, straightens degree-2 runs,
maximizes angular resolution and pulls stations with a clear line of
sight onto the guide shape.  The mixed stage then rotates every
non-shape connection toward an assigned octolinear sector while shape
connections keep tracing the guide.

Both stages alternate between freezing the nonlinear quantities
(closest shape points, edge directions, angular fan geometry, sector
targets) and solving the resulting sparse linear least-squares system.
A step is accepted only when the refreshed objective does not increase
and the layout stays planar; rejected steps are damped toward the
previous iterate and the run stops when no acceptable step remains.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.sparse import coo_matrix, identity
from scipy.sparse.linalg import spsolve

from .geometry import GuideShape, proper_crossings, project_on_shape, wrap_angle_diff
from .model import ConnectionKind, StationKind, TransitNetwork

SECTOR_COUNT = 8
SECTOR_STEP = math.pi / 4.0
SECTOR_ANGLES = np.arange(SECTOR_COUNT) * SECTOR_STEP

# Tiny positional anchor added to every solve; removes the translation
# nullspace when position weights are zero without affecting results.
_ANCHOR_WEIGHT = 1e-9

# Iterations a reverted station stays held near its reverted position.
_HOLD_TTL = 3
_HOLD_WEIGHT = 1.0
_PROXIMITY_WEIGHT = 1.0


@dataclass(frozen=True)
class DeformWeights:
    """Objective weights for both stages plus the target edge length."""

    shape: float = 4.0            # smooth stage, shape-distance term
    spacing: float = 1.0          # smooth stage, uniform edge length term
    angle: float = 2.0            # smooth stage, angular resolution term
    position: float = 0.16        # smooth stage, mental map term
    octo: float = 2.0             # mixed stage, sector rotation term
    mixed_position: float = 0.1   # mixed stage, mental map term
    mixed_shape: float = 10.0     # mixed stage, shape-distance term
    target_len: float | None = None  # edge target length; None = network average

    def __post_init__(self) -> None:
        for name in ("shape", "spacing", "angle", "position",
                     "octo", "mixed_position", "mixed_shape"):
            if getattr(self, name) < 0:
                raise ValueError(f"weight {name} must be nonnegative")
        if self.target_len is not None and self.target_len <= 0:
            raise ValueError("target_len must be positive")


@dataclass(frozen=True)
class LayoutState:
    """Per-stage station coordinates plus the shape assignment."""

    order: tuple[str, ...]
    coords: np.ndarray
    shape_stations: frozenset[str] = frozenset()
    shape_edges: frozenset[str] = frozenset()
    octo_edges: frozenset[str] = frozenset()
    sectors: dict[str, int] = field(default_factory=dict)
    iteration: int = 0
    energy: float = 0.0
    energy_history: tuple[float, ...] = ()
    snapshots: tuple[np.ndarray, ...] = ()

    def index_of(self, sid: str) -> int:
        return self.order.index(sid)

    def position(self, sid: str) -> np.ndarray:
        return self.coords[self.order.index(sid)]

    def positions(self) -> dict[str, np.ndarray]:
        return {sid: self.coords[k] for k, sid in enumerate(self.order)}


def initial_state(net: TransitNetwork) -> LayoutState:
    order = net.station_order()
    return LayoutState(order, net.coords(order))


# ---------------------------------------------------------------------------
# Shared per-network context
# ---------------------------------------------------------------------------


class _Context:
    """Index maps and frozen per-network arrays used by both stages."""

    def __init__(self, net: TransitNetwork, target_len: float | None):
        self.net = net
        self.order = net.station_order()
        self.index = {sid: k for k, sid in enumerate(self.order)}
        self.geo = net.coords(self.order)
        self.n = len(self.order)
        self.conn_ids = sorted(net.connections)
        self.conn_ij = np.array(
            [[self.index[net.connections[c].a], self.index[net.connections[c].b]]
             for c in self.conn_ids],
            dtype=int,
        ).reshape(-1, 2)
        self.degrees = np.zeros(self.n, dtype=int)
        for i, j in self.conn_ij:
            self.degrees[i] += 1
            self.degrees[j] += 1
        self.neighbors: list[list[int]] = [[] for _ in range(self.n)]
        for (i, j), cid in zip(self.conn_ij, self.conn_ids):
            self.neighbors[i].append(j)
            self.neighbors[j].append(i)

        if target_len is None:
            target_len = net.average_connection_length()
        self.target_len = float(target_len)
        kinds = [net.connections[c].kind for c in self.conn_ids]
        halved = []
        for cid, kind in zip(self.conn_ids, kinds):
            conn = net.connections[cid]
            dummy_end = any(
                net.stations[s].kind is not StationKind.REAL for s in (conn.a, conn.b)
            )
            halved.append(kind is not ConnectionKind.REAL or dummy_end)
        self.conn_target = np.where(halved, 0.5 * self.target_len, self.target_len)

        # connection pairs sharing a station, excluded from crossing sweeps
        incident: dict[int, list[int]] = {}
        for k, (i, j) in enumerate(self.conn_ij):
            incident.setdefault(i, []).append(k)
            incident.setdefault(j, []).append(k)
        share = set()
        for members in incident.values():
            for a in range(len(members)):
                for b in range(a + 1, len(members)):
                    share.add((members[a], members[b]))
        self.share_pairs = {(min(p), max(p)) for p in share}

    def segments(self, coords: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return coords[self.conn_ij[:, 0]], coords[self.conn_ij[:, 1]]

    def crossings(self, coords: np.ndarray) -> list[tuple[int, int]]:
        starts, ends = self.segments(coords)
        return proper_crossings(starts, ends, exclude=self.share_pairs)


# ---------------------------------------------------------------------------
# Shape-station assignment
# ---------------------------------------------------------------------------


def _reflection_blocked(coords: np.ndarray, ctx: _Context, proj: np.ndarray) -> np.ndarray:
    """Whether the station-to-reflection segment crosses any connection.

    Strict straddle tests, so contact at the station itself (incident
    connections) never blocks.
    """
    refl = 2.0 * proj - coords
    a, b = ctx.segments(coords)
    d_conn = b - a
    d_ref = refl - coords

    # orientation of connection endpoints relative to each reflection segment
    rel_a = a[None, :, :] - coords[:, None, :]
    rel_b = b[None, :, :] - coords[:, None, :]
    o1 = d_ref[:, None, 0] * rel_a[:, :, 1] - d_ref[:, None, 1] * rel_a[:, :, 0]
    o2 = d_ref[:, None, 0] * rel_b[:, :, 1] - d_ref[:, None, 1] * rel_b[:, :, 0]
    # orientation of reflection endpoints relative to each connection
    rel_v = coords[:, None, :] - a[None, :, :]
    rel_r = refl[:, None, :] - a[None, :, :]
    o3 = d_conn[None, :, 0] * rel_v[:, :, 1] - d_conn[None, :, 1] * rel_v[:, :, 0]
    o4 = d_conn[None, :, 0] * rel_r[:, :, 1] - d_conn[None, :, 1] * rel_r[:, :, 0]

    crossing = (o1 * o2 < 0.0) & (o3 * o4 < 0.0)
    return crossing.any(axis=1)


def assign_shape_stations(state: LayoutState, net: TransitNetwork,
                          shape: GuideShape,
                          weights: DeformWeights | None = None) -> LayoutState:
    """Recompute which stations trace the guide shape.

    A station joins the shape set when the segment from its position to
    its reflection over the closest shape point crosses no connection:
    nothing else lies between it and the shape.  Shape edges are the
    connections with both endpoints assigned.
    """
    ctx = _Context(net, weights.target_len if weights else None)
    assigned, _, edges = _assignment(state.coords, ctx, shape)
    return replace(
        state,
        shape_stations=frozenset(state.order[k] for k in np.flatnonzero(assigned)),
        shape_edges=frozenset(edges),
        octo_edges=frozenset(c for c in ctx.conn_ids if c not in edges),
    )


def _assignment(coords: np.ndarray, ctx: _Context, shape: GuideShape):
    _, proj, _, _ = project_on_shape(shape, coords)
    blocked = _reflection_blocked(coords, ctx, proj)
    assigned = ~blocked
    edges = [
        cid
        for cid, (i, j) in zip(ctx.conn_ids, ctx.conn_ij)
        if assigned[i] and assigned[j]
    ]
    return assigned, proj, edges


# ---------------------------------------------------------------------------
# Energy evaluation
# ---------------------------------------------------------------------------


def _angle_fans(coords: np.ndarray, ctx: _Context):
    """Consecutive neighbor pairs in circular order around each station.

    Yields (i, j, k, tau, sign): the fan target places station i at the
    apex of an isosceles triangle over base (j, k) with apex angle
    2*pi/degree(i); tau scales the perpendicular offset and sign picks
    the side station i currently lies on.
    """
    fans = []
    for i in range(ctx.n):
        nbrs = ctx.neighbors[i]
        if len(nbrs) < 2:
            continue
        rel = coords[nbrs] - coords[i]
        ang = np.arctan2(rel[:, 1], rel[:, 0])
        ordered = [nbrs[t] for t in np.lexsort((nbrs, ang))]
        deg = len(ordered)
        theta = 2.0 * math.pi / deg
        tau = math.tan((math.pi - theta) / 2.0)
        pairs = [(ordered[0], ordered[1])] if deg == 2 else [
            (ordered[t], ordered[(t + 1) % deg]) for t in range(deg)
        ]
        for j, k in pairs:
            base = coords[k] - coords[j]
            mid = 0.5 * (coords[j] + coords[k])
            side = base[0] * (coords[i][1] - mid[1]) - base[1] * (coords[i][0] - mid[0])
            sign = 1.0 if side >= 0 else -1.0
            fans.append((i, j, k, tau, sign))
    return fans


def _spacing_targets(coords: np.ndarray, ctx: _Context) -> np.ndarray:
    a, b = ctx.segments(coords)
    d = b - a
    length = np.hypot(d[:, 0], d[:, 1])
    unit = d / np.maximum(length, 1e-12)[:, None]
    return unit * ctx.conn_target[:, None]


def smooth_energy_value(coords: np.ndarray, ctx: _Context, shape: GuideShape,
                        weights: DeformWeights, assigned: np.ndarray,
                        proj: np.ndarray) -> float:
    """Smooth objective with all auxiliaries refreshed at ``coords``."""
    e = 0.0
    if weights.shape > 0 and assigned.any():
        diff = proj[assigned] - coords[assigned]
        e += weights.shape * float(
            (ctx.degrees[assigned] * (diff ** 2).sum(axis=1)).sum()
        )
    if weights.spacing > 0:
        a, b = ctx.segments(coords)
        length = np.hypot(*(b - a).T)
        e += weights.spacing * float(((length - ctx.conn_target) ** 2).sum())
    if weights.angle > 0:
        for i, j, k, tau, sign in _angle_fans(coords, ctx):
            base = coords[k] - coords[j]
            perp = sign * tau * 0.5 * np.array([-base[1], base[0]])
            apex = 0.5 * (coords[j] + coords[k]) + perp
            e += weights.angle * float(((coords[i] - apex) ** 2).sum())
    if weights.position > 0:
        e += weights.position * float(((coords - ctx.geo) ** 2).sum())
    return e


def mixed_energy_value(coords: np.ndarray, ctx: _Context,
                       weights: DeformWeights, shape_mask: np.ndarray,
                       proj: np.ndarray, octo_rows: list[tuple[int, int]],
                       sector_units: np.ndarray) -> float:
    """Mixed objective with directions refreshed at ``coords``."""
    e = 0.0
    if weights.octo > 0 and octo_rows:
        ij = np.array(octo_rows)
        d = coords[ij[:, 1]] - coords[ij[:, 0]]
        unit = d / np.maximum(np.hypot(d[:, 0], d[:, 1]), 1e-12)[:, None]
        e += weights.octo * float(((unit - sector_units) ** 2).sum())
    if weights.mixed_shape > 0 and shape_mask.any():
        diff = proj[shape_mask] - coords[shape_mask]
        e += weights.mixed_shape * float(
            (ctx.degrees[shape_mask] * (diff ** 2).sum(axis=1)).sum()
        )
    if weights.mixed_position > 0:
        e += weights.mixed_position * float(((coords - ctx.geo) ** 2).sum())
    return e


# ---------------------------------------------------------------------------
# Sparse least-squares assembly
# ---------------------------------------------------------------------------


class _System:
    def __init__(self, n_unknown: int):
        self.rows: list[int] = []
        self.cols: list[int] = []
        self.vals: list[float] = []
        self.b: list[float] = []
        self.n_unknown = n_unknown
        self._row = 0

    def add(self, entries: list[tuple[int, float]], target: float, weight: float) -> None:
        w = math.sqrt(weight)
        for col, val in entries:
            self.rows.append(self._row)
            self.cols.append(col)
            self.vals.append(val * w)
        self.b.append(target * w)
        self._row += 1

    def solve(self) -> np.ndarray:
        a = coo_matrix(
            (self.vals, (self.rows, self.cols)), shape=(self._row, self.n_unknown)
        ).tocsr()
        ata = (a.T @ a) + identity(self.n_unknown) * 1e-12
        atb = a.T @ np.array(self.b)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return spsolve(ata.tocsc(), atb)


def _build_smooth_system(coords, ctx, weights, assigned, proj, penalties) -> _System:
    sys = _System(2 * ctx.n)
    xcol = lambda i: 2 * i
    ycol = lambda i: 2 * i + 1

    if weights.shape > 0:
        for i in np.flatnonzero(assigned):
            w = weights.shape * ctx.degrees[i]
            if w <= 0:
                continue
            sys.add([(xcol(i), 1.0)], float(proj[i, 0]), w)
            sys.add([(ycol(i), 1.0)], float(proj[i, 1]), w)

    if weights.spacing > 0:
        targets = _spacing_targets(coords, ctx)
        for (i, j), t in zip(ctx.conn_ij, targets):
            sys.add([(xcol(j), 1.0), (xcol(i), -1.0)], float(t[0]), weights.spacing)
            sys.add([(ycol(j), 1.0), (ycol(i), -1.0)], float(t[1]), weights.spacing)

    if weights.angle > 0:
        for i, j, k, tau, sign in _angle_fans(coords, ctx):
            c = sign * tau * 0.5
            # residual_x = x_i - (x_j + x_k)/2 + c*(y_k - y_j)
            sys.add(
                [(xcol(i), 1.0), (xcol(j), -0.5), (xcol(k), -0.5),
                 (ycol(k), c), (ycol(j), -c)],
                0.0, weights.angle,
            )
            # residual_y = y_i - (y_j + y_k)/2 - c*(x_k - x_j)
            sys.add(
                [(ycol(i), 1.0), (ycol(j), -0.5), (ycol(k), -0.5),
                 (xcol(k), -c), (xcol(j), c)],
                0.0, weights.angle,
            )

    pos_w = max(weights.position, _ANCHOR_WEIGHT)
    for i in range(ctx.n):
        sys.add([(xcol(i), 1.0)], float(ctx.geo[i, 0]), pos_w)
        sys.add([(ycol(i), 1.0)], float(ctx.geo[i, 1]), pos_w)

    _add_penalty_rows(sys, penalties)
    return sys


def _build_mixed_system(coords, ctx, weights, shape_mask, proj,
                        octo_rows, sector_units, penalties) -> _System:
    sys = _System(2 * ctx.n)
    xcol = lambda i: 2 * i
    ycol = lambda i: 2 * i + 1

    if weights.octo > 0 and octo_rows:
        ij = np.array(octo_rows)
        d = coords[ij[:, 1]] - coords[ij[:, 0]]
        lengths = np.maximum(np.hypot(d[:, 0], d[:, 1]), 1e-12)
        for (i, j), ell, unit in zip(octo_rows, lengths, sector_units):
            inv = 1.0 / float(ell)
            sys.add([(xcol(j), inv), (xcol(i), -inv)], float(unit[0]), weights.octo)
            sys.add([(ycol(j), inv), (ycol(i), -inv)], float(unit[1]), weights.octo)

    if weights.mixed_shape > 0:
        for i in np.flatnonzero(shape_mask):
            w = weights.mixed_shape * ctx.degrees[i]
            if w <= 0:
                continue
            sys.add([(xcol(i), 1.0)], float(proj[i, 0]), w)
            sys.add([(ycol(i), 1.0)], float(proj[i, 1]), w)

    pos_w = max(weights.mixed_position, _ANCHOR_WEIGHT)
    for i in range(ctx.n):
        sys.add([(xcol(i), 1.0)], float(ctx.geo[i, 0]), pos_w)
        sys.add([(ycol(i), 1.0)], float(ctx.geo[i, 1]), pos_w)

    _add_penalty_rows(sys, penalties)
    return sys


def _octo_arrays(state: LayoutState, ctx: _Context):
    """Row indices and sector unit vectors for the frozen octo edges."""
    pos = {cid: k for k, cid in enumerate(ctx.conn_ids)}
    ids = sorted(state.octo_edges)
    rows = [tuple(ctx.conn_ij[pos[cid]]) for cid in ids]
    units = np.array(
        [[math.cos(SECTOR_ANGLES[state.sectors[cid]]),
          math.sin(SECTOR_ANGLES[state.sectors[cid]])] for cid in ids]
    ).reshape(-1, 2)
    return rows, units


def _add_penalty_rows(sys: _System, penalties) -> None:
    for idx, center, weight in penalties:
        sys.add([(2 * idx, 1.0)], float(center[0]), weight)
        sys.add([(2 * idx + 1, 1.0)], float(center[1]), weight)


# ---------------------------------------------------------------------------
# Planarity and proximity guards
# ---------------------------------------------------------------------------


def _guard_coords(prev: np.ndarray, cand: np.ndarray, ctx: _Context):
    """Revert stations whose movement created a crossing.

    Repeats until the sweep is clean; falls back to ``prev`` entirely if
    reverting cannot clear the crossings (which planar ``prev`` makes
    unreachable in practice).
    """
    coords = cand.copy()
    scale = max(float(np.abs(prev).max()), 1.0)
    moved_tol = 1e-12 * scale
    reverted: set[int] = set()
    for _ in range(ctx.n + 1):
        pairs = ctx.crossings(coords)
        if not pairs:
            return coords, sorted(reverted)
        progress = False
        for ci, cj in pairs:
            for idx in (*ctx.conn_ij[ci], *ctx.conn_ij[cj]):
                if idx in reverted:
                    continue
                if np.abs(coords[idx] - prev[idx]).max() > moved_tol:
                    coords[idx] = prev[idx]
                    reverted.add(idx)
                    progress = True
        if not progress:
            break
    return prev.copy(), sorted(range(ctx.n))


def planarity_guard(prev: LayoutState, nxt: LayoutState,
                    net: TransitNetwork) -> LayoutState:
    """Public guard over layout states; keeps ``nxt`` where it is planar."""
    ctx = _Context(net, None)
    coords, _ = _guard_coords(prev.coords, nxt.coords, ctx)
    return replace(nxt, coords=coords)


def _proximity_penalties(coords: np.ndarray, ctx: _Context) -> list:
    """Separation targets for stations too close to unrelated connections."""
    threshold = ctx.target_len / 4.0
    a, b = ctx.segments(coords)
    d = b - a
    len2 = np.maximum((d * d).sum(axis=1), 1e-24)
    rel = coords[:, None, :] - a[None, :, :]
    t = np.clip((rel * d[None, :, :]).sum(axis=2) / len2[None, :], 0.0, 1.0)
    foot = a[None, :, :] + t[:, :, None] * d[None, :, :]
    delta = coords[:, None, :] - foot
    dist = np.hypot(delta[:, :, 0], delta[:, :, 1])
    incident = np.zeros((ctx.n, len(ctx.conn_ids)), dtype=bool)
    for c, (i, j) in enumerate(ctx.conn_ij):
        incident[i, c] = incident[j, c] = True
    close = (dist < threshold) & ~incident
    penalties = []
    for i, c in zip(*np.nonzero(close)):
        gap = delta[i, c]
        norm = dist[i, c]
        if norm < 1e-12:
            seg = d[c]
            n_hat = np.array([-seg[1], seg[0]])
            n_hat /= max(np.hypot(*n_hat), 1e-12)
        else:
            n_hat = gap / norm
        target = foot[i, c] + n_hat * threshold
        penalties.append((int(i), target, _PROXIMITY_WEIGHT))
    return penalties


# ---------------------------------------------------------------------------
# Stage runners
# ---------------------------------------------------------------------------


def smooth_energy(state: LayoutState, net: TransitNetwork, shape: GuideShape,
                  weights: DeformWeights | None = None) -> float:
    """Smooth objective of a state, with the assignment recomputed there."""
    weights = weights or DeformWeights()
    ctx = _Context(net, weights.target_len)
    assigned, proj, _ = _assignment(state.coords, ctx, shape)
    return smooth_energy_value(state.coords, ctx, shape, weights, assigned, proj)


def smooth_step(state: LayoutState, net: TransitNetwork, shape: GuideShape,
                weights: DeformWeights | None = None) -> LayoutState:
    """One linearized solve from ``state`` with the planarity guard applied."""
    weights = weights or DeformWeights()
    ctx = _Context(net, weights.target_len)
    assigned, proj, edges = _assignment(state.coords, ctx, shape)
    penalties = _proximity_penalties(state.coords, ctx)
    sys = _build_smooth_system(state.coords, ctx, weights, assigned, proj, penalties)
    cand = sys.solve().reshape(-1, 2)
    coords, _ = _guard_coords(state.coords, cand, ctx)
    assigned2, proj2, edges2 = _assignment(coords, ctx, shape)
    energy = smooth_energy_value(coords, ctx, shape, weights, assigned2, proj2)
    return replace(
        state,
        coords=coords,
        shape_stations=frozenset(state.order[k] for k in np.flatnonzero(assigned2)),
        shape_edges=frozenset(edges2),
        octo_edges=frozenset(c for c in ctx.conn_ids if c not in edges2),
        iteration=state.iteration + 1,
        energy=energy,
    )


def _descent_loop(start_coords, ctx, energy_at, solve_from, max_iter, tol,
                  keep_history):
    """Shared accept/damp/terminate skeleton for both stages.

    ``energy_at(coords)`` evaluates the stage objective with auxiliaries
    refreshed; ``solve_from(coords, penalties)`` returns the next raw
    solution.  Candidates that raise the objective are damped toward the
    current iterate and the loop stops when none is acceptable.
    """
    coords = start_coords.copy()
    energy = energy_at(coords)
    history = [energy]
    snapshots = [coords.copy()] if keep_history else []
    holds: list[tuple[int, np.ndarray, int]] = []
    iteration = 0

    for _ in range(max_iter):
        penalties = _proximity_penalties(coords, ctx)
        penalties += [(idx, center, _HOLD_WEIGHT) for idx, center, ttl in holds]
        raw = solve_from(coords, penalties)

        accepted = None
        cand = raw
        for _ in range(4):
            guarded, reverted = _guard_coords(coords, cand, ctx)
            cand_energy = energy_at(guarded)
            if cand_energy <= energy:
                accepted = (guarded, cand_energy, reverted)
                break
            cand = 0.5 * (cand + coords)
        if accepted is None:
            break

        new_coords, new_energy, reverted = accepted
        holds = [(i, c, ttl - 1) for i, c, ttl in holds if ttl > 1]
        holds += [(idx, coords[idx].copy(), _HOLD_TTL) for idx in reverted]
        change = abs(energy - new_energy) / max(abs(energy), 1e-12)
        coords, energy = new_coords, new_energy
        iteration += 1
        history.append(energy)
        if keep_history:
            snapshots.append(coords.copy())
        if change < tol:
            break

    return coords, energy, history, snapshots, iteration


def run_smooth(net: TransitNetwork, shape: GuideShape,
               weights: DeformWeights | None = None,
               max_iter: int = 100, tol: float = 1e-4,
               keep_history: bool = False) -> LayoutState:
    """Iterate smooth steps until the energy settles.

    The shape assignment is recomputed every iteration; each accepted
    iterate is planar and its energy never exceeds the previous one.
    """
    weights = weights or DeformWeights()
    ctx = _Context(net, weights.target_len)

    def energy_at(coords):
        assigned, proj, _ = _assignment(coords, ctx, shape)
        return smooth_energy_value(coords, ctx, shape, weights, assigned, proj)

    def solve_from(coords, penalties):
        assigned, proj, _ = _assignment(coords, ctx, shape)
        sys = _build_smooth_system(coords, ctx, weights, assigned, proj, penalties)
        return sys.solve().reshape(-1, 2)

    coords, energy, history, snapshots, iters = _descent_loop(
        ctx.geo, ctx, energy_at, solve_from, max_iter, tol, keep_history
    )
    assigned, proj, edges = _assignment(coords, ctx, shape)
    return LayoutState(
        order=ctx.order,
        coords=coords,
        shape_stations=frozenset(ctx.order[k] for k in np.flatnonzero(assigned)),
        shape_edges=frozenset(edges),
        octo_edges=frozenset(c for c in ctx.conn_ids if c not in edges),
        iteration=iters,
        energy=energy,
        energy_history=tuple(history),
        snapshots=tuple(snapshots),
    )


# ---------------------------------------------------------------------------
# Octolinear sector assignment
# ---------------------------------------------------------------------------


def optimal_sector_assignment(angles: np.ndarray) -> np.ndarray:
    """Distinct sectors for up to eight edge angles minimizing total rotation."""
    angles = np.asarray(angles, dtype=float)
    if len(angles) > SECTOR_COUNT:
        raise ValueError("more than eight edges cannot get distinct sectors")
    cost = wrap_angle_diff(angles[:, None], SECTOR_ANGLES[None, :])
    rows, cols = linear_sum_assignment(cost)
    out = np.empty(len(angles), dtype=int)
    out[rows] = cols
    return out


def assign_octolinear_sectors(state: LayoutState, net: TransitNetwork) -> LayoutState:
    """Give every non-shape connection an octolinear sector.

    Each edge starts at its nearest sector; stations with duplicated
    outgoing sectors get their incident edges reassigned by minimum-cost
    assignment, swept until stable.
    """
    ctx = _Context(net, None)
    octo_ids = [c for c in ctx.conn_ids if c not in state.shape_edges]
    pos = {cid: k for k, cid in enumerate(ctx.conn_ids)}

    def canonical_angle(cid: str) -> float:
        i, j = ctx.conn_ij[pos[cid]]
        d = state.coords[j] - state.coords[i]
        return math.atan2(d[1], d[0]) % (2.0 * math.pi)

    sectors = {
        cid: int(round(canonical_angle(cid) / SECTOR_STEP)) % SECTOR_COUNT
        for cid in octo_ids
    }

    incident: dict[str, list[str]] = {sid: [] for sid in ctx.order}
    for cid in octo_ids:
        conn = net.connections[cid]
        incident[conn.a].append(cid)
        incident[conn.b].append(cid)

    def outward(cid: str, sid: str, sector: int) -> int:
        return sector if net.connections[cid].a == sid else (sector + 4) % SECTOR_COUNT

    station_order = sorted(ctx.order, key=lambda s: (-len(incident[s]), s))
    for _ in range(10):
        changed = False
        for sid in station_order:
            edges = incident[sid]
            if len(edges) < 2:
                continue
            occupied = [outward(c, sid, sectors[c]) for c in edges]
            if len(set(occupied)) == len(occupied):
                continue
            out_angles = []
            for cid in edges:
                ang = canonical_angle(cid)
                if net.connections[cid].a != sid:
                    ang = (ang + math.pi) % (2.0 * math.pi)
                out_angles.append(ang)
            assigned = optimal_sector_assignment(np.array(out_angles))
            for cid, sector_out in zip(edges, assigned):
                canonical = (
                    int(sector_out)
                    if net.connections[cid].a == sid
                    else (int(sector_out) + 4) % SECTOR_COUNT
                )
                if sectors[cid] != canonical:
                    sectors[cid] = canonical
                    changed = True
        if not changed:
            break

    return replace(state, octo_edges=frozenset(octo_ids), sectors=sectors)


# ---------------------------------------------------------------------------
# Mixed stage
# ---------------------------------------------------------------------------


def run_mixed(state: LayoutState, net: TransitNetwork, shape: GuideShape,
              weights: DeformWeights | None = None,
              max_iter: int = 50, tol: float = 1e-4,
              keep_history: bool = False) -> LayoutState:
    """Rotate octolinear edges onto their sectors while shape edges keep
    tracing the guide; starts from a smooth state with sectors assigned."""
    weights = weights or DeformWeights()
    if not state.sectors and state.octo_edges:
        state = assign_octolinear_sectors(state, net)
    ctx = _Context(net, weights.target_len)

    shape_mask = np.zeros(ctx.n, dtype=bool)
    for sid in state.shape_stations:
        shape_mask[ctx.index[sid]] = True
    octo_rows, sector_units = _octo_arrays(state, ctx)

    def energy_at(coords):
        _, proj, _, _ = project_on_shape(shape, coords)
        return mixed_energy_value(
            coords, ctx, weights, shape_mask, proj, octo_rows, sector_units
        )

    def solve_from(coords, penalties):
        _, proj, _, _ = project_on_shape(shape, coords)
        sys = _build_mixed_system(
            coords, ctx, weights, shape_mask, proj, octo_rows, sector_units, penalties
        )
        return sys.solve().reshape(-1, 2)

    coords, energy, history, snapshots, iters = _descent_loop(
        state.coords, ctx, energy_at, solve_from, max_iter, tol, keep_history
    )
    return replace(
        state,
        coords=coords,
        iteration=iters,
        energy=energy,
        energy_history=tuple(history),
        snapshots=tuple(snapshots),
    )
