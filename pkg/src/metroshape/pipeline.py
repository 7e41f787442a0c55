"""End-to-end driver: normalize, match, deform, align, report.

Runs the full stack over parsed inputs and collects per-stage wall
times, iteration counts, final energies, the shape-fidelity score of
the traced chain, the octolinearity fraction of the routed output and
the number of edges that could not be routed.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import deformation, gridfit, matching, model
from .geometry import GuideShape, Polyline, coupling_distances, direction_profile
from .model import TransitNetwork

DUMMY_THRESHOLD_FACTOR = 1.2  # dummy shortcut range, times mean edge length


class PipelineError(Exception):
    """A stage failed; carries the stage name."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


@dataclass(frozen=True)
class PipelineConfig:
    stage: str = "grid"  # terminal stage: smooth | mixed | grid
    weights: deformation.DeformWeights = field(
        default_factory=deformation.DeformWeights
    )
    grid: gridfit.GridConfig | None = None  # None: pick cell factor by size
    samples: int = 64
    dummy_threshold_factor: float = DUMMY_THRESHOLD_FACTOR
    dummy_penalty: float = matching.DUMMY_PENALTY
    manual_route: tuple[str, ...] | None = None
    route_window: float | None = None  # restrict starts to the inflated shape bbox
    smooth_max_iter: int = 100
    mixed_max_iter: int = 50
    tol: float = 1e-4
    keep_history: bool = False

    def __post_init__(self) -> None:
        if self.stage not in ("smooth", "mixed", "grid"):
            raise ValueError("stage must be smooth, mixed or grid")


@dataclass
class RunReport:
    stage_seconds: dict[str, float] = field(default_factory=dict)
    iterations: dict[str, int] = field(default_factory=dict)
    energies: dict[str, float] = field(default_factory=dict)
    shape_fidelity: float | None = None
    shape_fidelity_geographic: float | None = None
    octolinearity: float | None = None
    excluded_fraction: float | None = None
    failed_edges: int = 0
    total_seconds: float = 0.0

    def to_text(self) -> str:
        out = []
        for stage, secs in self.stage_seconds.items():
            out.append(f"stage.{stage}.seconds {secs:.3f}")
        for stage, n in self.iterations.items():
            out.append(f"stage.{stage}.iterations {n}")
        for stage, e in self.energies.items():
            out.append(f"stage.{stage}.energy {e:.6f}")
        if self.shape_fidelity is not None:
            out.append(f"metric.shape_fidelity {self.shape_fidelity:.6f}")
        if self.shape_fidelity_geographic is not None:
            out.append(
                "metric.shape_fidelity_geographic "
                f"{self.shape_fidelity_geographic:.6f}"
            )
        if self.octolinearity is not None:
            out.append(f"metric.octolinearity {self.octolinearity:.6f}")
        if self.excluded_fraction is not None:
            out.append(f"metric.excluded_fraction {self.excluded_fraction:.6f}")
        out.append(f"metric.failed_edges {self.failed_edges}")
        out.append(f"total.seconds {self.total_seconds:.3f}")
        return "\n".join(out) + "\n"


@dataclass
class PipelineResult:
    report: RunReport
    network: TransitNetwork           # normalized layout network
    shape: GuideShape                 # placed shape
    route: matching.MatchedRoute
    smooth: deformation.LayoutState
    mixed: deformation.LayoutState | None = None
    grid: gridfit.GridLayout | None = None


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def shape_chain(state: deformation.LayoutState, shape: GuideShape,
                coords: np.ndarray | None = None) -> Polyline | None:
    """Polyline through the shape stations ordered along the shape.

    Stations are sorted by the arc position of their closest shape point
    in the state's coordinates; ``coords`` optionally substitutes other
    positions for the same station order.
    """
    ids = sorted(state.shape_stations)
    if len(ids) < 2:
        return None
    idx = [state.order.index(s) for s in ids]
    from .geometry import project_on_shape

    _, _, poly, frac = project_on_shape(shape, state.coords[idx])
    ordering = np.lexsort((np.array(ids), frac, poly))
    source = state.coords if coords is None else coords
    pts = [source[idx[k]] for k in ordering]
    dedup = [pts[0]]
    for p in pts[1:]:
        if np.hypot(*(p - dedup[-1])) > 1e-12:
            dedup.append(p)
    if len(dedup) < 2:
        return None
    return Polyline(np.array(dedup))


def shape_fidelity(state: deformation.LayoutState, shape: GuideShape,
                   coords: np.ndarray | None = None,
                   samples: int = 64) -> float | None:
    """Distance between the traced shape-station chain and the shape."""
    chain = shape_chain(state, shape, coords)
    if chain is None:
        return None
    w = direction_profile(chain, samples).angles
    p = direction_profile(shape.anchor, samples).angles
    return float(coupling_distances(w, p)[0])


def octolinearity_metrics(grid: gridfit.GridLayout,
                          shape_edges: frozenset[str]) -> tuple[float | None, float]:
    """(fraction of octo segments on 45-degree multiples, excluded share).

    Segments touching a spliced shape sink are excluded from the
    octolinearity fraction; their share is measured against all routed
    segments.
    """
    shape_pos = grid.shape_sink_positions

    def touches_shape_sink(p) -> bool:
        if len(shape_pos) == 0:
            return False
        return bool(
            np.min(np.hypot(shape_pos[:, 0] - p[0], shape_pos[:, 1] - p[1])) < 1e-6
        )

    length_floor = grid.cell_size * 1e-6
    on = off = excluded = total = 0
    for cid, path in grid.connection_paths.items():
        if cid in grid.failed_connections:
            continue
        is_octo = cid not in shape_edges
        for a, b in zip(path[:-1], path[1:]):
            dx, dy = abs(b[0] - a[0]), abs(b[1] - a[1])
            if max(dx, dy) < length_floor:
                continue  # degenerate stub, no direction
            total += 1
            if not is_octo:
                continue
            if touches_shape_sink(a) or touches_shape_sink(b):
                excluded += 1
                continue
            scale = max(dx, dy)
            if dx / scale < 1e-6 or dy / scale < 1e-6 or abs(dx - dy) / scale < 1e-6:
                on += 1
            else:
                off += 1
    fraction = on / (on + off) if (on + off) else None
    excluded_share = excluded / total if total else 0.0
    return fraction, excluded_share


def metrics_report(result: PipelineResult, samples: int = 64) -> RunReport:
    """Fill the report's quality metrics from the pipeline artifacts."""
    report = result.report
    state = result.mixed or result.smooth
    net = result.network
    geo = net.coords(state.order)
    if result.grid is not None:
        final = np.array([result.grid.positions[s] for s in state.order])
        report.shape_fidelity = shape_fidelity(state, result.shape, final, samples)
        octo, excluded = octolinearity_metrics(result.grid, state.shape_edges)
        report.octolinearity = octo
        report.excluded_fraction = excluded
        report.failed_edges = len(result.grid.failed_connections)
    else:
        report.shape_fidelity = shape_fidelity(state, result.shape, None, samples)
    report.shape_fidelity_geographic = shape_fidelity(
        state, result.shape, geo, samples
    )
    return report


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------


def _grid_config(net: TransitNetwork, cfg: PipelineConfig) -> gridfit.GridConfig:
    if cfg.grid is not None:
        return cfg.grid
    factor = 0.2 if len(net.stations) > 150 else 0.3
    return gridfit.GridConfig(cell_factor=factor)


def run_pipeline(net: TransitNetwork, shape: GuideShape,
                 cfg: PipelineConfig | None = None) -> PipelineResult:
    cfg = cfg or PipelineConfig()
    report = RunReport()
    t_start = time.perf_counter()

    def timed(stage):
        class _Timer:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, exc_type, exc, tb):
                report.stage_seconds[stage] = time.perf_counter() - self.t0
                return False

        return _Timer()

    # normalization
    with timed("normalize"):
        problems = model.validate(net)
        if problems:
            raise PipelineError("normalize", "; ".join(problems))
        mean_len = net.average_connection_length()
        try:
            layout_net = model.planarize(net)
        except ValueError as exc:
            raise PipelineError("normalize", str(exc))
        layout_net = model.split_high_degree(layout_net)

    # route matching
    with timed("route"):
        try:
            if cfg.manual_route:
                route = matching.manual_route(
                    layout_net, cfg.manual_route, shape, cfg.samples
                )
            else:
                matching_net = model.insert_dummy_edges(
                    layout_net, cfg.dummy_threshold_factor * mean_len
                )
                starts = None
                if cfg.route_window is not None:
                    lo, hi = shape.bbox()
                    center = (lo + hi) / 2.0
                    half = (hi - lo) / 2.0 * cfg.route_window
                    starts = [
                        sid for sid, s in matching_net.stations.items()
                        if abs(s.pos[0] - center[0]) <= half[0]
                        and abs(s.pos[1] - center[1]) <= half[1]
                    ]
                route = matching.match_route(
                    matching_net, shape, cfg.samples, cfg.dummy_penalty, starts
                )
            placed = matching.place_shape(shape, route, layout_net)
        except (matching.MatchError, ValueError, KeyError) as exc:
            raise PipelineError("route", str(exc))

    weights = cfg.weights
    if weights.target_len is None:
        weights = deformation.DeformWeights(
            shape=weights.shape, spacing=weights.spacing, angle=weights.angle,
            position=weights.position, octo=weights.octo,
            mixed_position=weights.mixed_position, mixed_shape=weights.mixed_shape,
            target_len=mean_len,
        )

    with timed("smooth"):
        smooth = deformation.run_smooth(
            layout_net, placed, weights,
            max_iter=cfg.smooth_max_iter, tol=cfg.tol,
            keep_history=cfg.keep_history,
        )
    report.iterations["smooth"] = smooth.iteration
    report.energies["smooth"] = smooth.energy

    result = PipelineResult(
        report=report, network=layout_net, shape=placed, route=route, smooth=smooth
    )
    if cfg.stage == "smooth":
        report.total_seconds = time.perf_counter() - t_start
        metrics_report(result, cfg.samples)
        return result

    with timed("mixed"):
        mixed = deformation.assign_octolinear_sectors(smooth, layout_net)
        mixed = deformation.run_mixed(
            mixed, layout_net, placed, weights,
            max_iter=cfg.mixed_max_iter, tol=cfg.tol,
            keep_history=cfg.keep_history,
        )
    report.iterations["mixed"] = mixed.iteration
    report.energies["mixed"] = mixed.energy
    result.mixed = mixed
    if cfg.stage == "mixed":
        report.total_seconds = time.perf_counter() - t_start
        metrics_report(result, cfg.samples)
        return result

    with timed("grid"):
        try:
            grid_layout = gridfit.align_layout(
                mixed, layout_net, placed, _grid_config(layout_net, cfg)
            )
        except gridfit.GridError as exc:
            raise PipelineError("grid", str(exc))
    result.grid = grid_layout

    report.total_seconds = time.perf_counter() - t_start
    metrics_report(result, cfg.samples)
    return result
