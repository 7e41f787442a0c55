"""Shape-guided mixed metro map layout.

Embeds a user-defined guide shape into a transit network: a matched
route places the shape, a two-stage least-squares deformation traces it
while straightening the rest of the map, and a grid alignment pass
snaps every connection onto an octolinear grid with the shape spliced
in.
"""

from .deformation import (
    DeformWeights,
    LayoutState,
    assign_octolinear_sectors,
    assign_shape_stations,
    run_mixed,
    run_smooth,
)
from .geometry import (
    GuideShape,
    MatchResult,
    Polyline,
    bbox_align,
    integral_frechet,
    partial_frechet,
    resample,
    segments_intersect,
)
from .gridfit import GridConfig, GridLayout, align_layout
from .matching import MatchedRoute, MatchError, grow_path, manual_route, match_route, place_shape
from .model import (
    Connection,
    Line,
    Station,
    TransitNetwork,
    insert_dummy_edges,
    planarize,
    split_high_degree,
    validate,
)
from .pipeline import PipelineConfig, PipelineError, RunReport, run_pipeline

__version__ = "0.1.0"

__all__ = [
    "Connection",
    "DeformWeights",
    "GridConfig",
    "GridLayout",
    "GuideShape",
    "LayoutState",
    "Line",
    "MatchError",
    "MatchResult",
    "MatchedRoute",
    "PipelineConfig",
    "PipelineError",
    "Polyline",
    "RunReport",
    "Station",
    "TransitNetwork",
    "align_layout",
    "assign_octolinear_sectors",
    "assign_shape_stations",
    "bbox_align",
    "grow_path",
    "insert_dummy_edges",
    "integral_frechet",
    "manual_route",
    "match_route",
    "partial_frechet",
    "place_shape",
    "planarize",
    "resample",
    "run_mixed",
    "run_pipeline",
    "run_smooth",
    "segments_intersect",
    "split_high_degree",
    "validate",
]
