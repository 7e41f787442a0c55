"""Command line driver.

    metroshape NETWORK SHAPE [options]

Reads a network document and a shape document, runs the pipeline up to
the requested stage and writes the SVG, the layout document and the run
report.  Exit codes: 0 success, 1 stage error, 2 input error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import deformation, formats, gridfit, pipeline, svg


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="metroshape",
        description="Embed a guide shape into a transit map layout.",
    )
    p.add_argument("network", help="network document")
    p.add_argument("shape", help="guide shape document")
    p.add_argument("--out", metavar="FILE", help="write the final SVG here")
    p.add_argument("--layout-out", metavar="FILE", help="write the layout document here")
    p.add_argument("--report", metavar="FILE", help="write the run report here (default: stdout)")
    p.add_argument("--stage", choices=("smooth", "mixed", "grid"), default="grid",
                   help="terminal pipeline stage (default: grid)")
    p.add_argument("--manual-route", metavar="IDS",
                   help="comma separated station ids defining the matched path")
    p.add_argument("--route-window", type=float, metavar="F",
                   help="restrict start stations to the shape bbox inflated by F")
    p.add_argument("--samples", type=int, default=64,
                   help="samples per curve for the similarity measure (default 64)")
    p.add_argument("--dummy-threshold", type=float, default=pipeline.DUMMY_THRESHOLD_FACTOR,
                   metavar="F", help="dummy edge range, times the mean edge length")
    p.add_argument("--emit-stages", metavar="DIR",
                   help="write intermediate layouts and SVGs into DIR")
    p.add_argument("--no-shape-overlay", action="store_true",
                   help="omit the gray guide shape from the SVG")

    w = p.add_argument_group("deformation weights")
    w.add_argument("--w-c", type=float, default=4.0, help="smooth shape weight")
    w.add_argument("--w-l", type=float, default=1.0, help="smooth spacing weight")
    w.add_argument("--w-a", type=float, default=2.0, help="smooth angle weight")
    w.add_argument("--w-p", type=float, default=0.16, help="smooth position weight")
    w.add_argument("--w-o", type=float, default=2.0, help="mixed sector weight")
    w.add_argument("--mixed-w-p", type=float, default=0.1, help="mixed position weight")
    w.add_argument("--mixed-w-c", type=float, default=10.0, help="mixed shape weight")
    w.add_argument("--target-len", type=float, help="target edge length override")

    g = p.add_argument_group("grid alignment")
    g.add_argument("--grid-factor", type=float, metavar="F",
                   help="cell size factor (default 0.3; 0.2 above 150 stations)")
    g.add_argument("--c-hop", type=float, default=20.0, help="grid hop cost")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    try:
        net = formats.parse_network(Path(args.network).read_text())
        shape = formats.parse_shape(Path(args.shape).read_text())
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (formats.FormatError, formats.IntegrityError, ValueError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2

    weights = deformation.DeformWeights(
        shape=args.w_c, spacing=args.w_l, angle=args.w_a, position=args.w_p,
        octo=args.w_o, mixed_position=args.mixed_w_p, mixed_shape=args.mixed_w_c,
        target_len=args.target_len,
    )
    grid_cfg = None
    if args.grid_factor is not None or args.c_hop != 20.0:
        grid_cfg = gridfit.GridConfig(
            cell_factor=args.grid_factor if args.grid_factor is not None else 0.3,
            hop_cost=args.c_hop,
        )
    cfg = pipeline.PipelineConfig(
        stage=args.stage,
        weights=weights,
        grid=grid_cfg,
        samples=args.samples,
        dummy_threshold_factor=args.dummy_threshold,
        manual_route=tuple(args.manual_route.split(",")) if args.manual_route else None,
        route_window=args.route_window,
    )

    try:
        result = pipeline.run_pipeline(net, shape, cfg)
    except pipeline.PipelineError as exc:
        print(f"stage error: {exc}", file=sys.stderr)
        return 1

    if args.emit_stages:
        _emit_stages(result, Path(args.emit_stages), not args.no_shape_overlay)

    positions, paths, failed = _final_artifacts(result)
    if args.out:
        Path(args.out).write_text(svg.emit_svg(
            result.network, positions, paths, result.shape,
            failed=failed, show_shape=not args.no_shape_overlay,
        ))
    if args.layout_out:
        Path(args.layout_out).write_text(formats.emit_layout(positions, paths))

    text = result.report.to_text()
    if args.report:
        Path(args.report).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def _final_artifacts(result):
    if result.grid is not None:
        return (
            result.grid.positions,
            result.grid.connection_paths,
            result.grid.failed_connections,
        )
    state = result.mixed or result.smooth
    positions = {
        sid: (float(x), float(y))
        for sid, (x, y) in zip(state.order, state.coords)
    }
    return positions, None, ()


def _emit_stages(result, directory: Path, show_shape: bool) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    stages = [("smooth", result.smooth)]
    if result.mixed is not None:
        stages.append(("mixed", result.mixed))
    for name, state in stages:
        positions = {
            sid: (float(x), float(y))
            for sid, (x, y) in zip(state.order, state.coords)
        }
        (directory / f"{name}.layout").write_text(formats.emit_layout(positions))
        (directory / f"{name}.svg").write_text(svg.emit_svg(
            result.network, positions, None, result.shape, show_shape=show_shape,
        ))
    if result.grid is not None:
        positions, paths, failed = _final_artifacts(result)
        (directory / "grid.layout").write_text(formats.emit_layout(positions, paths))
        (directory / "grid.svg").write_text(svg.emit_svg(
            result.network, positions, paths, result.shape,
            failed=failed, show_shape=show_shape,
        ))


if __name__ == "__main__":
    raise SystemExit(main())
