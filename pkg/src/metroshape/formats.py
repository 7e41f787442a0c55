"""Line-oriented text formats for networks, shapes and layouts.

Network documents::

    # comment
    station <id> <x> <y> [name ...]
    connection <id> <from> <to> <line,line|->
    line <id> <color> <station,station,...>

Shape documents::

    shape open|closed
    <x> <y>
    ...

Floats round-trip exactly (shortest repr), so ``parse(emit(net)) == net``
and emitted documents are byte-stable.
"""

from __future__ import annotations

import numpy as np

from .geometry import GuideShape, Polyline
from .model import (
    Connection,
    ConnectionKind,
    Line,
    Station,
    StationKind,
    TransitNetwork,
    validate,
)


class FormatError(Exception):
    """Malformed document; carries the offending line number."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class IntegrityError(Exception):
    """Syntactically valid document with referential violations."""

    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


def _fmt(x: float) -> str:
    return repr(float(x))


# ---------------------------------------------------------------------------
# Networks
# ---------------------------------------------------------------------------


def parse_network(text: str) -> TransitNetwork:
    stations: list[Station] = []
    connections: list[Connection] = []
    lines: list[Line] = []
    seen_ids: set[tuple[str, str]] = set()

    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        parts = body.split()
        keyword = parts[0].lower()
        if keyword == "station":
            if len(parts) < 4:
                raise FormatError(lineno, "station needs: id x y [name]")
            sid = parts[1]
            try:
                x, y = float(parts[2]), float(parts[3])
            except ValueError:
                raise FormatError(lineno, f"bad coordinates {parts[2]!r} {parts[3]!r}")
            if ("station", sid) in seen_ids:
                raise IntegrityError([f"duplicate station id {sid!r}"])
            seen_ids.add(("station", sid))
            stations.append(Station(sid, (x, y), name=" ".join(parts[4:])))
        elif keyword == "connection":
            if len(parts) != 5:
                raise FormatError(lineno, "connection needs: id from to lines")
            cid, a, b, linespec = parts[1:5]
            if ("connection", cid) in seen_ids:
                raise IntegrityError([f"duplicate connection id {cid!r}"])
            seen_ids.add(("connection", cid))
            line_ids = frozenset() if linespec == "-" else frozenset(linespec.split(","))
            kind = ConnectionKind.REAL if line_ids else ConnectionKind.SHORTCUT
            connections.append(Connection(cid, a, b, line_ids, kind))
        elif keyword == "line":
            if len(parts) != 4:
                raise FormatError(lineno, "line needs: id color stations")
            lid, color, stationspec = parts[1:4]
            if ("line", lid) in seen_ids:
                raise IntegrityError([f"duplicate line id {lid!r}"])
            seen_ids.add(("line", lid))
            lines.append(Line(lid, color, tuple(stationspec.split(","))))
        else:
            raise FormatError(lineno, f"unknown keyword {parts[0]!r}")

    net = TransitNetwork.build(stations, connections, lines)
    problems = validate(net)
    if problems:
        raise IntegrityError(problems)
    return net


def emit_network(net: TransitNetwork) -> str:
    out = []
    for s in net.stations.values():
        entry = f"station {s.id} {_fmt(s.pos[0])} {_fmt(s.pos[1])}"
        if s.name:
            entry += f" {s.name}"
        out.append(entry)
    for c in net.connections.values():
        linespec = ",".join(sorted(c.lines)) if c.lines else "-"
        out.append(f"connection {c.id} {c.a} {c.b} {linespec}")
    for l in net.lines.values():
        out.append(f"line {l.id} {l.color} {','.join(l.stations)}")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Shapes
# ---------------------------------------------------------------------------


def parse_shape(text: str) -> GuideShape:
    polylines: list[Polyline] = []
    points: list[tuple[float, float]] = []
    closed = False
    started = False

    def flush(lineno: int) -> None:
        nonlocal points
        if not started:
            return
        if len(points) < 2:
            raise FormatError(lineno, "polyline needs at least two points")
        polylines.append(Polyline(np.array(points), closed))
        points = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        parts = body.split()
        if parts[0].lower() == "shape":
            if len(parts) != 2 or parts[1] not in ("open", "closed"):
                raise FormatError(lineno, "shape needs: open|closed")
            flush(lineno)
            closed = parts[1] == "closed"
            started = True
        else:
            if not started:
                raise FormatError(lineno, "point before any 'shape' header")
            if len(parts) != 2:
                raise FormatError(lineno, "point needs: x y")
            try:
                points.append((float(parts[0]), float(parts[1])))
            except ValueError:
                raise FormatError(lineno, f"bad point {body!r}")
    flush(len(text.splitlines()) + 1)
    if not polylines:
        raise FormatError(1, "empty shape document")
    return GuideShape(tuple(polylines))


def emit_shape(shape: GuideShape) -> str:
    out = []
    for p in shape.polylines:
        out.append(f"shape {'closed' if p.closed else 'open'}")
        for x, y in p.vertices:
            out.append(f"{_fmt(x)} {_fmt(y)}")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Layouts
# ---------------------------------------------------------------------------


def emit_layout(positions: dict[str, tuple[float, float]],
                paths: dict[str, np.ndarray] | None = None) -> str:
    """Station positions plus optional per-connection polylines."""
    out = []
    for sid, (x, y) in positions.items():
        out.append(f"station {sid} {_fmt(x)} {_fmt(y)}")
    for cid, pts in (paths or {}).items():
        coords = " ".join(f"{_fmt(x)} {_fmt(y)}" for x, y in pts)
        out.append(f"path {cid} {coords}")
    return "\n".join(out) + "\n"
