"""World map model and the line-oriented map file format.

Format (version 1), one record per line, ``#`` comments and blank lines
allowed. Distances in meters, durations in seconds, headings in radians:

    sraf-map 1
    anchor <lat0> <lon0>
    lane <id> <width> <x0> <y0> <x1> <y1> [...]
    route <id> <x0> <y0> <x1> <y1> [...]
    light <id> <x> <y> <sx0> <sy0> <sx1> <sy1> <green> <yellow> <red> [<offset>]
    crosswalk <id> <x0> <y0> <x1> <y1>
    obstacle <id> <cx> <cy> <heading> <hx> <hy>
    stopsign <id> <sx0> <sy0> <sx1> <sy1>
    actor <kind> <cruise_speed> <x0> <y0> <x1> <y1> [...]

``actor`` records declare NPC spawn paths (kinds CAR, TRUCK, CYCLIST,
PEDESTRIAN); ``anchor`` sets the GNSS origin (defaults to 0, 0). Both are
harness extensions to the five core record types.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from ..errors import MapFormatError, MapInvariantError
from .geometry import cumulative_lengths, polyline_point_distance

MAP_HEADER = "sraf-map 1"
MAX_WAYPOINT_GAP_M = 10.0


class ActorKind(Enum):
    EGO = "EGO"
    CAR = "CAR"
    TRUCK = "TRUCK"
    CYCLIST = "CYCLIST"
    PEDESTRIAN = "PEDESTRIAN"
    DEBRIS = "DEBRIS"


# Default footprint half-extents (length, width) per actor kind.
KIND_HALF_EXTENTS = {
    ActorKind.EGO: (2.2, 0.9),
    ActorKind.CAR: (2.2, 0.9),
    ActorKind.TRUCK: (4.0, 1.3),
    ActorKind.CYCLIST: (0.9, 0.4),
    ActorKind.PEDESTRIAN: (0.3, 0.3),
    ActorKind.DEBRIS: (0.8, 0.8),
}


@dataclass(frozen=True)
class Lane:
    id: str
    width: float
    pts: np.ndarray  # (N, 2)


@dataclass(frozen=True)
class RouteDef:
    id: str
    waypoints: np.ndarray  # (N, 2)


class LightPhase(Enum):
    GREEN = "GREEN"
    YELLOW = "YELLOW"
    RED = "RED"


@dataclass(frozen=True)
class TrafficLight:
    id: str
    pos: tuple[float, float]
    stop_a: tuple[float, float]
    stop_b: tuple[float, float]
    green_s: float
    yellow_s: float
    red_s: float
    offset_s: float = 0.0

    @property
    def cycle_s(self) -> float:
        return self.green_s + self.yellow_s + self.red_s

    def phase_at(self, t: float) -> LightPhase:
        tau = (t + self.offset_s) % self.cycle_s
        if tau < self.green_s:
            return LightPhase.GREEN
        if tau < self.green_s + self.yellow_s:
            return LightPhase.YELLOW
        return LightPhase.RED


@dataclass(frozen=True)
class Crosswalk:
    id: str
    a: tuple[float, float]
    b: tuple[float, float]


@dataclass(frozen=True)
class StaticObstacle:
    id: str
    cx: float
    cy: float
    heading: float
    hx: float
    hy: float


@dataclass(frozen=True)
class StopSign:
    id: str
    a: tuple[float, float]
    b: tuple[float, float]


@dataclass(frozen=True)
class NpcSpawn:
    kind: ActorKind
    cruise_speed: float
    path: np.ndarray  # (N, 2)


@dataclass(frozen=True)
class WorldMap:
    name: str
    lanes: tuple[Lane, ...]
    routes: tuple[RouteDef, ...]
    lights: tuple[TrafficLight, ...]
    crosswalks: tuple[Crosswalk, ...]
    obstacles: tuple[StaticObstacle, ...]
    stop_signs: tuple[StopSign, ...] = ()
    npc_spawns: tuple[NpcSpawn, ...] = ()
    anchor: tuple[float, float] = (0.0, 0.0)

    def route(self, route_id: str) -> RouteDef:
        for r in self.routes:
            if r.id == route_id:
                return r
        raise MapInvariantError(f"route {route_id!r} not found in map {self.name!r}")


def _floats(parts: list[str], path: str, line_no: int) -> list[float]:
    try:
        return [float(p) for p in parts]
    except ValueError as exc:
        raise MapFormatError(path, line_no, f"expected numeric fields: {exc}") from None


def _pairs(vals: list[float], path: str, line_no: int, *, minimum: int) -> np.ndarray:
    if len(vals) % 2 != 0 or len(vals) < 2 * minimum:
        raise MapFormatError(path, line_no, f"expected at least {minimum} x/y pairs")
    return np.array(vals, dtype=np.float64).reshape(-1, 2)


def parse_world(text: str, name: str, path: str = "<string>") -> WorldMap:
    """Parse map text; raises MapFormatError / MapInvariantError."""
    lanes: list[Lane] = []
    routes: list[RouteDef] = []
    lights: list[TrafficLight] = []
    crosswalks: list[Crosswalk] = []
    obstacles: list[StaticObstacle] = []
    stop_signs: list[StopSign] = []
    npc_spawns: list[NpcSpawn] = []
    anchor = (0.0, 0.0)

    lines = text.splitlines()
    header_seen = False
    for line_no, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if not header_seen:
            if line != MAP_HEADER:
                raise MapFormatError(path, line_no, f"expected header {MAP_HEADER!r}")
            header_seen = True
            continue
        parts = line.split()
        kind, args = parts[0], parts[1:]
        if kind == "anchor":
            vals = _floats(args, path, line_no)
            if len(vals) != 2:
                raise MapFormatError(path, line_no, "anchor needs lat lon")
            anchor = (vals[0], vals[1])
        elif kind == "lane":
            if len(args) < 2:
                raise MapFormatError(path, line_no, "lane needs id, width, points")
            width = _floats(args[1:2], path, line_no)[0]
            pts = _pairs(_floats(args[2:], path, line_no), path, line_no, minimum=2)
            if width <= 0:
                raise MapFormatError(path, line_no, "lane width must be positive")
            lanes.append(Lane(args[0], width, pts))
        elif kind == "route":
            if len(args) < 1:
                raise MapFormatError(path, line_no, "route needs id and waypoints")
            wps = _pairs(_floats(args[1:], path, line_no), path, line_no, minimum=2)
            routes.append(RouteDef(args[0], wps))
        elif kind == "light":
            vals = _floats(args[1:], path, line_no)
            if len(args) < 1 or len(vals) not in (9, 10):
                raise MapFormatError(path, line_no, "light needs id and 9 or 10 numbers")
            offset = vals[9] if len(vals) == 10 else 0.0
            lights.append(TrafficLight(
                args[0], (vals[0], vals[1]), (vals[2], vals[3]), (vals[4], vals[5]),
                vals[6], vals[7], vals[8], offset,
            ))
        elif kind == "crosswalk":
            vals = _floats(args[1:], path, line_no)
            if len(args) < 1 or len(vals) != 4:
                raise MapFormatError(path, line_no, "crosswalk needs id and 4 numbers")
            crosswalks.append(Crosswalk(args[0], (vals[0], vals[1]), (vals[2], vals[3])))
        elif kind == "obstacle":
            vals = _floats(args[1:], path, line_no)
            if len(args) < 1 or len(vals) != 5:
                raise MapFormatError(path, line_no, "obstacle needs id and 5 numbers")
            obstacles.append(StaticObstacle(args[0], *vals))
        elif kind == "stopsign":
            vals = _floats(args[1:], path, line_no)
            if len(args) < 1 or len(vals) != 4:
                raise MapFormatError(path, line_no, "stopsign needs id and 4 numbers")
            stop_signs.append(StopSign(args[0], (vals[0], vals[1]), (vals[2], vals[3])))
        elif kind == "actor":
            if len(args) < 2:
                raise MapFormatError(path, line_no, "actor needs kind, speed, path")
            try:
                akind = ActorKind(args[0].upper())
            except ValueError:
                raise MapFormatError(path, line_no, f"unknown actor kind {args[0]!r}") from None
            if akind in (ActorKind.EGO, ActorKind.DEBRIS):
                raise MapFormatError(path, line_no, f"{akind.name} cannot be a spawned NPC")
            speed = _floats(args[1:2], path, line_no)[0]
            pts = _pairs(_floats(args[2:], path, line_no), path, line_no, minimum=2)
            npc_spawns.append(NpcSpawn(akind, speed, pts))
        else:
            raise MapFormatError(path, line_no, f"unknown record type {kind!r}")

    if not header_seen:
        raise MapFormatError(path, 1, "empty map file (missing header)")

    world = WorldMap(
        name=name,
        lanes=tuple(lanes),
        routes=tuple(routes),
        lights=tuple(lights),
        crosswalks=tuple(crosswalks),
        obstacles=tuple(obstacles),
        stop_signs=tuple(stop_signs),
        npc_spawns=tuple(npc_spawns),
        anchor=anchor,
    )
    validate_world(world)
    return world


def validate_world(world: WorldMap) -> None:
    """Check structural invariants; raises MapInvariantError naming the rule."""
    for light in world.lights:
        if min(light.green_s, light.yellow_s, light.red_s) <= 0:
            raise MapInvariantError(f"light {light.id!r}: phase durations must be positive")
    for route in world.routes:
        gaps = np.hypot(*np.diff(route.waypoints, axis=0).T)
        if len(gaps) and gaps.max() >= MAX_WAYPOINT_GAP_M:
            raise MapInvariantError(
                f"route {route.id!r}: waypoint gap {gaps.max():.1f} m >= {MAX_WAYPOINT_GAP_M} m"
            )
        if not world.lanes:
            raise MapInvariantError(f"route {route.id!r}: map has no lanes")
        on_lane = np.zeros(len(route.waypoints), dtype=bool)
        for lane in world.lanes:
            d = polyline_point_distance(route.waypoints, lane.pts)
            on_lane |= d <= lane.width / 2 + 0.01
        if not on_lane.all():
            bad = int(np.argmin(on_lane))
            raise MapInvariantError(
                f"route {route.id!r}: waypoint {bad} at "
                f"{tuple(route.waypoints[bad])} does not lie on any lane"
            )


def load_world(path: str | Path) -> WorldMap:
    """Load and validate a map file."""
    p = Path(path)
    text = p.read_text(encoding="utf-8")
    return parse_world(text, name=p.stem, path=str(p))


def route_arclengths(route: RouteDef) -> np.ndarray:
    return cumulative_lengths(route.waypoints)
