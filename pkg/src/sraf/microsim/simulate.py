"""Deterministic closed-loop traffic micro-simulation.

One Microsim instance owns the static context of a run (map, route,
parameters); the evolving snapshot is an immutable SimState. step() is a
pure function of (state, control), so identical inputs reproduce identical
traces on every run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from ..errors import InvalidParameter, SrafError
from ..sensor_models import RngStream
from .geometry import (
    cumulative_lengths,
    obb_corners,
    obb_overlap,
    point_along,
    polyline_point_distance,
    seg_point_distance,
    segments_intersect,
)
from .world import (
    ActorKind,
    KIND_HALF_EXTENTS,
    LightPhase,
    RouteDef,
    WorldMap,
)


class TerminationReason(Enum):
    COMPLETED = "COMPLETED"
    ROUTE_DEVIATION = "ROUTE_DEVIATION"
    BLOCKED = "BLOCKED"
    TIMEOUT = "TIMEOUT"


class InfractionType(Enum):
    COLLISION_PEDESTRIAN = "COLLISION_PEDESTRIAN"
    COLLISION_VEHICLE = "COLLISION_VEHICLE"
    COLLISION_STATIC = "COLLISION_STATIC"
    RED_LIGHT = "RED_LIGHT"
    STOP_SIGN = "STOP_SIGN"


@dataclass(frozen=True)
class InfractionEvent:
    type: InfractionType
    tick: int
    actor_id: str


@dataclass(frozen=True)
class EgoControl:
    """Agent control command; fields are clamped at ingestion."""

    steer: float = 0.0
    throttle: float = 0.0
    brake: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "steer", min(1.0, max(-1.0, float(self.steer))))
        object.__setattr__(self, "throttle", min(1.0, max(0.0, float(self.throttle))))
        object.__setattr__(self, "brake", min(1.0, max(0.0, float(self.brake))))


@dataclass(frozen=True)
class ActorState:
    id: str
    kind: ActorKind
    x: float
    y: float
    heading: float
    speed: float
    half_len: float
    half_wid: float

    def __post_init__(self):
        if self.half_len <= 0 or self.half_wid <= 0:
            raise InvalidParameter("actor half extents must be positive")
        if self.kind == ActorKind.DEBRIS and self.speed != 0.0:
            raise InvalidParameter("DEBRIS actors are static")

    @property
    def pos(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def corners(self) -> np.ndarray:
        return obb_corners(self.x, self.y, self.heading, self.half_len, self.half_wid)


@dataclass(frozen=True)
class SimParams:
    """Tunable simulation constants (all configurable via the config file)."""

    dt: float = 0.05
    tick_budget: int = 6000
    accel_max: float = 3.0        # m/s^2 at full throttle
    brake_max: float = 8.0        # m/s^2 at full brake
    drag: float = 0.1             # 1/s speed-proportional decel
    speed_max: float = 12.0       # m/s
    steer_rate: float = 1.5       # rad/s at full steer and full speed
    waypoint_tol_m: float = 3.0
    deviation_m: float = 30.0
    blocked_speed: float = 0.1    # m/s
    blocked_after_s: float = 180.0
    npc_accel: float = 3.0
    npc_brake: float = 6.0
    npc_gap_stop_m: float = 4.0
    npc_gap_slow_m: float = 12.0
    npc_light_lookahead_m: float = 15.0


@dataclass(frozen=True)
class JaywalkerTrigger:
    """Armed pedestrian spawn: fires when the ego is within trigger_dist of
    the crossing point."""

    cross_x: float
    cross_y: float
    trigger_dist: float
    walk_speed: float
    path: tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class CornerCasePreset:
    """In-simulation rare event probing behavior outside nominal traffic."""

    id: str  # JAYWALKER | DEBRIS | AGGRESSIVE_NPC | FADED_SIGNAL
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.id not in ("JAYWALKER", "DEBRIS", "AGGRESSIVE_NPC", "FADED_SIGNAL"):
            raise InvalidParameter(f"unknown corner-case preset {self.id!r}")
        for v in self.params.values():
            if isinstance(v, (int, float)) and v <= 0:
                raise InvalidParameter("corner-case parameters must be positive")


@dataclass(frozen=True)
class SimState:
    tick: int
    sim_time_s: float
    actors: tuple[ActorState, ...]            # actors[0] is the ego
    light_phases: tuple[LightPhase, ...]
    npc_path_s: tuple[float, ...]             # arc offset per actor (0 when pathless)
    route_progress: int                       # furthest waypoint index reached
    prev_ego: tuple[float, float, float, float] | None = None  # x, y, heading, speed
    blocked_since_s: float | None = None
    stop_sign_armed: tuple[bool, ...] = ()    # per sign: stopped within approach zone
    gap_scale: float = 1.0
    npc_speed_scale: float = 1.0
    faded_signal: bool = False
    jaywalker: JaywalkerTrigger | None = None
    jaywalker_spawned: bool = False
    lineage: tuple = ()
    termination: TerminationReason | None = None

    @property
    def ego(self) -> ActorState:
        return self.actors[0]


def _light_phases(world: WorldMap, t: float) -> tuple[LightPhase, ...]:
    return tuple(light.phase_at(t) for light in world.lights)


JAYWALKER_ID = "npc/jaywalker"
DEBRIS_ID = "corner/debris"


class Microsim:
    """Static run context plus the pure state-transition functions."""

    def __init__(self, world: WorldMap, route: RouteDef, params: SimParams | None = None):
        self.world = world
        self.route = route
        self.params = params or SimParams()
        self.route_cum = cumulative_lengths(route.waypoints)
        self.route_len = float(self.route_cum[-1])
        if self.route_len <= 0:
            raise InvalidParameter(f"route {route.id!r} has zero length")
        self.npc_paths: dict[str, np.ndarray] = {}
        self.npc_cum: dict[str, np.ndarray] = {}
        for i, spawn in enumerate(world.npc_spawns):
            aid = f"npc/{i}"
            self.npc_paths[aid] = spawn.path
            self.npc_cum[aid] = cumulative_lengths(spawn.path)
        # Arc offsets along the ego route where light stop-lines cross it,
        # used by the privileged policy.
        self.route_light_crossings = self._route_light_crossings()

    def _route_light_crossings(self) -> tuple[tuple[float, int], ...]:
        crossings = []
        wps = self.route.waypoints
        for li, light in enumerate(self.world.lights):
            a, b = np.array(light.stop_a), np.array(light.stop_b)
            for i in range(len(wps) - 1):
                if segments_intersect(wps[i], wps[i + 1], a, b):
                    # refine: project the stop-line midpoint onto the segment
                    mid = (a + b) / 2
                    seg = wps[i + 1] - wps[i]
                    seg_len = float(np.hypot(*seg))
                    t = 0.0
                    if seg_len > 0:
                        t = float(np.clip((mid - wps[i]) @ seg / (seg_len ** 2), 0, 1))
                    crossings.append((float(self.route_cum[i]) + t * seg_len, li))
                    break
        return tuple(sorted(crossings))

    # ------------------------------------------------------------------ state
    def initial_state(self, lineage: tuple = ()) -> SimState:
        wps = self.route.waypoints
        heading = float(np.arctan2(wps[1][1] - wps[0][1], wps[1][0] - wps[0][0]))
        hl, hw = KIND_HALF_EXTENTS[ActorKind.EGO]
        actors = [ActorState("ego", ActorKind.EGO, float(wps[0][0]), float(wps[0][1]),
                             heading, 0.0, hl, hw)]
        path_s = [0.0]
        for i, spawn in enumerate(self.world.npc_spawns):
            p, h = point_along(spawn.path, self.npc_cum[f"npc/{i}"], 0.0)
            hl, hw = KIND_HALF_EXTENTS[spawn.kind]
            actors.append(ActorState(f"npc/{i}", spawn.kind, float(p[0]), float(p[1]),
                                     h, 0.0, hl, hw))
            path_s.append(0.0)
        return SimState(
            tick=0,
            sim_time_s=0.0,
            actors=tuple(actors),
            light_phases=_light_phases(self.world, 0.0),
            npc_path_s=tuple(path_s),
            route_progress=0,
            stop_sign_armed=tuple(False for _ in self.world.stop_signs),
            lineage=tuple(lineage),
        )

    # ------------------------------------------------------------------- step
    def step(self, state: SimState, ego_ctrl: EgoControl, dt: float | None = None) -> SimState:
        """Advance one tick.

        Ego follows unicycle kinematics with speed-scaled steering; NPCs
        advance along their paths with gap keeping; light clocks advance.
        """
        if state.termination is not None:
            raise SrafError("cannot step a terminated simulation state")
        p = self.params
        dt = p.dt if dt is None else float(dt)
        if dt <= 0:
            raise InvalidParameter("dt must be positive")

        ego = state.ego
        speed = ego.speed + (p.accel_max * ego_ctrl.throttle
                             - p.brake_max * ego_ctrl.brake
                             - p.drag * ego.speed) * dt
        speed = min(max(speed, 0.0), p.speed_max)
        heading = ego.heading + ego_ctrl.steer * p.steer_rate * (ego.speed / p.speed_max) * dt
        x = ego.x + speed * math.cos(heading) * dt
        y = ego.y + speed * math.sin(heading) * dt
        new_ego = replace(ego, x=x, y=y, heading=heading, speed=speed)

        new_time = round((state.tick + 1) * dt, 9)
        phases = _light_phases(self.world, new_time)

        new_actors = [new_ego]
        new_path_s = [0.0]
        for idx in range(1, len(state.actors)):
            actor = state.actors[idx]
            moved, s = self._step_npc(state, idx, new_ego, dt)
            new_actors.append(moved)
            new_path_s.append(s)

        next_state = replace(
            state,
            tick=state.tick + 1,
            sim_time_s=new_time,
            actors=tuple(new_actors),
            light_phases=phases,
            npc_path_s=tuple(new_path_s),
            prev_ego=(ego.x, ego.y, ego.heading, ego.speed),
        )
        next_state = self._maybe_spawn_jaywalker(next_state)
        next_state = self._update_route_progress(next_state)
        next_state = self._update_blocked(next_state, dt)
        next_state = self._update_stop_sign_flags(next_state)
        return next_state

    def _npc_path(self, state: SimState, actor_id: str) -> tuple[np.ndarray, np.ndarray] | None:
        if actor_id in self.npc_paths:
            return self.npc_paths[actor_id], self.npc_cum[actor_id]
        if state.jaywalker is not None and actor_id == JAYWALKER_ID:
            path = np.array(state.jaywalker.path, dtype=np.float64)
            return path, cumulative_lengths(path)
        return None

    def _npc_cruise(self, state: SimState, idx: int) -> float:
        actor = state.actors[idx]
        if actor.id == JAYWALKER_ID and state.jaywalker is not None:
            return state.jaywalker.walk_speed
        spawn_idx = int(actor.id.split("/", 1)[1]) if actor.id.startswith("npc/") else 0
        base = self.world.npc_spawns[spawn_idx].cruise_speed
        return base * state.npc_speed_scale

    def _step_npc(self, state: SimState, idx: int, new_ego: ActorState,
                  dt: float) -> tuple[ActorState, float]:
        actor = state.actors[idx]
        if actor.kind == ActorKind.DEBRIS:
            return actor, state.npc_path_s[idx]
        path_info = self._npc_path(state, actor.id)
        if path_info is None:
            return actor, state.npc_path_s[idx]
        path, cum = path_info
        s = state.npc_path_s[idx]
        p = self.params

        cruise = self._npc_cruise(state, idx)
        if actor.kind == ActorKind.PEDESTRIAN:
            target = cruise  # pedestrians walk their path unconditionally
        else:
            target = self._npc_gap_target(state, idx, new_ego, path, cum, s, cruise)
        if target > actor.speed:
            speed = min(target, actor.speed + p.npc_accel * dt)
        else:
            speed = max(target, actor.speed - p.npc_brake * dt)
        s_new = min(s + speed * dt, float(cum[-1]))
        if s_new >= float(cum[-1]):
            speed = 0.0
        pos, heading = point_along(path, cum, s_new)
        return replace(actor, x=float(pos[0]), y=float(pos[1]),
                       heading=heading, speed=speed), s_new

    def _npc_gap_target(self, state: SimState, idx: int, new_ego: ActorState,
                        path: np.ndarray, cum: np.ndarray, s: float,
                        cruise: float) -> float:
        """Gap keeping: slow behind obstacles ahead on the path, stop at red
        lights whose stop-line crosses the path ahead."""
        p = self.params
        actor = state.actors[idx]
        pos, heading = point_along(path, cum, s)
        fwd = np.array([math.cos(heading), math.sin(heading)])
        gap_stop = p.npc_gap_stop_m * state.gap_scale
        gap_slow = p.npc_gap_slow_m * state.gap_scale

        nearest = math.inf
        others = [a for i, a in enumerate(state.actors) if i != idx and i != 0]
        others.append(new_ego)
        for other in others:
            rel = other.pos - pos
            ahead = float(rel @ fwd)
            lateral = abs(float(rel[0] * -fwd[1] + rel[1] * fwd[0]))
            if 0 < ahead and lateral < actor.half_wid + other.half_wid + 0.5:
                nearest = min(nearest, ahead - actor.half_len - other.half_len)
        for obs in self.world.obstacles:
            rel = np.array([obs.cx, obs.cy]) - pos
            ahead = float(rel @ fwd)
            lateral = abs(float(rel[0] * -fwd[1] + rel[1] * fwd[0]))
            if 0 < ahead and lateral < actor.half_wid + max(obs.hx, obs.hy) + 0.5:
                nearest = min(nearest, ahead - actor.half_len - max(obs.hx, obs.hy))
        for li, light in enumerate(self.world.lights):
            if state.light_phases[li] == LightPhase.GREEN:
                continue
            mid = (np.array(light.stop_a) + np.array(light.stop_b)) / 2
            rel = mid - pos
            ahead = float(rel @ fwd)
            lateral = abs(float(rel[0] * -fwd[1] + rel[1] * fwd[0]))
            if 0 < ahead <= p.npc_light_lookahead_m and lateral < 3.0:
                nearest = min(nearest, ahead - actor.half_len - 1.0)

        if nearest <= gap_stop:
            return 0.0
        if nearest <= gap_slow:
            return cruise * (nearest - gap_stop) / (gap_slow - gap_stop)
        return cruise

    def _maybe_spawn_jaywalker(self, state: SimState) -> SimState:
        trig = state.jaywalker
        if trig is None or state.jaywalker_spawned:
            return state
        ego = state.ego
        dist = math.hypot(ego.x - trig.cross_x, ego.y - trig.cross_y)
        if dist > trig.trigger_dist:
            return state
        path = np.array(trig.path, dtype=np.float64)
        heading = float(np.arctan2(path[1][1] - path[0][1], path[1][0] - path[0][0]))
        hl, hw = KIND_HALF_EXTENTS[ActorKind.PEDESTRIAN]
        ped = ActorState(JAYWALKER_ID, ActorKind.PEDESTRIAN, float(path[0][0]),
                         float(path[0][1]), heading, trig.walk_speed, hl, hw)
        return replace(
            state,
            actors=state.actors + (ped,),
            npc_path_s=state.npc_path_s + (0.0,),
            jaywalker_spawned=True,
        )

    def _update_route_progress(self, state: SimState) -> SimState:
        ego = state.ego
        idx = state.route_progress
        wps = self.route.waypoints
        tol = self.params.waypoint_tol_m
        while idx + 1 < len(wps) and math.hypot(ego.x - wps[idx + 1][0],
                                                ego.y - wps[idx + 1][1]) <= tol:
            idx += 1
        if idx == state.route_progress:
            return state
        return replace(state, route_progress=idx)

    def _update_blocked(self, state: SimState, dt: float) -> SimState:
        if state.ego.speed < self.params.blocked_speed:
            if state.blocked_since_s is None:
                return replace(state, blocked_since_s=state.sim_time_s)
            return state
        if state.blocked_since_s is not None:
            return replace(state, blocked_since_s=None)
        return state

    def _update_stop_sign_flags(self, state: SimState) -> SimState:
        if not self.world.stop_signs:
            return state
        ego = state.ego
        pos = np.array([[ego.x, ego.y]])
        flags = list(state.stop_sign_armed)
        changed = False
        for i, sign in enumerate(self.world.stop_signs):
            d = float(seg_point_distance(pos, np.array(sign.a), np.array(sign.b))[0])
            if d <= 5.0 and ego.speed < self.params.blocked_speed and not flags[i]:
                flags[i] = True
                changed = True
        if not changed:
            return state
        return replace(state, stop_sign_armed=tuple(flags))

    # ------------------------------------------------------------- infractions
    def _ego_contacts(self, state: SimState) -> set[tuple[InfractionType, str]]:
        ego = state.ego
        ego_c = ego.corners()
        contacts = set()
        for actor in state.actors[1:]:
            if math.hypot(actor.x - ego.x, actor.y - ego.y) > 12.0:
                continue
            if obb_overlap(ego_c, actor.corners()):
                if actor.kind == ActorKind.PEDESTRIAN:
                    itype = InfractionType.COLLISION_PEDESTRIAN
                elif actor.kind == ActorKind.DEBRIS:
                    itype = InfractionType.COLLISION_STATIC
                else:
                    itype = InfractionType.COLLISION_VEHICLE
                contacts.add((itype, actor.id))
        for obs in self.world.obstacles:
            if math.hypot(obs.cx - ego.x, obs.cy - ego.y) > 12.0 + max(obs.hx, obs.hy):
                continue
            if obb_overlap(ego_c, obb_corners(obs.cx, obs.cy, obs.heading, obs.hx, obs.hy)):
                contacts.add((InfractionType.COLLISION_STATIC, obs.id))
        return contacts

    def _front_point(self, actor: ActorState) -> tuple[float, float]:
        return (actor.x + actor.half_len * math.cos(actor.heading),
                actor.y + actor.half_len * math.sin(actor.heading))

    def detect_infractions(self, prev: SimState, nxt: SimState) -> list[InfractionEvent]:
        """Infractions committed between two consecutive states.

        Collisions are debounced per contact episode: an overlap reports once
        and can only re-report after the contact clears.
        """
        events: list[InfractionEvent] = []
        prev_contacts = self._ego_contacts(prev)
        for itype, aid in sorted(self._ego_contacts(nxt) - prev_contacts,
                                 key=lambda c: (c[0].value, c[1])):
            events.append(InfractionEvent(itype, nxt.tick, aid))

        front_prev = self._front_point(prev.ego)
        front_next = self._front_point(nxt.ego)
        for li, light in enumerate(self.world.lights):
            if nxt.light_phases[li] != LightPhase.RED:
                continue
            if segments_intersect(front_prev, front_next, light.stop_a, light.stop_b):
                events.append(InfractionEvent(InfractionType.RED_LIGHT, nxt.tick, light.id))
        for si, sign in enumerate(self.world.stop_signs):
            if segments_intersect(front_prev, front_next, sign.a, sign.b):
                if not prev.stop_sign_armed[si]:
                    events.append(InfractionEvent(InfractionType.STOP_SIGN, nxt.tick, sign.id))
        return events

    # -------------------------------------------------------------- completion
    def route_completion(self, state: SimState) -> float:
        """Percent of route arc length up to the furthest waypoint passed."""
        return 100.0 * float(self.route_cum[state.route_progress]) / self.route_len

    def lateral_route_distance(self, state: SimState) -> float:
        ego = state.ego
        return float(polyline_point_distance(
            np.array([[ego.x, ego.y]]), self.route.waypoints)[0])

    def is_run_terminated(self, state: SimState) -> TerminationReason | None:
        """Termination rule; checked by the orchestrator after every step."""
        p = self.params
        if self.route_completion(state) >= 100.0:
            return TerminationReason.COMPLETED
        if self.lateral_route_distance(state) > p.deviation_m:
            return TerminationReason.ROUTE_DEVIATION
        if (state.blocked_since_s is not None
                and state.sim_time_s - state.blocked_since_s >= p.blocked_after_s):
            return TerminationReason.BLOCKED
        if state.tick >= p.tick_budget:
            return TerminationReason.TIMEOUT
        return None

    # ------------------------------------------------------------ corner cases
    def inject_corner_case(self, state: SimState, preset: CornerCasePreset,
                           rng: RngStream) -> SimState:
        """Apply a corner-case preset to a run.

        DEBRIS and AGGRESSIVE_NPC / FADED_SIGNAL act immediately; JAYWALKER
        arms a trigger that fires when the ego approaches the crossing point.
        """
        params = preset.params
        if preset.id == "DEBRIS":
            frac = float(params.get("route_frac", 0.5))
            size = float(params.get("half_extent", 0.8))
            pos, heading = point_along(self.route.waypoints, self.route_cum,
                                       frac * self.route_len)
            debris = ActorState(DEBRIS_ID, ActorKind.DEBRIS, float(pos[0]), float(pos[1]),
                                heading, 0.0, size, size)
            return replace(state, actors=state.actors + (debris,),
                           npc_path_s=state.npc_path_s + (0.0,))
        if preset.id == "JAYWALKER":
            frac = float(params.get("route_frac", 0.5))
            trigger = float(params.get("spawn_distance", 18.0))
            walk = float(params.get("walk_speed", 1.4))
            side = float(params.get("side_offset", 6.0))
            s = self._jaywalk_point_clear_of_crosswalks(frac * self.route_len)
            pos, heading = point_along(self.route.waypoints, self.route_cum, s)
            left = np.array([-math.sin(heading), math.cos(heading)])
            start = pos + side * left
            end = pos - side * left
            return replace(state, jaywalker=JaywalkerTrigger(
                cross_x=float(pos[0]), cross_y=float(pos[1]),
                trigger_dist=trigger, walk_speed=walk,
                path=(tuple(map(float, start)), tuple(map(float, end))),
            ))
        if preset.id == "AGGRESSIVE_NPC":
            return replace(
                state,
                gap_scale=float(params.get("gap_scale", 0.4)),
                npc_speed_scale=float(params.get("speed_scale", 1.5)),
            )
        if preset.id == "FADED_SIGNAL":
            return replace(state, faded_signal=True)
        raise InvalidParameter(f"unknown corner-case preset {preset.id!r}")

    def _jaywalk_point_clear_of_crosswalks(self, s: float,
                                           clearance_m: float = 15.0) -> float:
        """Nearest route arc offset to s whose point keeps the required
        clearance from every crosswalk (the jaywalker must cross away from
        them). Deterministic outward search in 1 m steps."""
        if not self.world.crosswalks:
            return s

        def clear(offset: float) -> bool:
            pos, _ = point_along(self.route.waypoints, self.route_cum, offset)
            for cw in self.world.crosswalks:
                d = float(seg_point_distance(pos.reshape(1, 2),
                                             np.array(cw.a), np.array(cw.b))[0])
                if d < clearance_m:
                    return False
            return True

        if clear(s):
            return s
        for delta in np.arange(1.0, self.route_len, 1.0):
            for candidate in (s - delta, s + delta):
                if 0.0 <= candidate <= self.route_len and clear(candidate):
                    return candidate
        return s
