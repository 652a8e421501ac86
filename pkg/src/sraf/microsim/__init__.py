"""Deterministic 2D traffic micro-simulator: world model, kinematics, NPC
behavior, sensor synthesis, infraction detection, and route bookkeeping."""

from .world import (
    ActorKind,
    Crosswalk,
    KIND_HALF_EXTENTS,
    Lane,
    LightPhase,
    NpcSpawn,
    RouteDef,
    StaticObstacle,
    StopSign,
    TrafficLight,
    WorldMap,
    load_world,
    parse_world,
    validate_world,
)
from .simulate import (
    ActorState,
    CornerCasePreset,
    EgoControl,
    InfractionEvent,
    InfractionType,
    JaywalkerTrigger,
    Microsim,
    SimParams,
    SimState,
    TerminationReason,
)
from .synth import (
    CAMERA_RES_M,
    CAMERA_SIZE,
    DEFAULT_LIDAR_CHANNELS,
    DEFAULT_RAYS_PER_REV,
    INTENSITY_ACTOR,
    INTENSITY_BACKGROUND,
    INTENSITY_LANE,
    INTENSITY_MARKING,
    INTENSITY_STOPLINE,
    LIDAR_MAX_RANGE_M,
    gnss_from_xy,
    read_scalar_sensors,
    render_camera,
    ring_height,
    scan_lidar,
    xy_from_gnss,
)

__all__ = [name for name in dir() if not name.startswith("_")]
