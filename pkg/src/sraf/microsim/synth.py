"""Sensor synthesis: top-down camera raster, 2D ray-cast LiDAR, and scalar
sensors (GNSS / IMU / speedometer).

Intensity codes and ring heights are fixed documented tables so golden
images and clouds stay stable across releases:

    camera: background 0, lane surface 60, lane markings 120,
            red-light stop-lines 180, actors 255
    ring height: z_c = -0.4 + 0.1 * channel
"""

from __future__ import annotations

import math

import numpy as np

from ..fault_injection import (
    CLEAR,
    WeatherPreset,
    weather_camera_transform,
    weather_lidar_transform,
)
from ..errors import InvalidParameter
from ..sensor_models import (
    Image,
    PointCloud,
    RngStream,
    ScalarReading,
    SensorKind,
    wrap_angle_2pi,
)
from .geometry import point_in_obb, ray_obb_ranges, seg_point_distance
from .simulate import Microsim, SimState
from .world import LightPhase

CAMERA_SIZE = 64
CAMERA_RES_M = 0.5

INTENSITY_BACKGROUND = 0
INTENSITY_LANE = 60
INTENSITY_MARKING = 120
INTENSITY_STOPLINE = 180
INTENSITY_ACTOR = 255

MARKING_HALF_WIDTH_M = 0.3
STOPLINE_HALF_WIDTH_M = 0.3

LIDAR_MAX_RANGE_M = 50.0
DEFAULT_LIDAR_CHANNELS = 16
DEFAULT_RAYS_PER_REV = 180

EARTH_RADIUS_M = 6371000.0


def ring_height(channel: int) -> float:
    return -0.4 + 0.1 * channel


def _pixel_grid() -> np.ndarray:
    """Ego-frame (forward, right) coordinates of the pixel centers.

    Row r maps to forward (31.5 - r) * res (ego heading up); column c maps
    to right (c - 31.5) * res. The ego sits at the image center and is not
    rendered.
    """
    half = (CAMERA_SIZE - 1) / 2.0
    rows, cols = np.meshgrid(np.arange(CAMERA_SIZE), np.arange(CAMERA_SIZE), indexing="ij")
    forward = (half - rows) * CAMERA_RES_M
    right = (cols - half) * CAMERA_RES_M
    return np.stack([forward.ravel(), right.ravel()], axis=1)


_GRID = _pixel_grid()


def render_camera(sim: Microsim, state: SimState,
                  weather: WeatherPreset = CLEAR,
                  rng: RngStream | None = None) -> Image:
    """Ego-centric top-down raster, then the weather camera transform."""
    ego = state.ego
    c, s = math.cos(ego.heading), math.sin(ego.heading)
    fwd = np.array([c, s])
    right = np.array([s, -c])
    world_pts = np.array([ego.x, ego.y]) + _GRID[:, :1] * fwd + _GRID[:, 1:] * right

    intensity = np.full(len(world_pts), INTENSITY_BACKGROUND, dtype=np.uint8)
    for lane in sim.world.lanes:
        best = np.full(len(world_pts), np.inf)
        for i in range(len(lane.pts) - 1):
            best = np.minimum(best, seg_point_distance(world_pts, lane.pts[i], lane.pts[i + 1]))
        surface = best <= lane.width / 2
        marking = np.abs(best - lane.width / 2) <= MARKING_HALF_WIDTH_M
        intensity[surface] = np.maximum(intensity[surface], INTENSITY_LANE)
        intensity[marking] = np.maximum(intensity[marking], INTENSITY_MARKING)

    stop_code = INTENSITY_MARKING if state.faded_signal else INTENSITY_STOPLINE
    for li, light in enumerate(sim.world.lights):
        if state.light_phases[li] != LightPhase.RED:
            continue
        d = seg_point_distance(world_pts, np.array(light.stop_a), np.array(light.stop_b))
        intensity[d <= STOPLINE_HALF_WIDTH_M] = stop_code

    for actor in state.actors[1:]:
        if math.hypot(actor.x - ego.x, actor.y - ego.y) > CAMERA_SIZE * CAMERA_RES_M:
            continue
        inside = point_in_obb(world_pts, actor.x, actor.y, actor.heading,
                              actor.half_len, actor.half_wid)
        intensity[inside] = INTENSITY_ACTOR
    for obs in sim.world.obstacles:
        if math.hypot(obs.cx - ego.x, obs.cy - ego.y) > CAMERA_SIZE * CAMERA_RES_M:
            continue
        inside = point_in_obb(world_pts, obs.cx, obs.cy, obs.heading, obs.hx, obs.hy)
        intensity[inside] = INTENSITY_ACTOR

    img = Image(CAMERA_SIZE, CAMERA_SIZE, intensity.reshape(CAMERA_SIZE, CAMERA_SIZE))
    if weather.is_identity:
        return img
    if rng is None:
        raise InvalidParameter("non-CLEAR weather rendering needs an rng stream")
    return weather_camera_transform(img, weather, rng.fork("weather/camera"))


def scan_lidar(sim: Microsim, state: SimState,
               num_channels: int = DEFAULT_LIDAR_CHANNELS,
               rays_per_rev: int = DEFAULT_RAYS_PER_REV,
               weather: WeatherPreset = CLEAR,
               rng: RngStream | None = None) -> PointCloud:
    """Cast rays_per_rev evenly spaced planar rays against actor and static
    boxes; each hit emits one point per channel at the ring height.

    Points are returned in canonical (channel, azimuth) order.
    """
    ego = state.ego
    origin = np.array([ego.x, ego.y])
    azimuths = np.arange(rays_per_rev) * (2.0 * math.pi / rays_per_rev)
    world_angles = ego.heading + azimuths

    ranges = np.full(rays_per_rev, np.inf)
    for actor in state.actors[1:]:
        r = ray_obb_ranges(origin, world_angles, actor.x, actor.y, actor.heading,
                           actor.half_len, actor.half_wid)
        ranges = np.minimum(ranges, r)
    for obs in sim.world.obstacles:
        r = ray_obb_ranges(origin, world_angles, obs.cx, obs.cy, obs.heading,
                           obs.hx, obs.hy)
        ranges = np.minimum(ranges, r)

    hit = (ranges > 0) & (ranges <= LIDAR_MAX_RANGE_M)
    hit_az = azimuths[hit]
    hit_r = ranges[hit]
    n_hits = len(hit_r)
    if n_hits == 0:
        cloud = PointCloud(num_channels, np.empty((0, 3)), np.empty(0, dtype=np.int64))
    else:
        # one point per channel per hit, ego-frame coordinates
        x = (hit_r * np.cos(hit_az))
        y = (hit_r * np.sin(hit_az))
        channels = np.repeat(np.arange(num_channels, dtype=np.int64), n_hits)
        xs = np.tile(x, num_channels)
        ys = np.tile(y, num_channels)
        zs = ring_height(channels.astype(np.float64))
        cloud = PointCloud(num_channels, np.stack([xs, ys, zs], axis=1), channels)
        cloud = cloud.sorted_canonical()
    if weather.is_identity:
        return cloud
    if rng is None:
        raise InvalidParameter("non-CLEAR weather scanning needs an rng stream")
    return weather_lidar_transform(cloud, weather, rng.fork("weather/lidar"))


def gnss_from_xy(x: float, y: float, anchor: tuple[float, float]) -> tuple[float, float]:
    """Equirectangular mapping of local meters to degrees around the anchor."""
    lat0, lon0 = anchor
    lat = lat0 + math.degrees(y / EARTH_RADIUS_M)
    lon = lon0 + math.degrees(x / (EARTH_RADIUS_M * math.cos(math.radians(lat0))))
    return lat, lon


def xy_from_gnss(lat: float, lon: float, anchor: tuple[float, float]) -> tuple[float, float]:
    """Inverse of gnss_from_xy."""
    lat0, lon0 = anchor
    y = math.radians(lat - lat0) * EARTH_RADIUS_M
    x = math.radians(lon - lon0) * EARTH_RADIUS_M * math.cos(math.radians(lat0))
    return x, y


def read_scalar_sensors(sim: Microsim, state: SimState,
                        dt: float | None = None) -> list[ScalarReading]:
    """GNSS, IMU (finite-difference accel / yaw rate, compass), speedometer.

    IMU acceleration is the ego-frame derivative of the planar velocity
    between the last two states; zero on the first tick.
    """
    dt = sim.params.dt if dt is None else dt
    ego = state.ego
    lat, lon = gnss_from_xy(ego.x, ego.y, sim.world.anchor)

    if state.prev_ego is None:
        ax = ay = yaw_rate = 0.0
    else:
        px, py, ph, pspeed = state.prev_ego
        vx1 = ego.speed * math.cos(ego.heading)
        vy1 = ego.speed * math.sin(ego.heading)
        vx0 = pspeed * math.cos(ph)
        vy0 = pspeed * math.sin(ph)
        awx = (vx1 - vx0) / dt
        awy = (vy1 - vy0) / dt
        c, s = math.cos(ego.heading), math.sin(ego.heading)
        ax = awx * c + awy * s           # forward
        ay = -awx * s + awy * c          # leftward
        dh = (ego.heading - ph + math.pi) % (2.0 * math.pi) - math.pi
        yaw_rate = dh / dt
    compass = wrap_angle_2pi(ego.heading)

    return [
        ScalarReading(SensorKind.GNSS, (lat, lon)),
        ScalarReading(SensorKind.IMU, (ax, ay, yaw_rate, compass)),
        ScalarReading(SensorKind.SPEEDOMETER, (ego.speed,)),
    ]
