"""Disturbance and sensor-fault operators.

Every operator is a pure function from clean observations to corrupted
observations: same inputs (including rng state) give bit-identical outputs,
and metadata fields that are not explicitly transformed pass through
untouched. Randomized operators draw from the deterministic RngStream in a
fixed, documented order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConditionNotApplicable, DimensionMismatch, InvalidParameter
from .sensor_models import (
    ConditionId,
    ConditionSpec,
    Image,
    ObservationBundle,
    OcclusionMask,
    PointCloud,
    RngStream,
    ScalarReading,
    SensorKind,
)


class WeatherId(Enum):
    CLEAR = "CLEAR"
    RAIN = "RAIN"
    FOG = "FOG"


@dataclass(frozen=True)
class WeatherPreset:
    """Sensor-level weather model: range cutoff and dropout for LiDAR,
    contrast loss and additive gaussian noise for the camera."""

    id: WeatherId
    visibility_m: float
    point_drop_prob: float
    pixel_noise_sigma: float
    contrast_scale: float

    def __post_init__(self):
        if not (0.0 <= self.point_drop_prob <= 1.0):
            raise InvalidParameter("point_drop_prob must be in [0, 1]")
        if not (0.0 < self.contrast_scale <= 1.0):
            raise InvalidParameter("contrast_scale must be in (0, 1]")
        if self.pixel_noise_sigma < 0 or self.visibility_m <= 0:
            raise InvalidParameter("pixel_noise_sigma >= 0 and visibility_m > 0 required")
        if self.id == WeatherId.CLEAR and not self.is_identity:
            raise InvalidParameter("CLEAR preset must be the identity transform")

    @property
    def is_identity(self) -> bool:
        return (
            math.isinf(self.visibility_m)
            and self.point_drop_prob == 0.0
            and self.pixel_noise_sigma == 0.0
            and self.contrast_scale == 1.0
        )


CLEAR = WeatherPreset(WeatherId.CLEAR, math.inf, 0.0, 0.0, 1.0)
RAIN = WeatherPreset(WeatherId.RAIN, 80.0, 0.2, 8.0, 0.9)
FOG = WeatherPreset(WeatherId.FOG, 30.0, 0.05, 4.0, 0.6)
WEATHER_PRESETS = {p.id.name: p for p in (CLEAR, RAIN, FOG)}


@dataclass(frozen=True)
class PixelRect:
    """Half-open pixel rectangle [x0, x1) x [y0, y1) for camera masks."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if self.x1 <= self.x0 or self.y1 <= self.y0:
            raise InvalidParameter("rectangle must have positive area")


@dataclass(frozen=True)
class BoxRegion:
    """Axis-aligned box in the ego frame; z bounds optional."""

    min_x: float
    max_x: float
    min_y: float
    max_y: float
    min_z: float = -math.inf
    max_z: float = math.inf

    def __post_init__(self):
        if self.max_x <= self.min_x or self.max_y <= self.min_y or self.max_z <= self.min_z:
            raise InvalidParameter("box must have positive extent on every axis")

    def contains(self, xyz: np.ndarray) -> np.ndarray:
        x, y, z = xyz[:, 0], xyz[:, 1], xyz[:, 2]
        return (
            (x >= self.min_x) & (x <= self.max_x)
            & (y >= self.min_y) & (y <= self.max_y)
            & (z >= self.min_z) & (z <= self.max_z)
        )


@dataclass(frozen=True)
class SectorRegion:
    """Angular sector around the ego: azimuth within half_angle of center,
    planar range within [min_range, max_range]."""

    center_rad: float
    half_angle_rad: float
    min_range: float = 0.0
    max_range: float = math.inf

    def __post_init__(self):
        if not (0.0 < self.half_angle_rad <= math.pi):
            raise InvalidParameter("half_angle_rad must be in (0, pi]")
        if self.min_range < 0 or self.max_range <= self.min_range:
            raise InvalidParameter("need 0 <= min_range < max_range")

    def contains(self, xyz: np.ndarray) -> np.ndarray:
        az = np.arctan2(xyz[:, 1], xyz[:, 0])
        delta = np.abs((az - self.center_rad + math.pi) % (2.0 * math.pi) - math.pi)
        rng = np.hypot(xyz[:, 0], xyz[:, 1])
        return (delta <= self.half_angle_rad) & (rng >= self.min_range) & (rng <= self.max_range)


RegionPredicate = BoxRegion | SectorRegion


def make_occlusion_mask(rect: PixelRect, width: int, height: int) -> OcclusionMask:
    """Rasterize a pixel rectangle into a binary mask (1 = occluded).

    The rectangle is clamped to the frame; a rectangle that clamps to zero
    area is rejected.
    """
    x0, x1 = max(0, rect.x0), min(width, rect.x1)
    y0, y1 = max(0, rect.y0), min(height, rect.y1)
    if x1 <= x0 or y1 <= y0:
        raise InvalidParameter("occlusion rectangle lies outside the frame")
    cells = np.zeros((height, width), dtype=np.uint8)
    cells[y0:y1, x0:x1] = 1
    return OcclusionMask(width=width, height=height, cells=cells)


def apply_camera_occlusion(img: Image, mask: OcclusionMask) -> Image:
    """Zero out masked pixels: out = in * (1 - mask)."""
    if (img.width, img.height) != (mask.width, mask.height):
        raise DimensionMismatch(
            f"image {img.width}x{img.height} vs mask {mask.width}x{mask.height}"
        )
    pixels = img.pixels * (1 - mask.cells)
    return Image(img.width, img.height, pixels)


def apply_salt_pepper(img: Image, density_d: float, pepper_ratio_p: float,
                      rng: RngStream) -> Image:
    """Corrupt each pixel independently with probability d; a corrupted
    pixel becomes 0 (pepper) with probability p, otherwise 255 (salt).

    Draw order: one uniform block deciding corruption, then one block
    deciding pepper vs salt.
    """
    if not (0.0 <= density_d <= 1.0) or not (0.0 <= pepper_ratio_p <= 1.0):
        raise InvalidParameter("density and pepper ratio must be probabilities")
    n = img.width * img.height
    corrupt = rng.uniform_array(n) < density_d
    pepper = rng.uniform_array(n) < pepper_ratio_p
    flat = img.pixels.reshape(-1).copy()
    flat[corrupt & pepper] = 0
    flat[corrupt & ~pepper] = 255
    return Image(img.width, img.height, flat.reshape(img.height, img.width))


def apply_lidar_occlusion(cloud: PointCloud, region: RegionPredicate) -> PointCloud:
    """Remove every point inside the occluded region, preserving order."""
    if len(cloud) == 0:
        return cloud
    keep = ~region.contains(cloud.xyz)
    return PointCloud(cloud.num_channels, cloud.xyz[keep], cloud.channels[keep])


def drop_lidar_channels(cloud: PointCloud, dropped: set[int]) -> PointCloud:
    """Remove every point on a dropped ring, preserving order."""
    dropped = set(dropped)
    for c in dropped:
        if not (0 <= c < cloud.num_channels):
            raise InvalidParameter(f"channel {c} out of range [0, {cloud.num_channels})")
    if not dropped or len(cloud) == 0:
        return cloud
    keep = ~np.isin(cloud.channels, sorted(dropped))
    return PointCloud(cloud.num_channels, cloud.xyz[keep], cloud.channels[keep])


def apply_uniform_noise(reading: ScalarReading, magnitude: tuple[float, ...],
                        rng: RngStream) -> ScalarReading:
    """Additive noise per component, each drawn from U(-N_i, N_i)."""
    mags = tuple(float(m) for m in magnitude)
    if len(mags) != len(reading.values):
        raise InvalidParameter(
            f"magnitude length {len(mags)} != reading length {len(reading.values)}"
        )
    if any(m < 0 for m in mags):
        raise InvalidParameter("noise magnitudes must be non-negative")
    u = rng.uniform_array(len(mags))
    noised = tuple(v + (2.0 * ui - 1.0) * m for v, ui, m in zip(reading.values, u, mags))
    return ScalarReading(reading.kind, noised)


def weather_camera_transform(img: Image, preset: WeatherPreset, rng: RngStream) -> Image:
    """pixel' = clamp(round(128 + contrast*(pixel-128) + N(0, sigma)), 0, 255)."""
    px = img.pixels.astype(np.float64)
    out = 128.0 + preset.contrast_scale * (px - 128.0)
    if preset.pixel_noise_sigma > 0:
        noise = rng.normal_array(px.size).reshape(px.shape) * preset.pixel_noise_sigma
        out = out + noise
    out = np.clip(np.rint(out), 0, 255).astype(np.uint8)
    return Image(img.width, img.height, out)


def weather_lidar_transform(cloud: PointCloud, preset: WeatherPreset,
                            rng: RngStream) -> PointCloud:
    """Visibility cutoff on planar range, then i.i.d. point dropout."""
    if len(cloud) == 0:
        return cloud
    rng_2d = np.hypot(cloud.xyz[:, 0], cloud.xyz[:, 1])
    keep = rng_2d <= preset.visibility_m
    xyz, ch = cloud.xyz[keep], cloud.channels[keep]
    if preset.point_drop_prob > 0 and len(ch):
        survive = rng.uniform_array(len(ch)) >= preset.point_drop_prob
        xyz, ch = xyz[survive], ch[survive]
    return PointCloud(cloud.num_channels, xyz, ch)


def apply_weather(bundle: ObservationBundle, preset: WeatherPreset,
                  rng: RngStream) -> ObservationBundle:
    """Weather transform over a whole bundle; scalars pass through.

    LiDAR and camera use independent forked streams, so the presence or
    order of one sensor never changes the other's output. CLEAR is the
    identity by preset invariant.
    """
    if preset.is_identity:
        return bundle
    lidar = bundle.lidar
    if lidar is not None:
        lidar = weather_lidar_transform(lidar, preset, rng.fork("weather/lidar"))
    camera = bundle.camera
    if camera is not None:
        camera = weather_camera_transform(camera, preset, rng.fork("weather/camera"))
    return ObservationBundle(bundle.tick, bundle.sim_time_s, camera, lidar, bundle.scalars)


def parse_lidar_region(params: dict) -> RegionPredicate:
    if "box" in params:
        vals = [float(v) for v in params["box"]]
        if len(vals) == 4:
            return BoxRegion(*vals)
        if len(vals) == 6:
            return BoxRegion(vals[0], vals[1], vals[2], vals[3], vals[4], vals[5])
        raise InvalidParameter("box needs 4 or 6 numbers")
    if "sector" in params:
        vals = [float(v) for v in params["sector"]]
        if len(vals) == 2:
            return SectorRegion(vals[0], vals[1])
        if len(vals) == 4:
            return SectorRegion(vals[0], vals[1], vals[2], vals[3])
        raise InvalidParameter("sector needs 2 or 4 numbers")
    raise InvalidParameter("LiDAR region variant needs a 'box' or 'sector' parameter")


def parse_weather_preset(params: dict) -> WeatherPreset:
    name = str(params.get("preset", "")).upper()
    if name in WEATHER_PRESETS:
        base = WEATHER_PRESETS[name]
    else:
        raise InvalidParameter(f"unknown weather preset {name!r}")
    overrides = {}
    for key in ("visibility_m", "point_drop_prob", "pixel_noise_sigma", "contrast_scale"):
        if key in params:
            overrides[key] = float(params[key])
    if overrides:
        return WeatherPreset(
            base.id,
            overrides.get("visibility_m", base.visibility_m),
            overrides.get("point_drop_prob", base.point_drop_prob),
            overrides.get("pixel_noise_sigma", base.pixel_noise_sigma),
            overrides.get("contrast_scale", base.contrast_scale),
        )
    return base


# Sensors each condition touches; used both for applicability checks and to
# assert the untouched fields stay bit-identical.
_CONDITION_TARGETS: dict[ConditionId, tuple[str, ...]] = {
    ConditionId.BASELINE: (),
    ConditionId.CAMERA_OCCLUSION: ("camera",),
    ConditionId.CAMERA_NOISE: ("camera",),
    ConditionId.LIDAR_OCCLUSION: ("lidar",),
    ConditionId.LIDAR_FAULT: ("lidar",),
    ConditionId.WEATHER: ("camera", "lidar"),
    ConditionId.GNSS_NOISE: ("scalar:GNSS",),
    ConditionId.IMU_NOISE: ("scalar:IMU",),
    ConditionId.SPEEDOMETER_NOISE: ("scalar:SPEEDOMETER",),
    ConditionId.DRIFT: (),  # world-level; observations untouched here
}


def condition_targets(condition_id: ConditionId) -> tuple[str, ...]:
    return _CONDITION_TARGETS[condition_id]


def condition_applicable(condition_id: ConditionId, *, has_camera: bool,
                         has_lidar: bool, scalar_kinds: set[SensorKind]) -> bool:
    """True when the agent's suite exposes at least one targeted sensor.

    BASELINE and DRIFT are always applicable (DRIFT perturbs the world, not
    the observations).
    """
    targets = _CONDITION_TARGETS[condition_id]
    if not targets:
        return True
    for t in targets:
        if t == "camera" and has_camera:
            return True
        if t == "lidar" and has_lidar:
            return True
        if t.startswith("scalar:") and SensorKind(t.split(":", 1)[1]) in scalar_kinds:
            return True
    return False


def _noise_scalars(bundle: ObservationBundle, kind: SensorKind,
                   magnitude: tuple[float, ...], rng: RngStream) -> tuple[ScalarReading, ...]:
    out = []
    for reading in bundle.scalars:
        if reading.kind == kind:
            out.append(apply_uniform_noise(reading, magnitude, rng.fork(f"noise/{kind.name}")))
        else:
            out.append(reading)
    return tuple(out)


def apply_condition(bundle: ObservationBundle, condition: ConditionSpec,
                    variant: int, rng: RngStream) -> ObservationBundle:
    """Apply exactly the operators implied by the condition id.

    BASELINE and DRIFT are the identity on observations. Raises
    ConditionNotApplicable when every targeted sensor is absent from the
    bundle, which the orchestrator surfaces as a skipped condition.
    """
    if not (0 <= variant < len(condition.variants)):
        raise InvalidParameter(f"variant {variant} out of range for {condition.id.name}")
    params = condition.variants[variant]
    cid = condition.id

    if cid in (ConditionId.BASELINE, ConditionId.DRIFT):
        return bundle

    present = condition_applicable(
        cid,
        has_camera=bundle.camera is not None,
        has_lidar=bundle.lidar is not None,
        scalar_kinds={r.kind for r in bundle.scalars},
    )
    if not present:
        raise ConditionNotApplicable(f"{cid.name} targets a sensor absent from the bundle")

    if cid == ConditionId.CAMERA_OCCLUSION:
        rect = PixelRect(*(int(v) for v in params["rect"]))
        mask = make_occlusion_mask(rect, bundle.camera.width, bundle.camera.height)
        camera = apply_camera_occlusion(bundle.camera, mask)
        return ObservationBundle(bundle.tick, bundle.sim_time_s, camera, bundle.lidar, bundle.scalars)

    if cid == ConditionId.CAMERA_NOISE:
        camera = apply_salt_pepper(
            bundle.camera, float(params["density"]), float(params["pepper"]),
            rng.fork("noise/camera"),
        )
        return ObservationBundle(bundle.tick, bundle.sim_time_s, camera, bundle.lidar, bundle.scalars)

    if cid == ConditionId.LIDAR_OCCLUSION:
        lidar = apply_lidar_occlusion(bundle.lidar, parse_lidar_region(params))
        return ObservationBundle(bundle.tick, bundle.sim_time_s, bundle.camera, lidar, bundle.scalars)

    if cid == ConditionId.LIDAR_FAULT:
        dropped = {int(c) for c in params["channels"]}
        lidar = drop_lidar_channels(bundle.lidar, dropped)
        return ObservationBundle(bundle.tick, bundle.sim_time_s, bundle.camera, lidar, bundle.scalars)

    if cid == ConditionId.WEATHER:
        return apply_weather(bundle, parse_weather_preset(params), rng)

    if cid == ConditionId.GNSS_NOISE:
        mags = tuple(float(v) for v in params["magnitude"])
        return ObservationBundle(
            bundle.tick, bundle.sim_time_s, bundle.camera, bundle.lidar,
            _noise_scalars(bundle, SensorKind.GNSS, mags, rng),
        )

    if cid == ConditionId.IMU_NOISE:
        mags = tuple(float(v) for v in params["magnitude"])
        return ObservationBundle(
            bundle.tick, bundle.sim_time_s, bundle.camera, bundle.lidar,
            _noise_scalars(bundle, SensorKind.IMU, mags, rng),
        )

    if cid == ConditionId.SPEEDOMETER_NOISE:
        mags = tuple(float(v) for v in params["magnitude"])
        return ObservationBundle(
            bundle.tick, bundle.sim_time_s, bundle.camera, bundle.lidar,
            _noise_scalars(bundle, SensorKind.SPEEDOMETER, mags, rng),
        )

    raise InvalidParameter(f"unhandled condition {cid!r}")
