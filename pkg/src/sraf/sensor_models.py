"""Observation data model shared by the simulator, fault injectors, wire
protocol, and agents, plus the deterministic random-stream scheme.

All types are immutable values. Arrays are stored read-only so bundles can be
shared freely between threads and compared bit-for-bit in golden tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import InvalidParameter

# splitmix64 constants (Steele/Lea/Flood mix; exact 64-bit wraparound).
_MASK64 = 0xFFFFFFFFFFFFFFFF
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def _mix64(z: int) -> int:
    """splitmix64 finalizer: full-avalanche 64-bit mix."""
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return z ^ (z >> 31)


def _mix64_array(z: np.ndarray) -> np.ndarray:
    """Vectorized splitmix64 finalizer; uint64 array ops wrap mod 2**64."""
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


def _hash_field(value) -> int:
    """Map one lineage field to 64 bits. Integers are taken mod 2**64;
    strings/enums are FNV-1a hashed over their UTF-8 bytes."""
    if isinstance(value, Enum):
        value = value.name
    if isinstance(value, (int, np.integer)):
        return int(value) & _MASK64
    if isinstance(value, str):
        h = _FNV_OFFSET
        for b in value.encode("utf-8"):
            h = ((h ^ b) * _FNV_PRIME) & _MASK64
        return h
    raise InvalidParameter(f"lineage field must be int, str, or Enum, got {type(value)!r}")


class RngStream:
    """Deterministic counter-based random stream.

    The state is a 64-bit splitmix64 counter derived from (master_seed,
    lineage) by ``derive_stream``. Draw k produces
    ``mix64(state0 + k * GAMMA)``; all arithmetic wraps mod 2**64, so the
    sequence is identical on every platform and a block draw of n values
    equals n successive single draws.
    """

    __slots__ = ("master_seed", "lineage", "_state")

    def __init__(self, master_seed: int, lineage: tuple, state: int):
        self.master_seed = master_seed
        self.lineage = lineage
        self._state = state

    def fork(self, *tags) -> "RngStream":
        """Derive an independent stream for lineage + tags.

        Forking is a pure function of (master_seed, lineage, tags); it does
        not consume or depend on draws already made from this stream.
        """
        return derive_stream(self.master_seed, self.lineage + tuple(tags))

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK64
        return _mix64(self._state)

    def u64_array(self, n: int) -> np.ndarray:
        """n raw 64-bit draws, identical to n calls of next_u64()."""
        ks = (np.uint64(self._state)
              + np.uint64(_GAMMA) * np.arange(1, n + 1, dtype=np.uint64))
        self._state = (self._state + _GAMMA * n) & _MASK64
        return _mix64_array(ks)

    def uniform_array(self, n: int) -> np.ndarray:
        """n doubles in [0, 1): top 53 bits of each draw scaled by 2**-53."""
        return (self.u64_array(n) >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)

    def uniform(self, low: float = 0.0, high: float = 1.0) -> float:
        u = (self.next_u64() >> 11) * (2.0 ** -53)
        return low + (high - low) * u

    def normal_array(self, n: int) -> np.ndarray:
        """n standard-normal doubles via the Box-Muller transform.

        Consumes exactly 2n uniforms (u1 block, then u2 block) so output is a
        pure function of stream position.
        """
        u1 = self.uniform_array(n)
        u2 = self.uniform_array(n)
        return np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * math.pi * u2)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.master_seed}, lineage={self.lineage})"


def derive_stream(master_seed: int, lineage: tuple) -> RngStream:
    """Derive the random stream for one (seed, lineage) pair.

    The initial counter is built by folding each lineage field into the seed
    with the splitmix64 finalizer: ``h = mix64(h ^ hash(field))`` starting
    from ``h = mix64(seed)``. Equal inputs give equal streams on every
    platform; any field change yields a statistically independent stream.
    """
    h = _mix64(int(master_seed) & _MASK64)
    for part in lineage:
        h = _mix64(h ^ _hash_field(part))
    return RngStream(master_seed, tuple(lineage), h)


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Image:
    """Grayscale raster: row-major 8-bit intensities, shape (height, width)."""

    width: int
    height: int
    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.uint8)
        if px.shape != (self.height, self.width):
            raise InvalidParameter(
                f"pixel buffer shape {px.shape} != (height={self.height}, width={self.width})"
            )
        object.__setattr__(self, "pixels", _freeze(px))

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Image)
            and self.width == other.width
            and self.height == other.height
            and np.array_equal(self.pixels, other.pixels)
        )

    def __hash__(self):
        return hash((self.width, self.height, self.pixels.tobytes()))


@dataclass(frozen=True)
class OcclusionMask:
    """Binary raster with the same layout as the Image it applies to."""

    width: int
    height: int
    cells: np.ndarray

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype=np.uint8)
        if cells.shape != (self.height, self.width):
            raise InvalidParameter(
                f"mask shape {cells.shape} != (height={self.height}, width={self.width})"
            )
        if not np.isin(cells, (0, 1)).all():
            raise InvalidParameter("mask cells must be strictly binary")
        object.__setattr__(self, "cells", _freeze(cells))

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, OcclusionMask)
            and self.width == other.width
            and self.height == other.height
            and np.array_equal(self.cells, other.cells)
        )

    def __hash__(self):
        return hash((self.width, self.height, self.cells.tobytes()))


class LidarPoint(NamedTuple):
    x: float
    y: float
    z: float
    channel: int


@dataclass(frozen=True)
class PointCloud:
    """Ordered LiDAR return set.

    ``xyz`` is (N, 3) float64 in the ego frame; ``channels`` is (N,) int64
    ring indices. Canonical point order is (channel, azimuth), which makes
    cloud equality well-defined for golden tests.
    """

    num_channels: int
    xyz: np.ndarray
    channels: np.ndarray

    def __post_init__(self):
        xyz = np.asarray(self.xyz, dtype=np.float64).reshape(-1, 3)
        ch = np.asarray(self.channels, dtype=np.int64).reshape(-1)
        if len(xyz) != len(ch):
            raise InvalidParameter("xyz and channels length mismatch")
        if self.num_channels <= 0:
            raise InvalidParameter("num_channels must be positive")
        if len(ch) and (ch.min() < 0 or ch.max() >= self.num_channels):
            raise InvalidParameter("channel index out of range")
        object.__setattr__(self, "xyz", _freeze(xyz))
        object.__setattr__(self, "channels", _freeze(ch))

    @classmethod
    def from_points(cls, points: Iterable[LidarPoint], num_channels: int) -> "PointCloud":
        pts = list(points)
        xyz = np.array([[p.x, p.y, p.z] for p in pts], dtype=np.float64).reshape(-1, 3)
        ch = np.array([p.channel for p in pts], dtype=np.int64)
        return cls(num_channels=num_channels, xyz=xyz, channels=ch)

    def points(self) -> list[LidarPoint]:
        return [
            LidarPoint(float(x), float(y), float(z), int(c))
            for (x, y, z), c in zip(self.xyz, self.channels)
        ]

    def sorted_canonical(self) -> "PointCloud":
        """Reorder points by (channel, azimuth)."""
        if len(self.channels) == 0:
            return self
        azimuth = np.arctan2(self.xyz[:, 1], self.xyz[:, 0])
        order = np.lexsort((azimuth, self.channels))
        return PointCloud(self.num_channels, self.xyz[order], self.channels[order])

    def __len__(self) -> int:
        return len(self.channels)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, PointCloud)
            and self.num_channels == other.num_channels
            and np.array_equal(self.xyz, other.xyz)
            and np.array_equal(self.channels, other.channels)
        )

    def __hash__(self):
        return hash((self.num_channels, self.xyz.tobytes(), self.channels.tobytes()))


class SensorKind(Enum):
    GNSS = "GNSS"
    IMU = "IMU"
    SPEEDOMETER = "SPEEDOMETER"


# Fixed component count per scalar kind:
#   GNSS [lat_deg, lon_deg]; IMU [accel_x, accel_y, yaw_rate, compass];
#   SPEEDOMETER [speed].
SCALAR_ARITY = {SensorKind.GNSS: 2, SensorKind.IMU: 4, SensorKind.SPEEDOMETER: 1}


@dataclass(frozen=True)
class ScalarReading:
    kind: SensorKind
    values: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if len(vals) != SCALAR_ARITY[self.kind]:
            raise InvalidParameter(
                f"{self.kind.name} reading needs {SCALAR_ARITY[self.kind]} values, got {len(vals)}"
            )
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class ObservationBundle:
    """Per-tick sensor outputs delivered to the agent under test."""

    tick: int
    sim_time_s: float
    camera: Image | None = None
    lidar: PointCloud | None = None
    scalars: tuple[ScalarReading, ...] = ()

    def scalar(self, kind: SensorKind) -> ScalarReading | None:
        for r in self.scalars:
            if r.kind == kind:
                return r
        return None


class ConditionId(Enum):
    BASELINE = "BASELINE"
    CAMERA_OCCLUSION = "CAMERA_OCCLUSION"
    LIDAR_OCCLUSION = "LIDAR_OCCLUSION"
    WEATHER = "WEATHER"
    DRIFT = "DRIFT"
    CAMERA_NOISE = "CAMERA_NOISE"
    LIDAR_FAULT = "LIDAR_FAULT"
    GNSS_NOISE = "GNSS_NOISE"
    IMU_NOISE = "IMU_NOISE"
    SPEEDOMETER_NOISE = "SPEEDOMETER_NOISE"


# Deterministic planning/report order for conditions.
CONDITION_ORDER = tuple(ConditionId)


@dataclass(frozen=True)
class ConditionSpec:
    """One named disturbance family; each variant parameterizes one run."""

    id: ConditionId
    variants: tuple[dict, ...] = field(default_factory=tuple)

    def __post_init__(self):
        variants = tuple(dict(v) for v in self.variants)
        if self.id == ConditionId.BASELINE:
            if len(variants) != 1 or variants[0]:
                raise InvalidParameter("BASELINE must have exactly one empty variant")
        elif not variants:
            raise InvalidParameter(f"{self.id.name} requires at least one variant")
        object.__setattr__(self, "variants", variants)

    @classmethod
    def baseline(cls) -> "ConditionSpec":
        return cls(ConditionId.BASELINE, ({},))


def wrap_angle_2pi(a: float) -> float:
    """Map an angle to [0, 2*pi)."""
    return float(a) % (2.0 * math.pi)


def bundle_fields_equal(a: ObservationBundle, b: ObservationBundle,
                        *, ignore: Sequence[str] = ()) -> bool:
    """Field-wise bundle comparison used by fault-injection tests."""
    checks = {
        "tick": a.tick == b.tick,
        "sim_time_s": a.sim_time_s == b.sim_time_s,
        "camera": a.camera == b.camera,
        "lidar": a.lidar == b.lidar,
        "scalars": a.scalars == b.scalars,
    }
    return all(ok for name, ok in checks.items() if name not in ignore)
