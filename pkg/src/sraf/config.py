"""Benchmark configuration: a line-oriented ``key = value`` file with dotted
keys. Full key reference in docs/config.md.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import ConfigError, InvalidParameter
from .microsim import InfractionType, SimParams
from .scoring import DEFAULT_PENALTIES, PenaltyTable
from .sensor_models import CONDITION_ORDER, ConditionId, ConditionSpec, SensorKind


def parse_kv_file(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` comments and blank lines allowed."""
    out: dict[str, str] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {line_no}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"line {line_no}: empty key")
        out[key] = value.strip()
    return out


def _scalar(token: str):
    token = token.strip()
    try:
        return int(token)
    except ValueError:
        pass
    try:
        return float(token)
    except ValueError:
        pass
    return token


def parse_value(value: str):
    """Comma lists become tuples; numeric tokens become int/float."""
    if "," in value:
        return tuple(_scalar(t) for t in value.split(","))
    return _scalar(value)


def _as_bool(value: str, key: str) -> bool:
    low = value.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {value!r}")


@dataclass(frozen=True)
class PowerConfig:
    provider: str = "constant"
    watts: float = 65.0
    replay_path: str | None = None
    sample_interval_s: float = 1.0


@dataclass(frozen=True)
class SuiteConfig:
    camera: bool = True
    lidar: bool = True
    gnss: bool = True
    imu: bool = True
    speedometer: bool = True

    def scalar_kinds(self) -> frozenset[SensorKind]:
        kinds = set()
        if self.gnss:
            kinds.add(SensorKind.GNSS)
        if self.imu:
            kinds.add(SensorKind.IMU)
        if self.speedometer:
            kinds.add(SensorKind.SPEEDOMETER)
        return frozenset(kinds)


@dataclass(frozen=True)
class BenchmarkConfig:
    map_id: str
    routes: tuple[str, ...]
    agents: tuple[str, ...]
    seed: int = 0
    repeats: int = 1
    region: str = "balanced_test"
    sim: SimParams = field(default_factory=SimParams)
    suite: SuiteConfig = field(default_factory=SuiteConfig)
    power: PowerConfig = field(default_factory=PowerConfig)
    penalties: PenaltyTable = field(default_factory=PenaltyTable)
    conditions: tuple[ConditionSpec, ...] = ()
    deadline_s: float = 2.0
    lidar_channels: int = 16
    lidar_rays: int = 180

    def __post_init__(self):
        if not self.routes:
            raise ConfigError("config needs at least one route")
        if not self.agents:
            raise ConfigError("config needs at least one agent endpoint")
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")
        ids = [c.id for c in self.conditions]
        if len(set(ids)) != len(ids):
            raise ConfigError("duplicate condition ids in config")
        if ConditionId.BASELINE not in ids:
            object.__setattr__(
                self, "conditions",
                (ConditionSpec.baseline(),) + tuple(self.conditions))
        # keep deterministic declaration order
        ordered = sorted(self.conditions, key=lambda c: CONDITION_ORDER.index(c.id))
        object.__setattr__(self, "conditions", tuple(ordered))

    def condition(self, cid: ConditionId) -> ConditionSpec:
        for c in self.conditions:
            if c.id == cid:
                return c
        raise ConfigError(f"condition {cid.name} not configured")


_SIM_KEYS = {
    "dt": "dt",
    "tick_budget": "tick_budget",
    "accel_max": "accel_max",
    "brake_max": "brake_max",
    "drag": "drag",
    "speed_max": "speed_max",
    "steer_rate": "steer_rate",
    "waypoint_tol_m": "waypoint_tol_m",
    "deviation_m": "deviation_m",
    "blocked_speed": "blocked_speed",
    "blocked_after_s": "blocked_after_s",
}


def _build_conditions(kv: dict[str, str]) -> tuple[ConditionSpec, ...]:
    staged: dict[ConditionId, dict[int, dict]] = {}
    for key, value in kv.items():
        if not key.startswith("condition."):
            continue
        parts = key.split(".")
        if len(parts) != 5 or parts[2] != "variant":
            raise ConfigError(
                f"{key}: expected condition.<ID>.variant.<k>.<param>")
        try:
            cid = ConditionId(parts[1])
        except ValueError:
            raise ConfigError(f"{key}: unknown condition id {parts[1]!r}") from None
        try:
            variant = int(parts[3])
        except ValueError:
            raise ConfigError(f"{key}: variant index must be an integer") from None
        parsed = parse_value(value)
        staged.setdefault(cid, {}).setdefault(variant, {})[parts[4]] = parsed

    conditions = []
    for cid, variants in staged.items():
        indices = sorted(variants)
        if indices != list(range(len(indices))):
            raise ConfigError(
                f"condition {cid.name}: variant indices must be 0..{len(indices) - 1}")
        normalized = []
        for i in indices:
            params = dict(variants[i])
            # single-element list params still need tuple form
            for list_key in ("rect", "channels", "magnitude", "box", "sector"):
                if list_key in params and not isinstance(params[list_key], tuple):
                    params[list_key] = (params[list_key],)
            normalized.append(params)
        try:
            conditions.append(ConditionSpec(cid, tuple(normalized)))
        except InvalidParameter as exc:
            raise ConfigError(f"condition {cid.name}: {exc}") from None
    return tuple(conditions)


def config_from_text(text: str) -> BenchmarkConfig:
    kv = parse_kv_file(text)

    def take(key: str, default=None) -> str | None:
        return kv.get(key, default)

    map_id = take("map")
    if not map_id:
        raise ConfigError("missing required key 'map'")
    routes_raw = take("routes") or take("route")
    if not routes_raw:
        raise ConfigError("missing required key 'routes'")
    routes = tuple(t.strip() for t in routes_raw.split(",") if t.strip())
    agents_raw = take("agents") or take("agent")
    if not agents_raw:
        raise ConfigError("missing required key 'agents'")
    agents = tuple(t.strip() for t in agents_raw.split(",") if t.strip())

    sim_kwargs = {}
    for key, attr in _SIM_KEYS.items():
        raw = take(f"sim.{key}")
        if raw is not None:
            val = parse_value(raw)
            sim_kwargs[attr] = int(val) if attr == "tick_budget" else float(val)

    suite = SuiteConfig(
        camera=_as_bool(take("agent.camera", "true"), "agent.camera"),
        lidar=_as_bool(take("agent.lidar", "true"), "agent.lidar"),
        gnss=_as_bool(take("agent.gnss", "true"), "agent.gnss"),
        imu=_as_bool(take("agent.imu", "true"), "agent.imu"),
        speedometer=_as_bool(take("agent.speedometer", "true"), "agent.speedometer"),
    )

    power = PowerConfig(
        provider=take("power.provider", "constant"),
        watts=float(parse_value(take("power.watts", "65"))),
        replay_path=take("power.replay"),
        sample_interval_s=float(parse_value(take("power.sample_interval_s", "1.0"))),
    )

    coefficients = dict(DEFAULT_PENALTIES)
    for key, value in kv.items():
        if key.startswith("penalty."):
            name = key.split(".", 1)[1]
            try:
                coefficients[InfractionType(name)] = float(value)
            except ValueError:
                raise ConfigError(f"{key}: unknown infraction type or bad value") from None

    return BenchmarkConfig(
        map_id=map_id,
        routes=routes,
        agents=agents,
        seed=int(parse_value(take("seed", "0"))),
        repeats=int(parse_value(take("repeats", "1"))),
        region=take("region", "balanced_test"),
        sim=SimParams(**sim_kwargs),
        suite=suite,
        power=power,
        penalties=PenaltyTable(coefficients),
        conditions=_build_conditions(kv),
        deadline_s=float(parse_value(take("session.deadline_s", "2.0"))),
        lidar_channels=int(parse_value(take("sensors.lidar_channels", "16"))),
        lidar_rays=int(parse_value(take("sensors.lidar_rays", "180"))),
    )


def load_config(path: str | Path) -> BenchmarkConfig:
    return config_from_text(Path(path).read_text(encoding="utf-8"))


def with_overrides(cfg: BenchmarkConfig, *, agents: tuple[str, ...] | None = None,
                   seed: int | None = None, region: str | None = None) -> BenchmarkConfig:
    if agents:
        cfg = replace(cfg, agents=tuple(agents))
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    if region:
        cfg = replace(cfg, region=region)
    return cfg
