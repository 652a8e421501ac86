"""Run planning and execution: builds the route x condition x variant
matrix, executes each run lock-step with isolated RNG lineages and energy
ledgers, and emits the leaderboard, raw results log, traces, and summary.

End-to-end determinism contract: for a fixed (config, seed, agent set),
every emitted file is byte-identical across invocations and worker counts.
"""

from __future__ import annotations

import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from importlib.resources import files
from pathlib import Path

from .agent_protocol import (
    RouteMeta,
    SensorSuite,
    TickData,
    encode_tick,
    open_session,
    run_session,
)
from .baseline_agents import PrivilegedContext
from .canonical_json import canonical_dumps, parse_line
from .config import BenchmarkConfig
from .emissions import (
    EnergyLedger,
    PowerSample,
    ReplayProvider,
    SourceIntensityTable,
    bundled_regions,
    carbon_intensity,
    co2_emissions,
    integrate_energy,
    load_regions,
    make_provider,
)
from .errors import AgentError, ConfigError, ReportError, SrafError
from .fault_injection import apply_condition, condition_applicable
from .microsim import (
    CornerCasePreset,
    EgoControl,
    InfractionEvent,
    Microsim,
    SimParams,
    SimState,
    WorldMap,
    load_world,
    parse_world,
    read_scalar_sensors,
    render_camera,
    scan_lidar,
)
from .scoring import (
    LeaderboardRow,
    RouteResult,
    aggregate_leaderboard,
    leaderboard_csv,
    score_route_result,
)
from .sensor_models import (
    ConditionId,
    ConditionSpec,
    ObservationBundle,
    derive_stream,
)
from .microsim.synth import gnss_from_xy


@dataclass(frozen=True)
class RunDescriptor:
    index: int
    agent: str
    route_id: str
    condition_id: ConditionId
    variant: int
    repeat: int

    @property
    def lineage(self) -> tuple:
        return (self.route_id, self.condition_id.name, self.variant, f"rep{self.repeat}")

    def trace_name(self) -> str:
        safe = "".join(c if c.isalnum() else "-" for c in self.agent)
        if len(safe) > 32:
            digest = zlib.crc32(self.agent.encode("utf-8")) & 0xFFFFFFFF
            safe = f"{safe[:24]}-{digest:08x}"
        return (f"{self.index:04d}_{safe}_{self.route_id}_"
                f"{self.condition_id.name}_v{self.variant}_r{self.repeat}.trace")


@dataclass(frozen=True)
class RunMatrix:
    runs: tuple[RunDescriptor, ...]
    skipped: dict[str, tuple[str, ...]]  # agent -> condition names skipped


def effective_suite(cfg: BenchmarkConfig, endpoint: str) -> SensorSuite:
    """The sensor suite for one agent endpoint: the config suite, with the
    privileged flag set for the builtin privileged policy."""
    return SensorSuite(
        has_camera=cfg.suite.camera,
        has_lidar=cfg.suite.lidar,
        scalars=cfg.suite.scalar_kinds(),
        privileged=endpoint == "builtin:privileged",
    )


def plan_run_matrix(cfg: BenchmarkConfig) -> RunMatrix:
    """Deterministic run order: agent, route, condition, variant, repeat.

    Conditions whose sensors are absent from an agent's suite are excluded
    and recorded under ``skipped``.
    """
    runs: list[RunDescriptor] = []
    skipped: dict[str, tuple[str, ...]] = {}
    index = 0
    for agent in cfg.agents:
        suite = effective_suite(cfg, agent)
        agent_skipped: list[str] = []
        for route_id in cfg.routes:
            for cond in cfg.conditions:
                applicable = condition_applicable(
                    cond.id,
                    has_camera=suite.has_camera,
                    has_lidar=suite.has_lidar,
                    scalar_kinds=set(suite.scalars),
                )
                if not applicable:
                    if cond.id.name not in agent_skipped:
                        agent_skipped.append(cond.id.name)
                    continue
                # the undisturbed reference run is not repeated
                repeats = 1 if cond.id == ConditionId.BASELINE else cfg.repeats
                for variant in range(len(cond.variants)):
                    for repeat in range(repeats):
                        runs.append(RunDescriptor(
                            index=index, agent=agent, route_id=route_id,
                            condition_id=cond.id, variant=variant, repeat=repeat,
                        ))
                        index += 1
        skipped[agent] = tuple(agent_skipped)
    lineages = {(r.agent, r.lineage) for r in runs}
    if len(lineages) != len(runs):
        raise ConfigError("run matrix lineages are not distinct")
    return RunMatrix(runs=tuple(runs), skipped=skipped)


def load_world_by_id(map_id: str) -> WorldMap:
    path = Path(map_id)
    if path.exists():
        return load_world(path)
    resource = files("sraf.data.maps").joinpath(f"{map_id}.map")
    if not resource.is_file():
        raise ConfigError(f"map {map_id!r}: not a file and not a bundled map")
    return parse_world(resource.read_text(encoding="utf-8"), name=map_id,
                       path=f"bundled:{map_id}")


class _SimTickSource:
    """Lock-step tick source for one run: synthesizes observations, applies
    the condition, advances the simulation with each accepted control, and
    scores the run (including aborts) into a RouteResult."""

    def __init__(self, cfg: BenchmarkConfig, desc: RunDescriptor, sim: Microsim,
                 state: SimState, suite: SensorSuite, condition: ConditionSpec,
                 trace: list[str] | None):
        self.cfg = cfg
        self.desc = desc
        self.sim = sim
        self.state = state
        self.suite = suite
        self.condition = condition
        self.trace = trace
        self.events: list[InfractionEvent] = []
        self.rng_root = derive_stream(cfg.seed, desc.lineage)
        self.ledger = EnergyLedger()
        self.provider = make_provider(
            cfg.power.provider, watts=cfg.power.watts,
            replay_path=cfg.power.replay_path)
        self.estimated = getattr(self.provider, "estimated", False)
        self._sampling = True
        self._next_sample_s = 0.0
        self._sample()
        self._external = not desc.agent.startswith("builtin:")
        self._result: RouteResult | None = None

    # --------------------------------------------------------------- sampling
    def _sample(self) -> None:
        """One ledger sample at the current sim time. Deterministic providers
        run on the simulation clock so emissions are reproducible."""
        if not self._sampling:
            return
        t = self.state.sim_time_s
        try:
            s = self.provider.sample(t)
        except SrafError:
            self._sampling = False  # replay exhausted: ledger closes
            return
        if isinstance(self.provider, ReplayProvider):
            self.ledger.append(s)
        else:
            self.ledger.append(PowerSample(t, s.watts))
        self._next_sample_s = t + self.cfg.power.sample_interval_s

    # ------------------------------------------------------------------ trace
    def _trace_line(self, obj: dict) -> None:
        if self.trace is not None:
            self.trace.append(canonical_dumps(obj))

    # ------------------------------------------------------------------- loop
    def next_tick(self):
        reason = self.sim.is_run_terminated(self.state)
        if reason is not None:
            return self._finalize(reason.value, None)
        bundle = self._synthesize()
        if self.condition.id not in (ConditionId.BASELINE, ConditionId.DRIFT):
            bundle = apply_condition(
                bundle, self.condition, self.desc.variant,
                self.rng_root.fork("fault", self.state.tick))
        priv = PrivilegedContext(self.sim, self.state)
        encoded = encode_tick(bundle) if self._external else None
        return TickData(tick=self.state.tick, bundle=bundle, priv=priv, encoded=encoded)

    def _synthesize(self) -> ObservationBundle:
        state = self.state
        camera = None
        if self.suite.has_camera:
            camera = render_camera(self.sim, state)
        lidar = None
        if self.suite.has_lidar:
            lidar = scan_lidar(self.sim, state, self.cfg.lidar_channels,
                               self.cfg.lidar_rays)
        scalars = tuple(r for r in read_scalar_sensors(self.sim, state)
                        if r.kind in self.suite.scalars)
        return ObservationBundle(
            tick=state.tick, sim_time_s=state.sim_time_s,
            camera=camera, lidar=lidar, scalars=scalars,
        )

    def push_control(self, ctrl: EgoControl) -> None:
        nxt = self.sim.step(self.state, ctrl)
        for event in self.sim.detect_infractions(self.state, nxt):
            self.events.append(event)
            self._trace_line({"type": "I", "tick": event.tick,
                              "itype": event.type.value, "actor": event.actor_id})
        ego = nxt.ego
        self._trace_line({
            "type": "T", "tick": nxt.tick,
            "ctrl": [ctrl.steer, ctrl.throttle, ctrl.brake],
            "pose": [ego.x, ego.y, ego.heading], "speed": ego.speed,
        })
        self.state = nxt
        while self._sampling and self.state.sim_time_s >= self._next_sample_s:
            self._sample()

    def abort(self, error: AgentError) -> RouteResult:
        return self._finalize(error.code, error)

    def _finalize(self, termination: str, error: AgentError | None) -> RouteResult:
        if self._result is not None:
            return self._result
        if self._sampling and self.ledger.samples and \
                self.state.sim_time_s > self.ledger.samples[-1].t:
            try:
                s = self.provider.sample(self.state.sim_time_s)
                self.ledger.append(PowerSample(self.state.sim_time_s, s.watts))
            except SrafError:
                pass
        self.ledger.close()

        counts: dict[str, int] = {}
        for event in self.events:
            counts[event.type.value] = counts.get(event.type.value, 0) + 1

        mix = _region_mix(self.cfg.region)
        ci = carbon_intensity(mix, SourceIntensityTable())
        energy = integrate_energy(self.ledger) if self.ledger.samples else 0.0
        emissions_kg = co2_emissions(ci, energy)

        self._result = score_route_result(
            agent=self.desc.agent,
            route_id=self.desc.route_id,
            condition_id=self.desc.condition_id,
            variant=self.desc.variant,
            repeat=self.desc.repeat,
            completion=self.sim.route_completion(self.state),
            infraction_counts=counts,
            table=self.cfg.penalties,
            sim_duration_s=self.state.sim_time_s,
            termination=termination,
            emissions_kg=emissions_kg,
            wall_duration_s=self.ledger.duration_s,
            agent_error=None if error is None else error.code,
        )
        return self._result


def _region_mix(region: str):
    regions = bundled_regions()
    if region in regions:
        return regions[region]
    path = Path(region)
    if path.exists():
        table = load_regions(path)
        if len(table) == 1:
            return next(iter(table.values()))
        raise ConfigError(f"region file {region!r} must define exactly one region")
    raise ConfigError(f"unknown region {region!r}")


def _drift_preset(condition: ConditionSpec, variant: int) -> CornerCasePreset:
    params = dict(condition.variants[variant])
    preset_id = str(params.pop("preset", "DEBRIS")).upper()
    return CornerCasePreset(preset_id, params)


def execute_run(cfg: BenchmarkConfig, desc: RunDescriptor, world: WorldMap,
                trace_path: Path | None = None) -> RouteResult:
    """Execute one run end to end and optionally write its trace file."""
    sim = Microsim(world, world.route(desc.route_id), cfg.sim)
    state = sim.initial_state(lineage=desc.lineage)
    condition = cfg.condition(desc.condition_id)
    rng_root = derive_stream(cfg.seed, desc.lineage)
    if desc.condition_id == ConditionId.DRIFT:
        state = sim.inject_corner_case(
            state, _drift_preset(condition, desc.variant), rng_root.fork("corner"))

    suite = effective_suite(cfg, desc.agent)
    anchor = world.anchor
    waypoints_gnss = tuple(
        gnss_from_xy(float(x), float(y), anchor)
        for x, y in sim.route.waypoints
    )
    meta = RouteMeta(dt=cfg.sim.dt, suite=suite, anchor=anchor,
                     waypoints_gnss=waypoints_gnss)

    trace: list[str] | None = None
    if trace_path is not None:
        trace = [canonical_dumps({
            "type": "TRACE_HEADER", "version": 1,
            "run": {
                "agent": desc.agent, "route": desc.route_id,
                "condition": desc.condition_id.name, "variant": desc.variant,
                "repeat": desc.repeat, "map": cfg.map_id, "seed": cfg.seed,
            },
            "variant_params": _jsonable(condition.variants[desc.variant]),
            "sim": {
                "dt": cfg.sim.dt, "tick_budget": cfg.sim.tick_budget,
                "blocked_after_s": cfg.sim.blocked_after_s,
                "deviation_m": cfg.sim.deviation_m,
                "waypoint_tol_m": cfg.sim.waypoint_tol_m,
            },
            "penalties": {k.value: v for k, v in sorted(
                cfg.penalties.coefficients.items(), key=lambda kv: kv[0].value)},
        })]

    source = _SimTickSource(cfg, desc, sim, state, suite, condition, trace)
    session = open_session(desc.agent)
    outcome = run_session(session, meta, source, deadline_s=cfg.deadline_s)
    result: RouteResult = outcome.result
    if outcome.error_code is not None and outcome.error_tick is not None:
        # annotate the trace with where the session failed
        if trace is not None:
            trace.append(canonical_dumps({
                "type": "AGENT_ERROR", "code": outcome.error_code,
                "tick": outcome.error_tick,
            }))
    if trace is not None:
        trace.append(canonical_dumps({"type": "TRACE_END", "result": _result_dict(result)}))
        trace_path.write_text("\n".join(trace) + "\n", encoding="utf-8")
    return result


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def _result_dict(r: RouteResult) -> dict:
    return {
        "agent": r.agent, "route": r.route_id, "condition": r.condition_id.name,
        "variant": r.variant, "repeat": r.repeat, "completion": r.completion,
        "infractions": dict(sorted(r.infractions.items())), "penalty": r.penalty,
        "driving_score": r.driving_score, "sim_duration_s": r.sim_duration_s,
        "termination": r.termination, "emissions_kg": r.emissions_kg,
        "wall_duration_s": r.wall_duration_s, "agent_error": r.agent_error,
    }


def _result_from_dict(d: dict) -> RouteResult:
    return RouteResult(
        agent=d["agent"], route_id=d["route"],
        condition_id=ConditionId(d["condition"]), variant=int(d["variant"]),
        repeat=int(d["repeat"]), completion=float(d["completion"]),
        infractions={k: int(v) for k, v in d["infractions"].items()},
        penalty=float(d["penalty"]), driving_score=float(d["driving_score"]),
        sim_duration_s=float(d["sim_duration_s"]), termination=d["termination"],
        emissions_kg=float(d["emissions_kg"]),
        wall_duration_s=float(d["wall_duration_s"]),
        agent_error=d.get("agent_error"),
    )


def _worker_run(args) -> tuple[int, RouteResult]:
    cfg, desc, trace_path = args
    world = load_world_by_id(cfg.map_id)
    return desc.index, execute_run(cfg, desc, world, trace_path)


def preflight_endpoints(cfg: BenchmarkConfig) -> None:
    """Verify external endpoints are reachable before any run. Spawn or
    connect failures abort the benchmark; anything after is run data."""
    for endpoint in cfg.agents:
        if endpoint.startswith("builtin:"):
            open_session(endpoint)  # validates the policy name
            continue
        session = open_session(endpoint)  # raises AgentDied if unreachable
        session.close()


def run_benchmark(cfg: BenchmarkConfig, out_dir: str | Path,
                  workers: int = 1) -> tuple[list[LeaderboardRow], Path]:
    """Execute the full matrix and write leaderboard.csv, results.log,
    traces/, and summary.txt. Failed runs are data, not errors."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    traces_dir = out / "traces"
    traces_dir.mkdir(exist_ok=True)

    preflight_endpoints(cfg)
    matrix = plan_run_matrix(cfg)
    world = load_world_by_id(cfg.map_id)

    jobs = [(cfg, desc, traces_dir / desc.trace_name()) for desc in matrix.runs]
    results: list[RouteResult | None] = [None] * len(jobs)
    if workers <= 1:
        for job in jobs:
            idx, result = _worker_run(job)
            results[idx] = result
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for idx, result in pool.map(_worker_run, jobs):
                results[idx] = result
    final: list[RouteResult] = [r for r in results if r is not None]

    privileged = frozenset(
        a for a in cfg.agents if effective_suite(cfg, a).privileged)
    rows = aggregate_leaderboard(final, privileged_agents=privileged,
                                 skipped=matrix.skipped)

    _write_results_log(out / "results.log", cfg, matrix, final, privileged)
    (out / "leaderboard.csv").write_text(leaderboard_csv(rows), encoding="utf-8")
    (out / "summary.txt").write_text(_render_summary(cfg, rows, final), encoding="utf-8")
    _write_report_tables(out, rows)
    return rows, out


def _crc_line(payload: dict) -> str:
    body = canonical_dumps(payload)
    crc = zlib.crc32(body.encode("utf-8")) & 0xFFFFFFFF
    return canonical_dumps({"crc": crc, "record": payload})


def _write_results_log(path: Path, cfg: BenchmarkConfig, matrix: RunMatrix,
                       results: list[RouteResult], privileged: frozenset[str]) -> None:
    lines = [_crc_line({
        "type": "META",
        "seed": cfg.seed,
        "map": cfg.map_id,
        "region": cfg.region,
        "agents": {a: {"privileged": a in privileged} for a in cfg.agents},
        "skipped": {a: list(v) for a, v in matrix.skipped.items()},
    })]
    for r in results:
        lines.append(_crc_line({"type": "RESULT", **_result_dict(r)}))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_results_log(path: str | Path) -> tuple[dict, list[RouteResult]]:
    """Parse and integrity-check a results log."""
    p = Path(path)
    if not p.exists():
        raise ReportError(f"results log not found: {p}")
    meta: dict | None = None
    results: list[RouteResult] = []
    for line_no, raw in enumerate(p.read_text(encoding="utf-8").splitlines(), start=1):
        if not raw.strip():
            continue
        try:
            wrapper = parse_line(raw)
            payload = wrapper["record"]
            crc = int(wrapper["crc"])
        except (ValueError, KeyError, TypeError) as exc:
            raise ReportError(f"{p}:{line_no}: unparseable record: {exc}") from None
        body = canonical_dumps(payload)
        if zlib.crc32(body.encode("utf-8")) & 0xFFFFFFFF != crc:
            raise ReportError(f"{p}:{line_no}: integrity check failed (crc mismatch)")
        if payload.get("type") == "META":
            meta = payload
        elif payload.get("type") == "RESULT":
            results.append(_result_from_dict(payload))
        else:
            raise ReportError(f"{p}:{line_no}: unknown record type {payload.get('type')!r}")
    if meta is None:
        raise ReportError(f"{p}: missing META record")
    return meta, results


def emit_report(results_dir: str | Path) -> Path:
    """Regenerate leaderboard and plotting tables from the raw results log
    without re-running anything."""
    out = Path(results_dir)
    meta, results = read_results_log(out / "results.log")
    privileged = frozenset(
        a for a, info in meta["agents"].items() if info.get("privileged"))
    skipped = {a: tuple(v) for a, v in meta.get("skipped", {}).items()}
    rows = aggregate_leaderboard(results, privileged_agents=privileged, skipped=skipped)
    (out / "leaderboard.csv").write_text(leaderboard_csv(rows), encoding="utf-8")
    _write_report_tables(out, rows)
    return out / "leaderboard.csv"


def _write_report_tables(out: Path, rows: list[LeaderboardRow]) -> None:
    """Plain numeric tables suitable for plotting per-condition bars."""
    report_dir = out / "report"
    report_dir.mkdir(exist_ok=True)
    lines = ["# agent\tcondition\tscore\tratio"]
    for row in rows:
        for name, cres in sorted(row.conditions.items()):
            ratio = "nan" if cres.ratio is None else f"{cres.ratio:.6f}"
            lines.append(f"{row.agent}\t{name}\t{cres.score:.6f}\t{ratio}")
    (report_dir / "condition_scores.tsv").write_text("\n".join(lines) + "\n",
                                                     encoding="utf-8")
    em = ["# agent\tAEPS\tAEPR\tASTPR"]
    for row in rows:
        em.append(f"{row.agent}\t{row.aeps:.9f}\t{row.aepr:.9f}\t{row.astpr:.3f}")
    (report_dir / "emissions.tsv").write_text("\n".join(em) + "\n", encoding="utf-8")


def _render_summary(cfg: BenchmarkConfig, rows: list[LeaderboardRow],
                    results: list[RouteResult]) -> str:
    lines = [
        "sraf benchmark summary",
        f"map: {cfg.map_id}  routes: {', '.join(cfg.routes)}  seed: {cfg.seed}",
        f"runs: {len(results)}  region: {cfg.region}",
        "",
    ]
    for row in rows:
        flag = "  [ranked by DS: privileged or no applicable conditions]" if row.flagged else ""
        rds = "-" if row.rds is None else f"{row.rds:.3f}"
        lines.append(f"{row.agent}: DS={row.ds:.3f} RDS={rds}{flag}")
        if row.skipped_conditions:
            lines.append(f"  skipped (sensor absent): {', '.join(row.skipped_conditions)}")
        for name, cres in sorted(row.conditions.items()):
            ratio = "undef" if cres.ratio is None else f"{cres.ratio:.3f}"
            lines.append(f"  {name}: score={cres.score:.3f} ratio={ratio}")
    errors = [r for r in results if r.agent_error]
    if errors:
        lines.append("")
        lines.append("agent failures (scored as-is):")
        for r in errors:
            lines.append(f"  {r.agent} {r.route_id}/{r.condition_id.name}"
                         f" v{r.variant} r{r.repeat}: {r.agent_error}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------- replay

def replay_trace(trace_path: str | Path) -> RouteResult:
    """Re-simulate a trace from its recorded controls and verify the recorded
    poses and scores. Raises ReportError on any divergence."""
    p = Path(trace_path)
    lines = [parse_line(raw) for raw in p.read_text(encoding="utf-8").splitlines()
             if raw.strip()]
    if not lines or lines[0].get("type") != "TRACE_HEADER":
        raise ReportError(f"{p}: not a trace file")
    header = lines[0]
    run = header["run"]
    world = load_world_by_id(run["map"])
    sim_cfg = header["sim"]
    sim = Microsim(world, world.route(run["route"]), SimParams(
        dt=float(sim_cfg["dt"]), tick_budget=int(sim_cfg["tick_budget"]),
        blocked_after_s=float(sim_cfg["blocked_after_s"]),
        deviation_m=float(sim_cfg["deviation_m"]),
        waypoint_tol_m=float(sim_cfg["waypoint_tol_m"]),
    ))
    desc_lineage = (run["route"], run["condition"], int(run["variant"]),
                    f"rep{int(run['repeat'])}")
    state = sim.initial_state(lineage=desc_lineage)
    if run["condition"] == ConditionId.DRIFT.value:
        params = dict(header.get("variant_params", {}))
        preset_id = str(params.pop("preset", "DEBRIS")).upper()
        rng = derive_stream(int(run["seed"]), desc_lineage)
        state = sim.inject_corner_case(state, CornerCasePreset(preset_id, params),
                                       rng.fork("corner"))

    events: list[InfractionEvent] = []
    recorded_infractions: list[dict] = []
    end_record: dict | None = None
    for line in lines[1:]:
        ltype = line.get("type")
        if ltype == "T":
            ctrl = EgoControl(*[float(v) for v in line["ctrl"]])
            nxt = sim.step(state, ctrl)
            events.extend(sim.detect_infractions(state, nxt))
            state = nxt
            pose = [state.ego.x, state.ego.y, state.ego.heading]
            if canonical_dumps(pose) != canonical_dumps(line["pose"]):
                raise ReportError(
                    f"{p}: pose diverged at tick {line['tick']}:"
                    f" replayed {pose} != recorded {line['pose']}")
        elif ltype == "I":
            recorded_infractions.append(line)
        elif ltype == "TRACE_END":
            end_record = line["result"]
        elif ltype in ("AGENT_ERROR",):
            continue
        else:
            raise ReportError(f"{p}: unknown trace record {ltype!r}")
    if end_record is None:
        raise ReportError(f"{p}: missing TRACE_END record")

    counts: dict[str, int] = {}
    for e in events:
        counts[e.type.value] = counts.get(e.type.value, 0) + 1
    if counts != {k: int(v) for k, v in end_record["infractions"].items()}:
        raise ReportError(f"{p}: infractions diverged: replayed {counts}"
                          f" != recorded {end_record['infractions']}")
    completion = sim.route_completion(state)
    if canonical_dumps(completion) != canonical_dumps(end_record["completion"]):
        raise ReportError(f"{p}: completion diverged: {completion}"
                          f" != {end_record['completion']}")
    return _result_from_dict(end_record | {
        "agent": run["agent"], "route": run["route"], "condition": run["condition"],
        "variant": run["variant"], "repeat": run["repeat"],
        "penalty": end_record.get("penalty", 1.0),
        "sim_duration_s": end_record.get("sim_duration_s", state.sim_time_s),
        "emissions_kg": end_record.get("emissions_kg", 0.0),
        "wall_duration_s": end_record.get("wall_duration_s", 0.0),
    })
