"""Driving-score and robustness metrics plus leaderboard aggregation.

Scores live on a 0-100 percentage scale: the driving score is route
completion (percent) times the geometric infraction penalty. A condition's
score is the minimum over all its runs; the robustness ratio divides it by
the baseline score; the robustness driving score (the ranking metric) is
the mean of the per-condition scores over the conditions applicable to the
agent's sensor suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import InvalidParameter, RatioUndefined, SrafError
from .microsim import InfractionType
from .sensor_models import CONDITION_ORDER, ConditionId

# The per-condition leaderboard columns, in printed order.
CONDITION_COLUMNS: tuple[tuple[str, ConditionId], ...] = (
    ("CO", ConditionId.CAMERA_OCCLUSION),
    ("LO", ConditionId.LIDAR_OCCLUSION),
    ("Wth", ConditionId.WEATHER),
    ("Drift", ConditionId.DRIFT),
    ("Cam", ConditionId.CAMERA_NOISE),
    ("LiD", ConditionId.LIDAR_FAULT),
    ("GNSS", ConditionId.GNSS_NOISE),
    ("IMU", ConditionId.IMU_NOISE),
    ("Spdm", ConditionId.SPEEDOMETER_NOISE),
)

CSV_HEADER = ("agent,DS,RDS," + ",".join(name for name, _ in CONDITION_COLUMNS)
              + ",AEPS,AEPR,ARC,ASTPR")

DEFAULT_PENALTIES = {
    InfractionType.COLLISION_PEDESTRIAN: 0.50,
    InfractionType.COLLISION_VEHICLE: 0.60,
    InfractionType.COLLISION_STATIC: 0.65,
    InfractionType.RED_LIGHT: 0.70,
    InfractionType.STOP_SIGN: 0.80,
}


@dataclass(frozen=True)
class PenaltyTable:
    """Per-infraction-type penalty coefficients in (0, 1]."""

    coefficients: dict[InfractionType, float] = field(
        default_factory=lambda: dict(DEFAULT_PENALTIES))

    def __post_init__(self):
        for itype, value in self.coefficients.items():
            if not (0.0 < value <= 1.0):
                raise InvalidParameter(f"penalty for {itype.name} must be in (0, 1]")

    def __getitem__(self, itype: InfractionType) -> float:
        if itype not in self.coefficients:
            raise SrafError(f"no penalty coefficient for infraction type {itype!r}")
        return self.coefficients[itype]


@dataclass(frozen=True)
class RouteResult:
    """Scored outcome of one run (route under one condition variant)."""

    agent: str
    route_id: str
    condition_id: ConditionId
    variant: int
    repeat: int
    completion: float                    # percent, 0..100
    infractions: dict[str, int]          # InfractionType.name -> count
    penalty: float
    driving_score: float
    sim_duration_s: float
    termination: str
    emissions_kg: float = 0.0
    wall_duration_s: float = 0.0
    agent_error: str | None = None

    def summary(self) -> dict:
        """Payload of the END protocol message."""
        return {
            "completion": self.completion,
            "driving_score": self.driving_score,
            "infractions": dict(self.infractions),
            "termination": self.termination,
        }


@dataclass(frozen=True)
class ConditionResult:
    condition_id: ConditionId
    score: float                 # min-aggregated driving score D_j
    ratio: float | None          # D_j / D_baseline; None when undefined


@dataclass(frozen=True)
class LeaderboardRow:
    agent: str
    ds: float
    rds: float | None                    # None for flagged (privileged) rows
    conditions: dict[str, ConditionResult]  # keyed by ConditionId.name
    aeps: float
    aepr: float
    arc: float | None                    # None when no conditioned runs
    astpr: float
    flagged: bool = False                # privileged / sensorless: ranked by DS
    skipped_conditions: tuple[str, ...] = ()


def infraction_penalty(counts: dict, table: PenaltyTable) -> float:
    """Geometric penalty: product of coefficient**count, 1.0 when clean.

    Factors multiply in canonical type order so the result is bit-identical
    regardless of the counts' insertion order.
    """
    normalized: dict[InfractionType, int] = {}
    for itype, count in counts.items():
        if isinstance(itype, str):
            itype = InfractionType(itype)
        if count < 0:
            raise InvalidParameter("infraction counts must be non-negative")
        normalized[itype] = normalized.get(itype, 0) + count
    penalty = 1.0
    for itype in sorted(normalized, key=lambda t: t.value):
        penalty *= table[itype] ** normalized[itype]
    return penalty


def driving_score(completion: float, penalty: float) -> float:
    """D = R * P on the 0-100 scale."""
    if not (0.0 <= completion <= 100.0):
        raise InvalidParameter(f"completion {completion} outside [0, 100]")
    if not (0.0 < penalty <= 1.0):
        raise InvalidParameter(f"penalty {penalty} outside (0, 1]")
    return completion * penalty


def condition_score(scores: list[float]) -> float:
    """Minimum driving score over all runs (routes x variants x repeats)
    under one condition."""
    if not scores:
        raise SrafError("condition_score of an empty run set")
    return min(scores)


def robustness_ratio(condition: float, baseline: float) -> float:
    """s_j = D_j / D_baseline."""
    if baseline == 0:
        raise RatioUndefined("baseline driving score is zero")
    if baseline < 0:
        raise InvalidParameter("baseline score cannot be negative")
    return condition / baseline


def robustness_driving_score(condition_scores: list[float]) -> float:
    """Mean of the min-aggregated condition scores over the m applicable
    conditions; skipped conditions are excluded from m."""
    if not condition_scores:
        raise SrafError("robustness_driving_score needs at least one condition")
    return sum(condition_scores) / len(condition_scores)


def score_route_result(*, agent: str, route_id: str, condition_id: ConditionId,
                       variant: int, repeat: int, completion: float,
                       infraction_counts: dict[str, int], table: PenaltyTable,
                       sim_duration_s: float, termination: str,
                       emissions_kg: float = 0.0, wall_duration_s: float = 0.0,
                       agent_error: str | None = None) -> RouteResult:
    """Assemble one RouteResult, computing penalty and driving score."""
    penalty = infraction_penalty(infraction_counts, table)
    return RouteResult(
        agent=agent,
        route_id=route_id,
        condition_id=condition_id,
        variant=variant,
        repeat=repeat,
        completion=completion,
        infractions=dict(infraction_counts),
        penalty=penalty,
        driving_score=driving_score(completion, penalty),
        sim_duration_s=sim_duration_s,
        termination=termination,
        emissions_kg=emissions_kg,
        wall_duration_s=wall_duration_s,
        agent_error=agent_error,
    )


def aggregate_leaderboard(results: list[RouteResult],
                          *, privileged_agents: frozenset[str] = frozenset(),
                          skipped: dict[str, tuple[str, ...]] | None = None,
                          ) -> list[LeaderboardRow]:
    """Aggregate raw run results into ranked leaderboard rows.

    Rows with robustness scores sort by RDS descending; privileged or
    sensorless agents are flagged, carry no RDS, and sort after them by DS
    descending. Requires baseline runs for every agent.
    """
    skipped = skipped or {}
    agents = sorted({r.agent for r in results})
    rows: list[LeaderboardRow] = []
    for agent in agents:
        runs = [r for r in results if r.agent == agent]
        baseline = [r for r in runs if r.condition_id == ConditionId.BASELINE]
        if not baseline:
            raise SrafError(f"agent {agent!r} has no baseline runs")
        ds = condition_score([r.driving_score for r in baseline])

        conditioned = [r for r in runs if r.condition_id != ConditionId.BASELINE]
        cond_results: dict[str, ConditionResult] = {}
        for cid in CONDITION_ORDER:
            if cid == ConditionId.BASELINE:
                continue
            under = [r.driving_score for r in conditioned if r.condition_id == cid]
            if not under:
                continue
            d_j = condition_score(under)
            try:
                ratio = robustness_ratio(d_j, ds)
            except RatioUndefined:
                ratio = None
            cond_results[cid.name] = ConditionResult(cid, d_j, ratio)

        flagged = agent in privileged_agents or not cond_results
        rds = None
        if cond_results:
            rds = robustness_driving_score([c.score for c in cond_results.values()])

        total_kg = sum(r.emissions_kg for r in runs)
        total_wall = sum(r.wall_duration_s for r in runs)
        aeps = total_kg / total_wall if total_wall > 0 else 0.0
        aepr = total_kg / len(runs)
        arc = (sum(r.completion for r in conditioned) / len(conditioned)
               if conditioned else None)
        astpr = sum(r.sim_duration_s for r in runs) / len(runs)

        rows.append(LeaderboardRow(
            agent=agent,
            ds=ds,
            rds=None if flagged else rds,
            conditions=cond_results,
            aeps=aeps,
            aepr=aepr,
            arc=arc,
            astpr=astpr,
            flagged=flagged,
            skipped_conditions=tuple(skipped.get(agent, ())),
        ))

    ranked = [r for r in rows if not r.flagged]
    flagged_rows = [r for r in rows if r.flagged]
    ranked.sort(key=lambda r: (-r.rds, r.agent))
    flagged_rows.sort(key=lambda r: (-r.ds, r.agent))
    return ranked + flagged_rows


def _fmt(value: float | None, digits: int = 3, *, marker: str = "-") -> str:
    if value is None:
        return marker
    if math.isnan(value):
        return "undef"
    return f"{value:.{digits}f}"


def leaderboard_csv(rows: list[LeaderboardRow]) -> str:
    """Render the leaderboard in the fixed column layout.

    Per-condition cells print the robustness ratio; ``-`` marks a condition
    skipped for an absent sensor and ``undef`` a ratio with zero baseline.
    Flagged rows print ``-`` for RDS (no robustness ranking is assigned).
    """
    lines = [CSV_HEADER]
    for row in rows:
        cells = [row.agent, _fmt(row.ds), _fmt(row.rds)]
        for _, cid in CONDITION_COLUMNS:
            cres = row.conditions.get(cid.name)
            if cres is None:
                cells.append("-")
            elif cres.ratio is None:
                cells.append("undef")
            else:
                cells.append(_fmt(cres.ratio))
        cells.append(_fmt(row.aeps, 6))
        cells.append(_fmt(row.aepr, 6))
        cells.append(_fmt(row.arc))
        cells.append(_fmt(row.astpr))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"
