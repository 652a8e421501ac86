"""CO2 estimation for the agent process: power samples integrate to energy
(kWh), the regional energy mix gives a carbon intensity (kg CO2-eq per kWh),
and their product is the emitted mass. Per-second and per-route rates feed
the leaderboard's sustainability columns.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .errors import InvalidParameter, SrafError


class EnergySource(Enum):
    COAL = "COAL"
    PETROLEUM = "PETROLEUM"
    NATURAL_GAS = "NATURAL_GAS"
    SOLAR = "SOLAR"
    HYDRO = "HYDRO"
    BIOMASS = "BIOMASS"
    GEOTHERMAL = "GEOTHERMAL"
    NUCLEAR = "NUCLEAR"
    WIND = "WIND"


FOSSIL_SOURCES = {EnergySource.COAL, EnergySource.PETROLEUM, EnergySource.NATURAL_GAS}

# Bundled default intensities (kg CO2-eq per kWh generated). Representative
# lifecycle-average figures; see docs/energy_tables.md. Tests use fixture
# tables only.
DEFAULT_INTENSITY = {
    EnergySource.COAL: 0.995,
    EnergySource.PETROLEUM: 0.816,
    EnergySource.NATURAL_GAS: 0.743,
    EnergySource.SOLAR: 0.048,
    EnergySource.HYDRO: 0.026,
    EnergySource.BIOMASS: 0.230,
    EnergySource.GEOTHERMAL: 0.038,
    EnergySource.NUCLEAR: 0.029,
    EnergySource.WIND: 0.026,
}

FALLBACK_WATTS = 65.0  # documented default when no platform probe exists


@dataclass(frozen=True)
class PowerSample:
    t: float       # seconds since ledger start
    watts: float

    def __post_init__(self):
        if self.watts < 0:
            raise InvalidParameter("power draw cannot be negative")


class EnergyLedger:
    """Append-only power-sample log; immutable once closed."""

    def __init__(self):
        self._samples: list[PowerSample] = []
        self._closed = False

    @property
    def samples(self) -> tuple[PowerSample, ...]:
        return tuple(self._samples)

    @property
    def closed(self) -> bool:
        return self._closed

    def append(self, sample: PowerSample) -> None:
        if self._closed:
            raise SrafError("ledger is closed")
        if self._samples and sample.t <= self._samples[-1].t:
            raise InvalidParameter("sample times must be strictly increasing")
        self._samples.append(sample)

    def close(self) -> None:
        self._closed = True

    @property
    def duration_s(self) -> float:
        if not self._samples:
            return 0.0
        return self._samples[-1].t - self._samples[0].t

    @property
    def total_kwh(self) -> float:
        return integrate_energy(self)


def integrate_energy(ledger: EnergyLedger) -> float:
    """Trapezoidal integral of watts over seconds, in kilowatt-hours."""
    samples = ledger.samples
    if not samples:
        raise SrafError("cannot integrate an empty ledger")
    joules = 0.0
    for a, b in zip(samples, samples[1:]):
        joules += 0.5 * (a.watts + b.watts) * (b.t - a.t)
    return joules / 3.6e6


@dataclass(frozen=True)
class EnergyMix:
    """Fractional electricity composition for a region."""

    fractions: dict[EnergySource, float]

    def __post_init__(self):
        total = 0.0
        for source, frac in self.fractions.items():
            if frac < 0:
                raise InvalidParameter(f"negative mix fraction for {source.name}")
            total += frac
        if abs(total - 1.0) > 1e-9:
            raise InvalidParameter(f"mix fractions sum to {total}, expected 1")


@dataclass(frozen=True)
class SourceIntensityTable:
    """kg CO2-eq emitted per kWh generated, per source."""

    intensities: dict[EnergySource, float] = field(
        default_factory=lambda: dict(DEFAULT_INTENSITY))

    def __post_init__(self):
        for source, value in self.intensities.items():
            if value < 0:
                raise InvalidParameter(f"negative intensity for {source.name}")


def carbon_intensity(mix: EnergyMix, table: SourceIntensityTable) -> float:
    """Weighted average intensity of the mix, kg CO2-eq per kWh."""
    ci = 0.0
    for source, frac in mix.fractions.items():
        if source not in table.intensities:
            raise SrafError(f"intensity table has no entry for {source.name}")
        ci += frac * table.intensities[source]
    return ci


def co2_emissions(ci: float, energy_kwh: float) -> float:
    """kg CO2-eq = CI x E."""
    if ci < 0 or energy_kwh < 0:
        raise InvalidParameter("carbon intensity and energy must be non-negative")
    return ci * energy_kwh


def emission_rates(total_kg: float, wall_duration_s: float,
                   route_count: int) -> tuple[float, float]:
    """(AEPS, AEPR): kg per tracked second and kg per route."""
    if wall_duration_s <= 0:
        raise SrafError("emission rates need a positive tracked duration")
    if route_count < 1:
        raise InvalidParameter("route count must be at least 1")
    return total_kg / wall_duration_s, total_kg / route_count


@dataclass(frozen=True)
class EmissionsReport:
    total_kg: float
    aeps: float
    aepr: float
    region: str
    carbon_intensity: float
    energy_kwh: float
    estimated: bool = False


# ------------------------------------------------------------------ providers

class ConstantProvider:
    """Fixed draw; the deterministic provider for tests and CI."""

    estimated = False

    def __init__(self, watts: float):
        if watts < 0:
            raise InvalidParameter("watts must be non-negative")
        self.watts = watts

    def sample(self, t: float) -> PowerSample:
        return PowerSample(t, self.watts)


class ReplayProvider:
    """Replays a two-column (t, watts) text file; exhaustion closes the
    ledger it feeds."""

    estimated = False

    def __init__(self, path: str | Path):
        self._rows: list[PowerSample] = []
        for line_no, raw in enumerate(Path(path).read_text().splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise InvalidParameter(f"{path}:{line_no}: expected '<t> <watts>'")
            self._rows.append(PowerSample(float(parts[0]), float(parts[1])))
        self._next = 0

    @property
    def exhausted(self) -> bool:
        return self._next >= len(self._rows)

    def sample(self, t: float) -> PowerSample:
        if self.exhausted:
            raise SrafError("replay file exhausted")
        row = self._rows[self._next]
        self._next += 1
        return row


class PlatformProvider:
    """Best-effort host probe via the RAPL energy counters; degrades to the
    documented constant default and flags the report as estimated."""

    def __init__(self):
        self._rapl = sorted(Path("/sys/class/powercap").glob("intel-rapl:*/energy_uj")) \
            if Path("/sys/class/powercap").exists() else []
        self._last: tuple[float, float] | None = None
        self.estimated = True
        if self._rapl:
            try:
                self._read_uj()
                self.estimated = False
            except OSError:
                self._rapl = []

    def _read_uj(self) -> float:
        return sum(float(p.read_text().strip()) for p in self._rapl)

    def sample(self, t: float) -> PowerSample:
        if not self._rapl:
            return PowerSample(t, FALLBACK_WATTS)
        now = time.monotonic()
        uj = self._read_uj()
        if self._last is None:
            self._last = (now, uj)
            return PowerSample(t, FALLBACK_WATTS)
        dt = now - self._last[0]
        watts = (uj - self._last[1]) / 1e6 / dt if dt > 0 else FALLBACK_WATTS
        self._last = (now, uj)
        return PowerSample(t, max(watts, 0.0))


def sample_power(provider, t: float) -> PowerSample:
    """Current draw of the tracked process scope at ledger time t."""
    return provider.sample(t)


def make_provider(kind: str, *, watts: float = FALLBACK_WATTS,
                  replay_path: str | None = None):
    kind = kind.lower()
    if kind == "constant":
        return ConstantProvider(watts)
    if kind == "replay":
        if not replay_path:
            raise InvalidParameter("replay provider needs a file path")
        return ReplayProvider(replay_path)
    if kind == "platform":
        return PlatformProvider()
    raise InvalidParameter(f"unknown power provider {kind!r}")


# ------------------------------------------------------------- region tables

def parse_region_file(text: str) -> dict[str, EnergyMix]:
    """Parse the versioned region->mix data file.

    Format: header ``sraf-energy 1``; then ``region <code>`` followed by one
    ``mix <SOURCE> <fraction> [...]`` line.
    """
    regions: dict[str, EnergyMix] = {}
    current: str | None = None
    header_seen = False
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if not header_seen:
            if line != "sraf-energy 1":
                raise InvalidParameter(f"line {line_no}: expected 'sraf-energy 1' header")
            header_seen = True
            continue
        parts = line.split()
        if parts[0] == "region":
            if len(parts) != 2:
                raise InvalidParameter(f"line {line_no}: region needs a code")
            current = parts[1]
        elif parts[0] == "mix":
            if current is None:
                raise InvalidParameter(f"line {line_no}: mix before any region")
            if len(parts) % 2 != 1:
                raise InvalidParameter(f"line {line_no}: mix needs source/fraction pairs")
            fractions = {}
            for i in range(1, len(parts), 2):
                fractions[EnergySource(parts[i])] = float(parts[i + 1])
            regions[current] = EnergyMix(fractions)
            current = None
        else:
            raise InvalidParameter(f"line {line_no}: unknown record {parts[0]!r}")
    if not header_seen:
        raise InvalidParameter("empty region file")
    return regions


def load_regions(path: str | Path) -> dict[str, EnergyMix]:
    return parse_region_file(Path(path).read_text(encoding="utf-8"))


def bundled_regions() -> dict[str, EnergyMix]:
    from importlib.resources import files

    text = files("sraf.data.energy").joinpath("regions.txt").read_text(encoding="utf-8")
    return parse_region_file(text)


def report_for_run(ledger: EnergyLedger, mix: EnergyMix, region: str,
                   table: SourceIntensityTable | None = None,
                   *, routes: int = 1, estimated: bool = False) -> EmissionsReport:
    """Close-out report for one ledger."""
    if not ledger.closed:
        raise SrafError("ledger must be closed before reporting")
    table = table or SourceIntensityTable()
    ci = carbon_intensity(mix, table)
    energy = integrate_energy(ledger)
    total = co2_emissions(ci, energy)
    duration = ledger.duration_s
    if duration > 0:
        aeps, aepr = emission_rates(total, duration, routes)
    else:
        aeps, aepr = 0.0, total / routes
    return EmissionsReport(
        total_kg=total, aeps=aeps, aepr=aepr, region=region,
        carbon_intensity=ci, energy_kwh=energy, estimated=estimated,
    )
