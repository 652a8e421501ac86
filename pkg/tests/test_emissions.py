import pytest

from sraf.emissions import (
    ConstantProvider,
    DEFAULT_INTENSITY,
    EnergyLedger,
    EnergyMix,
    EnergySource,
    FOSSIL_SOURCES,
    PlatformProvider,
    PowerSample,
    ReplayProvider,
    SourceIntensityTable,
    bundled_regions,
    carbon_intensity,
    co2_emissions,
    emission_rates,
    integrate_energy,
    make_provider,
    parse_region_file,
    report_for_run,
    sample_power,
)
from sraf.errors import InvalidParameter, SrafError


class TestLedger:
    def test_samples_strictly_increasing(self):
        ledger = EnergyLedger()
        ledger.append(PowerSample(0.0, 10.0))
        with pytest.raises(InvalidParameter):
            ledger.append(PowerSample(0.0, 12.0))

    def test_negative_watts_rejected(self):
        with pytest.raises(InvalidParameter):
            PowerSample(0.0, -1.0)

    def test_closed_ledger_is_immutable(self):
        ledger = EnergyLedger()
        ledger.append(PowerSample(0.0, 10.0))
        ledger.close()
        with pytest.raises(SrafError):
            ledger.append(PowerSample(1.0, 10.0))

    def test_total_recomputable_from_samples(self):
        ledger = EnergyLedger()
        for i in range(100):
            ledger.append(PowerSample(float(i), 40.0 + (i % 7)))
        total = ledger.total_kwh
        joules = 0.0
        for a, b in zip(ledger.samples, ledger.samples[1:]):
            joules += 0.5 * (a.watts + b.watts) * (b.t - a.t)
        assert abs(total - joules / 3.6e6) <= 1e-12 * max(total, 1.0)


class TestIntegrateEnergy:
    def test_constant_100w_one_hour(self):
        ledger = EnergyLedger()
        ledger.append(PowerSample(0.0, 100.0))
        ledger.append(PowerSample(3600.0, 100.0))
        assert integrate_energy(ledger) == pytest.approx(0.1, abs=1e-9)

    def test_zero_power(self):
        ledger = EnergyLedger()
        ledger.append(PowerSample(0.0, 0.0))
        ledger.append(PowerSample(3600.0, 0.0))
        assert integrate_energy(ledger) == 0.0

    def test_linear_ramp_closed_form(self):
        # 0 -> 100 W over 3600 s: integral = 0.5 * 100 * 3600 J = 0.05 kWh
        ledger = EnergyLedger()
        for i in range(0, 3601, 60):
            ledger.append(PowerSample(float(i), 100.0 * i / 3600.0))
        assert integrate_energy(ledger) == pytest.approx(0.05, abs=1e-12)

    def test_empty_ledger_hard_error(self):
        with pytest.raises(SrafError):
            integrate_energy(EnergyLedger())


class TestCarbonIntensity:
    def test_degenerate_mix(self):
        mix = EnergyMix({EnergySource.COAL: 1.0})
        table = SourceIntensityTable({EnergySource.COAL: 0.9})
        assert carbon_intensity(mix, table) == 0.9

    def test_weighted_mean(self):
        mix = EnergyMix({EnergySource.COAL: 0.5, EnergySource.WIND: 0.5})
        table = SourceIntensityTable({EnergySource.COAL: 0.9,
                                      EnergySource.WIND: 0.1})
        assert carbon_intensity(mix, table) == pytest.approx(0.5)

    def test_coal_heavy_fixture_hand_computed(self):
        regions = bundled_regions()
        ci = carbon_intensity(regions["coal_heavy_test"], SourceIntensityTable())
        by_hand = 0.7 * DEFAULT_INTENSITY[EnergySource.COAL] \
            + 0.3 * DEFAULT_INTENSITY[EnergySource.NATURAL_GAS]
        assert abs(ci - by_hand) <= 1e-12

    def test_missing_source_hard_error(self):
        mix = EnergyMix({EnergySource.WIND: 1.0})
        with pytest.raises(SrafError):
            carbon_intensity(mix, SourceIntensityTable({EnergySource.COAL: 1.0}))

    def test_mix_fractions_validated(self):
        with pytest.raises(InvalidParameter):
            EnergyMix({EnergySource.COAL: 0.5})
        with pytest.raises(InvalidParameter):
            EnergyMix({EnergySource.COAL: 1.2, EnergySource.WIND: -0.2})

    def test_convexity_bound(self):
        regions = bundled_regions()
        table = SourceIntensityTable()
        for mix in regions.values():
            ci = carbon_intensity(mix, table)
            used = [table.intensities[s] for s in mix.fractions]
            assert min(used) - 1e-12 <= ci <= max(used) + 1e-12

    def test_bundled_table_fossil_above_low_carbon(self):
        fossil = [DEFAULT_INTENSITY[s] for s in FOSSIL_SOURCES]
        low = [v for s, v in DEFAULT_INTENSITY.items() if s not in FOSSIL_SOURCES]
        assert min(fossil) > max(low)


class TestCo2AndRates:
    def test_product(self):
        assert co2_emissions(0.475, 2.0) == pytest.approx(0.95)
        assert co2_emissions(0.5, 0.2) == pytest.approx(0.1)
        assert co2_emissions(0.3, 0.0) == 0.0

    def test_linearity(self):
        base = co2_emissions(0.4, 1.5)
        assert co2_emissions(0.8, 1.5) == pytest.approx(2 * base)
        assert co2_emissions(0.4, 3.0) == pytest.approx(2 * base)

    def test_reference_row_rates(self):
        # 0.090 kg over 189.300 s: per-second rate rounds to 0.0005
        aeps, aepr = emission_rates(0.090, 189.300, 1)
        assert aeps == pytest.approx(0.000475, abs=5e-7)
        assert round(aeps, 4) == 0.0005
        assert aepr == pytest.approx(0.090)

    def test_highest_emitter_row_within_two_percent(self):
        aeps, _ = emission_rates(12.418, 367.017, 1)
        assert abs(aeps - 0.0341) / 0.0341 <= 0.02

    def test_zero_total(self):
        assert emission_rates(0.0, 100.0, 2) == (0.0, 0.0)

    def test_zero_duration_hard_error(self):
        with pytest.raises(SrafError):
            emission_rates(1.0, 0.0, 1)


class TestProviders:
    def test_constant_every_sample_equal(self):
        provider = ConstantProvider(100.0)
        assert all(sample_power(provider, float(t)).watts == 100.0
                   for t in range(10))

    def test_replay_exact_rows_then_closure(self, tmp_path):
        path = tmp_path / "power.txt"
        path.write_text("0 50\n1.0 60\n2.0 70\n")
        provider = ReplayProvider(path)
        rows = [sample_power(provider, 0.0) for _ in range(3)]
        assert [(s.t, s.watts) for s in rows] == [(0.0, 50.0), (1.0, 60.0), (2.0, 70.0)]
        assert provider.exhausted
        with pytest.raises(SrafError):
            sample_power(provider, 3.0)

    def test_platform_provider_contract(self):
        provider = PlatformProvider()
        s = sample_power(provider, 0.0)
        assert s.watts >= 0.0
        assert isinstance(provider.estimated, bool)

    def test_make_provider_dispatch(self):
        assert isinstance(make_provider("constant", watts=10), ConstantProvider)
        with pytest.raises(InvalidParameter):
            make_provider("replay")
        with pytest.raises(InvalidParameter):
            make_provider("unknown")


class TestRegionFile:
    def test_bundled_regions_parse(self):
        regions = bundled_regions()
        assert {"coal_heavy_test", "balanced_test", "green_test"} <= set(regions)

    def test_bad_header(self):
        with pytest.raises(InvalidParameter):
            parse_region_file("not a header\n")

    def test_mix_before_region(self):
        with pytest.raises(InvalidParameter):
            parse_region_file("sraf-energy 1\nmix COAL 1.0\n")


class TestReport:
    def test_report_requires_closed_ledger(self):
        ledger = EnergyLedger()
        ledger.append(PowerSample(0.0, 10.0))
        mix = bundled_regions()["green_test"]
        with pytest.raises(SrafError):
            report_for_run(ledger, mix, "green_test")

    def test_report_totals(self):
        ledger = EnergyLedger()
        ledger.append(PowerSample(0.0, 100.0))
        ledger.append(PowerSample(3600.0, 100.0))
        ledger.close()
        mix = EnergyMix({EnergySource.COAL: 1.0})
        table = SourceIntensityTable({EnergySource.COAL: 0.9})
        report = report_for_run(ledger, mix, "test", table)
        assert report.energy_kwh == pytest.approx(0.1, abs=1e-9)
        assert report.total_kg == pytest.approx(0.09, abs=1e-9)
        assert report.total_kg == report.carbon_intensity * report.energy_kwh
        assert report.aeps == pytest.approx(0.09 / 3600.0)
