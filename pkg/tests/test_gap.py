"""
Tests for the gap extraction from 1/Qi(T)
"""

from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mkidlab.errors import ConfigError, DataFormatError, DegenerateDataError, DomainError
from mkidlab.gap import (
    GapFitConfig,
    QiSeries,
    combine_gap_results,
    fit_gap,
    inv_qi_model,
    inv_qi_model_kondo,
    kinetic_fraction,
    qi_series_from_fits,
    weighted_mean,
)
from mkidlab.resonance import ResonanceParams
from mkidlab.synthgen import GapTruth, ScenarioConfig, gen_qi_series

DELTA = 1.5e-4
OMEGA = 2.0 * np.pi * 5380.6e6


def _scenario(seed=20240601, **gap):
    return replace(ScenarioConfig(seed=seed), gap=replace(GapTruth(), **gap))


class TestModel:
    """Closed-form 1/Qi(T)."""

    def test_low_temperature_floor(self):
        """Far below Tc the quasiparticle term vanishes and 1/Qi = 1/Qi(0)."""
        assert inv_qi_model(0.02, DELTA, 1e-4, 0.3, OMEGA) == pytest.approx(1e-4, rel=1e-9)

    def test_increases_with_temperature(self):
        """Quasiparticle losses grow with temperature."""
        T = np.linspace(0.1, 0.3, 21)
        assert np.all(np.diff(inv_qi_model(T, DELTA, 1e-4, 0.3, OMEGA)) > 0)

    def test_kondo_term_vanishes_at_reference(self):
        """At T = T_K the logarithmic term is zero."""
        a = inv_qi_model_kondo(0.5, DELTA, 1e-4, 0.3, OMEGA, b=1e-6, tk=0.5)
        assert a == pytest.approx(inv_qi_model(0.5, DELTA, 1e-4, 0.3, OMEGA), rel=1e-12)

    def test_kondo_term_sign(self):
        """Below T_K the Kondo term adds loss."""
        plain = inv_qi_model(0.05, DELTA, 1e-4, 0.3, OMEGA)
        assert inv_qi_model_kondo(0.05, DELTA, 1e-4, 0.3, OMEGA, b=1e-6, tk=1.0) > plain

    @pytest.mark.parametrize("kwargs", [{"T": 0.0}, {"delta": 0.0}, {"alpha": 1.5}, {"omega": -1.0}])
    def test_invalid_arguments(self, kwargs):
        """Out-of-domain arguments raise DomainError."""
        args = {"T": 0.1, "delta": DELTA, "inv_qi0": 1e-4, "alpha": 0.3, "omega": OMEGA}
        args.update(kwargs)
        with pytest.raises(DomainError):
            inv_qi_model(**args)


class TestKineticFraction:
    """alpha = 1 - (f_meas / f_sim)^2."""

    def test_inverse(self):
        """A frequency lowered by sqrt(1 - alpha) returns alpha."""
        assert kinetic_fraction(np.sqrt(0.7) * 6e9, 6e9) == pytest.approx(0.3, rel=1e-12)

    def test_no_kinetic_inductance(self):
        """Equal frequencies mean alpha = 0."""
        assert kinetic_fraction(6e9, 6e9) == 0.0

    def test_measured_above_simulated_rejected(self):
        """Kinetic inductance cannot raise the frequency."""
        with pytest.raises(DomainError, match="exceeds"):
            kinetic_fraction(6.1e9, 6e9)


class TestWeightedMean:
    """Inverse-variance combination."""

    def test_equal_errors_give_plain_mean(self):
        """Equal errors reduce to the arithmetic mean with error sigma/sqrt(n)."""
        m, e = weighted_mean([1.0, 2.0, 3.0], [0.5, 0.5, 0.5])
        assert m == pytest.approx(2.0)
        assert e == pytest.approx(0.5 / np.sqrt(3.0))

    @given(st.lists(
        st.tuples(st.floats(min_value=-1e3, max_value=1e3), st.floats(min_value=1e-3, max_value=1e3)),
        min_size=1, max_size=10,
    ))
    def test_bounded_by_inputs(self, pairs):
        """The mean lies within the input range and its error below the smallest input error."""
        values, errors = zip(*pairs)
        m, e = weighted_mean(values, errors)
        assert min(values) - 1e-9 * (1 + abs(min(values))) <= m <= max(values) + 1e-9 * (1 + abs(max(values)))
        assert e <= min(errors) * (1 + 1e-12)

    def test_zero_error_rejected(self):
        """Zero errors have no inverse variance."""
        with pytest.raises(DomainError, match="errors must be finite"):
            weighted_mean([1.0, 2.0], [0.1, 0.0])


class TestQiSeries:
    """QiSeries validation."""

    def test_non_monotonic_temperatures_rejected(self):
        """Temperatures must be strictly increasing."""
        t = np.array([0.1, 0.2, 0.15, 0.3, 0.4])
        with pytest.raises(DataFormatError, match="strictly increasing"):
            QiSeries(t, np.full(5, 1e-4), np.full(5, 1e-6), f0=5e9)

    def test_too_few_points_rejected(self):
        """At least five temperatures are needed."""
        with pytest.raises(DataFormatError, match=">= 5"):
            QiSeries(np.array([0.1, 0.2]), np.full(2, 1e-4), np.full(2, 1e-6), f0=5e9)


class TestFitGap:
    """Weighted least-squares gap fit."""

    def test_round_trip_default_scenario(self):
        """27 temperatures with 1% noise recover Delta within 1% and Tc in [0.98, 1.01] K."""
        series = gen_qi_series(ScenarioConfig())
        assert len(series) == 27
        result = fit_gap(series, alpha=0.3)
        assert result.delta == pytest.approx(DELTA, rel=0.01)
        assert 0.98 <= result.tc <= 1.01
        assert result.kondo_tk == 1.0

    def test_round_trip_over_seeds(self):
        """Delta within 1% for at least 9 of 10 noise realizations."""
        ok = sum(
            abs(fit_gap(gen_qi_series(ScenarioConfig(seed=s)), alpha=0.3).delta / DELTA - 1.0) < 0.01
            for s in range(10)
        )
        assert ok >= 9

    def test_low_noise_recovers_kondo_slope(self):
        """With 1e-5 relative noise the Kondo slope and floor come back too."""
        series = gen_qi_series(_scenario(noise_fraction=1e-5))
        result = fit_gap(series, alpha=0.3)
        assert result.delta == pytest.approx(DELTA, rel=1e-4)
        assert result.kondo_b == pytest.approx(1e-6, rel=0.05)
        assert result.inv_qi0 == pytest.approx(1.0 / 6440.0, rel=1e-3)

    def test_without_kondo(self):
        """Data generated without the Kondo term fit cleanly with use_kondo=False."""
        series = gen_qi_series(_scenario(kondo_b=0.0))
        result = fit_gap(series, alpha=0.3, use_kondo=False)
        assert result.delta == pytest.approx(DELTA, rel=0.01)
        assert result.kondo_b == 0.0
        assert "kondo_b" not in result.uncertainties

    def test_uncertainties(self):
        """Delta and Tc errors are positive; chi2/dof is close to 1."""
        result = fit_gap(gen_qi_series(ScenarioConfig()), alpha=0.3)
        assert result.uncertainties["delta"] > 0
        assert result.uncertainties["tc"] > 0
        assert 0.3 < result.chi2_dof < 2.5

    def test_flat_low_temperature_data_is_degenerate(self):
        """Points only in the flat regime do not constrain Delta."""
        t = np.linspace(0.04, 0.1, 7)
        series = QiSeries(t, np.full(7, 1.5e-4), np.full(7, 1.5e-6), f0=5380.6e6)
        with pytest.raises(DegenerateDataError, match="do not constrain the gap"):
            fit_gap(series, alpha=0.3, use_kondo=False)

    @pytest.mark.parametrize("alpha", [0.0, -0.1, 1.2])
    def test_alpha_range(self, alpha):
        """alpha outside (0, 1] is rejected."""
        with pytest.raises(DomainError, match="alpha"):
            fit_gap(gen_qi_series(ScenarioConfig()), alpha=alpha)

    def test_config_tk_is_reported(self):
        """A configured T_K is held fixed, reported as fixed, and carries no fit error."""
        result = fit_gap(gen_qi_series(ScenarioConfig()), alpha=0.3, config=GapFitConfig(kondo_tk=0.5))
        assert result.kondo_tk == 0.5
        doc = result.to_dict()
        assert doc["kondo_tk"] == 0.5 and doc["kondo_tk_fixed"] is True
        assert "kondo_tk" not in doc["errors"]

    def test_tk_only_moves_the_floor(self):
        """Changing the held T_K leaves Delta and b alone and moves 1/Qi(0) by b ln(T_K ratio)."""
        series = gen_qi_series(ScenarioConfig())
        one = fit_gap(series, alpha=0.3, config=GapFitConfig(kondo_tk=1.0))
        tenth = fit_gap(series, alpha=0.3, config=GapFitConfig(kondo_tk=0.1))
        assert tenth.delta == pytest.approx(one.delta, rel=1e-6)
        assert tenth.kondo_b == pytest.approx(one.kondo_b, abs=1e-4 * one.uncertainties["kondo_b"])
        assert tenth.inv_qi0 == pytest.approx(one.inv_qi0 + one.kondo_b * np.log(1.0 / 0.1), rel=1e-6)
        assert tenth.chi2_dof == pytest.approx(one.chi2_dof, rel=1e-6)

    def test_tk_outside_bounds_rejected(self):
        """T_K must lie in [10 mK, 10 K]."""
        with pytest.raises(ConfigError, match="kondo_tk"):
            GapFitConfig(kondo_tk=20.0)

    def test_kondo_slope_null_without_kondo_data(self):
        """Data without a Kondo term give b within 3 sigma of 0 in >= 90 of 100 trials."""
        ok = 0
        for seed in range(100):
            result = fit_gap(gen_qi_series(_scenario(seed=seed, kondo_b=0.0)), alpha=0.3)
            ok += abs(result.kondo_b) <= 3.0 * result.uncertainties["kondo_b"]
        assert ok >= 90

    def test_invariant_under_error_scaling(self):
        """Scaling every 1/Qi error by 3 keeps the fitted point and scales its errors by 3."""
        series = gen_qi_series(ScenarioConfig())
        base = fit_gap(series, alpha=0.3)
        scaled = fit_gap(replace(series, inv_qi_err=3.0 * series.inv_qi_err), alpha=0.3)
        assert scaled.delta == pytest.approx(base.delta, rel=1e-6)
        assert scaled.inv_qi0 == pytest.approx(base.inv_qi0, rel=1e-6)
        assert scaled.kondo_b == pytest.approx(base.kondo_b, abs=1e-4 * base.uncertainties["kondo_b"])
        for name in ("delta", "inv_qi0", "kondo_b", "tc"):
            assert scaled.uncertainties[name] == pytest.approx(3.0 * base.uncertainties[name], rel=1e-4)
        assert scaled.chi2_dof == pytest.approx(base.chi2_dof / 9.0, rel=1e-6)


class TestCombination:
    """Several resonators and Qi series built from resonance fits."""

    def test_combined_gap(self):
        """The combined Delta lies between the individual ones with a smaller error."""
        results = [
            fit_gap(gen_qi_series(_scenario(seed=s, resonator_id=f"r{s}")), alpha=0.3)
            for s in (1, 2, 3)
        ]
        combined = combine_gap_results(results)
        deltas = [r.delta for r in results]
        assert min(deltas) <= combined.delta <= max(deltas)
        assert combined.delta_err < min(r.uncertainties["delta"] for r in results)
        assert combined.resonator_ids == ["r1", "r2", "r3"]
        assert 0.98 <= combined.tc <= 1.01

    def test_empty_combination_rejected(self):
        """Nothing to combine is an error."""
        with pytest.raises(DomainError, match="no results"):
            combine_gap_results([])

    def test_series_from_fits_sorted_by_temperature(self):
        """Fits are ordered by temperature and f0 is taken from the coldest one."""
        fits = [
            ResonanceParams(f0=5.0e9 + k, q_total=4000.0 - 100 * k, q_c=10000.0,
                            uncertainties={"inv_qi": 1e-6})
            for k in range(5)
        ]
        temps = [0.3, 0.1, 0.2, 0.05, 0.25]
        series = qi_series_from_fits(fits, temps, "rA")
        np.testing.assert_allclose(series.temperatures, sorted(temps))
        assert series.f0 == 5.0e9 + 3
        assert series.inv_qi[0] == pytest.approx(1.0 / fits[3].q_i)
        assert series.resonator_id == "rA"

    def test_series_from_fits_needs_errors(self):
        """Fits without an inv_qi uncertainty cannot be weighted."""
        fits = [ResonanceParams(f0=5e9, q_total=4000.0, q_c=10000.0) for _ in range(5)]
        with pytest.raises(DomainError, match="uncertainty"):
            qi_series_from_fits(fits, [0.1, 0.2, 0.3, 0.4, 0.5])
