"""
Tests for pulse smoothing, onset detection and alignment
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mkidlab.errors import ConfigError, DomainError, NoOnsetError
from mkidlab.pulse import (
    Record,
    SavGolConfig,
    TriggerConfig,
    align_records,
    classify_record,
    detect_onset,
    moving_average,
    records_from_array,
    robust_mad,
    savgol_coefficients,
    savgol_filter,
    stack_records,
)
from mkidlab.synthgen import AcquisitionTruth, NoiseTruth, ScenarioConfig, gen_pulse, gen_records

RATE = 5e7
LENGTH = 3000

_signal = st.lists(st.floats(min_value=-10.0, max_value=10.0), min_size=64, max_size=64)
_coefficient = st.floats(min_value=-10.0, max_value=10.0)


def _scale(a, x, b, y):
    return max(1.0, abs(a) * np.abs(x).max() + abs(b) * np.abs(y).max())


def _pulse_record(onset, amp=0.9, sigma=0.03, seed=0):
    t = np.arange(LENGTH) / RATE
    rng = np.random.default_rng(seed)
    return gen_pulse(t, onset / RATE, amp, 0.1e-6, 4e-6) + sigma * rng.standard_normal(LENGTH)


def _low_noise_scenario(n_records=500):
    return ScenarioConfig(
        acquisition=AcquisitionTruth(record_length=LENGTH, n_records=n_records, n_noise_records=0),
        noise=NoiseTruth(white_sigma=0.01),
    )


class TestSmoothing:
    """Moving average and Savitzky-Golay filters."""

    def test_savgol_five_point_weights(self):
        """Window 5, order 2 gives the classic (-3, 12, 17, 12, -3)/35."""
        w = savgol_coefficients(SavGolConfig(window=5, poly_order=2))
        np.testing.assert_allclose(w, np.array([-3, 12, 17, 12, -3]) / 35.0, atol=1e-12)

    def test_savgol_reproduces_polynomials(self):
        """A cubic passes through a cubic smoother unchanged, edges included."""
        x = np.linspace(-1.0, 1.0, 200)
        y = 0.3 - 1.2 * x + 0.7 * x**2 + 2.0 * x**3
        np.testing.assert_allclose(savgol_filter(y, SavGolConfig(window=21, poly_order=3)), y, atol=1e-9)

    def test_savgol_derivative_in_physical_units(self):
        """First derivative of a ramp is its slope per second."""
        t = np.arange(500) / RATE
        y = 3.0e4 * t
        d = savgol_filter(y, SavGolConfig(window=11, poly_order=2, deriv_order=1, physical_units=True), RATE)
        np.testing.assert_allclose(d, 3.0e4, rtol=1e-9)

    def test_physical_units_need_rate(self):
        """Physical units without a sample rate are rejected."""
        with pytest.raises(DomainError, match="sample_rate"):
            savgol_filter(np.zeros(100), SavGolConfig(deriv_order=1, physical_units=True))

    def test_savgol_record_too_short(self):
        """Records shorter than the window are rejected."""
        with pytest.raises(DomainError, match="shorter than window"):
            savgol_filter(np.zeros(20), SavGolConfig(window=51))

    @pytest.mark.parametrize("kwargs", [
        {"window": 4}, {"window": 3}, {"poly_order": 60}, {"deriv_order": 3}, {"poly_order": 1, "deriv_order": 2},
    ])
    def test_invalid_savgol_config(self, kwargs):
        """Even or tiny windows, orders above the window and unsupported derivatives are config errors."""
        with pytest.raises(ConfigError):
            SavGolConfig(**kwargs)

    def test_moving_average_shrinks_at_edges(self):
        """The window narrows symmetrically so end samples are unchanged."""
        out = moving_average(np.array([1.0, 2.0, 3.0, 10.0]), 3)
        np.testing.assert_allclose(out, [1.0, 2.0, 5.0, 10.0])

    def test_moving_average_is_row_wise(self):
        """2-D input is averaged along the last axis."""
        x = np.vstack([np.arange(10.0), np.arange(10.0) ** 2])
        out = moving_average(x, 5)
        np.testing.assert_allclose(out[1], moving_average(x[1], 5))
        np.testing.assert_allclose(out[0], np.arange(10.0))

    @given(_signal, _signal, _coefficient, _coefficient)
    @settings(max_examples=50, deadline=None)
    def test_moving_average_is_linear(self, x, y, a, b):
        """moving_average(a x + b y) = a moving_average(x) + b moving_average(y)."""
        x, y = np.array(x), np.array(y)
        lhs = moving_average(a * x + b * y, 5)
        rhs = a * moving_average(x, 5) + b * moving_average(y, 5)
        np.testing.assert_allclose(lhs, rhs, rtol=0, atol=1e-12 * _scale(a, x, b, y))

    @given(_signal, _signal, _coefficient, _coefficient, st.sampled_from([0, 1, 2]))
    @settings(max_examples=50, deadline=None)
    def test_savgol_filter_is_linear(self, x, y, a, b, deriv):
        """savgol_filter(a x + b y) = a savgol_filter(x) + b savgol_filter(y), edges included."""
        x, y = np.array(x), np.array(y)
        cfg = SavGolConfig(window=11, poly_order=3, deriv_order=deriv)
        lhs = savgol_filter(a * x + b * y, cfg)
        rhs = a * savgol_filter(x, cfg) + b * savgol_filter(y, cfg)
        np.testing.assert_allclose(lhs, rhs, rtol=0, atol=1e-12 * _scale(a, x, b, y))

    @pytest.mark.parametrize("window", [0, 4, 11])
    def test_moving_average_invalid_window(self, window):
        """Even, non-positive or over-long windows raise."""
        with pytest.raises(DomainError):
            moving_average(np.zeros(10), window)


class TestOnset:
    """Second-derivative onset detection."""

    def test_detects_onset_near_truth(self):
        """The first excursion lies within a smoothing window before the true onset."""
        onset = detect_onset(_pulse_record(1500), SavGolConfig(window=51, poly_order=3, deriv_order=2), 5.0, 5)
        assert 1500 - 30 <= onset <= 1500 + 5

    def test_onset_follows_shift(self):
        """Moving the pulse by k samples moves the detected onset by k."""
        cfg = SavGolConfig(window=51, poly_order=3, deriv_order=2)
        a = detect_onset(_pulse_record(1400, sigma=0.0), cfg, 5.0, 5)
        b = detect_onset(_pulse_record(1437, sigma=0.0), cfg, 5.0, 5)
        assert abs(b - a - 37) <= 1

    def test_flat_record_has_no_onset(self):
        """A constant record never crosses the threshold."""
        with pytest.raises(NoOnsetError):
            detect_onset(np.full(LENGTH, 0.2), SavGolConfig(window=51, poly_order=3, deriv_order=2))

    def test_robust_mad_of_normal(self):
        """1.4826 x MAD estimates the standard deviation of Gaussian samples."""
        x = np.random.default_rng(1).normal(0.0, 2.0, 100_000)
        assert 1.4826 * robust_mad(x) == pytest.approx(2.0, rel=0.02)

    def test_robust_mad_ignores_outliers(self):
        """A few huge samples do not move the MAD."""
        x = np.random.default_rng(2).normal(0.0, 1.0, 10_000)
        y = x.copy()
        y[:20] = 1e6
        assert robust_mad(y) == pytest.approx(robust_mad(x), rel=0.01)


class TestClassification:
    """good / empty / multiple / bad."""

    def test_single_pulse_is_good(self):
        """One pulse in low noise is good."""
        assert classify_record(Record(_pulse_record(1500), RATE)) == "good"

    def test_no_pulse_is_empty(self):
        """A flat record has no excursion."""
        assert classify_record(Record(np.full(LENGTH, 0.1), RATE)) == "empty"

    def test_two_pulses_are_multiple(self):
        """Pulses far apart form two excursion regions."""
        x = _pulse_record(800) + _pulse_record(2200, sigma=0.0)
        assert classify_record(Record(x, RATE)) == "multiple"

    def test_saturated_is_bad(self):
        """Samples at the ADC full scale mark the record bad."""
        x = _pulse_record(1500)
        x[1600] = 5.0
        assert classify_record(Record(x, RATE)) == "bad"

    def test_non_finite_is_bad(self):
        """NaN samples mark the record bad."""
        x = _pulse_record(1500)
        x[10] = np.nan
        assert classify_record(Record(x, RATE)) == "bad"

    def test_trigger_needs_quadratic_smoother(self):
        """A second derivative needs poly_order >= 2."""
        with pytest.raises(ConfigError, match="poly_order >= 2"):
            TriggerConfig(savgol=SavGolConfig(window=51, poly_order=1))


class TestAlignment:
    """Integer-shift alignment to a common onset."""

    def test_jittered_records_align(self):
        """500 records with +-50 sample jitter align to within 2 samples RMS, >= 99% of them."""
        data = gen_records(_low_noise_scenario())
        result = align_records(records_from_array(data.signal, data.sample_rate), TriggerConfig(target_index=1500))
        assert result.aligned_fraction >= 0.99
        kept = [r.tags["index"] for r in result.records]
        residual = result.onsets - data.onsets[kept]
        assert np.std(residual) < 2.0

    def test_aligned_onsets_land_on_target(self):
        """Re-detecting the onset of an aligned record gives the target index."""
        data = gen_records(_low_noise_scenario(n_records=20))
        config = TriggerConfig(target_index=1200)
        result = align_records(records_from_array(data.signal, data.sample_rate), config)
        for rec in result.records:
            assert rec.trigger_index == 1200
            onset = detect_onset(rec.samples, config.savgol, config.threshold, config.smoothing_window)
            assert abs(onset - 1200) <= 1

    def test_shift_and_class_tags(self):
        """Each aligned record carries its shift, onset and class."""
        records = records_from_array(np.vstack([_pulse_record(1450), _pulse_record(1530, seed=1)]), RATE)
        result = align_records(records, TriggerConfig())
        for rec in result.records:
            assert rec.tags["shift"] == 1500 - rec.tags["onset"]
            assert rec.tags["class"] == "good"
        assert result.shifts.tolist() == [r.tags["shift"] for r in result.records]

    def test_records_without_onset_are_skipped(self):
        """Flat records are listed as skipped, not fatal."""
        x = np.vstack([_pulse_record(1500), np.full(LENGTH, 0.1), _pulse_record(1480, seed=3)])
        result = align_records(records_from_array(x, RATE))
        assert result.skipped == [1]
        assert len(result.records) == 2
        assert result.aligned_fraction == pytest.approx(2.0 / 3.0)

    def test_shift_fills_with_baseline(self):
        """Samples shifted in at the end take the pre-onset median."""
        x = _pulse_record(1700, sigma=0.0) + 0.05
        result = align_records(records_from_array(x, RATE), TriggerConfig(target_index=1000))
        assert result.shifts[0] < -600
        np.testing.assert_allclose(result.records[0].samples[-600:], 0.05, atol=1e-12)

    def test_target_outside_record(self):
        """A target past the record end is a domain error."""
        with pytest.raises(DomainError, match="outside the record length"):
            align_records(records_from_array(_pulse_record(1500), RATE), target_index=LENGTH)

    def test_stack_rejects_mixed_lengths(self):
        """Stacking needs equal-length records."""
        with pytest.raises(DomainError, match="mismatched lengths"):
            stack_records([Record(np.zeros(10), RATE), Record(np.zeros(12), RATE)])
