"""
Tests for the synthetic data generators

Determinism, zero-noise agreement with the closed-form models, and the
calibration forward model against its exact inverse.
"""

from dataclasses import replace

import numpy as np
import pytest

from mkidlab.errors import ConfigError, DomainError
from mkidlab.iqcal import asymmetry_rotation
from mkidlab.resonance import s21_model
from mkidlab.synthgen import (
    AcquisitionTruth,
    CalibrationTruth,
    GapTruth,
    NoiseTruth,
    PhotonTruth,
    PulseTruth,
    ResonanceTruth,
    ScenarioConfig,
    forward_distort,
    gen_distorted_iq,
    gen_pulse,
    gen_qi_series,
    gen_records,
    gen_sweep,
    gen_temperature_sweeps,
    inv_qi_truth,
    resonance_truth,
    stable_seed,
    truth_chain,
)

SMALL = ScenarioConfig(acquisition=AcquisitionTruth(record_length=3000, n_records=50, n_noise_records=20))


class TestSeeding:
    """Stable sub-seeds and per-stream generators."""

    def test_stable_seed_is_deterministic(self):
        """Same labels, same seed; different labels, different seeds."""
        assert stable_seed(7, "records") == stable_seed(7, "records")
        assert stable_seed(7, "records") != stable_seed(7, "noise_records")
        assert stable_seed(7, "records") != stable_seed(8, "records")

    def test_stable_seed_range(self):
        """Sub-seeds stay below 1e9 for any label mix."""
        assert 0 <= stable_seed(123, "sweep", 4) < 1_000_000_000

    def test_streams_are_independent(self):
        """Two streams of one scenario draw different numbers."""
        a = SMALL.rng("one").standard_normal(5)
        b = SMALL.rng("two").standard_normal(5)
        assert not np.allclose(a, b)

    def test_same_seed_same_records(self):
        """Generating twice from one scenario gives identical arrays."""
        a, b = gen_records(SMALL), gen_records(SMALL)
        np.testing.assert_array_equal(a.signal, b.signal)
        np.testing.assert_array_equal(a.noise, b.noise)
        np.testing.assert_array_equal(a.photons, b.photons)

    def test_different_seed_different_records(self):
        """Changing the seed changes the draw."""
        a = gen_records(SMALL)
        b = gen_records(SMALL.with_seed(SMALL.seed + 1))
        assert not np.array_equal(a.signal, b.signal)


class TestZeroNoise:
    """With noise switched off the generators equal the models."""

    def test_sweep_equals_model(self):
        """A zero-noise sweep is s21_model on the grid."""
        config = replace(ScenarioConfig(), resonance=replace(ResonanceTruth(), noise_fraction=0.0))
        sweep = gen_sweep(config)
        np.testing.assert_array_equal(sweep.s21, s21_model(sweep.freqs, resonance_truth(config)))

    def test_qi_series_equals_model(self):
        """A zero-noise 1/Qi series is the Kondo-corrected gap model."""
        config = replace(ScenarioConfig(), gap=replace(GapTruth(), noise_fraction=0.0))
        series = gen_qi_series(config)
        np.testing.assert_array_equal(series.inv_qi, inv_qi_truth(config, series.temperatures))
        assert np.all(series.inv_qi_err > 0)

    def test_records_equal_pulses(self):
        """Zero-noise records are scaled pulses at the drawn onsets."""
        config = replace(SMALL, noise=NoiseTruth(white_sigma=0.0))
        data = gen_records(config)
        t = np.arange(3000) / data.sample_rate
        for k in range(5):
            expected = gen_pulse(t, data.onsets[k] / data.sample_rate, data.amplitudes[k], 0.1e-6, 4e-6)
            np.testing.assert_allclose(data.signal[k], expected, atol=1e-15)
        assert not np.any(data.noise)

    def test_temperature_sweeps_follow_gap_model(self):
        """One sweep per grid temperature, tagged with temperature and resonator id."""
        sweeps = gen_temperature_sweeps(ScenarioConfig())
        assert len(sweeps) == 27
        assert sweeps[0].meta["temperature_k"] == pytest.approx(0.04)
        assert sweeps[-1].meta["resonator_id"] == "r0"


class TestRecords:
    """Photon statistics of the record generator."""

    def test_amplitudes(self):
        """Pulse peak is shift + n E_gamma for n >= 1 and zero without photons."""
        data = gen_records(SMALL)
        ph = SMALL.photons
        expected = np.where(data.photons > 0, ph.shift + data.photons * ph.e_gamma, 0.0)
        np.testing.assert_allclose(data.amplitudes, expected)

    def test_onsets_within_jitter(self):
        """Onsets lie within +-jitter of the nominal index."""
        data = gen_records(SMALL)
        assert np.all(np.abs(data.onsets - SMALL.pulse.onset_index) <= SMALL.pulse.jitter)

    def test_truth_is_serializable(self):
        """truth() gives plain lists."""
        truth = gen_records(SMALL).truth()
        assert isinstance(truth["photons"], list) and len(truth["photons"]) == 50

    def test_pulse_peak_is_amplitude(self):
        """The analytic peak of the double exponential equals amp."""
        t = np.linspace(0.0, 4e-6, 400_001)
        assert gen_pulse(t, 0.0, 0.8, 0.1e-6, 4e-6).max() == pytest.approx(0.8, rel=1e-9)

    def test_pulse_needs_rise_below_fall(self):
        """tau_rise >= tau_fall is not a pulse."""
        with pytest.raises(DomainError):
            gen_pulse(np.zeros(3), 0.0, 1.0, 4e-6, 0.1e-6)


class TestCalibrationForwardModel:
    """forward_distort and truth_chain are inverses."""

    def test_truth_chain_inverts_forward_model(self):
        """Every distortion is undone exactly, including the center rotation."""
        config = replace(ScenarioConfig(), calibration=replace(CalibrationTruth(), rotation=0.4))
        f = np.linspace(5380.0e6, 5381.2e6, 101)
        z = 0.6 + 0.2j + 0.3 * np.exp(1j * np.linspace(0, 6, 101))
        raw = forward_distort(config, z, f)
        np.testing.assert_allclose(truth_chain(config).apply(raw, f), asymmetry_rotation(z, 0.5), atol=1e-12)

    def test_distorted_data_shapes(self):
        """All four acquisitions are present with the configured sizes."""
        data = gen_distorted_iq(ScenarioConfig())
        c = CalibrationTruth()
        assert data.mixer_circle.size == c.mixer_points
        assert len(data.resonance) == c.resonance_points
        assert len(data.wide_scan) == c.wide_points
        assert data.delay_scan.axis[0] <= data.wide_scan.freqs[0]
        assert data.delay_scan.axis[-1] >= data.wide_scan.freqs[-1]


class TestScenarioConfig:
    """Scenario validation and dictionary form."""

    def test_from_dict_round_trip(self):
        """to_dict/from_dict preserves every section."""
        config = ScenarioConfig(seed=5, photons=PhotonTruth(mu=3.0))
        assert ScenarioConfig.from_dict(config.to_dict()) == config

    def test_unknown_section(self):
        """Unknown top-level keys are rejected."""
        with pytest.raises(ConfigError, match="Unknown keys in scenario"):
            ScenarioConfig.from_dict({"photon": {}})

    def test_unknown_field(self):
        """Unknown keys inside a section are rejected with the section name."""
        with pytest.raises(ConfigError, match="scenario.pulse"):
            ScenarioConfig.from_dict({"pulse": {"tau": 1.0}})

    def test_onset_must_fit_record(self):
        """onset + jitter beyond the record length is rejected."""
        with pytest.raises(ConfigError, match="does not fit"):
            ScenarioConfig(acquisition=AcquisitionTruth(record_length=1500))

    @pytest.mark.parametrize("build", [
        lambda: ResonanceTruth(q_total=2e4),
        lambda: GapTruth(alpha=1.5),
        lambda: CalibrationTruth(theta=2.0),
        lambda: PulseTruth(tau_rise=5e-6),
        lambda: PhotonTruth(shift=1.5),
        lambda: NoiseTruth(white_sigma=-1.0),
    ])
    def test_invalid_truth(self, build):
        """Out-of-range truth values are config errors."""
        with pytest.raises(ConfigError):
            build()
