"""
Forward models with injected noise, one per analysis stage.

Zero-noise outputs equal the closed-form models exactly; the calibration and
heterodyne generators apply the distortions in the reverse order of the
correction chain, so the chain built from the truth undoes them exactly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np
from numpy.fft import irfft, rfft, rfftfreq
from numpy.polynomial import Polynomial

from mkidlab.errors import DomainError
from mkidlab.gap.model import QiSeries, inv_qi_model_kondo
from mkidlab.iqcal.chain import CalibrationChain, CalibrationData
from mkidlab.iqcal.corrections import BackgroundPoly, DelayProfile, asymmetry_rotation, rotate_about
from mkidlab.iqcal.geometry import EllipseParams, IqTrace, circle_to_ellipse
from mkidlab.optfilter.filter import bin_multiplicity
from mkidlab.resonance.model import ComplexSweep, ResonanceParams, circle_of, eval_background, s21_model
from mkidlab.synthgen.scenario import ScenarioConfig

logger = logging.getLogger(__name__)


def _complex_noise(rng: np.random.Generator, rms: np.ndarray | float, shape) -> np.ndarray:
    """Circular complex Gaussian noise with the given RMS magnitude."""
    return np.asarray(rms) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


# ----------------------------
# Resonance and gap
# ----------------------------

def resonance_truth(config: ScenarioConfig) -> ResonanceParams:
    r = config.resonance
    return ResonanceParams(f0=r.f0, q_total=r.q_total, q_c=r.q_c, phi0=r.phi0)


def _sweep_grid(config: ScenarioConfig) -> np.ndarray:
    r = config.resonance
    half = 0.5 * r.span_linewidths * r.linewidth
    return np.linspace(r.f0 - half, r.f0 + half, r.n_points)


def gen_sweep(config: ScenarioConfig, params: Optional[ResonanceParams] = None, stream: str = "sweep") -> ComplexSweep:
    """Non-ideal S21 on a grid spanning span_linewidths, plus complex noise at noise_fraction of |bg|."""
    params = params or resonance_truth(config)
    f = _sweep_grid(config)
    clean = np.asarray(s21_model(f, params))
    bg = np.abs(eval_background(f, params.f0, params.background))
    noise = _complex_noise(config.rng(stream), config.resonance.noise_fraction * bg, f.shape)
    return ComplexSweep(f, clean + noise, meta={"source": "synthgen", "seed": config.seed})


def inv_qi_truth(config: ScenarioConfig, temperatures: np.ndarray) -> np.ndarray:
    g = config.gap
    omega = 2.0 * np.pi * config.resonance.f0
    return np.asarray(inv_qi_model_kondo(temperatures, g.delta, g.inv_qi0, g.alpha, omega, g.kondo_b, g.kondo_tk))


def gen_qi_series(config: ScenarioConfig) -> QiSeries:
    """1/Qi on the truth temperature grid with Gaussian noise at noise_fraction of the value."""
    g = config.gap
    t = g.temperatures
    clean = inv_qi_truth(config, t)
    err = np.maximum(g.noise_fraction * clean, 1e-12 * clean)
    values = clean + g.noise_fraction * clean * config.rng("qi_series").standard_normal(t.size)
    return QiSeries(
        temperatures=t,
        inv_qi=values,
        inv_qi_err=err,
        f0=config.resonance.f0,
        resonator_id=g.resonator_id,
        meta={"source": "synthgen", "seed": config.seed},
    )


def gen_temperature_sweeps(config: ScenarioConfig) -> List[ComplexSweep]:
    """One sweep per bath temperature; Qi(T) follows the Kondo-corrected gap model at fixed Qc."""
    r = config.resonance
    sweeps = []
    for k, (t, inv_qi) in enumerate(zip(config.gap.temperatures, inv_qi_truth(config, config.gap.temperatures))):
        q = 1.0 / (inv_qi + 1.0 / r.q_c)
        params = ResonanceParams(f0=r.f0, q_total=q, q_c=r.q_c, phi0=r.phi0)
        sweep = gen_sweep(config, params, stream=f"temperature_sweep:{k}")
        sweeps.append(ComplexSweep(
            sweep.freqs,
            sweep.s21,
            meta={**sweep.meta, "temperature_k": float(t), "resonator_id": config.gap.resonator_id},
        ))
    return sweeps


# ----------------------------
# Pulses
# ----------------------------

def gen_pulse(t: np.ndarray, onset: float, amp: float, tau_rise: float, tau_fall: float) -> np.ndarray:
    """Double exponential e^(-dt/tau_fall) - e^(-dt/tau_rise) for t >= onset, scaled so its peak is amp."""
    if not 0 < tau_rise < tau_fall:
        raise DomainError(f"gen_pulse needs 0 < tau_rise < tau_fall, got {tau_rise!r}, {tau_fall!r}")
    dt = np.asarray(t, dtype=float) - onset
    t_peak = tau_rise * tau_fall / (tau_fall - tau_rise) * np.log(tau_fall / tau_rise)
    peak = np.exp(-t_peak / tau_fall) - np.exp(-t_peak / tau_rise)
    pos = np.maximum(dt, 0.0)
    shape = np.where(dt >= 0, np.exp(-pos / tau_fall) - np.exp(-pos / tau_rise), 0.0)
    return amp * shape / peak


def gen_noise(config: ScenarioConfig, n: int, rng: np.random.Generator) -> np.ndarray:
    """
    (n, record_length) noise records: white at white_sigma per sample, plus a 1/f
    component with equal power density at knee_hz when a knee is set.
    """
    acq, nz = config.acquisition, config.noise
    white = nz.white_sigma * rng.standard_normal((n, acq.record_length))
    if nz.knee_hz is None:
        return white
    freqs = rfftfreq(acq.record_length, d=1.0 / acq.sample_rate)
    shaping = np.ones_like(freqs)
    shaping[1:] = np.sqrt(1.0 + nz.knee_hz / freqs[1:])
    return irfft(rfft(white, axis=-1) * shaping, n=acq.record_length, axis=-1)


def template_truth(config: ScenarioConfig) -> np.ndarray:
    """Unit-peak pulse at the nominal onset, sampled like the records."""
    acq, pulse = config.acquisition, config.pulse
    t = np.arange(acq.record_length) / acq.sample_rate
    return gen_pulse(t, pulse.onset_index / acq.sample_rate, 1.0, pulse.tau_rise, pulse.tau_fall)


def noise_psd_truth(config: ScenarioConfig) -> np.ndarray:
    """Expected one-sided PSD per DFT bin of gen_noise records."""
    acq, nz = config.acquisition, config.noise
    psd = nz.white_sigma**2 * bin_multiplicity(acq.record_length)
    if nz.knee_hz is not None:
        freqs = rfftfreq(acq.record_length, d=1.0 / acq.sample_rate)
        psd[1:] *= 1.0 + nz.knee_hz / freqs[1:]
    return psd


@dataclass(frozen=True)
class RecordSet:
    """Signal and pulse-free records plus the per-record truth."""

    signal: np.ndarray
    noise: np.ndarray
    sample_rate: float
    onsets: np.ndarray
    photons: np.ndarray
    amplitudes: np.ndarray

    def truth(self) -> Dict[str, object]:
        return {
            "onsets": self.onsets.tolist(),
            "photons": self.photons.tolist(),
            "amplitudes": self.amplitudes.tolist(),
        }


def gen_records(config: ScenarioConfig) -> RecordSet:
    """
    Phase-channel records: n ~ Poisson(mu) photons per event, pulse peak
    shift + n E_gamma for n >= 1 (n = 0 events carry no pulse), onset uniformly
    jittered by +-jitter samples around onset_index, plus configured noise.
    """
    acq, pulse, ph = config.acquisition, config.pulse, config.photons
    rng = config.rng("records")
    photons = rng.poisson(ph.mu, size=acq.n_records)
    onsets = pulse.onset_index + rng.integers(-pulse.jitter, pulse.jitter + 1, size=acq.n_records)
    amplitudes = np.where(photons > 0, ph.shift + photons * ph.e_gamma, 0.0)

    t = np.arange(acq.record_length) / acq.sample_rate
    signal = np.empty((acq.n_records, acq.record_length))
    for k in range(acq.n_records):
        signal[k] = gen_pulse(t, onsets[k] / acq.sample_rate, amplitudes[k], pulse.tau_rise, pulse.tau_fall)
    signal += gen_noise(config, acq.n_records, rng)
    noise = gen_noise(config, acq.n_noise_records, config.rng("noise_records"))
    logger.debug("generated %d signal and %d noise records, %d without photons",
                 acq.n_records, acq.n_noise_records, int(np.count_nonzero(photons == 0)))
    return RecordSet(
        signal=signal,
        noise=noise,
        sample_rate=acq.sample_rate,
        onsets=onsets.astype(int),
        photons=photons.astype(int),
        amplitudes=amplitudes,
    )


# ----------------------------
# IQ calibration
# ----------------------------

def _calibration_resonance(config: ScenarioConfig) -> ResonanceParams:
    """The resonance as the asymmetry correction sees it: phi0 = -theta, unit background."""
    r = config.resonance
    return ResonanceParams(f0=r.f0, q_total=r.q_total, q_c=r.q_c, phi0=-config.calibration.theta)


def _fractional_poly(coef, f0: float) -> Polynomial:
    # domain [0, 2 w0] maps omega onto (omega - w0)/w0, the fractional detuning
    w0 = 2.0 * np.pi * f0
    return Polynomial(coef, domain=[0.0, 2.0 * w0], window=[-1.0, 1.0])


def background_truth(config: ScenarioConfig) -> BackgroundPoly:
    c, f0 = config.calibration, config.resonance.f0
    return BackgroundPoly(
        amplitude=_fractional_poly(c.background_amplitude, f0),
        phase=_fractional_poly(c.background_phase, f0),
    )


def ellipse_truth(config: ScenarioConfig) -> EllipseParams:
    c = config.calibration
    return EllipseParams(center=c.ellipse_center, semi_axes=c.ellipse_axes, gamma=c.ellipse_gamma)


def line_delay(config: ScenarioConfig, f: np.ndarray) -> np.ndarray:
    """Leakage with the RF port disconnected: d0 e^(-2 pi j (f - f0) tau)."""
    c = config.calibration
    d0 = complex(*c.delay_amplitude)
    return d0 * np.exp(-2j * np.pi * (np.asarray(f, dtype=float) - config.resonance.f0) * c.delay_tau)


def forward_distort(config: ScenarioConfig, z: np.ndarray, f: np.ndarray) -> np.ndarray:
    """
    Resonator-frame S21 to raw IQ: rotation about the resonance circle center,
    background multiplication, mixer, then the additive line term.
    """
    f = np.asarray(f, dtype=float)
    center, _ = circle_of(_calibration_resonance(config))
    z = np.asarray(rotate_about(z, center, config.calibration.rotation))
    z = z * np.asarray(background_truth(config)(2.0 * np.pi * f))
    z = np.asarray(circle_to_ellipse(z, ellipse_truth(config)))
    return z + line_delay(config, f)


def _calibration_grids(config: ScenarioConfig):
    c, lw, f0 = config.calibration, config.resonance.linewidth, config.resonance.f0
    res = np.linspace(f0 - 0.5 * c.resonance_span_linewidths * lw, f0 + 0.5 * c.resonance_span_linewidths * lw,
                      c.resonance_points)
    wide = np.linspace(f0 - 0.5 * c.wide_span_linewidths * lw, f0 + 0.5 * c.wide_span_linewidths * lw,
                       c.wide_points)
    return res, wide


def gen_distorted_iq(config: ScenarioConfig) -> CalibrationData:
    """
    The four calibration acquisitions, forward-distorted from ideal data:

    - line profile on every frequency used below (RF port disconnected),
    - unit mixer circle at the resonance frequency, through mixer and line,
    - wide and resonance scans of the asymmetric resonance, fully distorted.
    """
    c, f0 = config.calibration, config.resonance.f0
    rng = config.rng("calibration")
    res_f, wide_f = _calibration_grids(config)
    mixer_f = f0
    params = _calibration_resonance(config)
    _, radius = circle_of(params)
    level = c.noise_scale

    delay_f = np.union1d(np.union1d(res_f, wide_f), [mixer_f])
    delay_scan = IqTrace.from_complex(
        delay_f,
        line_delay(config, delay_f) + _complex_noise(rng, level * abs(complex(*c.delay_amplitude)), delay_f.shape),
        meta={"kind": "delay_scan"},
    )

    phases = np.linspace(0.0, 2.0 * np.pi, c.mixer_points, endpoint=False)
    unit = np.exp(1j * phases) + _complex_noise(rng, level, phases.shape)
    mixer = np.asarray(circle_to_ellipse(unit, ellipse_truth(config))) + line_delay(config, mixer_f)

    def scan(f: np.ndarray) -> ComplexSweep:
        clean = np.asarray(s21_model(f, params))
        z = clean + _complex_noise(rng, level * radius, f.shape)
        return ComplexSweep(f, forward_distort(config, z, f), meta={"source": "synthgen"})

    return CalibrationData(
        delay_scan=delay_scan,
        mixer_circle=mixer,
        mixer_frequency=mixer_f,
        wide_scan=scan(wide_f),
        resonance=scan(res_f),
    )


def truth_chain(config: ScenarioConfig) -> CalibrationChain:
    """The exact inverse of forward_distort, as a calibration chain."""
    c = config.calibration
    res_f, wide_f = _calibration_grids(config)
    delay_f = np.union1d(res_f, wide_f)
    params = _calibration_resonance(config)
    center, radius = circle_of(params)
    k = np.cos(c.theta) * np.exp(1j * c.theta)
    return CalibrationChain(
        delay=DelayProfile(delay_f, line_delay(config, delay_f)),
        ellipse=ellipse_truth(config),
        background=background_truth(config),
        rotation_center=complex(center),
        rotation_angle=-c.rotation,
        theta=c.theta,
        readout_center=complex(asymmetry_rotation(center, c.theta)),
        readout_radius=float(abs(k) * radius),
        rest_angle=np.pi,
    )


def gen_iq_records(config: ScenarioConfig, phase_records: np.ndarray) -> np.ndarray:
    """
    Raw IQ samples at the probe frequency f0 for phase-channel records.

    A phase excursion dphi moves the resonance point along its circle and pulls
    it inward: z = c + R (1 - ratio dphi) e^(j(beta + dphi)), where beta points from
    the circle center to the resting point at f0. The result is forward-distorted.
    """
    x = np.asarray(phase_records, dtype=float)
    f0 = config.resonance.f0
    params = _calibration_resonance(config)
    center, radius = circle_of(params)
    beta = float(np.angle(complex(s21_model(f0, params)) - center))
    ratio = config.pulse.amplitude_ratio
    z = center + radius * (1.0 - ratio * x) * np.exp(1j * (beta + x))
    return forward_distort(config, z, np.full(x.shape, f0))
