"""
Ground-truth scenario for synthetic data.

Every generator draws from its own stream, seeded by a stable hash of the base
seed and the stream name, so adding a stream never perturbs the others and a
scenario reproduces bit for bit across platforms (PCG64).
"""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, Optional, Tuple, Type, TypeVar

import numpy as np

from mkidlab.errors import ConfigError
from mkidlab.physics.constants import IR_PHOTON_EV

T = TypeVar("T")


def stable_seed(base_seed: int, *labels: object) -> int:
    """Deterministic sub-seed: base_seed + hash(labels) mod 1e9."""
    s = ",".join(str(x) for x in labels).encode("utf-8")
    h = hashlib.sha256(s).hexdigest()
    x = int(h[:16], 16)  # take 64 bits
    return int((base_seed + (x % 1_000_000_000)) % 1_000_000_000)


def _from_dict(cls: Type[T], data: Optional[Dict[str, Any]], section: str) -> T:
    data = dict(data or {})
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"Unknown keys in scenario.{section}: {unknown}")
    for name, value in data.items():
        if isinstance(value, list):
            data[name] = tuple(value)
    return cls(**data)


def _positive(section: str, **values: float) -> None:
    for name, v in values.items():
        if not v > 0:
            raise ConfigError(f"scenario.{section}.{name} must be > 0, got {v!r}")


@dataclass(frozen=True)
class ResonanceTruth:
    f0: float = 5380.6e6
    q_total: float = 4050.0
    q_c: float = 10600.0
    phi0: float = 1.004
    n_points: int = 801
    span_linewidths: float = 20.0
    noise_fraction: float = 0.01

    def __post_init__(self) -> None:
        _positive("resonance", f0=self.f0, q_total=self.q_total, q_c=self.q_c,
                  span_linewidths=self.span_linewidths)
        if self.q_total >= self.q_c:
            raise ConfigError("scenario.resonance needs q_total < q_c")
        if self.span_linewidths < 10:
            raise ConfigError("scenario.resonance.span_linewidths must be >= 10")
        if self.n_points < 8 or self.noise_fraction < 0:
            raise ConfigError("scenario.resonance needs n_points >= 8 and noise_fraction >= 0")

    @property
    def linewidth(self) -> float:
        return self.f0 / self.q_total


@dataclass(frozen=True)
class GapTruth:
    delta: float = 1.5e-4
    alpha: float = 0.3
    inv_qi0: float = 1.0 / 6440.0
    kondo_b: float = 1e-6
    kondo_tk: float = 1.0
    t_min_mk: int = 40
    t_max_mk: int = 300
    t_step_mk: int = 10
    noise_fraction: float = 0.01
    resonator_id: str = "r0"

    def __post_init__(self) -> None:
        _positive("gap", delta=self.delta, alpha=self.alpha, inv_qi0=self.inv_qi0, kondo_tk=self.kondo_tk,
                  t_min_mk=self.t_min_mk, t_step_mk=self.t_step_mk)
        if self.alpha > 1:
            raise ConfigError("scenario.gap.alpha must lie in (0, 1]")
        if self.t_max_mk <= self.t_min_mk:
            raise ConfigError("scenario.gap needs t_max_mk > t_min_mk")
        if self.kondo_b < 0 or self.noise_fraction < 0:
            raise ConfigError("scenario.gap needs kondo_b >= 0 and noise_fraction >= 0")

    @property
    def temperatures(self) -> np.ndarray:
        """Bath temperatures in K on an integer-mK grid."""
        mk = np.arange(self.t_min_mk, self.t_max_mk + 1, self.t_step_mk)
        return mk / 1000.0


@dataclass(frozen=True)
class CalibrationTruth:
    """Forward distortions, each the inverse of one correction step."""

    theta: float = 0.5
    rotation: float = 0.0
    ellipse_center: Tuple[float, float] = (0.02, -0.01)
    ellipse_axes: Tuple[float, float] = (1.1, 0.9)
    ellipse_gamma: float = 1.3
    # amplitude and phase polynomials in fractional detuning (f - f0)/f0, ascending
    background_amplitude: Tuple[float, ...] = (0.8, 3.0, 200.0)
    background_phase: Tuple[float, ...] = (0.3, -20.0, 500.0)
    delay_amplitude: Tuple[float, float] = (0.05, 0.02)
    delay_tau: float = 20e-9
    snr_db: float = 60.0
    mixer_points: int = 360
    resonance_points: int = 2001
    resonance_span_linewidths: float = 10.0
    wide_points: int = 801
    wide_span_linewidths: float = 80.0

    def __post_init__(self) -> None:
        if not abs(self.theta) < np.pi / 2:
            raise ConfigError(f"scenario.calibration.theta must satisfy |theta| < pi/2, got {self.theta}")
        if not 0.0 < self.ellipse_gamma < np.pi:
            raise ConfigError("scenario.calibration.ellipse_gamma must lie in (0, pi)")
        _positive("calibration", a_i=self.ellipse_axes[0], a_q=self.ellipse_axes[1], snr_db=self.snr_db,
                  amplitude0=self.background_amplitude[0])
        if self.wide_span_linewidths <= self.resonance_span_linewidths:
            raise ConfigError("scenario.calibration: the wide scan must span more than the resonance scan")
        if self.mixer_points < 6 or self.resonance_points < 8 or self.wide_points < 8:
            raise ConfigError("scenario.calibration point counts are too small to fit")

    @property
    def noise_scale(self) -> float:
        return float(10.0 ** (-self.snr_db / 20.0))


@dataclass(frozen=True)
class PulseTruth:
    tau_rise: float = 0.1e-6
    tau_fall: float = 4e-6
    onset_index: int = 1500
    jitter: int = 50
    amplitude_ratio: float = 0.1

    def __post_init__(self) -> None:
        _positive("pulse", tau_rise=self.tau_rise, tau_fall=self.tau_fall)
        if self.tau_rise >= self.tau_fall:
            raise ConfigError("scenario.pulse needs tau_rise < tau_fall")
        if self.jitter < 0 or self.onset_index - self.jitter < 0:
            raise ConfigError("scenario.pulse needs 0 <= jitter <= onset_index")


@dataclass(frozen=True)
class NoiseTruth:
    white_sigma: float = 0.29
    knee_hz: Optional[float] = None

    def __post_init__(self) -> None:
        if self.white_sigma < 0:
            raise ConfigError("scenario.noise.white_sigma must be >= 0")
        if self.knee_hz is not None and not self.knee_hz > 0:
            raise ConfigError("scenario.noise.knee_hz must be > 0 when set")


@dataclass(frozen=True)
class AcquisitionTruth:
    sample_rate: float = 5e7
    record_length: int = 6000
    n_records: int = 1000
    n_noise_records: int = 500

    def __post_init__(self) -> None:
        _positive("acquisition", sample_rate=self.sample_rate, record_length=self.record_length)
        if self.n_records < 0 or self.n_noise_records < 0:
            raise ConfigError("scenario.acquisition record counts must be >= 0")


@dataclass(frozen=True)
class PhotonTruth:
    mu: float = 12.4
    e_gamma: float = 0.016
    shift: float = 0.7
    photon_ev: float = IR_PHOTON_EV

    def __post_init__(self) -> None:
        _positive("photons", mu=self.mu, e_gamma=self.e_gamma, photon_ev=self.photon_ev)
        if not 0.0 <= self.shift <= 1.0:
            raise ConfigError("scenario.photons.shift must lie in [0, 1]")


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 20240601
    resonance: ResonanceTruth = field(default_factory=ResonanceTruth)
    gap: GapTruth = field(default_factory=GapTruth)
    calibration: CalibrationTruth = field(default_factory=CalibrationTruth)
    pulse: PulseTruth = field(default_factory=PulseTruth)
    noise: NoiseTruth = field(default_factory=NoiseTruth)
    acquisition: AcquisitionTruth = field(default_factory=AcquisitionTruth)
    photons: PhotonTruth = field(default_factory=PhotonTruth)

    def __post_init__(self) -> None:
        if self.seed < 0:
            raise ConfigError("scenario.seed must be >= 0")
        if self.pulse.onset_index + self.pulse.jitter >= self.acquisition.record_length:
            raise ConfigError(
                f"scenario.pulse onset {self.pulse.onset_index} + jitter {self.pulse.jitter} "
                f"does not fit in a {self.acquisition.record_length}-sample record"
            )

    def rng(self, stream: str) -> np.random.Generator:
        """Independent PCG64 stream for one generator."""
        return np.random.Generator(np.random.PCG64(stable_seed(self.seed, stream)))

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return ScenarioConfig(seed=seed, resonance=self.resonance, gap=self.gap, calibration=self.calibration,
                              pulse=self.pulse, noise=self.noise, acquisition=self.acquisition,
                              photons=self.photons)

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]]) -> "ScenarioConfig":
        data = dict(data or {})
        sections = {
            "resonance": ResonanceTruth,
            "gap": GapTruth,
            "calibration": CalibrationTruth,
            "pulse": PulseTruth,
            "noise": NoiseTruth,
            "acquisition": AcquisitionTruth,
            "photons": PhotonTruth,
        }
        unknown = sorted(set(data) - set(sections) - {"seed"})
        if unknown:
            raise ConfigError(f"Unknown keys in scenario: {unknown}")
        try:
            kwargs = {name: _from_dict(kind, data.get(name), name) for name, kind in sections.items()}
            return cls(seed=int(data.get("seed", cls.seed)), **kwargs)
        except TypeError as e:
            raise ConfigError(f"Invalid scenario value: {e}") from e

    def to_dict(self) -> dict:
        return asdict(self)
