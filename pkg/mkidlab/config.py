"""
Pipeline configuration.

A single YAML (or JSON) document holds one section per stage. Unknown keys are
rejected so that a misspelled option fails loudly instead of silently falling
back to a default.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Type, TypeVar, Union

import yaml

from mkidlab.errors import ConfigError, DataFormatError
from mkidlab.gap.fit import GapFitConfig
from mkidlab.iqcal.chain import ChainFitConfig
from mkidlab.pulse.smoothing import SavGolConfig
from mkidlab.pulse.trigger import TriggerConfig
from mkidlab.resonance.fit import ResonanceFitConfig
from mkidlab.spectrum.fit import FREE_PARAMETERS
from mkidlab.synthgen.scenario import ScenarioConfig

T = TypeVar("T")

DEFAULT_CONFIG = Path(__file__).resolve().parents[1] / "configs" / "default.yaml"
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


def read_yaml(path: Path) -> dict:
    """Parse a YAML or JSON file into a mapping."""
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise DataFormatError(f"Cannot read config {path}: {e}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"Config {path} is not valid YAML/JSON:\n{e}") from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"Config {path} must contain a mapping at the top level")
    return data


def _section(cls: Type[T], data: Optional[Dict[str, Any]], name: str) -> T:
    data = dict(data or {})
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"Unknown keys in {name}: {unknown}\nKnown keys: {sorted(known)}")
    try:
        return cls(**data)
    except TypeError as e:
        raise ConfigError(f"Invalid value in {name}: {e}") from e


@dataclass(frozen=True)
class PulseConfig:
    """Flat view of the trigger settings as they appear in the config file."""

    savgol_window: int = 51
    savgol_order: int = 3
    smoothing_window: int = 5
    threshold: float = 5.0
    target_index: int = 1500
    adc_full_scale: float = 5.0

    def __post_init__(self) -> None:
        self.trigger()

    def trigger(self) -> TriggerConfig:
        return TriggerConfig(
            savgol=SavGolConfig(window=self.savgol_window, poly_order=self.savgol_order, deriv_order=2),
            smoothing_window=self.smoothing_window,
            threshold=self.threshold,
            target_index=self.target_index,
            adc_full_scale=self.adc_full_scale,
        )


@dataclass(frozen=True)
class OptFilterConfig:
    pretrigger: Optional[int] = None
    good_only: bool = True

    def __post_init__(self) -> None:
        if self.pretrigger is not None and self.pretrigger < 1:
            raise ConfigError("optfilter.pretrigger must be >= 1 when set")


@dataclass(frozen=True)
class SpectrumConfig:
    bins: Union[str, int] = "fd"
    fixed: Tuple[str, ...] = ()
    e_gamma: Optional[float] = None
    shift: Optional[float] = None
    photon_ev: float = 0.8
    n_min: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "fixed", tuple(self.fixed))
        unknown = set(self.fixed) - set(FREE_PARAMETERS)
        if unknown:
            raise ConfigError(f"spectrum.fixed names unknown parameters: {sorted(unknown)}")
        if "e_gamma" in self.fixed and self.e_gamma is None:
            raise ConfigError("spectrum.fixed contains e_gamma but spectrum.e_gamma is not set")
        if "shift" in self.fixed and self.shift is None:
            raise ConfigError("spectrum.fixed contains shift but spectrum.shift is not set")
        if isinstance(self.bins, int) and self.bins < 2:
            raise ConfigError("spectrum.bins must be >= 2 when given as a count")
        if not self.photon_ev > 0:
            raise ConfigError("spectrum.photon_ev must be > 0")
        if self.n_min not in (0, 1):
            raise ConfigError("spectrum.n_min must be 0 or 1")


@dataclass(frozen=True)
class PipelineConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    resonance: ResonanceFitConfig = field(default_factory=ResonanceFitConfig)
    gap: GapFitConfig = field(default_factory=GapFitConfig)
    iqcal: ChainFitConfig = field(default_factory=ChainFitConfig)
    pulse: PulseConfig = field(default_factory=PulseConfig)
    optfilter: OptFilterConfig = field(default_factory=OptFilterConfig)
    spectrum: SpectrumConfig = field(default_factory=SpectrumConfig)
    seed: int = 20240601
    log_level: str = "INFO"

    def __post_init__(self) -> None:
        if self.log_level.upper() not in LOG_LEVELS:
            raise ConfigError(f"log_level must be one of {LOG_LEVELS}, got {self.log_level!r}")
        length = self.scenario.acquisition.record_length
        if not 0 <= self.pulse.target_index < length:
            raise ConfigError(
                f"pulse.target_index={self.pulse.target_index} lies outside the "
                f"{length}-sample records of the scenario"
            )
        if self.optfilter.pretrigger is not None and self.optfilter.pretrigger > self.pulse.target_index:
            raise ConfigError("optfilter.pretrigger must not exceed pulse.target_index")

    @property
    def trigger(self) -> TriggerConfig:
        return self.pulse.trigger()

    @property
    def level(self) -> int:
        return getattr(logging, self.log_level.upper())

    def with_seed(self, seed: int) -> "PipelineConfig":
        return PipelineConfig(
            scenario=self.scenario.with_seed(seed),
            resonance=self.resonance,
            gap=self.gap,
            iqcal=self.iqcal,
            pulse=self.pulse,
            optfilter=self.optfilter,
            spectrum=self.spectrum,
            seed=seed,
            log_level=self.log_level,
        )

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]]) -> "PipelineConfig":
        data = dict(data or {})
        sections = ("scenario", "resonance", "gap", "iqcal", "pulse", "optfilter", "spectrum")
        unknown = sorted(set(data) - set(sections) - {"seed", "log_level"})
        if unknown:
            raise ConfigError(f"Unknown top-level config keys: {unknown}")

        seed = int(data.get("seed", cls.seed))
        scenario = dict(data.get("scenario") or {})
        scenario.setdefault("seed", seed)
        return cls(
            scenario=ScenarioConfig.from_dict(scenario),
            resonance=_section(ResonanceFitConfig, data.get("resonance"), "resonance"),
            gap=_section(GapFitConfig, data.get("gap"), "gap"),
            iqcal=_section(ChainFitConfig, data.get("iqcal"), "iqcal"),
            pulse=_section(PulseConfig, data.get("pulse"), "pulse"),
            optfilter=_section(OptFilterConfig, data.get("optfilter"), "optfilter"),
            spectrum=_section(SpectrumConfig, data.get("spectrum"), "spectrum"),
            seed=seed,
            log_level=str(data.get("log_level", cls.log_level)),
        )


def load_config(path: Optional[Path] = None) -> PipelineConfig:
    """Load a pipeline config; without a path the shipped default is used."""
    if path is None:
        return PipelineConfig.from_dict(read_yaml(DEFAULT_CONFIG)) if DEFAULT_CONFIG.exists() else PipelineConfig()
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Config file not found: {path}")
    return PipelineConfig.from_dict(read_yaml(path))
