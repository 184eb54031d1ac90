"""Seeded synthetic data with known truth for every pipeline stage."""

from mkidlab.synthgen.generators import (
    RecordSet,
    background_truth,
    ellipse_truth,
    forward_distort,
    gen_distorted_iq,
    gen_iq_records,
    gen_noise,
    gen_pulse,
    gen_qi_series,
    gen_records,
    gen_sweep,
    gen_temperature_sweeps,
    inv_qi_truth,
    line_delay,
    noise_psd_truth,
    resonance_truth,
    template_truth,
    truth_chain,
)
from mkidlab.synthgen.scenario import (
    AcquisitionTruth,
    CalibrationTruth,
    GapTruth,
    NoiseTruth,
    PhotonTruth,
    PulseTruth,
    ResonanceTruth,
    ScenarioConfig,
    stable_seed,
)

__all__ = [
    "AcquisitionTruth",
    "CalibrationTruth",
    "GapTruth",
    "NoiseTruth",
    "PhotonTruth",
    "PulseTruth",
    "RecordSet",
    "ResonanceTruth",
    "ScenarioConfig",
    "background_truth",
    "ellipse_truth",
    "forward_distort",
    "gen_distorted_iq",
    "gen_iq_records",
    "gen_noise",
    "gen_pulse",
    "gen_qi_series",
    "gen_records",
    "gen_sweep",
    "gen_temperature_sweeps",
    "inv_qi_truth",
    "line_delay",
    "noise_psd_truth",
    "resonance_truth",
    "stable_seed",
    "template_truth",
    "truth_chain",
]
