"""
Analysis stages as file-to-file operations.

Every stage reads and validates its inputs, computes all results in memory and
only then writes, inside an OutputSet so a failure leaves no partial outputs.
Each returns a small summary mapping that the CLI prints and the pipeline
report collects.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Dict, Optional, Sequence

import numpy as np
from numpy.fft import rfftfreq

from mkidlab.config import PipelineConfig
from mkidlab.errors import ConfigError, DataFormatError, DomainError
from mkidlab.gap import combine_gap_results, fit_gap, inv_qi_model, inv_qi_model_kondo, qi_series_from_fits
from mkidlab.io import (
    OutputSet,
    read_calibration_data,
    read_json,
    read_off_values,
    read_qi_series,
    read_records,
    read_sweep,
    read_sweep_dir,
    write_calibration_data,
)
from mkidlab.iqcal import fit_chain
from mkidlab.optfilter import average_pulse, build_filter, estimate_amplitude, expected_resolution, noise_psd, resolution
from mkidlab.pulse import align_records, records_from_array
from mkidlab.report import build_checks, evaluate, render_markdown
from mkidlab.resonance import fit_resonance, s21_model
from mkidlab.spectrum import (
    SpectrumModel,
    binned_model,
    count_modes,
    energy_scale_ev,
    expected_spectrum_curve,
    fit_spectrum,
    initial_spectrum_model,
    make_histogram,
)
from mkidlab.synthgen import (
    gen_distorted_iq,
    gen_iq_records,
    gen_qi_series,
    gen_records,
    gen_sweep,
    gen_temperature_sweeps,
    noise_psd_truth,
    template_truth,
)

logger = logging.getLogger(__name__)

# file names shared between stages
SWEEP = "sweep.csv"
TEMPERATURE_DIR = "temperature_sweeps"
QI_SERIES = "qi_series.csv"
SWEEP_SERIES = "qi_series_from_sweeps.csv"
CALIBRATION_DIR = "calibration"
IQ_RECORDS = "iq_records.json"
IQ_NOISE = "iq_noise.json"
PHASE_RECORDS = "phase_records.json"
PHASE_NOISE = "phase_noise.json"
ALIGNED_RECORDS = "aligned_records.json"
OFF_VALUES = "off_values.csv"
OFFILTER_SUMMARY = "offilter.json"
TRUTH = "truth.json"


# ----------------------------
# simulate
# ----------------------------

def _truth_resolution(config: PipelineConfig) -> float:
    return expected_resolution(build_filter(template_truth(config.scenario), noise_psd_truth(config.scenario)))


def simulate(config: PipelineConfig, outdir: Path) -> dict:
    """Write every synthetic input the analysis stages consume, plus truth.json."""
    sc = config.scenario
    sweep = gen_sweep(sc)
    temp_sweeps = gen_temperature_sweeps(sc)
    series = gen_qi_series(sc)
    calibration = gen_distorted_iq(sc)
    records = gen_records(sc)
    iq_signal = gen_iq_records(sc, records.signal)
    iq_noise = gen_iq_records(sc, records.noise)

    sigma = _truth_resolution(config)
    ph = sc.photons
    expected = SpectrumModel(mu=ph.mu, sigma=sigma, amplitude=float(sc.acquisition.n_records),
                             shift=ph.shift, e_gamma=ph.e_gamma)
    hi = ph.shift + (ph.mu + 6.0 * np.sqrt(ph.mu) + 1.0) * ph.e_gamma + 5.0 * sigma
    grid = np.linspace(ph.shift - 5.0 * sigma, hi, 801)
    probe = {"probe_frequency_hz": sc.resonance.f0, "kind": "raw_iq"}

    truth = {
        "scenario": sc.to_dict(),
        "resolution": sigma,
        "records": records.truth(),
    }
    with OutputSet(outdir) as out:
        out.sweep(SWEEP, sweep)
        for s in temp_sweeps:
            out.sweep(f"{TEMPERATURE_DIR}/T{round(1000 * s.meta['temperature_k']):04d}mK.csv", s)
        out.qi_series(QI_SERIES, series)
        write_calibration_data(out, CALIBRATION_DIR, calibration)
        out.records(IQ_RECORDS, iq_signal, records.sample_rate, probe)
        out.records(IQ_NOISE, iq_noise, records.sample_rate, probe)
        out.csv("expected_spectrum.csv", ("off", "density"), (grid, expected_spectrum_curve(expected, grid)))
        out.json(TRUTH, truth)
        files = [p.relative_to(outdir).as_posix() for p in out.written]
    return {"files": len(files), "n_records": int(records.signal.shape[0]), "expected_resolution": sigma}


# ----------------------------
# resonance-fit / gap-fit
# ----------------------------

def resonance_fit(config: PipelineConfig, source: Path, outdir: Path, series_name: str = QI_SERIES) -> dict:
    """
    Fit one sweep CSV, or every sweep of a temperature-scan directory; the
    directory form also writes the QiSeries of the fitted Qi values.
    """
    source = Path(source)
    if source.is_dir():
        sweeps = read_sweep_dir(source)
        fits = [fit_resonance(s, config.resonance) for s in sweeps]
        temps = [float(s.meta["temperature_k"]) for s in sweeps]
        rid = str(sweeps[0].meta.get("resonator_id", source.name))
        series = qi_series_from_fits(fits, temps, rid)
        rows = [{"temperature_k": t, **f.to_dict()} for t, f in zip(temps, fits)]
        with OutputSet(outdir) as out:
            out.json("resonance_fits.json", {"resonator_id": rid, "fits": rows})
            out.qi_series(series_name, series)
        return {"n_sweeps": len(fits), "n_converged": sum(f.converged for f in fits), "resonator_id": rid}

    sweep = read_sweep(source)
    fit = fit_resonance(sweep, config.resonance)
    model = np.asarray(s21_model(sweep.freqs, fit))
    with OutputSet(outdir) as out:
        out.json("resonance_fit.json", fit.to_dict())
        out.csv("resonance_fit.csv", ("freq_hz", "data_re", "data_im", "model_re", "model_im"),
                (sweep.freqs, sweep.s21.real, sweep.s21.imag, model.real, model.imag))
    return {"f0_hz": fit.f0, "q": fit.q_total, "qc": fit.q_c, "qi": fit.q_i, "phi0": fit.phi0,
            "converged": fit.converged}


def gap_fit(config: PipelineConfig, sources: Sequence[Path], outdir: Path) -> dict:
    """Gap fit per QiSeries and their inverse-variance combination."""
    if not sources:
        raise ConfigError("gap-fit needs at least one --input QiSeries CSV")
    series = [read_qi_series(Path(p)) for p in sources]
    ids = [s.resonator_id for s in series]
    if len(set(ids)) != len(ids):
        raise DataFormatError(f"Duplicate resonator ids among gap-fit inputs: {ids}")
    g = config.gap
    results = [fit_gap(s, g.alpha, g.use_kondo, g) for s in series]
    combined = combine_gap_results(results)

    curves = []
    for s, r in zip(series, results):
        if r.use_kondo:
            model = inv_qi_model_kondo(s.temperatures, r.delta, r.inv_qi0, r.alpha, s.omega, r.kondo_b, r.kondo_tk)
        else:
            model = inv_qi_model(s.temperatures, r.delta, r.inv_qi0, r.alpha, s.omega)
        curves.append((s, np.asarray(model)))

    with OutputSet(outdir) as out:
        out.json("gap_fit.json", {"results": [r.to_dict() for r in results], "combined": combined.to_dict()})
        for s, model in curves:
            out.csv(f"gap_fit_{s.resonator_id}.csv", ("temperature_k", "inv_qi", "inv_qi_err", "model"),
                    (s.temperatures, s.inv_qi, s.inv_qi_err, model))
    return {"delta_ev": combined.delta, "delta_err": combined.delta_err, "tc_k": combined.tc,
            "n_resonators": len(results)}


# ----------------------------
# iq-calibrate / trigger-align
# ----------------------------

def iq_calibrate(
    config: PipelineConfig,
    calibration_dir: Path,
    outdir: Path,
    records: Optional[Path] = None,
    noise: Optional[Path] = None,
) -> dict:
    """
    Fit the calibration chain and, when raw IQ records are given, convert them
    to phase-channel records about the calibrated circle.
    """
    data = read_calibration_data(Path(calibration_dir))
    raw = []
    for path, name in ((records, PHASE_RECORDS), (noise, PHASE_NOISE)):
        if path is None:
            continue
        x, rate, meta = read_records(Path(path))
        if not np.iscomplexobj(x):
            raise DataFormatError(f"{path}: iq-calibrate expects raw complex IQ records")
        if "probe_frequency_hz" not in meta:
            raise DataFormatError(f"{path}: record header lacks probe_frequency_hz")
        raw.append((name, x, rate, meta))

    chain = fit_chain(data, config.iqcal)
    phases = []
    for name, x, rate, meta in raw:
        phase, _ = chain.readout(x, meta["probe_frequency_hz"])
        phases.append((name, np.asarray(phase), rate, {**meta, "kind": "phase"}))

    calibrated = chain.apply(data.resonance.s21, data.resonance.freqs)
    with OutputSet(outdir) as out:
        out.json("calibration.json", chain.to_dict())
        out.csv("calibrated_resonance.csv", ("freq_hz", "re", "im"),
                (data.resonance.freqs, calibrated.real, calibrated.imag))
        for name, phase, rate, meta in phases:
            out.records(name, phase, rate, meta)
    return {**chain.diagnostics, "theta": chain.theta, "n_converted": sum(p[1].shape[0] for p in phases)}


def trigger_align(config: PipelineConfig, source: Path, outdir: Path) -> dict:
    x, rate, meta = read_records(Path(source))
    if np.iscomplexobj(x):
        raise DataFormatError(f"{source}: trigger-align expects phase-channel records; run iq-calibrate first")
    trig = config.trigger
    result = align_records(records_from_array(x, rate), trig)
    if not result.records:
        raise DomainError(f"No record in {source} has a detectable onset")

    classes = [str(r.tags["class"]) for r in result.records]
    counts = {c: classes.count(c) for c in ("good", "empty", "multiple", "bad")}
    aligned = np.vstack([r.samples for r in result.records])
    header = {
        **meta,
        "kind": "aligned_phase",
        "target_index": trig.target_index,
        "classes": classes,
        "shifts": result.shifts.tolist(),
        "source_index": [int(r.tags["index"]) for r in result.records],
    }
    summary = {
        "n_input": int(x.shape[0]),
        "n_aligned": len(result.records),
        "n_skipped": len(result.skipped),
        "aligned_fraction": result.aligned_fraction,
        "classes": counts,
        "onset_spread": float(np.std(result.onsets)),
    }
    with OutputSet(outdir) as out:
        out.records(ALIGNED_RECORDS, aligned, rate, header)
        out.json("alignment.json", {**summary, "skipped": result.skipped})
    return summary


# ----------------------------
# offilter / spectrum-fit
# ----------------------------

def offilter(config: PipelineConfig, aligned: Path, noise: Path, outdir: Path) -> dict:
    """Template from aligned records, PSD from noise records, OFF per event."""
    x, rate, meta = read_records(Path(aligned))
    n, _, _ = read_records(Path(noise))
    if np.iscomplexobj(x) or np.iscomplexobj(n):
        raise DataFormatError("offilter expects phase-channel records")
    if x.shape[1] != n.shape[1]:
        raise DataFormatError(f"Record length {x.shape[1]} differs from noise record length {n.shape[1]}")

    classes = meta.get("classes")
    if config.optfilter.good_only and classes is not None:
        keep = np.asarray([c == "good" for c in classes], dtype=bool)
        if keep.size != x.shape[0]:
            raise DataFormatError(f"{aligned}: classes do not match the number of records")
        x = x[keep]
    pretrigger = config.optfilter.pretrigger or int(meta.get("target_index", config.pulse.target_index))

    template = average_pulse(x, pretrigger=pretrigger)
    psd = noise_psd(n)
    model = build_filter(template, psd)
    off = np.atleast_1d(estimate_amplitude(x, model))
    res = resolution(n, model)
    summary = {
        "n_events": int(off.size),
        "n_noise": int(n.shape[0]),
        "resolution": res,
        "expected_resolution": expected_resolution(model),
        "normalization": model.normalization,
        "reference_index": model.reference_index,
    }
    freqs = rfftfreq(template.size, d=1.0 / rate)
    with OutputSet(outdir) as out:
        out.json("of_model.json", model.to_dict())
        out.off_values(OFF_VALUES, off)
        out.csv("template.csv", ("index", "template"), (np.arange(template.size), template))
        out.csv("noise_psd.csv", ("freq_hz", "psd"), (freqs, psd))
        out.json(OFFILTER_SUMMARY, summary)
    return summary


def _resolve_sigma(source: Path, sigma: Optional[float]) -> float:
    if sigma is not None:
        if not sigma > 0:
            raise ConfigError(f"--sigma must be > 0, got {sigma}")
        return float(sigma)
    summary = Path(source).parent / OFFILTER_SUMMARY
    if not summary.exists():
        raise ConfigError(
            f"No --sigma given and no {OFFILTER_SUMMARY} next to {source}.\n"
            f"Pass the optimum-filter resolution with --sigma."
        )
    return float(read_json(summary)["resolution"])


def spectrum_fit(config: PipelineConfig, source: Path, outdir: Path, sigma: Optional[float] = None) -> dict:
    """Histogram the OFF values and fit the photon-number spectrum with sigma held."""
    sp = config.spectrum
    off = read_off_values(Path(source))
    s = _resolve_sigma(source, sigma)
    hist = make_histogram(off, bins=sp.bins)
    init = initial_spectrum_model(off, s, e_gamma=sp.e_gamma, shift=sp.shift, n_min=sp.n_min)
    model, chi2_dof = fit_spectrum(hist, init, fixed=sp.fixed)
    n_modes = count_modes(hist)

    result = {
        "mu": model.mu,
        "mu_err": model.uncertainties.get("mu", float("nan")),
        "a": model.amplitude,
        "shift": model.shift,
        "e_gamma": model.e_gamma,
        "sigma_fixed": s,
        "chi2_dof": chi2_dof,
        "n_bins": len(hist),
        "n_events": hist.total,
        "n_modes": n_modes,
        "fixed": sorted(set(sp.fixed) | {"sigma"}),
        "n_min": model.n_min,
        "errors": dict(sorted(model.uncertainties.items())),
        "energy_scale_ev": energy_scale_ev(model, sp.photon_ev),
        "photon_ev": sp.photon_ev,
    }
    with OutputSet(outdir) as out:
        out.json("spectrum_fit.json", result)
        out.csv("spectrum_fit.csv", ("bin_center", "counts", "model"),
                (hist.centers, hist.counts, binned_model(hist.bin_edges, model)))
    return {k: result[k] for k in ("mu", "mu_err", "e_gamma", "shift", "chi2_dof", "n_bins")}


# ----------------------------
# run
# ----------------------------

def run(config: PipelineConfig, outdir: Path) -> dict:
    """simulate, then every analysis stage in order, then the tolerance report."""
    outdir = Path(outdir)
    stages: Dict[str, dict] = {}
    stages["simulate"] = simulate(config, outdir)
    stages["resonance_fit"] = resonance_fit(config, outdir / SWEEP, outdir)
    stages["resonance_fit_temperatures"] = resonance_fit(config, outdir / TEMPERATURE_DIR, outdir, SWEEP_SERIES)
    stages["gap_fit"] = gap_fit(config, [outdir / QI_SERIES], outdir)
    stages["iq_calibrate"] = iq_calibrate(config, outdir / CALIBRATION_DIR, outdir,
                                          records=outdir / IQ_RECORDS, noise=outdir / IQ_NOISE)
    stages["trigger_align"] = trigger_align(config, outdir / PHASE_RECORDS, outdir)
    stages["offilter"] = offilter(config, outdir / ALIGNED_RECORDS, outdir / PHASE_NOISE, outdir)
    stages["spectrum_fit"] = spectrum_fit(config, outdir / OFF_VALUES, outdir)

    truth_doc = read_json(outdir / TRUTH)
    sc = config.scenario
    truth = {
        "q_total": sc.resonance.q_total,
        "delta_ev": sc.gap.delta,
        "resolution": float(truth_doc["resolution"]),
        "mu": sc.photons.mu,
    }
    checks = build_checks(
        truth,
        q_total=stages["resonance_fit"]["q"],
        delta=stages["gap_fit"]["delta_ev"],
        resolution=stages["offilter"]["resolution"],
        mu=stages["spectrum_fit"]["mu"],
        mu_err=stages["spectrum_fit"]["mu_err"],
    )
    temps = read_json(outdir / "resonance_fits.json")
    info = {
        "gap_from_temperature_sweeps": _gap_from_sweeps(config, outdir, temps.get("resonator_id", "r0")),
    }
    report = evaluate(checks, stages, info)
    files = sorted(p.relative_to(outdir).as_posix() for p in outdir.rglob("*") if p.is_file())
    files = sorted(set(files) | {"pipeline_report.json", "pipeline_report.md"})
    with OutputSet(outdir) as out:
        out.json("pipeline_report.json", report)
        out.text("pipeline_report.md", render_markdown(report, files))
    return report


def _gap_from_sweeps(config: PipelineConfig, outdir: Path, resonator_id: str) -> Dict[str, float]:
    """Gap fit of the Qi values recovered from the temperature-scan sweeps (reported, not checked)."""
    series = read_qi_series(outdir / SWEEP_SERIES)
    g = config.gap
    r = fit_gap(series, g.alpha, g.use_kondo, g)
    return {"resonator_id": resonator_id, "delta_ev": r.delta, "delta_err": r.uncertainties.get("delta", float("nan")),
            "tc_k": r.tc}
