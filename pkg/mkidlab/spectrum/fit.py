"""
Least-squares fit of the photon-number spectrum to an OFF histogram.

The cost is chi^2 over bins with Poisson errors (floor 1), the model being the
exact bin integral of the Poisson-Gaussian mixture. sigma is always held at the
optimum-filter resolution; any of the other parameters may be fixed too.
"""

from __future__ import annotations

import logging
import math
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np
from iminuit import Minuit
from iminuit.cost import LeastSquares

from mkidlab.errors import (
    ConfigError,
    DegenerateDataError,
    DomainError,
    EmptyHistogramError,
    NonConvergenceError,
)
from mkidlab.spectrum.model import (
    MIN_AMPLITUDE,
    MIN_MU,
    Histogram,
    SpectrumModel,
    bin_counts,
    default_n_max,
    required_n_max,
)

logger = logging.getLogger(__name__)

FREE_PARAMETERS = ("mu", "amplitude", "shift", "e_gamma")
MAX_REFITS = 3
# E_gamma multiples tried when E_gamma is free; mean and excess variance are kept
E_GAMMA_STARTS = (1.0, 0.7, 1.4, 0.5, 2.0)

# strictly inside the open bounds the model type enforces
_LIMITS = {
    "mu": (MIN_MU, None),
    "amplitude": (MIN_AMPLITUDE * (1.0 + 1e-6), None),
    "shift": (0.0, 1.0),
    "e_gamma": (1e-12, None),
}


def initial_spectrum_model(
    off: np.ndarray,
    sigma: float,
    e_gamma: Optional[float] = None,
    shift: Optional[float] = None,
    n_min: int = 0,
) -> SpectrumModel:
    """
    Moment-based starting point.

    mean = shift + mu E and var = sigma^2 + mu E^2 hold for the mixture; the third
    central moment mu E^3 supplies E when it is not given.
    """
    x = np.asarray(off, dtype=float)
    x = x[np.isfinite(x)]
    if x.size == 0:
        raise EmptyHistogramError("No OFF values to seed the spectrum fit")
    mean = float(np.mean(x))
    excess = max(float(np.var(x)) - sigma**2, 1e-3 * sigma**2)

    if e_gamma is None:
        k3 = float(np.mean((x - mean) ** 3))
        e_gamma = k3 / excess if k3 > 0 else math.sqrt(excess)
        # caps the seed at mu = 1000
        e_gamma = max(e_gamma, math.sqrt(excess / 1000.0))
    mu = excess / e_gamma**2
    if shift is None:
        shift = mean - mu * e_gamma
    if not 0.0 <= shift <= 1.0:
        shift = float(np.clip(shift, 0.0, 1.0))
        mu = max(mean - shift, 0.0) / e_gamma
    mu = max(mu, 0.1)
    return SpectrumModel(mu=mu, sigma=sigma, amplitude=float(x.size), shift=shift, e_gamma=e_gamma, n_min=n_min)


def _starting_points(init: SpectrumModel, fixed: Tuple[str, ...]) -> List[SpectrumModel]:
    """
    init, plus copies with E_gamma scaled by each factor in E_GAMMA_STARTS.

    mu E^2 and shift + mu E are held, so every start has the data's mean and
    variance. A single start is used when any of mu, shift or E_gamma is fixed.
    """
    if {"e_gamma", "mu", "shift"} & set(fixed):
        return [init]
    starts = [init]
    for f in E_GAMMA_STARTS[1:]:
        e_gamma = init.e_gamma * f
        mu = max(init.mu / f**2, 0.1)
        shift = float(np.clip(init.shift + init.mu * init.e_gamma - mu * e_gamma, 0.0, 1.0))
        starts.append(init.with_updates(mu=mu, e_gamma=e_gamma, shift=shift,
                                        n_max=max(init.n_max, default_n_max(mu))))
    return starts


def _minimize(
    hist: Histogram,
    errors: np.ndarray,
    init: SpectrumModel,
    fixed: Tuple[str, ...],
    n_max: int,
) -> Minuit:
    edges = hist.bin_edges
    n_min = init.n_min

    def expected(x, mu, amplitude, shift, e_gamma, sigma):
        # LeastSquares hands the bin indices back as floats
        counts = bin_counts(edges, mu, amplitude, shift, e_gamma, sigma, n_max, n_min)
        return counts[np.asarray(x, dtype=np.intp)]

    cost = LeastSquares(np.arange(len(hist)), hist.counts.astype(float), errors, expected)
    m = Minuit(
        cost,
        mu=init.mu,
        amplitude=init.amplitude,
        shift=init.shift,
        e_gamma=init.e_gamma,
        sigma=init.sigma,
    )
    for name, lim in _LIMITS.items():
        m.limits[name] = (lim[0], np.inf if lim[1] is None else lim[1])
    m.fixed["sigma"] = True
    for name in fixed:
        m.fixed[name] = True
    m.migrad()
    if m.valid:
        m.hesse()
    return m


def _best_of(
    hist: Histogram,
    errors: np.ndarray,
    starts: List[SpectrumModel],
    fixed: Tuple[str, ...],
    n_max: int,
) -> Tuple[Minuit, int]:
    """Lowest-cost valid minimum over the starting points, with the N_max it used."""
    best: Optional[Tuple[Minuit, int]] = None
    last: Optional[Tuple[Minuit, int]] = None
    for start in starts:
        n = max(n_max, start.n_max)
        m = _minimize(hist, errors, start, fixed, n)
        last = (m, n)
        if m.valid and (best is None or m.fval < best[0].fval):
            best = (m, n)
    if len(starts) > 1 and best is not None:
        logger.debug("spectrum fit: best of %d starts has cost %.6g", len(starts), best[0].fval)
    return best if best is not None else last


def _model_from(m: Minuit, init: SpectrumModel, n_max: Optional[int]) -> SpectrumModel:
    v = m.values
    errors: Dict[str, float] = {}
    if m.valid:
        errors = {name: float(m.errors[name]) for name in FREE_PARAMETERS if not m.fixed[name]}
    mu = max(float(v["mu"]), MIN_MU)
    return SpectrumModel(
        mu=mu,
        sigma=init.sigma,
        amplitude=max(float(v["amplitude"]), _LIMITS["amplitude"][0]),
        shift=float(np.clip(v["shift"], 0.0, 1.0)),
        e_gamma=float(v["e_gamma"]),
        n_max=n_max if n_max is not None and n_max >= required_n_max(mu) else None,
        uncertainties=errors,
        n_min=init.n_min,
    )


def fit_spectrum(
    hist: Histogram,
    init: SpectrumModel,
    fixed: Iterable[str] = (),
    errors: Optional[np.ndarray] = None,
) -> Tuple[SpectrumModel, float]:
    """
    Fit mu, A, shift and E_gamma (minus any in ``fixed``) with sigma held.

    N_max starts at max(30, ceil(mu + 10 sqrt(mu) + 10)) for the initial mu and
    the fit is repeated with a larger N_max when the fitted mu needs it. When mu,
    shift and E_gamma are all free the fit starts from several points along the
    E_gamma direction and keeps the lowest chi^2. ``errors`` replaces the
    histogram's Poisson errors bin by bin. The zero-photon term follows
    ``init.n_min``.

    Returns:
        (model with 1-sigma uncertainties, chi^2 per degree of freedom)

    Raises:
        EmptyHistogramError: no counts
        DegenerateDataError: fewer bins than free parameters plus one
        NonConvergenceError: migrad did not converge; ``best`` holds the last point
    """
    fixed = tuple(fixed)
    unknown = set(fixed) - set(FREE_PARAMETERS) - {"sigma"}
    if unknown:
        raise ConfigError(f"spectrum.fixed names unknown parameters: {sorted(unknown)}")
    if hist.total == 0:
        raise EmptyHistogramError("Cannot fit an empty histogram")
    if errors is None:
        errors = hist.errors
    else:
        errors = np.asarray(errors, dtype=float)
        if errors.shape != hist.counts.shape or not np.all(errors > 0):
            raise DomainError("spectrum fit errors must be positive, one per bin")
    n_free = sum(1 for name in FREE_PARAMETERS if name not in fixed)
    dof = len(hist) - n_free
    if dof < 1:
        raise DegenerateDataError(f"Histogram has {len(hist)} bins for {n_free} free parameters")

    n_max = init.n_max
    starts = _starting_points(init, fixed)
    for _ in range(MAX_REFITS):
        m, n_max = _best_of(hist, errors, starts, fixed, n_max)
        if not m.valid:
            raise NonConvergenceError(
                f"Spectrum fit did not converge (edm={m.fmin.edm:.3g}).\n"
                f"Check the initial guess or fix e_gamma.",
                best=_model_from(m, init, None),
            )
        mu = float(m.values["mu"])
        if n_max >= required_n_max(mu):
            break
        logger.info("spectrum fit: mu=%.3g needs more Poisson terms than %d, refitting", mu, n_max)
        n_max = default_n_max(mu)
        starts = [_model_from(m, init, n_max)]

    model = _model_from(m, init, n_max)
    chi2_dof = float(m.fval) / dof
    logger.info("spectrum fit: mu=%.4g e_gamma=%.4g shift=%.4g chi2/dof=%.3g",
                model.mu, model.e_gamma, model.shift, chi2_dof)
    return model, chi2_dof


def photon_count_estimate(model: SpectrumModel) -> Tuple[float, float]:
    """Mean photon number and its 1-sigma uncertainty (nan when mu was held fixed)."""
    return model.mu, model.uncertainties.get("mu", float("nan"))


def energy_scale_ev(model: SpectrumModel, photon_ev: float) -> float:
    """eV per unit OFF, from the single-photon peak spacing."""
    return photon_ev / model.e_gamma
