"""
Complex least-squares fit of resonance sweeps.

Residuals are the stacked real and imaginary parts of model - data. The parameter
vector is

    [u, ln Q, ln Qc, phi0, Re c0, Im c0, Re c1, Im c1, ...]

with f0 = f0_seed * (1 + u), so positivity of Q and Qc holds at every iterate and
all parameters are O(1) for the finite-difference Jacobian.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
from scipy.optimize import least_squares

from mkidlab.errors import (
    ConfigError,
    FitError,
    IllConditionedError,
    NoDipFoundError,
    NonConvergenceError,
)
from mkidlab.resonance.model import ComplexSweep, ResonanceParams, s21_model, wrap_phase

logger = logging.getLogger(__name__)

# fraction of points at each sweep edge treated as off-resonance
EDGE_FRACTION = 0.1

# phi0 seeds tried before the local fit
PHI0_SEEDS = np.linspace(-np.pi, np.pi, 8, endpoint=False)


@dataclass(frozen=True)
class ResonanceFitConfig:
    background_degree: int = 1
    max_iterations: int = 200
    tolerance: float = 1e-10
    diff_step: float = 1e-7
    dip_fraction: float = 0.95
    strict: bool = False

    def __post_init__(self) -> None:
        if self.background_degree not in (0, 1, 2):
            raise ConfigError(f"background_degree must be 0, 1 or 2, got {self.background_degree}")
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be >= 1")
        if not 0.0 < self.dip_fraction < 1.0:
            raise ConfigError("dip_fraction must lie in (0, 1)")


def _edge_mask(n: int) -> np.ndarray:
    k = max(2, int(round(EDGE_FRACTION * n)))
    mask = np.zeros(n, dtype=bool)
    mask[:k] = True
    mask[-k:] = True
    return mask


def _crossing(freqs: np.ndarray, p: np.ndarray, level: float, start: int, step: int) -> float:
    """Walk from start until p rises back above level; interpolate the crossing."""
    i = start
    while 0 <= i + step < p.size and p[i + step] < level:
        i += step
    j = i + step
    if not 0 <= j < p.size:
        return float(freqs[i])
    # p[i] < level <= p[j]
    w = (level - p[i]) / (p[j] - p[i])
    return float(freqs[i] + w * (freqs[j] - freqs[i]))


def estimate_initial(sweep: ComplexSweep, background_degree: int = 1, dip_fraction: float = 0.95) -> ResonanceParams:
    """
    Seed values for the resonance fit from the |S21| dip.

    f0 is the frequency of minimum |S21|, Q comes from the FWHM of the dip in |S21|^2,
    Qc from the dip depth, phi0 = 0, and the background is the median off-resonance
    complex value.

    Raises:
        NoDipFoundError: if min |S21| >= dip_fraction * median |S21|
    """
    mag = np.abs(sweep.s21)
    i_min = int(np.argmin(mag))
    if mag[i_min] >= dip_fraction * np.median(mag):
        raise NoDipFoundError(
            f"No resonance dip: min|S21|={mag[i_min]:.4g} is not below "
            f"{dip_fraction} x median|S21|={np.median(mag):.4g}.\n"
            f"Check the sweep window covers the resonance."
        )

    edges = _edge_mask(len(sweep))
    baseline = float(np.median(mag[edges]))
    depth = 1.0 - mag[i_min] / baseline
    if depth <= 0:
        raise NoDipFoundError("Dip minimum is not below the off-resonance baseline")
    depth = min(depth, 0.999)

    f0 = float(sweep.freqs[i_min])
    p = mag**2
    level = 0.5 * (baseline**2 + mag[i_min] ** 2)
    f_lo = _crossing(sweep.freqs, p, level, i_min, -1)
    f_hi = _crossing(sweep.freqs, p, level, i_min, +1)
    fwhm = f_hi - f_lo
    if fwhm <= 0:
        fwhm = float(np.min(np.diff(sweep.freqs)))
    q = f0 / fwhm
    qc = q / depth

    c0 = complex(np.median(sweep.s21[edges].real), np.median(sweep.s21[edges].imag))
    background = (c0,) + (0j,) * background_degree
    return ResonanceParams(f0=f0, q_total=q, q_c=qc, phi0=0.0, background=background)


# ----------------------------
# Parameter packing
# ----------------------------

def _pack(params: ResonanceParams, f_seed: float) -> np.ndarray:
    head = [params.f0 / f_seed - 1.0, np.log(params.q_total), np.log(params.q_c), params.phi0]
    tail: List[float] = []
    for c in params.background:
        tail.extend([c.real, c.imag])
    return np.array(head + tail, dtype=float)


def _unpack(p: np.ndarray, f_seed: float) -> ResonanceParams:
    bg = tuple(complex(p[k], p[k + 1]) for k in range(4, p.size, 2))
    return ResonanceParams(
        f0=f_seed * (1.0 + p[0]),
        q_total=float(np.exp(p[1])),
        q_c=float(np.exp(p[2])),
        phi0=float(p[3]),
        background=bg,
    )


def _residuals(p: np.ndarray, sweep: ComplexSweep, f_seed: float) -> np.ndarray:
    bg = [complex(p[k], p[k + 1]) for k in range(4, p.size, 2)]
    f0 = f_seed * (1.0 + p[0])
    q, qc, phi = np.exp(p[1]), np.exp(p[2]), p[3]
    x = (sweep.freqs - f0) / f0
    model = np.polynomial.polynomial.polyval(x, np.asarray(bg)) * (
        1.0 - (q / qc) * np.exp(1j * phi) / (1.0 + 2j * q * x)
    )
    d = model - sweep.s21
    return np.concatenate([d.real, d.imag])


def _cost(p: np.ndarray, sweep: ComplexSweep, f_seed: float) -> float:
    r = _residuals(p, sweep, f_seed)
    return 0.5 * float(r @ r)


def _uncertainties(jac: np.ndarray, cost: float, n_res: int, fit: ResonanceParams, f_seed: float) -> Tuple[dict, float]:
    dof = max(1, n_res - jac.shape[1])
    s2 = 2.0 * cost / dof
    cov = np.linalg.inv(jac.T @ jac) * s2
    var = np.diag(cov)
    q, qc = fit.q_total, fit.q_c

    # 1/Qi = 1/Q - 1/Qc with d(1/Q) = -dlnQ / Q
    grad = np.array([-1.0 / q, 1.0 / qc])
    var_inv_qi = float(grad @ cov[1:3, 1:3] @ grad)
    qi = fit.q_i

    errors = {
        "f0": f_seed * float(np.sqrt(var[0])),
        "q": q * float(np.sqrt(var[1])),
        "qc": qc * float(np.sqrt(var[2])),
        "phi0": float(np.sqrt(var[3])),
        "inv_qi": float(np.sqrt(max(var_inv_qi, 0.0))),
        "qi": qi**2 * float(np.sqrt(max(var_inv_qi, 0.0))),
    }
    return errors, s2


def _check_rank(jac: np.ndarray) -> None:
    norms = np.linalg.norm(jac, axis=0)
    if np.any(norms == 0):
        raise IllConditionedError("Jacobian has an all-zero column: a parameter does not affect the model")
    sv = np.linalg.svd(jac / norms, compute_uv=False)
    if sv[-1] < 1e-10 * sv[0]:
        raise IllConditionedError(
            f"Jacobian is rank-deficient at the optimum (condition {sv[0] / sv[-1]:.3g}).\n"
            f"Reduce the background degree or widen the sweep."
        )


def fit_resonance(sweep: ComplexSweep, config: ResonanceFitConfig | None = None) -> ResonanceParams:
    """
    Fit the non-ideal resonator model to a sweep by Levenberg-Marquardt.

    Returns ResonanceParams with uncertainties from (J^T J)^-1 s^2, the final cost
    (half the sum of squared residuals) and a converged flag. Non-converged fits
    return the best point with ``converged=False`` unless ``config.strict``.

    Raises:
        NoDipFoundError: sweep has no resonance dip
        IllConditionedError: Jacobian rank-deficient at the optimum
        NonConvergenceError: iteration limit reached in strict mode
        FitError: optimum is unphysical (Qc <= Q or f0 outside the sweep)
    """
    config = config or ResonanceFitConfig()
    init = estimate_initial(sweep, config.background_degree, config.dip_fraction)
    f_seed = init.f0

    p_init = _pack(init, f_seed)
    init_cost = _cost(p_init, sweep, f_seed)

    # the dip location does not pin phi0; take the best of a coarse grid
    best_p, best_cost = p_init, init_cost
    for phi in PHI0_SEEDS:
        trial = p_init.copy()
        trial[3] = phi
        c = _cost(trial, sweep, f_seed)
        if c < best_cost:
            best_p, best_cost = trial, c
    logger.debug("resonance seed: f0=%.9g Q=%.4g Qc=%.4g phi0=%.3f cost=%.4g",
                 init.f0, init.q_total, init.q_c, best_p[3], best_cost)

    n_par = p_init.size
    result = least_squares(
        _residuals,
        best_p,
        args=(sweep, f_seed),
        method="lm",
        ftol=config.tolerance,
        xtol=config.tolerance,
        gtol=1e-15,
        max_nfev=config.max_iterations * (n_par + 1),
        diff_step=config.diff_step,
        x_scale="jac",
    )

    p = result.x.copy()
    p[3] = wrap_phase(p[3])
    fit = _unpack(p, f_seed)
    converged = bool(result.success) and result.status > 0

    if fit.q_total >= fit.q_c:
        raise FitError(f"Unphysical optimum: Q={fit.q_total:.4g} >= Qc={fit.q_c:.4g} (Qi would be negative)")
    lo, hi = sweep.span
    if not lo <= fit.f0 <= hi:
        raise FitError(f"Fitted f0={fit.f0:.9g} Hz lies outside the sweep [{lo:.9g}, {hi:.9g}]")

    _check_rank(result.jac)
    n_res = 2 * len(sweep)
    errors, chi2_dof = _uncertainties(result.jac, result.cost, n_res, fit, f_seed)

    fit = fit.with_updates(
        uncertainties=errors,
        converged=converged,
        cost=float(result.cost),
        chi2_dof=float(chi2_dof),
    )

    if not converged:
        msg = f"Resonance fit stopped after {result.nfev} evaluations: {result.message}"
        if config.strict:
            raise NonConvergenceError(msg, best=fit)
        logger.warning("%s (returning best-so-far)", msg)
    else:
        logger.debug("resonance fit converged in %d evaluations, cost=%.4g", result.nfev, result.cost)

    return fit
