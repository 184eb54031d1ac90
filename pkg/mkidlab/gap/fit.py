"""
Weighted least-squares extraction of the superconducting gap from 1/Qi(T).

The model is linear in 1/Qi(0) and b once Delta is fixed, so the fit is seeded by a
log-spaced scan over Delta with the linear parameters solved exactly at each grid
point, then refined by Levenberg-Marquardt over (ln Delta, 1/Qi(0), b).

b and T_K enter only through b*ln(T_K), which 1/Qi(0) absorbs; T_K is therefore held
at a configured reference temperature and reported as fixed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.optimize import least_squares

from mkidlab.errors import ConfigError, DegenerateDataError, DomainError, NonConvergenceError
from mkidlab.gap.model import QiSeries, _loss_ratio, weighted_mean
from mkidlab.physics.conductivity import delta_to_tc
from mkidlab.resonance.model import ResonanceParams

logger = logging.getLogger(__name__)

TK_BOUNDS = (0.01, 10.0)

# Delta scan for seeding, eV
DELTA_SCAN = np.logspace(np.log10(5e-5), np.log10(2e-3), 80)

# an e-fold change of Delta must move the weighted residuals by at least this much
MIN_DELTA_SENSITIVITY = 1.0


@dataclass(frozen=True)
class GapFitConfig:
    alpha: float = 0.3
    use_kondo: bool = True
    kondo_tk: float = 1.0
    max_iterations: int = 200
    tolerance: float = 1e-12

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in (0, 1], got {self.alpha}")
        lo, hi = TK_BOUNDS
        if not lo <= self.kondo_tk <= hi:
            raise ConfigError(f"kondo_tk must lie in [{lo}, {hi}] K, got {self.kondo_tk}")


@dataclass(frozen=True)
class GapFitResult:
    delta: float
    inv_qi0: float
    kondo_b: float
    kondo_tk: float
    alpha: float
    tc: float
    uncertainties: Dict[str, float] = field(default_factory=dict)
    chi2_dof: float = float("nan")
    converged: bool = True
    use_kondo: bool = True
    resonator_id: str = "r0"

    def to_dict(self) -> dict:
        return {
            "resonator_id": self.resonator_id,
            "delta_ev": self.delta,
            "tc_k": self.tc,
            "inv_qi0": self.inv_qi0,
            "kondo_b": self.kondo_b,
            "kondo_tk": self.kondo_tk,
            "kondo_tk_fixed": True,
            "alpha": self.alpha,
            "use_kondo": self.use_kondo,
            "errors": dict(sorted(self.uncertainties.items())),
            "chi2_dof": self.chi2_dof,
            "converged": self.converged,
        }


@dataclass(frozen=True)
class CombinedGap:
    delta: float
    delta_err: float
    tc: float
    tc_err: float
    resonator_ids: List[str]

    def to_dict(self) -> dict:
        return {
            "delta_ev": self.delta,
            "delta_err": self.delta_err,
            "tc_k": self.tc,
            "tc_err": self.tc_err,
            "resonator_ids": list(self.resonator_ids),
        }


def _design(series: QiSeries, delta: float, alpha: float, use_kondo: bool, tk: float):
    fixed = alpha * _loss_ratio(series.temperatures, delta, series.omega)
    cols = [np.ones_like(series.temperatures)]
    if use_kondo:
        cols.append(-np.log(series.temperatures / tk))
    return fixed, np.column_stack(cols)


def _seed(series: QiSeries, config: GapFitConfig, use_kondo: bool) -> np.ndarray:
    w = 1.0 / series.inv_qi_err
    best, best_cost = None, np.inf
    for delta in DELTA_SCAN:
        fixed, X = _design(series, delta, config.alpha, use_kondo, config.kondo_tk)
        if not np.all(np.isfinite(fixed)):
            continue
        coef, *_ = np.linalg.lstsq(X * w[:, None], (series.inv_qi - fixed) * w, rcond=None)
        r = (fixed + X @ coef - series.inv_qi) * w
        cost = float(r @ r)
        if cost < best_cost:
            best, best_cost = np.concatenate([[np.log(delta)], coef]), cost
    if best is None:
        raise DegenerateDataError("Gap model is non-finite over the whole Delta scan")
    return best


def fit_gap(series: QiSeries, alpha: float, use_kondo: bool = True, config: Optional[GapFitConfig] = None) -> GapFitResult:
    """
    Fit Delta, 1/Qi(0) and (optionally) the Kondo slope b to a QiSeries.

    Args:
        series: measured 1/Qi(T) with one-sigma errors
        alpha: kinetic inductance fraction, held fixed
        use_kondo: include the -b ln(T/T_K) term
        config: tolerances and the Kondo reference temperature

    Raises:
        DomainError: alpha outside (0, 1]
        DegenerateDataError: data do not constrain Delta (flat low-T regime)
        NonConvergenceError: iteration limit reached
    """
    if not 0.0 < alpha <= 1.0:
        raise DomainError(f"fit_gap: alpha must lie in (0, 1], got {alpha!r}")
    base = config or GapFitConfig()
    config = GapFitConfig(
        alpha=alpha,
        use_kondo=use_kondo,
        kondo_tk=base.kondo_tk,
        max_iterations=base.max_iterations,
        tolerance=base.tolerance,
    )

    scale = float(np.median(series.inv_qi))
    w = 1.0 / series.inv_qi_err
    tk = config.kondo_tk

    p0 = _seed(series, config, use_kondo)
    p0[1:] /= scale

    def residuals(p: np.ndarray) -> np.ndarray:
        fixed, X = _design(series, float(np.exp(p[0])), alpha, use_kondo, tk)
        return (fixed + X @ (p[1:] * scale) - series.inv_qi) * w

    result = least_squares(
        residuals,
        p0,
        method="lm",
        ftol=config.tolerance,
        xtol=config.tolerance,
        gtol=1e-15,
        max_nfev=config.max_iterations * (p0.size + 1),
        x_scale="jac",
    )
    if not result.success:
        raise NonConvergenceError(f"Gap fit did not converge: {result.message}", best=result.x)

    J = result.jac
    sensitivity = float(np.linalg.norm(J[:, 0]))
    if sensitivity < MIN_DELTA_SENSITIVITY:
        raise DegenerateDataError(
            f"Data do not constrain the gap: an e-fold change of Delta moves the fit by "
            f"{sensitivity:.3g} sigma.\n"
            f"All temperatures (max {series.temperatures[-1] * 1e3:.0f} mK) sit in the flat "
            f"low-temperature regime; add points closer to Tc/5."
        )

    p = result.x
    delta = float(np.exp(p[0]))
    inv_qi0 = float(p[1] * scale)
    b = float(p[2] * scale) if use_kondo else 0.0

    cov = np.linalg.pinv(J.T @ J)
    sd = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    errors = {
        "delta": delta * float(sd[0]),
        "inv_qi0": scale * float(sd[1]),
    }
    if use_kondo:
        errors["kondo_b"] = scale * float(sd[2])
    errors["tc"] = delta_to_tc(delta) * float(sd[0])

    dof = max(1, len(series) - p.size)
    chi2_dof = 2.0 * float(result.cost) / dof
    logger.debug("gap fit %s: Delta=%.5g eV chi2/dof=%.3g (%d evaluations)",
                 series.resonator_id, delta, chi2_dof, result.nfev)

    return GapFitResult(
        delta=delta,
        inv_qi0=inv_qi0,
        kondo_b=b,
        kondo_tk=tk,
        alpha=alpha,
        tc=delta_to_tc(delta),
        uncertainties=errors,
        chi2_dof=chi2_dof,
        converged=True,
        use_kondo=use_kondo,
        resonator_id=series.resonator_id,
    )


def combine_gap_results(results: Sequence[GapFitResult]) -> CombinedGap:
    """Inverse-variance weighted mean of Delta over resonators, with the derived Tc."""
    if not results:
        raise DomainError("combine_gap_results: no results to combine")
    delta, err = weighted_mean([r.delta for r in results], [r.uncertainties["delta"] for r in results])
    return CombinedGap(
        delta=delta,
        delta_err=err,
        tc=delta_to_tc(delta),
        tc_err=delta_to_tc(err),
        resonator_ids=[r.resonator_id for r in results],
    )


def qi_series_from_fits(
    fits: Sequence[ResonanceParams],
    temperatures: Sequence[float],
    resonator_id: str = "r0",
) -> QiSeries:
    """
    Assemble 1/Qi(T) from per-temperature resonance fits.

    The readout frequency is the f0 fitted at the lowest temperature.
    """
    if len(fits) != len(temperatures):
        raise DomainError("qi_series_from_fits: one fit per temperature required")
    order = np.argsort(np.asarray(temperatures, dtype=float))
    temps = np.asarray(temperatures, dtype=float)[order]
    ordered = [fits[i] for i in order]

    inv_qi = np.array([1.0 / f.q_i for f in ordered])
    errs = np.array([f.uncertainties.get("inv_qi", 0.0) for f in ordered])
    if np.any(errs <= 0):
        raise DomainError("qi_series_from_fits: every fit needs a positive 'inv_qi' uncertainty")

    return QiSeries(
        temperatures=temps,
        inv_qi=inv_qi,
        inv_qi_err=errs,
        f0=ordered[0].f0,
        resonator_id=resonator_id,
    )
