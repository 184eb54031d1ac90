"""
Tests for resonance models and the complex S21 fit
"""

from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mkidlab.errors import DataFormatError, DomainError, NoDipFoundError, NonConvergenceError
from mkidlab.resonance import (
    ComplexSweep,
    ResonanceFitConfig,
    ResonanceParams,
    circle_of,
    estimate_initial,
    fit_resonance,
    q_internal,
    s21_ideal,
    s21_model,
)
from mkidlab.synthgen import ResonanceTruth, ScenarioConfig, gen_sweep

F0 = 5380.6e6
Q, QC, PHI0 = 4050.0, 10600.0, 1.004


def _noiseless(**changes):
    return replace(ScenarioConfig(), resonance=replace(ResonanceTruth(), noise_fraction=0.0, **changes))


class TestModels:
    """Closed-form transmission and quality factors."""

    def test_ideal_on_resonance(self):
        """At f0 the ideal dip depth is Q/Qc."""
        assert s21_ideal(F0, F0, Q, QC) == pytest.approx(1.0 - Q / QC)

    def test_ideal_far_off_resonance(self):
        """Far from f0 the transmission returns to 1."""
        assert abs(s21_ideal(2.0 * F0, F0, Q, QC) - 1.0) < 1e-3

    def test_model_reduces_to_ideal(self):
        """phi0 = 0 with unit background is the ideal resonator."""
        f = np.linspace(F0 - 5e6, F0 + 5e6, 101)
        p = ResonanceParams(f0=F0, q_total=Q, q_c=QC)
        np.testing.assert_allclose(s21_model(f, p), s21_ideal(f, F0, Q, QC), rtol=0, atol=1e-15)

    def test_q_internal(self):
        """1/Q = 1/Qi + 1/Qc."""
        qi = q_internal(Q, QC)
        assert 1.0 / Q == pytest.approx(1.0 / qi + 1.0 / QC, rel=1e-14)

    def test_q_internal_requires_q_below_qc(self):
        """Q >= Qc would mean a negative Qi."""
        with pytest.raises(DomainError, match="q_total < q_c"):
            q_internal(QC, Q)

    def test_non_positive_q_rejected(self):
        """Quality factors must be positive."""
        with pytest.raises(DomainError):
            s21_ideal(F0, F0, -1.0, QC)

    @settings(max_examples=50, deadline=None)
    @given(
        detuning=st.floats(min_value=-1e-2, max_value=1e-2),
        phi0=st.floats(min_value=-1.5, max_value=1.5),
        ratio=st.floats(min_value=0.05, max_value=0.95),
    )
    def test_locus_is_circle(self, detuning, phi0, ratio):
        """Every point of the unit-background model lies on circle_of(params)."""
        p = ResonanceParams(f0=F0, q_total=ratio * QC, q_c=QC, phi0=phi0)
        center, radius = circle_of(p)
        z = s21_model(F0 * (1.0 + detuning), p)
        assert abs(abs(z - center) - radius) < 1e-12

    def test_params_round_trip(self):
        """to_dict/from_dict preserves the parameters."""
        p = ResonanceParams(f0=F0, q_total=Q, q_c=QC, phi0=PHI0, background=(1.0 + 0.1j, 0.2j),
                            uncertainties={"q": 3.0})
        back = ResonanceParams.from_dict(p.to_dict())
        assert back.f0 == p.f0 and back.q_total == p.q_total and back.background == p.background
        assert back.uncertainties == {"q": 3.0}

    def test_background_degree_limited(self):
        """Background polynomials above degree 2 are rejected."""
        with pytest.raises(DomainError, match="degree 0-2"):
            ResonanceParams(f0=F0, q_total=Q, q_c=QC, background=(1, 0, 0, 0))


class TestComplexSweep:
    """Sweep validation."""

    def test_decreasing_frequencies_rejected(self):
        """Frequencies must be strictly increasing."""
        f = np.linspace(1.0, 2.0, 10)[::-1]
        with pytest.raises(DataFormatError, match="increasing"):
            ComplexSweep(f, np.ones(10, dtype=complex))

    def test_too_short_rejected(self):
        """Fewer than 8 points cannot be fitted."""
        with pytest.raises(DataFormatError, match=">= 8"):
            ComplexSweep(np.arange(4.0), np.ones(4, dtype=complex))

    def test_non_finite_rejected(self):
        """NaN samples are a format error."""
        s = np.ones(10, dtype=complex)
        s[3] = np.nan
        with pytest.raises(DataFormatError, match="non-finite"):
            ComplexSweep(np.arange(10.0), s)


class TestFitResonance:
    """Levenberg-Marquardt fit of the non-ideal model."""

    def test_initial_estimate_near_truth(self):
        """The dip-based seed lands within a linewidth and a factor 1.5 in Q."""
        init = estimate_initial(gen_sweep(_noiseless()))
        assert abs(init.f0 - F0) < F0 / Q
        assert Q / 1.5 < init.q_total < 1.5 * Q

    def test_noiseless_recovery(self):
        """Without noise the fit recovers the truth to high precision."""
        fit = fit_resonance(gen_sweep(_noiseless()))
        assert fit.converged
        assert fit.f0 == pytest.approx(F0, rel=1e-9)
        assert fit.q_total == pytest.approx(Q, rel=1e-6)
        assert fit.q_c == pytest.approx(QC, rel=1e-6)
        assert fit.phi0 == pytest.approx(PHI0, abs=1e-6)

    def test_noisy_recovery_over_seeds(self):
        """With 1% noise, Q within 2%, f0 within 1e-5 and phi0 within 0.01 rad for >= 95% of seeds."""
        ok = 0
        seeds = range(20)
        for seed in seeds:
            fit = fit_resonance(gen_sweep(ScenarioConfig(seed=seed)))
            ok += (
                abs(fit.q_total / Q - 1.0) < 0.02
                and abs(fit.f0 / F0 - 1.0) < 1e-5
                and abs(fit.phi0 - PHI0) < 0.01
            )
        assert ok >= 19

    def test_uncertainties_reported(self):
        """Errors for f0, Q, Qc, phi0 and 1/Qi are positive and finite."""
        fit = fit_resonance(gen_sweep(ScenarioConfig(seed=3)))
        for key in ("f0", "q", "qc", "phi0", "inv_qi"):
            assert np.isfinite(fit.uncertainties[key]) and fit.uncertainties[key] > 0
        assert 0.5 < fit.chi2_dof / (0.01**2 / 2.0) < 2.0

    def test_flat_sweep_has_no_dip(self):
        """A sweep without a dip raises NoDipFoundError."""
        f = np.linspace(F0 - 1e7, F0 + 1e7, 201)
        with pytest.raises(NoDipFoundError, match="No resonance dip"):
            fit_resonance(ComplexSweep(f, np.ones_like(f, dtype=complex)))

    def test_iteration_limit_flags_non_convergence(self):
        """Hitting the evaluation limit returns the best point with converged=False."""
        sweep = gen_sweep(ScenarioConfig(seed=1))
        fit = fit_resonance(sweep, ResonanceFitConfig(max_iterations=1))
        assert not fit.converged

    def test_strict_mode_raises(self):
        """Strict mode turns non-convergence into an error carrying the best point."""
        sweep = gen_sweep(ScenarioConfig(seed=1))
        with pytest.raises(NonConvergenceError) as info:
            fit_resonance(sweep, ResonanceFitConfig(max_iterations=1, strict=True))
        assert isinstance(info.value.best, ResonanceParams)
