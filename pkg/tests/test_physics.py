"""
Tests for the physics core

Scaled Bessel functions against independent series, asymptotic and integral
oracles; Mattis-Bardeen limits; gap to critical temperature.
"""

import math
import warnings

import numpy as np
import pytest
from scipy import integrate

from mkidlab.errors import DomainError, RegimeWarning
from mkidlab.physics import PHYS, bessel_i0_scaled, bessel_k0_scaled, delta_to_tc, mattis_bardeen

EULER_GAMMA = 0.5772156649015329


def _asymptotic_coefficients(n_terms):
    out = []
    for k in range(n_terms):
        num = 1.0
        for j in range(1, k + 1):
            num *= (2 * j - 1) ** 2
        out.append(num / (math.factorial(k) * 8.0**k))
    return out


def i0_series_scaled(x):
    total, term, k = 1.0, 1.0, 0
    while True:
        k += 1
        term *= (x * x / 4.0) / (k * k)
        total += term
        if term < 1e-18 * total:
            return math.exp(-x) * total


def k0_series(x):
    y = x * x / 4.0
    i0, acc, term, harmonic, k = 1.0, 0.0, 1.0, 0.0, 0
    while True:
        k += 1
        term *= y / (k * k)
        harmonic += 1.0 / k
        i0 += term
        acc += term * harmonic
        if term < 1e-20:
            return -(math.log(x / 2.0) + EULER_GAMMA) * i0 + acc


def i0_asymptotic_scaled(x):
    a = _asymptotic_coefficients(6)
    return sum(c / x**k for k, c in enumerate(a)) / math.sqrt(2.0 * math.pi * x)


def k0_asymptotic_scaled(x):
    a = _asymptotic_coefficients(6)
    return math.sqrt(math.pi / (2.0 * x)) * sum((-1) ** k * c / x**k for k, c in enumerate(a))


def i0_integral_scaled(x):
    val, _ = integrate.quad(lambda t: math.exp(x * (math.cos(t) - 1.0)), 0.0, math.pi,
                            epsabs=0.0, epsrel=1e-12, limit=200)
    return val / math.pi


def k0_integral_scaled(x):
    # the integrand is below e^-800 beyond this point
    upper = math.acosh(1.0 + 800.0 / x)
    val, _ = integrate.quad(lambda t: math.exp(-x * (math.cosh(t) - 1.0)), 0.0, upper,
                            epsabs=0.0, epsrel=1e-12, limit=200)
    return val


class TestBesselI0:
    """e^-x I0(x) over twelve decades."""

    @pytest.mark.parametrize("x", [1e-6, 1e-3, 0.1, 1.0, 5.0, 20.0])
    def test_matches_power_series(self, x):
        """Small and moderate x agree with the power series to 1e-9."""
        assert bessel_i0_scaled(x) == pytest.approx(i0_series_scaled(x), rel=1e-9)

    @pytest.mark.parametrize("x", [30.0, 100.0, 500.0])
    def test_matches_integral_in_crossover(self, x):
        """Crossover region agrees with the integral representation to 1e-6."""
        assert bessel_i0_scaled(x) == pytest.approx(i0_integral_scaled(x), rel=1e-6)

    @pytest.mark.parametrize("x", [1e3, 1e4, 1e5, 1e6])
    def test_matches_asymptotic_series(self, x):
        """Large x agrees with the Hankel expansion to 1e-9."""
        assert bessel_i0_scaled(x) == pytest.approx(i0_asymptotic_scaled(x), rel=1e-9)

    def test_zero(self):
        """e^0 I0(0) = 1."""
        assert bessel_i0_scaled(0.0) == 1.0

    def test_array_input(self):
        """Arrays evaluate elementwise and stay arrays."""
        x = np.array([0.5, 2.0, 50.0])
        out = bessel_i0_scaled(x)
        assert isinstance(out, np.ndarray)
        assert out.shape == (3,)
        assert np.all(np.isfinite(out))

    def test_negative_rejected(self):
        """Negative arguments raise DomainError."""
        with pytest.raises(DomainError, match="x >= 0"):
            bessel_i0_scaled(-1.0)

    def test_non_finite_rejected(self):
        """NaN raises DomainError."""
        with pytest.raises(DomainError, match="finite"):
            bessel_i0_scaled(float("nan"))


class TestBesselK0:
    """e^x K0(x) over twelve decades."""

    @pytest.mark.parametrize("x", [1e-6, 1e-3, 0.1, 0.5, 1.0])
    def test_matches_power_series(self, x):
        """Small x agrees with the logarithmic series to 1e-9."""
        expected = math.exp(x) * k0_series(x)
        assert bessel_k0_scaled(x) == pytest.approx(expected, rel=1e-9)

    @pytest.mark.parametrize("x", [2.0, 10.0, 100.0, 500.0])
    def test_matches_integral_in_crossover(self, x):
        """Crossover region agrees with the integral representation to 1e-6."""
        assert bessel_k0_scaled(x) == pytest.approx(k0_integral_scaled(x), rel=1e-6)

    @pytest.mark.parametrize("x", [1e3, 1e4, 1e5, 1e6])
    def test_matches_asymptotic_series(self, x):
        """Large x agrees with the Hankel expansion to 1e-9."""
        assert bessel_k0_scaled(x) == pytest.approx(k0_asymptotic_scaled(x), rel=1e-9)

    def test_zero_rejected(self):
        """K0 diverges at 0, so x = 0 raises DomainError."""
        with pytest.raises(DomainError, match="x > 0"):
            bessel_k0_scaled(0.0)

    def test_scalar_returns_float(self):
        """Scalar input gives a Python float."""
        assert isinstance(bessel_k0_scaled(3.0), float)


class TestMattisBardeen:
    """Low-temperature conductivity ratios."""

    DELTA = 1.5e-4
    OMEGA = 2.0 * np.pi * 5.3806e9

    def test_sigma2_zero_temperature_limit(self):
        """Far below Tc sigma2/sigma_n approaches pi Delta / (hbar omega)."""
        r = mattis_bardeen(0.01, self.OMEGA, self.DELTA, self.DELTA)
        expected = np.pi * self.DELTA / (PHYS.hbar * self.OMEGA)
        assert r.sigma2_over_sigman == pytest.approx(expected, rel=1e-12)

    def test_sigma1_grows_with_temperature(self):
        """Thermal quasiparticles raise sigma1 monotonically."""
        T = np.linspace(0.05, 0.3, 26)
        r = mattis_bardeen(T, self.OMEGA, self.DELTA, self.DELTA)
        assert np.all(np.diff(r.sigma1_over_sigman) > 0)
        assert np.all(np.diff(r.sigma2_over_sigman) < 0)

    def test_finite_at_lowest_temperature(self):
        """No overflow when xi = hbar omega / 2kT is large."""
        r = mattis_bardeen(0.005, self.OMEGA, self.DELTA, self.DELTA)
        assert np.isfinite(r.sigma1_over_sigman)
        assert r.sigma1_over_sigman >= 0.0

    def test_scalar_matches_array(self):
        """Scalar and array evaluation agree."""
        T = np.array([0.1, 0.2])
        arr = mattis_bardeen(T, self.OMEGA, self.DELTA, self.DELTA)
        one = mattis_bardeen(0.2, self.OMEGA, self.DELTA, self.DELTA)
        assert arr.sigma1_over_sigman[1] == pytest.approx(one.sigma1_over_sigman, rel=1e-12)

    def test_in_regime_is_silent(self):
        """300 mK at 5.4 GHz for a 150 ueV gap is inside the approximation."""
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            mattis_bardeen(0.3, self.OMEGA, self.DELTA, self.DELTA)

    def test_out_of_regime_warns(self):
        """Temperatures near Tc emit RegimeWarning but still evaluate."""
        with pytest.warns(RegimeWarning, match="regime"):
            r = mattis_bardeen(0.8, self.OMEGA, self.DELTA, self.DELTA)
        assert np.isfinite(r.sigma1_over_sigman)

    def test_regime_checked_per_temperature(self):
        """One hot temperature in an array is counted in the warning."""
        with pytest.warns(RegimeWarning, match="1 of 3 temperatures from 0.8 K"):
            r = mattis_bardeen(np.array([0.1, 0.2, 0.8]), self.OMEGA, self.DELTA, self.DELTA)
        assert np.all(np.isfinite(r.sigma1_over_sigman))

    def test_cold_array_does_not_warn(self):
        """An array entirely inside the regime is silent."""
        with warnings.catch_warnings():
            warnings.simplefilter("error", RegimeWarning)
            mattis_bardeen(np.array([0.05, 0.1, 0.3]), self.OMEGA, self.DELTA, self.DELTA)

    @pytest.mark.parametrize("kwargs", [
        {"T": 0.0}, {"T": -0.1}, {"omega": 0.0}, {"delta": -1e-4}, {"delta0": float("nan")},
    ])
    def test_invalid_inputs(self, kwargs):
        """Non-positive or non-finite inputs raise DomainError."""
        args = {"T": 0.1, "omega": self.OMEGA, "delta": self.DELTA, "delta0": self.DELTA}
        args.update(kwargs)
        with pytest.raises(DomainError):
            mattis_bardeen(**args)


class TestDeltaToTc:
    """2 Delta = 3.5 k_B Tc."""

    def test_reference_gap(self):
        """0.150 meV corresponds to just under 1 K."""
        tc = delta_to_tc(1.5e-4)
        assert 0.990 <= tc <= 1.000

    def test_linear(self):
        """Tc scales linearly with the gap."""
        assert delta_to_tc(3e-4) == pytest.approx(2.0 * delta_to_tc(1.5e-4), rel=1e-15)

    @pytest.mark.parametrize("delta", [0.0, -1e-4, float("inf")])
    def test_invalid(self, delta):
        """Non-positive or non-finite gaps raise DomainError."""
        with pytest.raises(DomainError, match="gap must be > 0"):
            delta_to_tc(delta)
