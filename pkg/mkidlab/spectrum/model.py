"""
Photon-number spectrum of OFF values.

    model(OFF) = A * sum_{n=0}^{N_max} P(n; mu) G(OFF; n E_gamma + shift, sigma)

P is the Poisson mass, G the normal density. A is the number of events, so the
histogram model for a bin is A times the Poisson-weighted difference of normal
CDFs over the bin edges.

With n_min = 1 the sum starts at one photon and the weights are renormalized by
1 - P(0; mu). That is the spectrum of triggered events only: records without a
photon carry no pulse and never reach the OFF stage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Sequence, Union

import numpy as np
from scipy import signal, special, stats

from mkidlab.errors import DataFormatError, DomainError, EmptyHistogramError

ArrayLike = Union[float, np.ndarray]

MIN_AMPLITUDE = 1e-5
# mu is open at zero; the fit's lower limit sits here
MIN_MU = 1e-9
MIN_N_MAX = 30
PARAMETERS = ("mu", "amplitude", "shift", "e_gamma", "sigma")


def default_n_max(mu: float) -> int:
    """ceil(mu + 10 sqrt(mu) + 10), at least 30."""
    return max(MIN_N_MAX, int(math.ceil(mu + 10.0 * math.sqrt(max(mu, 0.0)) + 10.0)))


def required_n_max(mu: float) -> int:
    return int(math.ceil(mu + 6.0 * math.sqrt(max(mu, 0.0))))


@dataclass(frozen=True)
class SpectrumModel:
    mu: float
    sigma: float
    amplitude: float
    shift: float
    e_gamma: float
    n_max: Optional[int] = None
    uncertainties: Dict[str, float] = field(default_factory=dict)
    n_min: int = 0

    def __post_init__(self) -> None:
        if not self.mu > 0:
            raise DomainError(f"spectrum mu must be > 0, got {self.mu!r}")
        if self.n_min not in (0, 1):
            raise DomainError(f"spectrum n_min must be 0 or 1, got {self.n_min!r}")
        if not self.sigma > 0:
            raise DomainError(f"spectrum sigma must be > 0, got {self.sigma!r}")
        if not self.amplitude > MIN_AMPLITUDE:
            raise DomainError(f"spectrum amplitude must exceed {MIN_AMPLITUDE}, got {self.amplitude!r}")
        if not 0.0 <= self.shift <= 1.0:
            raise DomainError(f"spectrum shift must lie in [0, 1], got {self.shift!r}")
        if not self.e_gamma > 0:
            raise DomainError(f"spectrum e_gamma must be > 0, got {self.e_gamma!r}")
        if self.n_max is None:
            object.__setattr__(self, "n_max", default_n_max(self.mu))
        elif self.n_max < required_n_max(self.mu):
            raise DomainError(
                f"spectrum n_max={self.n_max} truncates the Poisson sum; need >= {required_n_max(self.mu)} "
                f"for mu={self.mu:.4g}"
            )

    def with_updates(self, **changes) -> "SpectrumModel":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "mu": self.mu,
            "sigma": self.sigma,
            "a": self.amplitude,
            "shift": self.shift,
            "e_gamma": self.e_gamma,
            "n_max": self.n_max,
            "n_min": self.n_min,
            "errors": dict(sorted(self.uncertainties.items())),
        }


@dataclass(frozen=True)
class Histogram:
    bin_edges: np.ndarray
    counts: np.ndarray

    def __post_init__(self) -> None:
        edges = np.asarray(self.bin_edges, dtype=float)
        counts = np.asarray(self.counts)
        object.__setattr__(self, "bin_edges", edges)
        object.__setattr__(self, "counts", counts.astype(np.int64))
        if edges.ndim != 1 or counts.shape != (edges.size - 1,) or counts.size == 0:
            raise DataFormatError("Histogram needs len(counts) == len(bin_edges) - 1 >= 1")
        if np.any(np.diff(edges) <= 0):
            raise DataFormatError("Histogram bin edges must be strictly increasing")
        if np.any(counts < 0) or np.any(counts != np.round(counts)):
            raise DataFormatError("Histogram counts must be non-negative integers")

    @property
    def errors(self) -> np.ndarray:
        """Poisson errors sqrt(n) with a floor of 1 for empty and single-count bins."""
        return np.maximum(1.0, np.sqrt(self.counts))

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[1:] + self.bin_edges[:-1])

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __len__(self) -> int:
        return int(self.counts.size)


def make_histogram(values: np.ndarray, bins: Union[str, int, Sequence[float]] = "fd") -> Histogram:
    """Histogram of OFF values; ``bins`` follows numpy (default Freedman-Diaconis width)."""
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    if v.size == 0:
        raise EmptyHistogramError("No finite OFF values to histogram")
    edges = np.histogram_bin_edges(v, bins=bins)
    counts, _ = np.histogram(v, bins=edges)
    return Histogram(bin_edges=edges, counts=counts)


def poisson_weights(mu: float, n_max: int, n_min: int = 0) -> np.ndarray:
    """P(n; mu) for n = 0..n_max, zero below n_min and renormalized over n >= n_min."""
    n = np.arange(n_max + 1)
    w = stats.poisson.pmf(n, mu)
    if n_min > 0:
        w = np.where(n < n_min, 0.0, w) / stats.poisson.sf(n_min - 1, mu)
    return w


def model_density(off: ArrayLike, model: SpectrumModel) -> ArrayLike:
    """Poisson-weighted sum of Gaussians, in events per unit OFF."""
    x = np.asarray(off, dtype=float)
    n = np.arange(model.n_max + 1)
    centers = n * model.e_gamma + model.shift
    g = stats.norm.pdf(x[..., None], loc=centers, scale=model.sigma)
    out = model.amplitude * (g @ poisson_weights(model.mu, model.n_max, model.n_min))
    return float(out) if out.ndim == 0 else out


def bin_counts(
    edges: np.ndarray,
    mu: float,
    amplitude: float,
    shift: float,
    e_gamma: float,
    sigma: float,
    n_max: int,
    n_min: int = 0,
) -> np.ndarray:
    """Unvalidated bin integrals, for use inside minimizers."""
    n = np.arange(n_max + 1)
    centers = n * e_gamma + shift
    cdf = special.ndtr((np.asarray(edges, dtype=float)[None, :] - centers[:, None]) / sigma)
    return amplitude * (poisson_weights(mu, n_max, n_min) @ np.diff(cdf, axis=1))


def binned_model(edges: np.ndarray, model: SpectrumModel) -> np.ndarray:
    """Expected counts per bin: exact bin integrals of model_density."""
    return bin_counts(edges, model.mu, model.amplitude, model.shift, model.e_gamma, model.sigma,
                      model.n_max, model.n_min)


def expected_spectrum_curve(model: SpectrumModel, off_grid: np.ndarray) -> np.ndarray:
    """Density of the expected OFF distribution on a grid (the plotted simulation curve)."""
    return np.asarray(model_density(np.asarray(off_grid, dtype=float), model))


def simulate_spectrum(
    model: SpectrumModel,
    n_events: int,
    seed: Union[int, np.random.Generator, None] = None,
) -> np.ndarray:
    """
    Draw n ~ Poisson(mu) per event, then OFF ~ Normal(n E_gamma + shift, sigma).

    ``seed`` is an integer seed or a Generator to draw from. With n_min = 1 the
    photon number comes from the zero-truncated Poisson by inverse CDF.
    """
    if n_events < 0:
        raise DomainError(f"n_events must be >= 0, got {n_events}")
    rng = np.random.default_rng(seed)
    if model.n_min > 0:
        lo = stats.poisson.cdf(model.n_min - 1, model.mu)
        n = stats.poisson.ppf(rng.uniform(lo, 1.0, size=n_events), model.mu)
        n = np.maximum(n, model.n_min)
    else:
        n = rng.poisson(model.mu, size=n_events)
    return n * model.e_gamma + model.shift + model.sigma * rng.standard_normal(n_events)


def count_modes(hist: Histogram, prominence: Optional[float] = None) -> int:
    """
    Number of local maxima of the histogram that stand out of the Poisson noise.

    The default prominence is five times the Poisson error of the tallest bin.
    """
    if hist.total == 0:
        raise EmptyHistogramError("Cannot count modes of an empty histogram")
    counts = hist.counts.astype(float)
    if prominence is None:
        prominence = 5.0 * math.sqrt(counts.max())
    # pad so maxima in the first and last bins are found too
    padded = np.concatenate([[0.0], counts, [0.0]])
    peaks, _ = signal.find_peaks(padded, prominence=prominence)
    return int(peaks.size)
