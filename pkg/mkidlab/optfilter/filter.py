"""
Frequency-domain optimum filter.

For a record s = a * template + noise with stationary noise, the minimum-variance
linear estimate of a is

    A = norm * Re sum_k H_k S_k,     H_k = c_k conj(T_k) / J_k

over the one-sided DFT bins k, where J_k is the expected |DFT|^2 of a noise record
in bin k and c_k = 2 for interior bins (which stand for the +k and -k pair), 1 for
DC and Nyquist. The DC bin carries the baseline and gets zero weight. ``norm`` is
fixed so the estimate on the bare template is exactly 1.

PSD convention: one-sided power per bin, |X_k|^2 / N doubled for interior bins, no
window, so the PSD bins of a record sum to sum(x^2).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from numpy.fft import irfft, rfft

from mkidlab.errors import DataFormatError, DomainError
from mkidlab.pulse.trigger import Record, stack_records

logger = logging.getLogger(__name__)

MIN_NOISE_RECORDS = 8

RecordsLike = Union[np.ndarray, Sequence[Record]]


def _as_matrix(records: RecordsLike) -> np.ndarray:
    if isinstance(records, np.ndarray):
        return np.atleast_2d(np.asarray(records, dtype=float))
    return stack_records(records)


def _as_samples(record: Union[Record, np.ndarray]) -> np.ndarray:
    return record.samples if isinstance(record, Record) else np.asarray(record, dtype=float)


def bin_multiplicity(n: int) -> np.ndarray:
    c = np.full(n // 2 + 1, 2.0)
    c[0] = 1.0
    if n % 2 == 0:
        c[-1] = 1.0
    return c


def noise_psd(noise_records: RecordsLike) -> np.ndarray:
    """Mean one-sided power per DFT bin over pulse-free records."""
    x = _as_matrix(noise_records)
    if x.shape[0] < MIN_NOISE_RECORDS:
        raise DomainError(f"noise_psd needs >= {MIN_NOISE_RECORDS} noise records, got {x.shape[0]}")
    n = x.shape[-1]
    power = np.abs(rfft(x, axis=-1)) ** 2 / n
    return np.mean(power, axis=0) * bin_multiplicity(n)


def average_pulse(aligned: RecordsLike, pretrigger: Optional[int] = None) -> np.ndarray:
    """
    Per-sample mean of aligned records, baseline-subtracted and peak-normalized.

    The baseline is the median of the mean over the first ``pretrigger`` samples;
    by default the earliest trigger index of the records.
    """
    x = _as_matrix(aligned)
    if x.shape[0] < 2:
        raise DomainError(f"average_pulse needs >= 2 aligned records, got {x.shape[0]}")
    if pretrigger is None:
        if isinstance(aligned, np.ndarray):
            raise DomainError("average_pulse: pass pretrigger for a bare sample array")
        pretrigger = min(r.trigger_index for r in aligned)
    if not 0 < pretrigger <= x.shape[-1]:
        raise DomainError(f"average_pulse: pretrigger must lie in (0, {x.shape[-1]}], got {pretrigger}")

    mean = x.mean(axis=0)
    mean = mean - np.median(mean[:pretrigger])
    peak = mean[int(np.argmax(np.abs(mean)))]
    if peak == 0:
        raise DomainError("average_pulse: mean record is flat, no pulse to normalize")
    return mean / peak


@dataclass(frozen=True)
class OfModel:
    template: np.ndarray
    noise_psd: np.ndarray
    transfer: np.ndarray
    normalization: float
    reference_index: int = 0

    @property
    def length(self) -> int:
        return int(self.template.size)

    def to_dict(self) -> dict:
        return {
            "template": self.template.tolist(),
            "noise_psd": self.noise_psd.tolist(),
            "normalization": self.normalization,
            "reference_index": self.reference_index,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "OfModel":
        try:
            return build_filter(
                np.asarray(data["template"], dtype=float),
                np.asarray(data["noise_psd"], dtype=float),
                reference_index=int(data.get("reference_index", 0)),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise DataFormatError(f"Malformed optimum filter: {e}") from e


def _expected_power(psd: np.ndarray, n: int) -> np.ndarray:
    """E|X_k|^2 per one-sided bin from the one-sided PSD."""
    return psd * n / bin_multiplicity(n)


def build_filter(template: np.ndarray, psd: np.ndarray, reference_index: Optional[int] = None) -> OfModel:
    """
    Optimum-filter transfer function for a template in noise with the given PSD.

    Raises:
        DomainError: length mismatch, non-positive PSD outside DC, or a template
            with no power outside DC
    """
    t = np.asarray(template, dtype=float)
    psd = np.asarray(psd, dtype=float)
    n = t.size
    if psd.shape != (n // 2 + 1,):
        raise DomainError(f"build_filter: PSD must have {n // 2 + 1} bins for a {n}-sample template, got {psd.shape}")
    if not np.all(np.isfinite(psd[1:])) or np.any(psd[1:] <= 0):
        raise DomainError("build_filter: noise PSD must be positive in every non-DC bin")

    T = rfft(t)
    J = _expected_power(psd, n)
    H = np.zeros_like(T)
    H[1:] = bin_multiplicity(n)[1:] * np.conj(T[1:]) / J[1:]
    gain = float(np.real(np.sum(H * T)))
    if not gain > 0:
        raise DomainError("build_filter: template has no power outside the DC bin")

    ref = int(np.argmax(t)) if reference_index is None else int(reference_index)
    return OfModel(template=t, noise_psd=psd, transfer=H, normalization=1.0 / gain, reference_index=ref)


def _spectrum(record: Union[Record, np.ndarray], model: OfModel) -> np.ndarray:
    x = _as_samples(record)
    if x.shape[-1] != model.length:
        raise DomainError(f"Record length {x.shape[-1]} does not match the filter length {model.length}")
    return rfft(x, axis=-1)


def estimate_amplitude(record: Union[Record, np.ndarray], model: OfModel) -> Union[float, np.ndarray]:
    """OFF value: normalized weighted sum over DFT bins; one value per record for 2-D input."""
    S = _spectrum(record, model)
    out = model.normalization * np.real(np.sum(model.transfer * S, axis=-1))
    return float(out) if np.ndim(out) == 0 else out


def kernel(model: OfModel) -> np.ndarray:
    """Time-domain weights h with estimate_amplitude(s) == dot(h, s)."""
    n = model.length
    T = rfft(model.template)
    J = _expected_power(model.noise_psd, n)
    G = np.zeros_like(T)
    G[1:] = T[1:] / J[1:]
    return model.normalization * n * irfft(G, n=n)


def filtered_trace(record: Union[Record, np.ndarray], model: OfModel) -> np.ndarray:
    """
    Estimator evaluated at every time lag (inverse DFT of the weighted spectrum),
    rolled so that zero lag sits at ``model.reference_index``.
    """
    n = model.length
    S = _spectrum(record, model)
    T = rfft(model.template)
    J = _expected_power(model.noise_psd, n)
    Z = np.zeros_like(S)
    Z[..., 1:] = np.conj(T[1:]) * S[..., 1:] / J[1:]
    y = model.normalization * n * irfft(Z, n=n, axis=-1)
    return np.roll(y, model.reference_index, axis=-1)


def resolution(noise_records: RecordsLike, model: OfModel) -> float:
    """RMS of the OFF values of pulse-free records."""
    x = _as_matrix(noise_records)
    if x.shape[0] < MIN_NOISE_RECORDS:
        raise DomainError(f"resolution needs >= {MIN_NOISE_RECORDS} noise records, got {x.shape[0]}")
    off = np.atleast_1d(estimate_amplitude(x, model))
    return float(np.sqrt(np.mean(off**2)))


def expected_resolution(model: OfModel) -> float:
    """Standard deviation of OFF predicted from the noise PSD alone; equals sqrt(normalization)."""
    return float(np.sqrt(model.normalization))
