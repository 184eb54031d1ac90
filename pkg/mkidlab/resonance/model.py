"""
Transmission models of a capacitively coupled resonator.

Ideal (hanger) resonator:

    S21(f) = 1 - (Q/Qc) / (1 + 2jQ (f - f0)/f0)

Non-ideal resonator with impedance-mismatch rotation phi0 and a complex
polynomial background bg(f):

    S21(f) = bg(f) * (1 - (Q/Qc) e^(j phi0) / (1 + 2jQ (f - f0)/f0))

The background polynomial is evaluated in fractional detuning x = (f - f0)/f0,
coefficients in ascending order.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, Sequence, Tuple, Union

import numpy as np

from mkidlab.errors import DataFormatError, DomainError

ArrayLike = Union[float, np.ndarray]

MIN_SWEEP_POINTS = 8


@dataclass(frozen=True)
class ComplexSweep:
    """Frequency-indexed complex S21 samples from one resonance scan."""

    freqs: np.ndarray
    s21: np.ndarray
    meta: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        freqs = np.asarray(self.freqs, dtype=float)
        s21 = np.asarray(self.s21, dtype=complex)
        object.__setattr__(self, "freqs", freqs)
        object.__setattr__(self, "s21", s21)

        if freqs.ndim != 1 or freqs.shape != s21.shape:
            raise DataFormatError(
                f"Sweep arrays must be 1-D and equal length, got {freqs.shape} and {s21.shape}"
            )
        if freqs.size < MIN_SWEEP_POINTS:
            raise DataFormatError(f"Sweep needs >= {MIN_SWEEP_POINTS} points, got {freqs.size}")
        if not (np.all(np.isfinite(freqs)) and np.all(np.isfinite(s21))):
            raise DataFormatError("Sweep contains non-finite values")
        if np.any(np.diff(freqs) <= 0):
            raise DataFormatError("Sweep frequencies must be strictly increasing")

    def __len__(self) -> int:
        return int(self.freqs.size)

    @property
    def span(self) -> Tuple[float, float]:
        return float(self.freqs[0]), float(self.freqs[-1])


@dataclass(frozen=True)
class ResonanceParams:
    """Fitted or true resonance quantities; q_i is derived, never fitted."""

    f0: float
    q_total: float
    q_c: float
    phi0: float = 0.0
    background: Tuple[complex, ...] = (1.0 + 0.0j,)
    uncertainties: Dict[str, float] = field(default_factory=dict)
    converged: bool = True
    cost: float = float("nan")
    chi2_dof: float = float("nan")

    def __post_init__(self) -> None:
        _check_positive(f0=self.f0, q=self.q_total, qc=self.q_c)
        bg = tuple(complex(c) for c in self.background)
        if not 1 <= len(bg) <= 3:
            raise DomainError(f"background polynomial must have degree 0-2, got {len(bg) - 1}")
        object.__setattr__(self, "background", bg)

    @property
    def q_i(self) -> float:
        return q_internal(self.q_total, self.q_c)

    @property
    def linewidth(self) -> float:
        return self.f0 / self.q_total

    def with_updates(self, **changes) -> "ResonanceParams":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "f0_hz": self.f0,
            "q": self.q_total,
            "qc": self.q_c,
            "qi": self.q_i,
            "phi0": self.phi0,
            "background": [[c.real, c.imag] for c in self.background],
            "errors": dict(sorted(self.uncertainties.items())),
            "converged": bool(self.converged),
            "cost": self.cost,
            "chi2_dof": self.chi2_dof,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ResonanceParams":
        try:
            bg = tuple(complex(re, im) for re, im in data.get("background", [[1.0, 0.0]]))
            return cls(
                f0=float(data["f0_hz"]),
                q_total=float(data["q"]),
                q_c=float(data["qc"]),
                phi0=float(data.get("phi0", 0.0)),
                background=bg,
                uncertainties={k: float(v) for k, v in data.get("errors", {}).items()},
                converged=bool(data.get("converged", True)),
                cost=float(data.get("cost", float("nan"))),
                chi2_dof=float(data.get("chi2_dof", float("nan"))),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise DataFormatError(f"Malformed resonance parameters: {e}") from e


def _check_positive(**values: float) -> None:
    for name, v in values.items():
        if not np.isfinite(v) or v <= 0:
            raise DomainError(f"{name} must be finite and > 0, got {v!r}")


def s21_ideal(f: ArrayLike, f0: float, q: float, qc: float) -> ArrayLike:
    """Ideal capacitively coupled resonator transmission."""
    _check_positive(f0=f0, q=q, qc=qc)
    f = np.asarray(f, dtype=float)
    out = 1.0 - (q / qc) / (1.0 + 2j * q * (f - f0) / f0)
    return complex(out) if np.ndim(out) == 0 else out


def eval_background(f: ArrayLike, f0: float, coeffs: Sequence[complex]) -> np.ndarray:
    x = (np.asarray(f, dtype=float) - f0) / f0
    # np.polynomial.polynomial.polyval takes ascending coefficients
    return np.polynomial.polynomial.polyval(x, np.asarray(coeffs, dtype=complex))


def s21_model(f: ArrayLike, params: ResonanceParams) -> ArrayLike:
    """Non-ideal resonator transmission with rotation phi0 and polynomial background."""
    f = np.asarray(f, dtype=float)
    p = params
    resonance = 1.0 - (p.q_total / p.q_c) * np.exp(1j * p.phi0) / (
        1.0 + 2j * p.q_total * (f - p.f0) / p.f0
    )
    out = eval_background(f, p.f0, p.background) * resonance
    return complex(out) if out.ndim == 0 else out


def q_internal(q_total: float, q_c: float) -> float:
    """Internal quality factor from 1/Q = 1/Qi + 1/Qc."""
    _check_positive(q=q_total, qc=q_c)
    if q_total >= q_c:
        raise DomainError(
            f"q_internal: need q_total < q_c for a positive Qi, got Q={q_total!r}, Qc={q_c!r}"
        )
    return 1.0 / (1.0 / q_total - 1.0 / q_c)


def circle_of(params: ResonanceParams) -> Tuple[complex, float]:
    """Center and radius of the S21 locus for a unit background."""
    r = params.q_total / params.q_c
    return 1.0 - 0.5 * r * np.exp(1j * params.phi0), 0.5 * r


def wrap_phase(phi: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    wrapped = float(np.angle(np.exp(1j * phi)))
    return np.pi if wrapped == -np.pi else wrapped
