"""
IQ-plane geometry: traces, mixer ellipses and algebraic circle fits.

A non-ideal IQ mixer maps the unit circle e^(j theta) onto the ellipse

    I = I0 + A_I cos(theta)
    Q = Q0 + A_Q cos(theta - gamma)

with gamma in (0, pi); an ideal mixer has gamma = pi/2, A_I = A_Q and no offset.
Complex numbers z = I + jQ are used throughout.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, Tuple, Union

import numpy as np

from mkidlab.errors import CircleFitFailedError, DataFormatError, DegenerateConicError, DomainError

logger = logging.getLogger(__name__)

ComplexLike = Union[complex, np.ndarray]

MIN_ELLIPSE_POINTS = 6
MIN_CIRCLE_POINTS = 3

COLLINEAR_TOL = 1e-9
MAX_SCATTER_CONDITION = 1e12


@dataclass(frozen=True)
class IqTrace:
    """I/Q samples over an axis (frequency in Hz or time in s)."""

    axis: np.ndarray
    i: np.ndarray
    q: np.ndarray
    meta: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        axis = np.asarray(self.axis, dtype=float)
        i = np.asarray(self.i, dtype=float)
        q = np.asarray(self.q, dtype=float)
        object.__setattr__(self, "axis", axis)
        object.__setattr__(self, "i", i)
        object.__setattr__(self, "q", q)

        if axis.ndim != 1 or not axis.shape == i.shape == q.shape:
            raise DataFormatError("IqTrace arrays must be 1-D and equal length")
        if not (np.all(np.isfinite(axis)) and np.all(np.isfinite(i)) and np.all(np.isfinite(q))):
            raise DataFormatError("IqTrace contains non-finite values")
        if np.any(np.diff(axis) <= 0):
            raise DataFormatError("IqTrace axis must be strictly increasing")

    @classmethod
    def from_complex(cls, axis: np.ndarray, z: np.ndarray, meta: Dict[str, object] | None = None) -> "IqTrace":
        z = np.asarray(z, dtype=complex)
        return cls(axis=axis, i=z.real, q=z.imag, meta=dict(meta or {}))

    @property
    def z(self) -> np.ndarray:
        return self.i + 1j * self.q

    def with_values(self, z: np.ndarray) -> "IqTrace":
        return IqTrace.from_complex(self.axis, z, self.meta)

    def __len__(self) -> int:
        return int(self.axis.size)


# ----------------------------
# Mixer ellipse
# ----------------------------

@dataclass(frozen=True)
class EllipseParams:
    center: Tuple[float, float]
    semi_axes: Tuple[float, float]
    gamma: float
    residual: float = float("nan")

    def __post_init__(self) -> None:
        a_i, a_q = self.semi_axes
        if not (np.isfinite(a_i) and np.isfinite(a_q)) or a_i <= 0 or a_q <= 0:
            raise DomainError(f"ellipse semi-axes must be > 0, got {self.semi_axes!r}")
        if not 0.0 < self.gamma < np.pi:
            raise DomainError(f"ellipse skew gamma must lie in (0, pi), got {self.gamma!r}")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        object.__setattr__(self, "semi_axes", (float(a_i), float(a_q)))

    @classmethod
    def unit(cls) -> "EllipseParams":
        return cls(center=(0.0, 0.0), semi_axes=(1.0, 1.0), gamma=np.pi / 2, residual=0.0)

    def to_dict(self) -> dict:
        return {
            "i0": self.center[0],
            "q0": self.center[1],
            "a_i": self.semi_axes[0],
            "a_q": self.semi_axes[1],
            "gamma": self.gamma,
            "residual": self.residual,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EllipseParams":
        try:
            return cls(
                center=(float(data["i0"]), float(data["q0"])),
                semi_axes=(float(data["a_i"]), float(data["a_q"])),
                gamma=float(data["gamma"]),
                residual=float(data.get("residual", float("nan"))),
            )
        except (KeyError, TypeError) as e:
            raise DataFormatError(f"Malformed ellipse parameters: {e}") from e


def ellipse_points(theta: np.ndarray, ellipse: EllipseParams) -> np.ndarray:
    """Parametric ellipse I(theta) + j Q(theta)."""
    theta = np.asarray(theta, dtype=float)
    i0, q0 = ellipse.center
    a_i, a_q = ellipse.semi_axes
    return (i0 + a_i * np.cos(theta)) + 1j * (q0 + a_q * np.cos(theta - ellipse.gamma))


def circle_to_ellipse(z: ComplexLike, ellipse: EllipseParams) -> ComplexLike:
    """Forward mixer map: unit-circle coordinates to raw I/Q."""
    z = np.asarray(z, dtype=complex)
    i0, q0 = ellipse.center
    a_i, a_q = ellipse.semi_axes
    g = ellipse.gamma
    out = (i0 + a_i * z.real) + 1j * (q0 + a_q * (np.cos(g) * z.real + np.sin(g) * z.imag))
    return complex(out) if out.ndim == 0 else out


def ellipse_to_circle(z: ComplexLike, ellipse: EllipseParams) -> ComplexLike:
    """
    Inverse affine mixer map: translate by -center, rescale both axes to a common
    radius and remove the shear so I and Q are back in quadrature.
    """
    z = np.asarray(z, dtype=complex)
    i0, q0 = ellipse.center
    a_i, a_q = ellipse.semi_axes
    g = ellipse.gamma
    c = (z.real - i0) / a_i
    s = ((z.imag - q0) / a_q - c * np.cos(g)) / np.sin(g)
    out = c + 1j * s
    return complex(out) if out.ndim == 0 else out


def _normalize(z: np.ndarray) -> Tuple[np.ndarray, complex, float]:
    m = complex(np.mean(z))
    d = z - m
    scale = float(np.sqrt(np.mean(np.abs(d) ** 2)))
    return d / scale if scale > 0 else d, m, scale


def _conic_to_ellipse(coef: np.ndarray) -> Tuple[float, float, float, float, float]:
    A, B, C, D, E, F = coef
    if A + C < 0:
        A, B, C, D, E, F = -A, -B, -C, -D, -E, -F
    if A * C - 0.25 * B * B <= 0:
        raise DegenerateConicError("Best-fit conic is not an ellipse (hyperbolic or parabolic)")

    x0, y0 = np.linalg.solve([[2 * A, B], [B, 2 * C]], [-D, -E])
    k = -(F + 0.5 * (D * x0 + E * y0))
    if k <= 0:
        raise DegenerateConicError("Best-fit conic is an imaginary ellipse")

    # (p - c)^T Mq (p - c) = k  <=>  L L^T = k Mq^-1 with L = [[A_I, 0], [A_Q cos g, A_Q sin g]]
    shape = k * np.linalg.inv(np.array([[A, 0.5 * B], [0.5 * B, C]]))
    a_i = float(np.sqrt(shape[0, 0]))
    a_q = float(np.sqrt(shape[1, 1]))
    cos_g = float(np.clip(shape[0, 1] / (a_i * a_q), -1.0, 1.0))
    return float(x0), float(y0), a_i, a_q, float(np.arccos(cos_g))


def fit_ellipse(points: ComplexLike) -> EllipseParams:
    """
    Ellipse-constrained algebraic conic fit (Halir-Flusser) of I/Q points.

    The points are centered and scaled before fitting; the trigonometric
    parameterization is recovered from the conic afterwards. The reported
    residual is the RMS of |z| - 1 after mapping the points to the circle.

    Raises:
        DegenerateConicError: fewer than 6 points, collinear points, or no
            ellipse among the conic solutions
    """
    z = np.asarray(points, dtype=complex).ravel()
    if z.size < MIN_ELLIPSE_POINTS:
        raise DegenerateConicError(f"Ellipse fit needs >= {MIN_ELLIPSE_POINTS} points, got {z.size}")
    if not np.all(np.isfinite(z)):
        raise DegenerateConicError("Ellipse fit points contain non-finite values")

    zn, m, scale = _normalize(z)
    sv = np.linalg.svd(np.column_stack([zn.real, zn.imag]), compute_uv=False)
    if scale == 0 or sv[-1] < COLLINEAR_TOL * sv[0]:
        raise DegenerateConicError("Ellipse fit points are collinear")

    x, y = zn.real, zn.imag
    D1 = np.column_stack([x * x, x * y, y * y])
    D2 = np.column_stack([x, y, np.ones_like(x)])
    S1 = D1.T @ D1
    S2 = D1.T @ D2
    S3 = D2.T @ D2
    if np.linalg.cond(S3) > MAX_SCATTER_CONDITION:
        raise DegenerateConicError("Ellipse fit scatter matrix is singular")

    T = -np.linalg.solve(S3, S2.T)
    M = S1 + S2 @ T
    # premultiply by the inverse of the ellipse constraint matrix
    M = np.vstack([M[2] / 2.0, -M[1], M[0] / 2.0])
    evals, evecs = np.linalg.eig(M)
    evecs = np.real(evecs)
    constraint = 4.0 * evecs[0] * evecs[2] - evecs[1] ** 2
    candidates = np.flatnonzero(constraint > 0)
    if candidates.size == 0:
        raise DegenerateConicError("No ellipse-constrained solution: best-fit conic is hyperbolic")
    k = candidates[np.argmin(np.abs(evals[candidates]))]
    a1 = evecs[:, k]
    coef = np.concatenate([a1, T @ a1])

    x0, y0, a_i, a_q, gamma = _conic_to_ellipse(coef)
    if not 0.0 < gamma < np.pi:
        raise DegenerateConicError("Fitted ellipse collapsed to a line (gamma at 0 or pi)")

    center = complex(m + scale * (x0 + 1j * y0))
    params = EllipseParams(center=(center.real, center.imag), semi_axes=(scale * a_i, scale * a_q), gamma=gamma)
    residual = float(np.sqrt(np.mean((np.abs(ellipse_to_circle(z, params)) - 1.0) ** 2)))
    logger.debug("ellipse fit: center=%s axes=%s gamma=%.6f residual=%.3g",
                 params.center, params.semi_axes, gamma, residual)
    return EllipseParams(center=params.center, semi_axes=params.semi_axes, gamma=gamma, residual=residual)


# ----------------------------
# Circle
# ----------------------------

@dataclass(frozen=True)
class CircleFit:
    center: complex
    radius: float
    residual: float

    def to_dict(self) -> dict:
        return {
            "center": [self.center.real, self.center.imag],
            "radius": self.radius,
            "residual": self.residual,
        }


def fit_circle(points: ComplexLike) -> CircleFit:
    """
    Algebraic (Kasa) circle fit minimizing sum (|z - c|^2 - R^2)^2.

    ``residual`` is the RMS of (|z - c| - R) relative to R.

    Raises:
        CircleFitFailedError: too few points, collinear points, or imaginary radius
    """
    z = np.asarray(points, dtype=complex).ravel()
    if z.size < MIN_CIRCLE_POINTS:
        raise CircleFitFailedError(f"Circle fit needs >= {MIN_CIRCLE_POINTS} points, got {z.size}")

    zn, m, scale = _normalize(z)
    if scale == 0:
        raise CircleFitFailedError("Circle fit points are all identical")
    x, y = zn.real, zn.imag
    A = np.column_stack([x, y, np.ones_like(x)])
    sol, _, rank, _ = np.linalg.lstsq(A, -(x * x + y * y), rcond=None)
    if rank < 3:
        raise CircleFitFailedError("Circle fit points are collinear")
    D, E, F = sol
    cx, cy = -0.5 * D, -0.5 * E
    r2 = cx * cx + cy * cy - F
    if r2 <= 0:
        raise CircleFitFailedError("Circle fit produced an imaginary radius")

    center = complex(m + scale * (cx + 1j * cy))
    radius = float(scale * np.sqrt(r2))
    residual = float(np.sqrt(np.mean((np.abs(z - center) - radius) ** 2)) / radius)
    return CircleFit(center=center, radius=radius, residual=residual)
