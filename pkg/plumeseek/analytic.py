"""Map-independent mean-concentration model used by the estimator.

Homogenising the obstacles turns the lattice into a disk with an effective
diffusivity; the steady concentration of a point source then follows from
the Moebius map of the disk onto itself::

    R2 = R0**2 * ((x - X)**2 + (y - Y)**2)
         / ((x*Y - y*X)**2 + (R0**2 - x*X - y*Y)**2)

    lambda = -(A / 2) * ln(R2)

``A`` is the effective release rate ``A0 / f_c``.  ``R2`` is clipped into
``[EPS_R2, 1]`` so the model stays finite at the source and zero on and
beyond the circle.

All helpers broadcast over numpy arrays.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .lattice import PERCOLATION_THRESHOLD

__all__ = [
    "EPS_R2",
    "C_MIN",
    "C_MAX",
    "TORTUOSITY_EXPONENT",
    "PercolationThresholdError",
    "SourceParams",
    "DomainGeom",
    "moebius_R2",
    "mean_concentration_model",
    "c_constant",
    "c_values",
    "tortuosity",
    "release_rate_from_effective",
]

EPS_R2 = 1e-6
C_MIN = 1e-6
C_MAX = -0.5 * np.log(EPS_R2)
TORTUOSITY_EXPONENT = 1.30


class PercolationThresholdError(ValueError):
    """Tortuosity requested for a lattice at or above the percolation threshold."""


@dataclass(frozen=True)
class SourceParams:
    X: float
    Y: float
    A: float


@dataclass(frozen=True)
class DomainGeom:
    """Circular search domain centred on the origin."""

    R0: float

    def __post_init__(self):
        if not self.R0 > 0:
            raise ValueError(f"R0 must be positive, got {self.R0!r}")

    def contains(self, X, Y) -> np.ndarray:
        """Strictly inside the circle."""
        return np.asarray(X) ** 2 + np.asarray(Y) ** 2 < self.R0**2


def _r2(x, y, X, Y, R0):
    x, y, X, Y = (np.asarray(v, dtype=float) for v in (x, y, X, Y))
    num = R0**2 * ((x - X) ** 2 + (y - Y) ** 2)
    den = (x * Y - y * X) ** 2 + (R0**2 - x * X - y * Y) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        r2 = num / den
    # den == 0 only for points beyond the circle
    return np.where(den > 0, r2, np.inf)


def moebius_R2(point: Sequence[float], source: SourceParams, geom: DomainGeom) -> float:
    """Squared modulus of the Moebius map; 0 at the source, 1 on the circle."""
    return float(_r2(point[0], point[1], source.X, source.Y, geom.R0))


def _clipped_log_r2(x, y, X, Y, R0):
    return np.log(np.clip(_r2(x, y, X, Y, R0), EPS_R2, 1.0))


def mean_concentration_model(
    point: Sequence[float], source: SourceParams, geom: DomainGeom
) -> float:
    """Expected count ``lambda = -(A/2) ln R2`` at *point* (never negative).

    Zero on and beyond the circle, where ``c_values`` is held at ``C_MIN``.
    """
    lam = -0.5 * source.A * _clipped_log_r2(point[0], point[1], source.X, source.Y, geom.R0)
    return float(lam) + 0.0  # -0.0 -> 0.0 on the circle


def c_values(x, y, X, Y, R0: float) -> np.ndarray:
    """Vectorised ``c = lambda / A`` clamped into ``[C_MIN, C_MAX]``.

    ``lambda = A * c`` holds only strictly inside the circle. On and beyond
    it ``lambda`` is 0 but ``c`` stays at ``C_MIN`` so a Gamma update never
    sees a zero rate.
    """
    return np.clip(-0.5 * _clipped_log_r2(x, y, X, Y, R0), C_MIN, C_MAX)


def c_constant(
    searcher: Sequence[float], source: Sequence[float], geom: DomainGeom
) -> float:
    """Per-particle constant ``c`` of the count model: ``lambda = A * c``."""
    return float(c_values(searcher[0], searcher[1], source[0], source[1], geom.R0))


def tortuosity(p: float, *, alpha: float = TORTUOSITY_EXPONENT) -> float:
    """Effective-diffusivity factor ``f_c = (1 - p / p_c) ** alpha``."""
    if not 0.0 <= p < PERCOLATION_THRESHOLD:
        raise PercolationThresholdError(
            f"missing-link fraction {p!r} is outside [0, {PERCOLATION_THRESHOLD})"
        )
    return float((1.0 - p / PERCOLATION_THRESHOLD) ** alpha)


def release_rate_from_effective(A: float, p: float) -> float:
    """Retrospective ``A0 = A * f_c`` for a lattice with missing fraction *p*."""
    return A * tortuosity(p)
