"""Numerical surrogates for convergence of coefficient series.

A truncated solver only ever sees a prefix of an infinite coefficient sequence.
``classify_series`` decides from that prefix whether the sum of squares looks
convergent or divergent, and ``power_tail`` extrapolates the missing tail of a
convergent product series under a power-law decay model.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import zeta

from .geometry import MIN_SERIES_LENGTH

DIV_MARGIN = 0.05
CONV_MARGIN = 0.05
ZERO_TOL = 1e-12

CONVERGES = "converges"
DIVERGES = "diverges"
UNDETERMINED = "undetermined"


@dataclass(frozen=True)
class ConvergenceVerdict:
    verdict: str
    partial_at_half: float
    partial_at_full: float
    growth_ratio: float
    tail_fraction: float
    length: int

    @property
    def converges(self):
        return self.verdict == CONVERGES

    @property
    def diverges(self):
        return self.verdict == DIVERGES

    def as_dict(self):
        return {
            "verdict": self.verdict,
            "partial_at_half": self.partial_at_half,
            "partial_at_full": self.partial_at_full,
            "growth_ratio": self.growth_ratio,
            "tail_fraction": self.tail_fraction,
            "length": self.length,
        }


def classify_series(values, div_margin=DIV_MARGIN, conv_margin=CONV_MARGIN,
                    min_length=MIN_SERIES_LENGTH, zero_tol=ZERO_TOL):
    """Classify ``sum(values**2)`` from its first ``N`` terms.

    Divergent when the partial sum still grows by more than ``div_margin``
    between ``N/2`` and ``N`` terms; convergent when the last quarter of the
    terms carries less than ``conv_margin`` of the total; undetermined
    otherwise, and also whenever fewer than ``min_length`` terms are given.
    A sequence whose terms all stay below ``zero_tol`` is rounding noise
    around zero and counts as convergent.
    """
    sq = np.square(np.asarray(values, dtype=np.float64))
    n = sq.size
    full = float(sq.sum())
    half = float(sq[: n // 2].sum())
    tail = float(sq[n - n // 4 :].sum()) if n >= 4 else full
    tiny = np.finfo(float).tiny
    growth = full / max(half, tiny) if full > 0 else 1.0
    tail_fraction = tail / full if full > 0 else 0.0

    if n < min_length:
        verdict = UNDETERMINED
    elif full == 0.0 or np.sqrt(sq.max()) <= zero_tol:
        verdict = CONVERGES
    elif growth > 1.0 + div_margin:
        verdict = DIVERGES
    elif tail_fraction < conv_margin:
        verdict = CONVERGES
    else:
        verdict = UNDETERMINED
    return ConvergenceVerdict(verdict, half, full, growth, tail_fraction, n)


@dataclass(frozen=True)
class PowerLaw:
    """Fit ``x_k ~ scale * k**(-exponent)`` over the last half of a sequence."""

    scale: float
    exponent: float

    @classmethod
    def fit(cls, values):
        x = np.asarray(values, dtype=np.float64)
        n = x.size
        k1, k2 = n // 2, n
        if k1 < 1:
            return None
        x1, x2 = x[k1 - 1], x[k2 - 1]
        window = x[k1 - 1 :]
        if x1 == 0.0 or x2 == 0.0 or np.any(np.sign(window) != np.sign(x2)):
            return None
        p = -np.log(abs(x2) / abs(x1)) / np.log(k2 / k1)
        return cls(float(x2 * k2 ** p), float(p))


def power_tail(x, y=None):
    """Estimated ``sum_{k>N} x_k * y_k`` beyond the ``N`` given terms.

    Returns 0 when a sequence ends in exact zeros and ``None`` when no
    power-law fit is possible or the extrapolated tail diverges.
    """
    x = np.asarray(x, dtype=np.float64)
    y = x if y is None else np.asarray(y, dtype=np.float64)
    n = x.size
    if n == 0:
        return 0.0
    if x[-1] == 0.0 or y[-1] == 0.0:
        return 0.0
    fx, fy = PowerLaw.fit(x), PowerLaw.fit(y)
    if fx is None or fy is None:
        return None
    p = fx.exponent + fy.exponent
    if p <= 1.0:
        return None
    return float(fx.scale * fy.scale * zeta(p, n + 1))
