"""Small statistics used by the basin-location study."""
from __future__ import annotations

import math

import numpy as np
from scipy.special import betainc

__all__ = ["SampleTooSmallError", "t_test_one_sample", "t_sf_two_sided", "pearson_matrix"]


class SampleTooSmallError(ValueError):
    pass


def t_sf_two_sided(t: float, df: float) -> float:
    """``P(|T| >= |t|)`` for Student's t with ``df`` degrees of freedom.

    Uses ``P = I_{df/(df+t^2)}(df/2, 1/2)``, the regularized incomplete beta.
    """
    if math.isinf(t):
        return 0.0
    return float(betainc(0.5 * df, 0.5, df / (df + t * t)))


def t_test_one_sample(values, mu0: float = 0.5) -> tuple[float, float]:
    """Two-sided one-sample t-test of ``mean(values) == mu0``.

    Zero sample variance gives ``(0, 1)`` when the mean equals ``mu0`` and
    ``(+-inf, 0)`` otherwise.
    """
    v = np.asarray(values, dtype=np.float64)
    n = v.shape[0]
    if n < 3:
        raise SampleTooSmallError(f"t-test needs at least 3 values, got {n}")
    mean = v[0] if np.ptp(v) == 0.0 else v.mean()
    sd = v.std(ddof=1)
    diff = mean - mu0
    if np.ptp(v) == 0.0:
        if diff == 0.0:
            return 0.0, 1.0
        return math.copysign(math.inf, diff), 0.0
    t = diff / (sd / math.sqrt(n))
    return float(t), t_sf_two_sided(t, n - 1)


def pearson_matrix(points) -> np.ndarray:
    """Correlation matrix of the columns of ``points`` (samples x dims).

    Constant columns correlate 0 with everything else; the diagonal is 1.
    """
    p = np.asarray(points, dtype=np.float64)
    if p.ndim != 2 or p.shape[0] < 3:
        raise SampleTooSmallError("need a 2-D sample with at least 3 points")
    z = p - p.mean(axis=0)
    norm = np.sqrt((z * z).sum(axis=0))
    live = np.ptp(p, axis=0) > 0
    z[:, live] /= norm[live]
    z[:, ~live] = 0.0
    r = np.clip(z.T @ z, -1.0, 1.0)
    np.fill_diagonal(r, 1.0)
    return r
