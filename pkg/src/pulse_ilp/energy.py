"""Energy surface over the unit hypercube and its gradient.

For constraint ``m`` with non-negative coefficients ``c`` (row sum ``S``),
target ``d`` and local coordinates ``u``::

    K_m(u) = 1/2 * ((d - c.u) / S)**2 + 1/(2S) * sum_i c_i * (u_i (1 - u_i))**2

and ``K = mean_m K_m``.  ``K >= 0`` everywhere and vanishes exactly at
binary points satisfying every constraint.

The gradient is derived from ``K`` itself.  Per constraint,
``dK_m/du_i = (c_i / S) * (-(d - c.u) / S + u_i (1 - u_i)(1 - 2 u_i))`` and a
flipped position contributes ``-dK_m/du_i`` to ``dK/dx_i``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import SignedInstance

__all__ = [
    "EPS_K",
    "EnergyEval",
    "constraint_energy",
    "constraint_energies",
    "total_energy",
    "gradient",
    "evaluate",
    "finite_diff_gradient",
]

EPS_K = 1e-12


@dataclass(frozen=True)
class EnergyEval:
    k_total: float
    k_per_constraint: np.ndarray
    gradient: np.ndarray | None = None


def _check_x(si: SignedInstance, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (si.n,):
        raise ValueError(f"x must have length {si.n}, got shape {x.shape}")
    return x


def constraint_energy(si: SignedInstance, m: int, x) -> float:
    if not 0 <= m < si.m:
        raise IndexError(f"constraint index {m} out of range for {si.m} constraints")
    x = _check_x(si, x)
    c = si.base.c[m].astype(np.float64)
    s = float(si.row_sums[m])
    u = np.where(si.signs[m] > 0, x, 1.0 - x)
    resid = (si.d_adj[m] - c @ u) / s
    q = u * (1.0 - u)
    return float(0.5 * resid**2 + (c @ q**2) / (2.0 * s))


def constraint_energies(si: SignedInstance, x) -> np.ndarray:
    """All ``K_m(x)`` at once (length m)."""
    x = _check_x(si, x)
    c = si.base.c.astype(np.float64)
    s = si.row_sums.astype(np.float64)
    u = si.local_coords(x)
    resid = (si.d_adj - np.einsum("mi,mi->m", c, u)) / s
    q = u * (1.0 - u)
    return 0.5 * resid**2 + np.einsum("mi,mi->m", c, q**2) / (2.0 * s)


def total_energy(si: SignedInstance, x) -> EnergyEval:
    km = constraint_energies(si, x)
    return EnergyEval(k_total=float(km.mean()), k_per_constraint=km)


def gradient(si: SignedInstance, x) -> np.ndarray:
    x = _check_x(si, x)
    c = si.base.c.astype(np.float64)
    s = si.row_sums.astype(np.float64)[:, None]
    u = si.local_coords(x)
    resid = (si.d_adj[:, None] - np.einsum("mi,mi->m", c, u)[:, None]) / s
    du = (c / s) * (-resid + u * (1.0 - u) * (1.0 - 2.0 * u))
    return (si.signs * du).mean(axis=0)


def evaluate(si: SignedInstance, x) -> EnergyEval:
    km = constraint_energies(si, x)
    return EnergyEval(float(km.mean()), km, gradient(si, x))


def finite_diff_gradient(si: SignedInstance, x, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of :func:`total_energy`."""
    if h <= 0:
        raise ValueError("h must be positive")
    x = _check_x(si, x)
    out = np.empty(si.n)
    for j in range(si.n):
        xp = x.copy()
        xm = x.copy()
        xp[j] += h
        xm[j] -= h
        out[j] = (total_energy(si, xp).k_total - total_energy(si, xm).k_total) / (2.0 * h)
    return out
