"""Hot loops: the Euler descent segment, the impulse, and brute-force enumeration.

Each kernel exists twice: a numba ``@njit`` version with explicit loops and a
vectorized numpy version.  The numba path is used when numba imports and
``PULSE_ILP_DISABLE_JIT`` is not set; :func:`use_backend` switches at runtime.

Both backends follow the same control flow and return the same status codes.
Results agree to rounding but are not guaranteed bit-identical across
backends, since summation order differs.  Each backend is deterministic.
"""
from __future__ import annotations

import contextlib
import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    numba = None

__all__ = [
    "HAVE_NUMBA",
    "available_backends",
    "get_backend",
    "set_backend",
    "use_backend",
    "Prepared",
    "prepare",
    "energy_grad",
    "impulse",
    "run_segment",
    "scale_filtered",
    "gray_search",
]

_DISABLE_JIT = os.environ.get("PULSE_ILP_DISABLE_JIT", "").strip().lower() in {"1", "true", "yes", "on"}
HAVE_NUMBA = numba is not None

if HAVE_NUMBA:
    njit = numba.njit(cache=True, nogil=True)
else:  # pragma: no cover
    def njit(f):
        return f

_backend = "numba" if HAVE_NUMBA and not _DISABLE_JIT else "numpy"

# status codes returned by run_segment
SOLVED = 0
BUDGET = 1
NEED_RANDOMIZE = 2
NEED_RANDOM_IMPULSE = 3
DIVERGED = 4

# escape modes
ESC_NONE = 0
ESC_IMPULSE = 1
ESC_RANDOMIZE = 2

# trace event codes
EV_STEP = 0
EV_IMPULSE = 1
EV_RANDOMIZE = 2

# indices into the int/float state carried across segment calls
I_T, I_ESCAPES, I_LOGGED, I_EXCURSIONS = range(4)
F_KPREV, F_KNOW = range(2)


def available_backends() -> list[str]:
    return ["numba", "numpy"] if HAVE_NUMBA else ["numpy"]


def get_backend() -> str:
    return _backend


def set_backend(name: str) -> None:
    global _backend
    if name not in available_backends():
        raise ValueError(f"backend {name!r} not available; choose from {available_backends()}")
    _backend = name


@contextlib.contextmanager
def use_backend(name: str):
    prev = _backend
    set_backend(name)
    try:
        yield
    finally:
        set_backend(prev)


class Prepared:
    """Dense float arrays for the collapsed energy of one instance.

    With ``r = d - C x`` (original signed ``C``) and ``q = x (1 - x)``::

        K    = 1/(2M) sum_m (r_m / S_m)**2 + 1/2 sum_j wbin_j q_j**2
        grad = -coef^T r + wbin * q * (1 - 2x)

    where ``coef = C / (M S**2)`` and ``wbin_j = mean_m |C_mj| / S_m``.
    """

    __slots__ = ("m", "n", "cf", "coef", "wbin", "inv_s", "d", "ci", "di")

    def __init__(self, c: np.ndarray, d: np.ndarray):
        c = np.asarray(c, dtype=np.int64)
        d = np.asarray(d, dtype=np.int64)
        self.m, self.n = c.shape
        s = np.abs(c).sum(axis=1).astype(np.float64)
        self.ci = np.ascontiguousarray(c)
        self.di = np.ascontiguousarray(d)
        self.cf = np.ascontiguousarray(c, dtype=np.float64)
        self.d = np.ascontiguousarray(d, dtype=np.float64)
        self.inv_s = 1.0 / s
        self.coef = np.ascontiguousarray(self.cf / (self.m * s[:, None] ** 2))
        self.wbin = np.ascontiguousarray((np.abs(self.cf) / s[:, None]).mean(axis=0))


def prepare(inst) -> Prepared:
    return Prepared(inst.c, inst.d)


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------

@njit
def _energy_grad_nb(cf, coef, wbin, inv_s, d, x, g):
    m, n = cf.shape
    for j in range(n):
        q = x[j] * (1.0 - x[j])
        g[j] = wbin[j] * q * (1.0 - 2.0 * x[j])
    kres = 0.0
    for i in range(m):
        r = d[i]
        for j in range(n):
            r -= cf[i, j] * x[j]
        t = r * inv_s[i]
        kres += t * t
        for j in range(n):
            g[j] -= coef[i, j] * r
    kbin = 0.0
    for j in range(n):
        q = x[j] * (1.0 - x[j])
        kbin += wbin[j] * q * q
    return 0.5 * kres / m + 0.5 * kbin


@njit
def _impulse_nb(g, x, out):
    """Fill ``out`` with the impulse for gradient ``g`` at ``x``; return alpha or -1."""
    n = g.shape[0]
    total = 0.0
    for j in range(n):
        total += abs(g[j])
    if total == 0.0:
        return -1
    if n == 1:
        out[0] = 0.5
        alpha = 0
    else:
        mean = total / n
        lam = 0.5 * (n - 2) / (n - 1)
        scale = 1.0
        alpha = 0
        while True:
            l1 = 0.0
            mx = 0.0
            for j in range(n):
                v = mean + scale * (abs(g[j]) - mean)
                l1 += v
                if v > mx:
                    mx = v
            k = n / (2.0 * l1)
            if k * mx < 1.0:
                for j in range(n):
                    out[j] = k * (mean + scale * (abs(g[j]) - mean))
                break
            alpha += 1
            scale *= lam
    for j in range(n):
        if x[j] - 0.5 >= 0.0:
            out[j] = -out[j]
    return alpha


@njit
def _segment_nb(cf, coef, wbin, inv_s, d, ci, di, x, g, istate, fstate,
                max_iters, step, l0, eps_trap, escape, do_clamp, lo, hi,
                tr_k, tr_ev, imp_t, imp_x, imp_v):
    m, n = cf.shape
    record = tr_k.shape[0] > 0
    log_imp = imp_v.shape[0] > 0
    imp = np.empty(n)
    while istate[0] < max_iters:
        t = istate[0]
        k = _energy_grad_nb(cf, coef, wbin, inv_s, d, x, g)
        k_prev = fstate[0]
        trap = False
        if k > eps_trap:
            trap = abs((k - k_prev) / (k * step)) <= l0
        fstate[1] = k
        event = 0
        if trap and escape == 2:
            return 2
        if trap and escape == 1:
            if _impulse_nb(g, x, imp) < 0:
                return 3
            if log_imp:
                li = istate[2]
                imp_t[li] = t
                for j in range(n):
                    imp_x[li, j] = x[j]
                    imp_v[li, j] = imp[j]
                istate[2] = li + 1
            for j in range(n):
                x[j] += step * (imp[j] - g[j])
            istate[1] += 1
            event = 1
        else:
            for j in range(n):
                x[j] -= step * g[j]
        outside = False
        for j in range(n):
            if do_clamp:
                if x[j] < lo:
                    x[j] = lo
                elif x[j] > hi:
                    x[j] = hi
            if not np.isfinite(x[j]):
                return 4
            if x[j] < 0.0 or x[j] > 1.0:
                outside = True
        if outside:
            istate[3] += 1
        if record:
            tr_k[t] = k
            tr_ev[t] = event
        istate[0] = t + 1
        fstate[0] = k
        ok = True
        for i in range(m):
            acc = 0
            for j in range(n):
                if x[j] >= 0.5:
                    acc += ci[i, j]
            if acc != di[i]:
                ok = False
                break
        if ok:
            return 0
    return 1


@njit
def _gray_nb(c, d, limit, out):
    """Enumerate {0,1}^n in Gray-code order; store Gray ranks of solutions.

    Returns the number of solutions seen (stops once ``limit`` > 0 is reached).
    """
    m, n = c.shape
    acc = np.zeros(m, dtype=np.int64)
    code = np.int64(0)
    count = 0
    cap = out.shape[0]
    total = np.int64(1) << n
    for i in range(total):
        if i > 0:
            b = 0
            v = i
            while (v & 1) == 0:
                v >>= 1
                b += 1
            code ^= np.int64(1) << b
            if (code >> b) & 1:
                for r in range(m):
                    acc[r] += c[r, b]
            else:
                for r in range(m):
                    acc[r] -= c[r, b]
        hit = True
        for r in range(m):
            if acc[r] != d[r]:
                hit = False
                break
        if hit:
            if count < cap:
                out[count] = i
            count += 1
            if limit > 0 and count >= limit:
                return count
    return count


# ---------------------------------------------------------------------------
# numpy fallbacks
# ---------------------------------------------------------------------------

def _energy_grad_np(p: Prepared, x: np.ndarray, g: np.ndarray) -> float:
    r = p.d - p.cf @ x
    q = x * (1.0 - x)
    rs = r * p.inv_s
    g[:] = p.wbin * q * (1.0 - 2.0 * x) - p.coef.T @ r
    return float(0.5 * (rs @ rs) / p.m + 0.5 * (p.wbin @ (q * q)))


def scale_filtered(w: np.ndarray, out: np.ndarray) -> int:
    """Smallest-alpha filtered copy of magnitudes ``w`` with mean 1/2 and max < 1.

    Uses ``F^a w = mean(w) + lam^a (w - mean(w))`` with
    ``lam = (n - 2) / (2 (n - 1))``.  ``w`` must be non-negative, so the
    filtered vector keeps its sum and the loop ends once the spread has
    shrunk below the mean.  Returns alpha, or -1 if ``w`` is all zero.
    """
    n = w.shape[0]
    total = w.sum()
    if total == 0.0:
        return -1
    if n == 1:
        out[0] = 0.5
        return 0
    mean = total / n
    dev = w - mean
    lam = 0.5 * (n - 2) / (n - 1)
    scale = 1.0
    alpha = 0
    while True:
        v = mean + scale * dev
        k = n / (2.0 * v.sum())
        if k * v.max() < 1.0:
            out[:] = k * v
            return alpha
        alpha += 1
        scale *= lam


def _impulse_np(g: np.ndarray, x: np.ndarray, out: np.ndarray) -> int:
    alpha = scale_filtered(np.abs(g), out)
    if alpha >= 0:
        out[x - 0.5 >= 0.0] *= -1.0
    return alpha


def _segment_np(p: Prepared, x, g, istate, fstate, max_iters, step, l0, eps_trap,
                escape, do_clamp, lo, hi, tr_k, tr_ev, imp_t, imp_x, imp_v) -> int:
    record = tr_k.shape[0] > 0
    log_imp = imp_v.shape[0] > 0
    imp = np.empty(p.n)
    while istate[I_T] < max_iters:
        t = int(istate[I_T])
        k = _energy_grad_np(p, x, g)
        trap = k > eps_trap and abs((k - fstate[F_KPREV]) / (k * step)) <= l0
        fstate[F_KNOW] = k
        event = EV_STEP
        if trap and escape == ESC_RANDOMIZE:
            return NEED_RANDOMIZE
        if trap and escape == ESC_IMPULSE:
            if _impulse_np(g, x, imp) < 0:
                return NEED_RANDOM_IMPULSE
            if log_imp:
                li = int(istate[I_LOGGED])
                imp_t[li] = t
                imp_x[li] = x
                imp_v[li] = imp
                istate[I_LOGGED] = li + 1
            x += step * (imp - g)
            istate[I_ESCAPES] += 1
            event = EV_IMPULSE
        else:
            x -= step * g
        if do_clamp:
            np.clip(x, lo, hi, out=x)
        if not np.all(np.isfinite(x)):
            return DIVERGED
        if np.any((x < 0.0) | (x > 1.0)):
            istate[I_EXCURSIONS] += 1
        if record:
            tr_k[t] = k
            tr_ev[t] = event
        istate[I_T] = t + 1
        fstate[F_KPREV] = k
        if np.array_equal(p.ci @ (x >= 0.5).astype(np.int64), p.di):
            return SOLVED
    return BUDGET


_CHUNK_BITS = 16


def _gray_np(c: np.ndarray, d: np.ndarray, limit: int) -> tuple[int, np.ndarray]:
    m, n = c.shape
    total = 1 << n
    chunk = 1 << min(n, _CHUNK_BITS)
    bits = np.arange(n, dtype=np.int64)
    ct = np.ascontiguousarray(c.T)
    found = []
    count = 0
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total), dtype=np.int64)
        code = idx ^ (idx >> 1)
        xb = (code[:, None] >> bits) & 1
        hits = idx[np.all(xb @ ct == d, axis=1)]
        if hits.size:
            if limit > 0 and count + hits.size >= limit:
                hits = hits[: limit - count]
                found.append(hits)
                count += hits.size
                break
            found.append(hits)
            count += hits.size
    ranks = np.concatenate(found) if found else np.empty(0, dtype=np.int64)
    return count, ranks


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

def energy_grad(p: Prepared, x: np.ndarray, g: np.ndarray) -> float:
    """Energy at ``x``; writes the gradient into ``g``."""
    if _backend == "numba":
        return float(_energy_grad_nb(p.cf, p.coef, p.wbin, p.inv_s, p.d, x, g))
    return _energy_grad_np(p, x, g)


def impulse(g: np.ndarray, x: np.ndarray, out: np.ndarray) -> int:
    """Impulse for gradient ``g`` at ``x`` written to ``out``.

    Returns the filter exponent used, or -1 when the filtered inward gradient
    is identically zero and a random direction is required.
    """
    if _backend == "numba":
        return int(_impulse_nb(g, x, out))
    return _impulse_np(g, x, out)


def run_segment(p: Prepared, x, g, istate, fstate, max_iters, step, l0, eps_trap,
                escape, do_clamp, lo, hi, tr_k, tr_ev, imp_t, imp_x, imp_v) -> int:
    """Advance the Euler iteration in place until an event needs the caller.

    Stops on a verified solution, budget exhaustion, divergence, or an escape
    that needs random numbers (randomize, or an impulse with no direction).
    """
    if _backend == "numba":
        return int(_segment_nb(p.cf, p.coef, p.wbin, p.inv_s, p.d, p.ci, p.di, x, g,
                               istate, fstate, max_iters, step, l0, eps_trap, escape,
                               do_clamp, lo, hi, tr_k, tr_ev, imp_t, imp_x, imp_v))
    with np.errstate(over="ignore", invalid="ignore"):  # divergence is reported, not warned
        return _segment_np(p, x, g, istate, fstate, max_iters, step, l0, eps_trap,
                           escape, do_clamp, lo, hi, tr_k, tr_ev, imp_t, imp_x, imp_v)


def gray_search(c: np.ndarray, d: np.ndarray, limit: int = 0) -> tuple[int, np.ndarray]:
    """Solutions of ``C x = d`` over {0,1}^n as sorted Gray ranks, plus the count."""
    c = np.ascontiguousarray(c, dtype=np.int64)
    d = np.ascontiguousarray(d, dtype=np.int64)
    if _backend != "numba":
        return _gray_np(c, d, limit)
    cap = limit if limit > 0 else 1024
    out = np.empty(cap, dtype=np.int64)
    count = int(_gray_nb(c, d, limit, out))
    if count > cap:
        out = np.empty(count, dtype=np.int64)
        count = int(_gray_nb(c, d, limit, out))
    return count, out[:count].copy()
