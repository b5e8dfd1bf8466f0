"""Euler-integrated gradient flow with trap detection and escape.

Each iteration evaluates ``K`` and its gradient at ``x``.  A trap is declared
when the relative energy change ``(K_t - K_{t-1}) / (K_t * step)`` is within
``l0`` of zero while ``K_t`` is still above ``eps_trap``.  On a trap the
configured escape fires:

* ``impulse``: ``x += step * (-grad + I)`` where ``I`` is the inward-signed
  gradient, filtered until no component exceeds 1, scaled to mean |I_j| = 1/2;
* ``randomize``: ``x`` is redrawn uniformly from the unit cube;
* ``none``: plain descent.

After every iteration ``x`` is rounded to the nearest binary vector and checked
against ``C x = d`` in integer arithmetic; that check alone decides success.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from typing import Literal

import numpy as np

from . import kernels
from .core import Instance, SignedInstance
from .energy import gradient as energy_gradient, total_energy

__all__ = [
    "EPS_TRAP",
    "SolverConfig",
    "SolveResult",
    "State",
    "Trace",
    "NumericalDivergenceError",
    "detect_trap",
    "sgn",
    "ins",
    "filter_matrix",
    "filter_apply",
    "impulse_vector",
    "random_impulse",
    "step",
    "Solver",
    "solve",
]

EPS_TRAP = 1e-9

Escape = Literal["impulse", "randomize", "none"]
_ESCAPE_CODES = {"none": kernels.ESC_NONE, "impulse": kernels.ESC_IMPULSE, "randomize": kernels.ESC_RANDOMIZE}
EVENT_NAMES = ("step", "impulse", "randomize")


class NumericalDivergenceError(RuntimeError):
    def __init__(self, message: str, trace: "Trace | None" = None):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class SolverConfig:
    step: float = 1.0
    max_iters: int = 1000
    l0: float = 1e-4
    escape: Escape = "impulse"
    clamp: tuple[float, float] | None = None
    seed: int = 0
    init: np.ndarray | None = None  # explicit start point; None draws uniform from seed
    eps_trap: float = EPS_TRAP
    record_trace: bool = False

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("step must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.l0 > 0:
            raise ValueError("l0 must be positive")
        if self.escape not in _ESCAPE_CODES:
            raise ValueError(f"escape must be one of {sorted(_ESCAPE_CODES)}, got {self.escape!r}")
        if self.clamp is not None and not self.clamp[0] < self.clamp[1]:
            raise ValueError("clamp must be (lo, hi) with lo < hi")

    def with_(self, **kw) -> "SolverConfig":
        return replace(self, **kw)


@dataclass(frozen=True)
class Trace:
    """Per-iteration energies and events, plus every fired impulse."""

    k: np.ndarray
    event: np.ndarray
    impulse_t: np.ndarray
    impulse_x: np.ndarray
    impulse: np.ndarray

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.k.shape[0])

    def rows(self):
        for t, (k, ev) in enumerate(zip(self.k, self.event)):
            yield t, float(k), EVENT_NAMES[int(ev)]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "K", "event"])
            for t, k, ev in self.rows():
                w.writerow([t, repr(k), ev])

    def __eq__(self, other):
        if not isinstance(other, Trace):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, f), getattr(other, f))
            for f in ("k", "event", "impulse_t", "impulse_x", "impulse")
        )


@dataclass(frozen=True, eq=False)
class SolveResult:
    status: Literal["solved", "budget-exhausted"]
    solution: np.ndarray | None
    iterations: int
    escapes_fired: int
    excursions: int
    x_final: np.ndarray
    trace: Trace | None = None

    @property
    def solved(self) -> bool:
        return self.status == "solved"

    def __eq__(self, other):
        if not isinstance(other, SolveResult):
            return NotImplemented
        same_sol = (self.solution is None and other.solution is None) or (
            self.solution is not None
            and other.solution is not None
            and np.array_equal(self.solution, other.solution)
        )
        return (
            self.status == other.status
            and same_sol
            and self.iterations == other.iterations
            and self.escapes_fired == other.escapes_fired
            and self.excursions == other.excursions
            and np.array_equal(self.x_final, other.x_final)
            and self.trace == other.trace
        )


@dataclass(frozen=True)
class State:
    x: np.ndarray
    t: int = 0
    k_prev: float | None = None

    def __post_init__(self):
        if not np.all(np.isfinite(self.x)):
            raise NumericalDivergenceError(f"non-finite state at t={self.t}")


def detect_trap(k_prev: float | None, k_now: float, dt: float,
                l0: float = 1e-4, eps_trap: float = EPS_TRAP) -> bool:
    """True when the relative energy change has stalled above the zero level."""
    if k_prev is None or not k_now > eps_trap:
        return False
    return abs((k_now - k_prev) / (k_now * dt)) <= l0


def sgn(v) -> np.ndarray:
    """Sign with ``sgn(0) = +1``."""
    return np.where(np.asarray(v, dtype=np.float64) >= 0.0, 1.0, -1.0)


def ins(grad, x) -> np.ndarray:
    """Flip components of ``grad`` so each points toward the cube centre."""
    grad = np.asarray(grad, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if grad.shape != x.shape:
        raise ValueError(f"length mismatch: {grad.shape} vs {x.shape}")
    return -sgn(grad) * sgn(x - 0.5) * grad


def filter_matrix(n: int) -> np.ndarray:
    if n == 1:
        return np.array([[0.5]])
    f = np.full((n, n), 0.5 / (n - 1))
    np.fill_diagonal(f, 0.5)
    return f


def filter_apply(v, alpha: int) -> np.ndarray:
    """``F^alpha v`` without forming ``F``.

    ``F`` keeps the all-ones direction and shrinks its complement by
    ``(n - 2) / (2 (n - 1))``, so ``F^a v = mean(v) + lam^a (v - mean(v))``.
    """
    v = np.asarray(v, dtype=np.float64)
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    n = v.shape[0]
    if n == 1:
        return v * 0.5**alpha
    mean = v.mean()
    lam = 0.5 * (n - 2) / (n - 1)
    return mean + lam**alpha * (v - mean)


def impulse_vector(grad, x, rng: np.random.Generator | None = None) -> np.ndarray:
    """Escape impulse for gradient ``grad`` at ``x``.

    The gradient magnitudes are smoothed by the smallest power of ``F`` that
    keeps every component below 1 after scaling the mean magnitude to 1/2,
    then each component is signed toward the cube centre (``ins``).  A zero
    gradient has no direction; a random inward one is drawn from ``rng``.
    """
    grad = np.ascontiguousarray(grad, dtype=np.float64)
    x = np.ascontiguousarray(x, dtype=np.float64)
    if grad.shape != x.shape:
        raise ValueError(f"length mismatch: {grad.shape} vs {x.shape}")
    out = np.empty_like(grad)
    if kernels.impulse(grad, x, out) >= 0:
        return out
    if rng is None:
        raise ValueError("zero gradient: an rng is required for a random impulse")
    return random_impulse(x, rng)


def random_impulse(x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Random inward direction, normalized like a gradient impulse."""
    out = np.empty(x.shape[0])
    while kernels.scale_filtered(rng.random(x.shape[0]), out) < 0:
        pass
    return -sgn(x - 0.5) * out


def step(si: SignedInstance, state: State, cfg: SolverConfig,
         rng: np.random.Generator | None = None) -> tuple[State, str]:
    """One Euler iteration on the reference energy; returns the new state and event name.

    ``rng`` is needed only for the randomize escape and degenerate impulses.
    """
    x = np.asarray(state.x, dtype=np.float64)
    k = total_energy(si, x).k_total
    g = energy_gradient(si, x)
    trap = detect_trap(state.k_prev, k, cfg.step, cfg.l0, cfg.eps_trap)
    event = "step"
    if trap and cfg.escape == "randomize":
        if rng is None:
            raise ValueError("randomize escape needs an rng")
        x_new = rng.random(x.shape[0])
        event = "randomize"
    elif trap and cfg.escape == "impulse":
        x_new = x + cfg.step * (impulse_vector(g, x, rng) - g)
        event = "impulse"
    else:
        x_new = x - cfg.step * g
    if cfg.clamp is not None:
        x_new = np.clip(x_new, *cfg.clamp)
    return State(x_new, state.t + 1, k), event


class Solver:
    """Reusable solver bound to one instance (caches the kernel arrays)."""

    def __init__(self, inst: Instance):
        self.inst = inst
        self.prepared = kernels.prepare(inst)

    def run(self, cfg: SolverConfig, x0=None) -> SolveResult:
        n = self.inst.n
        rng = np.random.default_rng(cfg.seed)
        start = x0 if x0 is not None else cfg.init
        if start is not None:
            x = np.array(start, dtype=np.float64)
            if x.shape != (n,):
                raise ValueError(f"initial point must have length {n}")
        else:
            x = rng.random(n)
        g = np.zeros(n)
        istate = np.zeros(4, dtype=np.int64)
        fstate = np.array([np.nan, np.nan])
        size = cfg.max_iters if cfg.record_trace else 0
        tr_k = np.zeros(size)
        tr_ev = np.zeros(size, dtype=np.int8)
        imp_t = np.zeros(size, dtype=np.int64)
        imp_x = np.zeros((size, n))
        imp_v = np.zeros((size, n))
        do_clamp = cfg.clamp is not None
        lo, hi = cfg.clamp if do_clamp else (0.0, 1.0)
        escape = _ESCAPE_CODES[cfg.escape]
        p = self.prepared

        def trace() -> Trace | None:
            if not cfg.record_trace:
                return None
            t, li = int(istate[kernels.I_T]), int(istate[kernels.I_LOGGED])
            return Trace(tr_k[:t].copy(), tr_ev[:t].copy(),
                         imp_t[:li].copy(), imp_x[:li].copy(), imp_v[:li].copy())

        while True:
            status = kernels.run_segment(p, x, g, istate, fstate, cfg.max_iters, cfg.step,
                                         cfg.l0, cfg.eps_trap, escape, do_clamp, lo, hi,
                                         tr_k, tr_ev, imp_t, imp_x, imp_v)
            if status in (kernels.SOLVED, kernels.BUDGET):
                break
            if status == kernels.DIVERGED:
                raise NumericalDivergenceError(
                    f"state diverged at t={int(istate[kernels.I_T])}", trace())
            status = self._random_event(status, x, g, istate, fstate, rng, cfg,
                                        tr_k, tr_ev, imp_t, imp_x, imp_v)
            if status is not None:
                if status == kernels.DIVERGED:
                    raise NumericalDivergenceError(
                        f"state diverged at t={int(istate[kernels.I_T])}", trace())
                break

        solution = None
        if status == kernels.SOLVED:
            solution = (x >= 0.5).astype(np.int64)
            if not self.inst.is_solution(solution):  # pragma: no cover - kernel bug guard
                raise AssertionError("kernel reported a solution that fails the exact check")
        return SolveResult(
            status="solved" if solution is not None else "budget-exhausted",
            solution=solution,
            iterations=int(istate[kernels.I_T]),
            escapes_fired=int(istate[kernels.I_ESCAPES]),
            excursions=int(istate[kernels.I_EXCURSIONS]),
            x_final=x.copy(),
            trace=trace(),
        )

    def _random_event(self, status, x, g, istate, fstate, rng, cfg,
                      tr_k, tr_ev, imp_t, imp_x, imp_v):
        """Finish an iteration the kernel handed back; returns a final status or None."""
        t = int(istate[kernels.I_T])
        k = float(fstate[kernels.F_KNOW])
        if status == kernels.NEED_RANDOMIZE:
            x[:] = rng.random(x.shape[0])
            event = kernels.EV_RANDOMIZE
        else:
            imp = random_impulse(x, rng)
            if imp_v.shape[0]:
                li = int(istate[kernels.I_LOGGED])
                imp_t[li], imp_x[li], imp_v[li] = t, x, imp
                istate[kernels.I_LOGGED] = li + 1
            x += cfg.step * (imp - g)
            event = kernels.EV_IMPULSE
        istate[kernels.I_ESCAPES] += 1
        if cfg.clamp is not None:
            np.clip(x, *cfg.clamp, out=x)
        if not np.all(np.isfinite(x)):
            return kernels.DIVERGED
        if np.any((x < 0.0) | (x > 1.0)):
            istate[kernels.I_EXCURSIONS] += 1
        if tr_k.shape[0]:
            tr_k[t] = k
            tr_ev[t] = event
        istate[kernels.I_T] = t + 1
        fstate[kernels.F_KPREV] = k
        if self.inst.is_solution((x >= 0.5).astype(np.int64)):
            return kernels.SOLVED
        if t + 1 >= cfg.max_iters:
            return kernels.BUDGET
        return None


def solve(inst: Instance, cfg: SolverConfig | None = None) -> SolveResult:
    """Run the flow on ``inst`` from a seeded uniform start (or ``cfg.init``)."""
    return Solver(inst).run(cfg or SolverConfig())
