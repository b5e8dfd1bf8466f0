"""Batch studies: success-rate grids, time-to-solution, basin size and basin location.

Every random draw is seeded from ``(base_seed, M, N, R, trial, purpose)``
through :class:`numpy.random.SeedSequence`.  Any cell or trial can therefore
be rerun alone, and results do not depend on the worker count.
"""
from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import GenSpec, Instance, generate_planted
from .dynamics import NumericalDivergenceError, Solver, SolverConfig
from .stats import pearson_matrix, t_test_one_sample

__all__ = [
    "derive_seed",
    "planted_trial",
    "GridSpec",
    "CellResult",
    "GridReport",
    "run_success_grid",
    "TTSReport",
    "run_time_to_solution",
    "BasinEstimate",
    "estimate_basin",
    "TrialLocation",
    "LocationReport",
    "locate_basin",
    "location_from_points",
    "FULL_GRID",
]

# purposes mixed into seed derivation
_INSTANCE, _SOLVER, _POINTS = 0, 1, 2

FULL_GRID = dict(
    m_values=(1, 2, 3, 5, 8, 10, 15),
    n_values=(3, 5, 8, 10, 12, 15),
    r_values=(1, 2, 3, 5, 10, 15),
)


def derive_seed(base_seed: int, *key: int) -> int:
    ss = np.random.SeedSequence(int(base_seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def planted_trial(base_seed: int, m: int, n: int, r: int, trial: int) -> tuple[Instance, np.ndarray]:
    return generate_planted(GenSpec(m, n, r, derive_seed(base_seed, m, n, r, trial, _INSTANCE)))


def _map(fn, items, threads: int):
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _solver_cfg(base: SolverConfig, seed: int) -> SolverConfig:
    return base.with_(seed=seed)


# ---------------------------------------------------------------------------
# success-rate grid
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridSpec:
    m_values: tuple[int, ...]
    n_values: tuple[int, ...]
    r_values: tuple[int, ...]
    trials: int = 200
    max_iters: int = 1000
    escape: str = "impulse"
    base_seed: int = 0
    step: float = 1.0
    l0: float = 1e-4

    def __post_init__(self):
        for name in ("m_values", "n_values", "r_values"):
            vals = tuple(int(v) for v in getattr(self, name))
            if not vals or min(vals) < 1:
                raise ValueError(f"{name} must be a non-empty list of positive integers")
            object.__setattr__(self, name, vals)
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        SolverConfig(step=self.step, max_iters=self.max_iters, l0=self.l0, escape=self.escape)

    def cells(self) -> list[tuple[int, int, int]]:
        return [(m, n, r) for m in self.m_values for n in self.n_values for r in self.r_values]

    def solver_config(self) -> SolverConfig:
        return SolverConfig(step=self.step, max_iters=self.max_iters, l0=self.l0, escape=self.escape)


@dataclass(frozen=True)
class CellResult:
    m: int
    n: int
    r: int
    trials: int
    solved: int
    diverged: int
    mean_iterations_solved: float | None

    @property
    def success_rate(self) -> float:
        return self.solved / self.trials


@dataclass(frozen=True)
class GridReport:
    spec: GridSpec
    cells: list[CellResult]

    def rate(self, m: int, n: int, r: int) -> float:
        for c in self.cells:
            if (c.m, c.n, c.r) == (m, n, r):
                return c.success_rate
        raise KeyError((m, n, r))

    def to_dict(self) -> dict:
        out: dict = {"spec": asdict(self.spec), "cells": {}}
        for c in self.cells:
            out["cells"].setdefault(f"M={c.m}", {}).setdefault(f"N={c.n}", {})[f"R={c.r}"] = {
                **asdict(c), "success_rate": c.success_rate,
            }
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["M", "N", "R", "escape", "trials", "solved", "diverged", "success_rate"])
        for c in self.cells:
            w.writerow([c.m, c.n, c.r, self.spec.escape, c.trials, c.solved, c.diverged,
                        repr(c.success_rate)])
        return buf.getvalue()


def _grid_trial(args):
    spec, cfg, (m, n, r), trial = args
    inst, _ = planted_trial(spec.base_seed, m, n, r, trial)
    try:
        res = Solver(inst).run(_solver_cfg(cfg, derive_seed(spec.base_seed, m, n, r, trial, _SOLVER)))
    except NumericalDivergenceError:
        return False, True, 0
    return res.solved, False, res.iterations


def run_success_grid(spec: GridSpec, threads: int = 1) -> GridReport:
    """Solve ``spec.trials`` planted instances per (M, N, R) cell."""
    cfg = spec.solver_config()
    tasks = [(spec, cfg, cell, t) for cell in spec.cells() for t in range(spec.trials)]
    outcomes = _map(_grid_trial, tasks, threads)
    cells = []
    for i, (m, n, r) in enumerate(spec.cells()):
        chunk = outcomes[i * spec.trials:(i + 1) * spec.trials]
        its = [it for ok, _, it in chunk if ok]
        cells.append(CellResult(
            m, n, r, spec.trials,
            solved=len(its),
            diverged=sum(div for _, div, _ in chunk),
            mean_iterations_solved=float(np.mean(its)) if its else None,
        ))
    return GridReport(spec, cells)


# ---------------------------------------------------------------------------
# time-to-solution
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TTSReport:
    """Iterations to solution; unsolved trials are right-censored at ``budget``."""

    m: int
    n: int
    r: int
    trials: int
    budget: int
    iterations: np.ndarray  # per trial; == budget for unsolved
    solved: np.ndarray  # bool per trial
    bin_edges: np.ndarray
    counts: np.ndarray

    @property
    def n_unsolved(self) -> int:
        return int((~self.solved).sum())

    @property
    def median(self) -> float:
        """Median over all trials, unsolved counted at the budget."""
        return float(np.median(self.iterations))

    @property
    def median_solved(self) -> float | None:
        return float(np.median(self.iterations[self.solved])) if self.solved.any() else None

    @property
    def censored_mean(self) -> float:
        """Lower bound on the true mean: unsolved trials counted at the budget."""
        return float(self.iterations.mean())

    def cumulative(self, times=None) -> tuple[np.ndarray, np.ndarray]:
        """Fraction of trials solved within ``t`` iterations, sampled at ``times``."""
        if times is None:
            times = self.bin_edges
        times = np.asarray(times)
        solved_its = np.sort(self.iterations[self.solved])
        frac = np.searchsorted(solved_its, times, side="right") / self.trials
        return times, frac

    def summary(self) -> dict:
        return {
            "M": self.m, "N": self.n, "R": self.r, "trials": self.trials, "budget": self.budget,
            "solved": int(self.solved.sum()), "unsolved": self.n_unsolved,
            "median": self.median, "median_solved": self.median_solved,
            "censored_mean": self.censored_mean,
            "censored_mean_note": "unsolved trials counted at the budget; true mean is larger"
            if self.n_unsolved else "no censoring",
        }

    def to_dict(self) -> dict:
        t, frac = self.cumulative()
        return {
            "summary": self.summary(),
            "histogram": [
                {"bin_lo": float(lo), "bin_hi": float(hi), "count": int(c)}
                for lo, hi, c in zip(self.bin_edges[:-1], self.bin_edges[1:], self.counts)
            ],
            "cumulative": {"t": t.tolist(), "fraction_solved": frac.tolist()},
            "trials": [
                {"trial": i, "iterations": int(it), "solved": bool(s)}
                for i, (it, s) in enumerate(zip(self.iterations, self.solved))
            ],
        }

    def histogram_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bin_lo", "bin_hi", "count"])
        for lo, hi, c in zip(self.bin_edges[:-1], self.bin_edges[1:], self.counts):
            w.writerow([repr(float(lo)), repr(float(hi)), int(c)])
        return buf.getvalue()

    def cumulative_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "fraction_solved"])
        for t, f in zip(*self.cumulative()):
            w.writerow([repr(float(t)), repr(float(f))])
        return buf.getvalue()

    def trials_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["trial", "iterations", "solved"])
        for i, (it, s) in enumerate(zip(self.iterations, self.solved)):
            w.writerow([i, int(it), int(s)])
        return buf.getvalue()


def run_time_to_solution(m: int, n: int, r: int, trials: int = 500, budget: int = 2000,
                         bins: int = 100, base_seed: int = 0, escape: str = "impulse",
                         step: float = 1.0, l0: float = 1e-4, threads: int = 1) -> TTSReport:
    if trials < 1 or budget < 1 or bins < 1:
        raise ValueError("trials, budget and bins must be >= 1")
    cfg = SolverConfig(step=step, max_iters=budget, l0=l0, escape=escape)

    def one(trial):
        inst, _ = planted_trial(base_seed, m, n, r, trial)
        try:
            res = Solver(inst).run(_solver_cfg(cfg, derive_seed(base_seed, m, n, r, trial, _SOLVER)))
        except NumericalDivergenceError:
            return budget, False
        return (res.iterations, True) if res.solved else (budget, False)

    out = _map(one, range(trials), threads)
    its = np.array([o[0] for o in out], dtype=np.int64)
    ok = np.array([o[1] for o in out], dtype=bool)
    edges = np.linspace(0.0, float(budget), bins + 1)
    counts, _ = np.histogram(its[ok], bins=edges)
    return TTSReport(m, n, r, trials, budget, its, ok, edges, counts)


# ---------------------------------------------------------------------------
# basin of attraction
# ---------------------------------------------------------------------------

def _cast_points(base_seed: int, m: int, n: int, r: int, trial: int, points: int,
                 budget: int, step: float) -> tuple[Instance, np.ndarray, np.ndarray]:
    """Plain descent (no escapes) from ``points`` uniform starts on one planted instance.

    Returns the instance, the start points, and which starts reached a solution.
    """
    inst, _ = planted_trial(base_seed, m, n, r, trial)
    rng = np.random.default_rng(derive_seed(base_seed, m, n, r, trial, _POINTS))
    starts = rng.random((points, n))
    solver = Solver(inst)
    cfg = SolverConfig(step=step, max_iters=budget, escape="none")
    hit = np.zeros(points, dtype=bool)
    for i in range(points):
        try:
            hit[i] = solver.run(cfg, x0=starts[i]).solved
        except NumericalDivergenceError:
            hit[i] = False
    return inst, starts, hit


@dataclass(frozen=True)
class BasinEstimate:
    condition: tuple[int, int, int]
    trials: int
    points_per_trial: int
    per_trial_fraction: np.ndarray = field(repr=False)

    @property
    def basin_fraction(self) -> float:
        return float(self.per_trial_fraction.mean())

    @property
    def ratio_vs_discrete(self) -> float:
        return self.basin_fraction * 2.0 ** self.condition[1]

    @property
    def standard_error(self) -> float:
        f = self.per_trial_fraction
        return float(f.std(ddof=1) / np.sqrt(f.size)) if f.size > 1 else float("nan")

    def to_dict(self) -> dict:
        m, n, r = self.condition
        return {
            "M": m, "N": n, "R": r,
            "trials": self.trials, "points_per_trial": self.points_per_trial,
            "basin_fraction": self.basin_fraction,
            "ratio_vs_discrete": self.ratio_vs_discrete,
            "discrete_probability": 2.0 ** -n,
            "standard_error": self.standard_error,
            "per_trial_fraction": self.per_trial_fraction.tolist(),
        }

    def trials_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["trial", "basin_fraction"])
        for i, f in enumerate(self.per_trial_fraction):
            w.writerow([i, repr(float(f))])
        return buf.getvalue()


def estimate_basin(m: int, n: int, r: int, trials: int = 100, points: int = 100,
                   budget: int = 1000, base_seed: int = 0, step: float = 1.0,
                   threads: int = 1) -> BasinEstimate:
    """Fraction of the unit cube whose unescaped flow reaches a solution."""
    if trials < 1 or points < 1:
        raise ValueError("trials and points must be >= 1")

    def one(trial):
        return _cast_points(base_seed, m, n, r, trial, points, budget, step)[2].mean()

    frac = np.array(_map(one, range(trials), threads), dtype=np.float64)
    return BasinEstimate((m, n, r), trials, points, frac)


# ---------------------------------------------------------------------------
# basin location
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrialLocation:
    trial: int
    in_basin: int
    skipped: bool
    means: list[float] | None = None
    sds: list[float] | None = None
    p_values: list[float] | None = None
    deviates: list[bool] | None = None
    correlated_pairs: int = 0


def location_from_points(trial: int, pts: np.ndarray, alpha_sig: float = 0.05,
                         corr_threshold: float = 0.75) -> TrialLocation:
    """t-test each coordinate of in-basin start points against 0.5 and screen pair correlations."""
    k = pts.shape[0]
    if k < 3:
        return TrialLocation(trial, k, True)
    pvals = [t_test_one_sample(pts[:, j], 0.5)[1] for j in range(pts.shape[1])]
    corr = pearson_matrix(pts)
    iu = np.triu_indices(pts.shape[1], k=1)
    return TrialLocation(
        trial, k, False,
        means=pts.mean(axis=0).tolist(),
        sds=pts.std(axis=0, ddof=1).tolist(),
        p_values=pvals,
        deviates=[p < alpha_sig for p in pvals],
        correlated_pairs=int((np.abs(corr[iu]) > corr_threshold).sum()),
    )


@dataclass(frozen=True)
class LocationReport:
    condition: tuple[int, int, int]
    trials: int
    points_per_trial: int
    alpha_sig: float
    per_trial: list[TrialLocation]

    @property
    def tested(self) -> list[TrialLocation]:
        return [t for t in self.per_trial if not t.skipped]

    @property
    def skipped(self) -> int:
        return self.trials - len(self.tested)

    @property
    def per_dimension_deviation_count(self) -> list[int]:
        n = self.condition[1]
        return [sum(t.deviates[j] for t in self.tested) for j in range(n)]

    @property
    def deviation_fraction(self) -> list[float]:
        """Per-dimension deviation count over trials that were tested."""
        denom = len(self.tested)
        return [c / denom if denom else float("nan") for c in self.per_dimension_deviation_count]

    @property
    def correlated_pair_trials(self) -> int:
        return sum(t.correlated_pairs > 0 for t in self.tested)

    def to_dict(self) -> dict:
        m, n, r = self.condition
        return {
            "M": m, "N": n, "R": r,
            "trials": self.trials, "points_per_trial": self.points_per_trial,
            "alpha_sig": self.alpha_sig,
            "tested_trials": len(self.tested), "skipped_trials": self.skipped,
            "per_dimension_deviation_count": self.per_dimension_deviation_count,
            "deviation_fraction": self.deviation_fraction,
            "correlated_pair_trials": self.correlated_pair_trials,
            "per_trial": [asdict(t) for t in self.per_trial],
        }

    def trials_csv(self) -> str:
        n = self.condition[1]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["trial", "in_basin", "skipped", "correlated_pairs"]
                   + [f"mean_x{j + 1}" for j in range(n)]
                   + [f"sd_x{j + 1}" for j in range(n)]
                   + [f"p_x{j + 1}" for j in range(n)])

        def cols(vals):
            return [repr(v) for v in vals] if vals is not None else [""] * n

        for t in self.per_trial:
            w.writerow([t.trial, t.in_basin, int(t.skipped), t.correlated_pairs]
                       + cols(t.means) + cols(t.sds) + cols(t.p_values))
        return buf.getvalue()


def locate_basin(m: int, n: int, r: int, trials: int = 200, points: int = 5000,
                 alpha_sig: float = 0.05, budget: int = 1000, base_seed: int = 0,
                 step: float = 1.0, threads: int = 1) -> LocationReport:
    """Where in the cube does the solution's basin sit, dimension by dimension?"""
    if not 0 < alpha_sig < 1:
        raise ValueError("alpha_sig must be in (0, 1)")

    def one(trial):
        _, starts, hit = _cast_points(base_seed, m, n, r, trial, points, budget, step)
        return location_from_points(trial, starts[hit], alpha_sig)

    return LocationReport((m, n, r), trials, points, alpha_sig, _map(one, range(trials), threads))


def dumps(obj) -> str:
    """Deterministic JSON for reports."""
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"
