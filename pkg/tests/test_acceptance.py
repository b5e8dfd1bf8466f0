"""Exit criteria, one printed PASS/FAIL line each (see the summary section of the run)."""
import json

import numpy as np
import pytest

from pulse_ilp import kernels
from pulse_ilp.cli import main
from pulse_ilp.core import GenSpec, generate_planted, normalize_signs
from pulse_ilp.dynamics import Solver, SolverConfig, filter_apply, filter_matrix
from pulse_ilp.energy import EPS_K, finite_diff_gradient, gradient, total_energy
from pulse_ilp.experiments import (
    GridSpec,
    estimate_basin,
    locate_basin,
    planted_trial,
    run_success_grid,
    run_time_to_solution,
)
from pulse_ilp.oracle import exhaustive_solve

from conftest import record_criterion

pytestmark = pytest.mark.acceptance


def test_c01_gradient_matches_finite_differences():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        m, n, r = (int(v) for v in (rng.integers(1, 11), rng.integers(1, 16), rng.integers(1, 16)))
        inst, _ = generate_planted(GenSpec(m, n, r, int(rng.integers(2**31))))
        si = normalize_signs(inst)
        x = rng.random(n)
        fd = finite_diff_gradient(si, x, 1e-6)
        for g in (gradient(si, x), _kernel_grad(inst, x)):
            rel = np.abs(g - fd) / np.maximum(np.abs(fd), 1e-12)
            worst = max(worst, float(rel.max()))
    ok = worst < 1e-6
    record_criterion(1, "gradient vs central differences", ok,
                     f"max component relative error {worst:.2e} over 100 pairs (< 1e-6)")
    assert ok


def _kernel_grad(inst, x):
    g = np.empty(inst.n)
    kernels.energy_grad(kernels.prepare(inst), x, g)
    return g


def test_c02_energy_zero_exactly_on_solutions():
    bad = checked = 0
    for i in range(50):
        n = 4 + i % 9  # N in 4..12
        inst, _ = generate_planted(GenSpec(1 + i % 5, n, 1 + i % 10, 500 + i))
        si = normalize_signs(inst)
        xs = (np.arange(1 << n)[:, None] >> np.arange(n)) & 1
        feasible = np.all(xs @ inst.c.T == inst.d, axis=1)
        k = np.array([total_energy(si, x).k_total for x in xs])
        bad += int(np.sum(k[feasible] > EPS_K) + np.sum(k[~feasible] <= 0.0))
        checked += xs.shape[0]
    ok = bad == 0
    record_criterion(2, "energy characterization", ok,
                     f"{bad} violations over {checked} binary vectors in 50 instances")
    assert ok


def test_c03_solutions_are_in_oracle_set():
    conditions = [(m, n, r) for m in (1, 3, 5) for n in (5, 8, 10, 12, 15) for r in (3, 10)]
    solved = false_pos = trial = 0
    while solved < 500:
        m, n, r = conditions[trial % len(conditions)]
        inst, _ = planted_trial(7, m, n, r, trial)
        res = Solver(inst).run(SolverConfig(seed=trial))
        if res.solved:
            solved += 1
            false_pos += not exhaustive_solve(inst).contains(res.solution)
        trial += 1
    ok = false_pos == 0
    record_criterion(3, "solver soundness vs oracle", ok,
                     f"{false_pos} false positives in {solved} solved runs ({trial} attempted)")
    assert ok


def test_c04_impulse_contract_on_logged_events():
    events = l1_worst = 0
    inf_max = 0.0
    inward_bad = 0
    trial = 0
    while events < 1000:
        inst, _ = planted_trial(11, 3, 10, 10, trial)
        res = Solver(inst).run(SolverConfig(seed=trial, record_trace=True))
        for x, imp in zip(res.trace.impulse_x, res.trace.impulse):
            events += 1
            l1_worst = max(l1_worst, abs(np.abs(imp).mean() - 0.5))
            inf_max = max(inf_max, float(np.abs(imp).max()))
            mask = (x != 0.5) & (imp != 0)
            inward_bad += int(np.sum(np.sign(imp[mask]) != -np.sign(x[mask] - 0.5)))
        trial += 1
    ok = l1_worst <= 1e-12 and inf_max < 1 and inward_bad == 0
    record_criterion(4, "impulse contract", ok,
                     f"{events} events: |mean|I|-0.5| <= {l1_worst:.1e}, max|I| = {inf_max:.4f}, "
                     f"{inward_bad} outward components")
    assert ok


def test_c05_filter_closed_form():
    rng = np.random.default_rng(5)
    worst = 0.0
    for n in range(2, 9):
        f = filter_matrix(n)
        for alpha in range(5):
            fa = np.linalg.matrix_power(f, alpha)
            for _ in range(20):
                v = rng.normal(size=n) * 10
                worst = max(worst, float(np.abs(filter_apply(v, alpha) - fa @ v).max()))
    ok = worst < 1e-12
    record_criterion(5, "filter closed form", ok, f"max abs error {worst:.1e} (< 1e-12)")
    assert ok


@pytest.mark.slow
def test_c06_impulse_beats_randomization_on_grid():
    axes = dict(m_values=(3, 5, 8), n_values=(8, 10, 12), r_values=(5, 10), trials=100, max_iters=1000)
    imp = run_success_grid(GridSpec(**axes, escape="impulse"))
    rnd = run_success_grid(GridSpec(**axes, escape="randomize"))
    wins = sum(a.solved >= b.solved for a, b in zip(imp.cells, rnd.cells))
    tot_i = sum(c.solved for c in imp.cells)
    tot_r = sum(c.solved for c in rnd.cells)
    ok = wins >= 0.8 * len(imp.cells) and tot_i > tot_r
    record_criterion(6, "impulse vs randomization trend", ok,
                     f"impulse >= randomize in {wins}/{len(imp.cells)} cells; "
                     f"solved {tot_i} vs {tot_r} of {100 * len(imp.cells)}")
    assert ok


@pytest.mark.slow
def test_c07_time_to_solution_shape():
    rep = run_time_to_solution(3, 5, 10, trials=500, budget=2000)
    ok = 50 <= rep.median <= 400 and rep.median < rep.censored_mean
    record_criterion(7, "time-to-solution shape", ok,
                     f"median {rep.median:g} in [50, 400], censored mean {rep.censored_mean:.1f}, "
                     f"{rep.n_unsolved}/500 unsolved")
    assert ok


@pytest.mark.slow
def test_c08_basin_ratio():
    a = estimate_basin(3, 5, 3, trials=100, points=100)
    b = estimate_basin(3, 8, 10, trials=100, points=100)
    ok = a.ratio_vs_discrete > 5 and b.ratio_vs_discrete > 3
    record_criterion(8, "basin ratio vs 2^-N", ok,
                     f"(3,5,3) ratio {a.ratio_vs_discrete:.1f} (> 5); "
                     f"(3,8,10) ratio {b.ratio_vs_discrete:.1f} (> 3)")
    assert ok


def _location_bands(rep):
    frac = rep.deviation_fraction
    in_band = sum(0.5 <= f <= 0.95 for f in frac)
    tested = len(rep.tested)
    corr = rep.correlated_pair_trials / tested if tested else 1.0
    detail = (f"{in_band}/10 dims with deviation fraction in [0.5, 0.95] "
              f"(range {min(frac):.2f}-{max(frac):.2f}); correlated-pair trials "
              f"{rep.correlated_pair_trials}/{tested} = {corr:.0%} (<= 20%); {rep.skipped} skipped")
    return in_band >= 8 and corr <= 0.20, detail


@pytest.mark.slow
def test_c09_localization_bands():
    # 1000 casts leave ~20 in-basin points per trial: expected to miss the bands
    rep = locate_basin(3, 10, 10, trials=50, points=1000, alpha_sig=0.05)
    ok, detail = _location_bands(rep)
    record_criterion(9, "basin localization bands (50 x 1000)", ok, detail)
    assert ok


@pytest.mark.slow
def test_c09_localization_bands_at_5000_points():
    rep = locate_basin(3, 10, 10, trials=50, points=5000, alpha_sig=0.05)
    ok, detail = _location_bands(rep)
    record_criterion(9, "basin localization bands, companion run (50 x 5000)", ok, detail)
    assert ok


def _outputs(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.name != "manifest.json"}


def test_c10_manifest_replay_is_bit_exact(tmp_path, capsys):
    runs = {
        "bench": ["--m-list", "3,5", "--n-list", "5,8", "--r-list", "10", "--trials", "5"],
        "tts": ["--trials", "20", "--budget", "500", "--bins", "20"],
        "basin": ["--escape", "none", "--n-list", "5", "--r-list", "3", "--trials", "4", "--points", "25"],
        "locate": ["--escape", "none", "--n", "6", "--r", "3", "--trials", "4", "--points", "150"],
    }
    mismatches = []
    for cmd, args in runs.items():
        first = tmp_path / cmd
        assert main([cmd, *args, "--threads", "1", "--out", str(first)]) == 0
        manifest = json.loads((first / "manifest.json").read_text())
        for threads in ("1", "2", "4"):
            again = tmp_path / f"{cmd}-{threads}"
            assert main(["replay", str(first / "manifest.json"), "--out", str(again),
                         "--threads", threads]) == 0
            if _outputs(again) != _outputs(first):
                mismatches.append(f"{cmd}@{threads}")
        assert set(manifest["outputs"]) == set(_outputs(first)) | {"manifest.json"}
    capsys.readouterr()
    ok = not mismatches
    record_criterion(10, "manifest replay, any thread count", ok,
                     f"4 studies x threads 1/2/4: {len(mismatches)} mismatches {mismatches or ''}".rstrip())
    assert ok
