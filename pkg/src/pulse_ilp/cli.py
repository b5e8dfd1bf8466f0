"""Command-line front end: ``pulse-ilp {solve,gen,bench,tts,basin,locate,replay}``.

Exit codes: 0 solved / success, 1 no solution within budget, 2 usage or input error.
Experiment commands write JSON + CSV reports and a ``manifest.json`` that
``pulse-ilp replay`` re-executes to reproduce the same files.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

from . import __version__, kernels
from .core import GenSpec, InstanceError, generate_planted, load_instance, save_instance
from .dynamics import NumericalDivergenceError, SolverConfig, solve
from .experiments import (
    FULL_GRID,
    GridSpec,
    dumps,
    estimate_basin,
    locate_basin,
    run_success_grid,
    run_time_to_solution,
)
from .oracle import OracleLimitError, exhaustive_solve

EXIT_OK, EXIT_UNSOLVED, EXIT_USAGE = 0, 1, 2
SEED_ENV = "PULSE_ILP_SEED"


class UsageError(Exception):
    pass


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(t) for t in text.replace(" ", "").split(",") if t]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _escape_list(text: str) -> list[str]:
    vals = [t for t in text.replace(" ", "").split(",") if t]
    bad = [v for v in vals if v not in ("impulse", "randomize", "none")]
    if bad or not vals:
        raise argparse.ArgumentTypeError(f"escape must be impulse, randomize or none; got {text!r}")
    return vals


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise SystemExit(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _write(path: Path, text: str) -> str:
    path.write_text(text, encoding="utf-8", newline="\n")
    return path.name


# ---------------------------------------------------------------------------
# experiment runners: params dict -> files (shared by the subcommands and replay)
# ---------------------------------------------------------------------------

def _run_bench(p: dict, out: Path, threads: int) -> list[str]:
    reports = {}
    for esc in p["escape"]:
        spec = GridSpec(p["m_list"], p["n_list"], p["r_list"], trials=p["trials"],
                        max_iters=p["max_iters"], escape=esc, base_seed=p["seed"],
                        step=p["step"], l0=p["l0"])
        reports[esc] = run_success_grid(spec, threads)
    doc = {esc: rep.to_dict() for esc, rep in reports.items()}
    if {"impulse", "randomize"} <= reports.keys():
        imp, rnd = reports["impulse"], reports["randomize"]
        doc["comparison"] = [
            {"M": a.m, "N": a.n, "R": a.r, "impulse": a.success_rate,
             "randomize": b.success_rate, "impulse_minus_randomize": a.success_rate - b.success_rate}
            for a, b in zip(imp.cells, rnd.cells)
        ]
    files = [_write(out / "report.json", dumps(doc))]
    header, *rows = next(iter(reports.values())).to_csv().splitlines()
    for rep in list(reports.values())[1:]:
        rows += rep.to_csv().splitlines()[1:]
    files.append(_write(out / "cells.csv", "\n".join([header, *rows]) + "\n"))
    return files


def _run_tts(p: dict, out: Path, threads: int) -> list[str]:
    rep = run_time_to_solution(p["m"], p["n"], p["r"], trials=p["trials"], budget=p["budget"],
                               bins=p["bins"], base_seed=p["seed"], escape=p["escape"][0],
                               step=p["step"], l0=p["l0"], threads=threads)
    return [
        _write(out / "report.json", dumps(rep.to_dict())),
        _write(out / "histogram.csv", rep.histogram_csv()),
        _write(out / "cumulative.csv", rep.cumulative_csv()),
        _write(out / "trials.csv", rep.trials_csv()),
    ]


def _run_basin(p: dict, out: Path, threads: int) -> list[str]:
    ests = [
        estimate_basin(m, n, r, trials=p["trials"], points=p["points"], budget=p["budget"],
                       base_seed=p["seed"], step=p["step"], threads=threads)
        for m in p["m_list"] for n in p["n_list"] for r in p["r_list"]
    ]
    rows = ["M,N,R,trials,points_per_trial,basin_fraction,ratio_vs_discrete,standard_error"]
    for e in ests:
        m, n, r = e.condition
        rows.append(f"{m},{n},{r},{e.trials},{e.points_per_trial},{e.basin_fraction!r},"
                    f"{e.ratio_vs_discrete!r},{e.standard_error!r}")
    return [
        _write(out / "report.json", dumps({"conditions": [e.to_dict() for e in ests]})),
        _write(out / "basin.csv", "\n".join(rows) + "\n"),
    ]


def _run_locate(p: dict, out: Path, threads: int) -> list[str]:
    rep = locate_basin(p["m"], p["n"], p["r"], trials=p["trials"], points=p["points"],
                       alpha_sig=p["sig_level"], budget=p["budget"], base_seed=p["seed"],
                       step=p["step"], threads=threads)
    return [
        _write(out / "report.json", dumps(rep.to_dict())),
        _write(out / "trials.csv", rep.trials_csv()),
    ]


_RUNNERS = {"bench": _run_bench, "tts": _run_tts, "basin": _run_basin, "locate": _run_locate}


def run_experiment(command: str, params: dict, out: Path, threads: int = 1,
                   argv: list[str] | None = None) -> dict:
    """Run one study, write its files and a manifest into ``out``; return the manifest."""
    out.mkdir(parents=True, exist_ok=True)
    backend = params.get("backend") or kernels.get_backend()
    t0 = time.perf_counter()
    with kernels.use_backend(backend):
        files = _RUNNERS[command](params, out, threads)
    manifest = {
        "command": command,
        "params": {**params, "backend": backend},
        "seed": params["seed"],
        "version": __version__,
        "threads": threads,
        "argv": argv,
        "duration_s": round(time.perf_counter() - t0, 3),
        "outputs": sorted(files) + ["manifest.json"],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                       encoding="utf-8")
    return manifest


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_solver_flags(p: argparse.ArgumentParser, escape_default: str, many: bool = False) -> None:
    if many:
        p.add_argument("--escape", type=_escape_list, default=_escape_list(escape_default),
                       help="comma-separated escape modes (impulse,randomize,none)")
    else:
        p.add_argument("--escape", choices=("impulse", "randomize", "none"), default=escape_default)
    p.add_argument("--step", type=float, default=1.0, help="Euler step length")
    p.add_argument("--l0", type=float, default=1e-4, help="trap detector threshold")
    p.add_argument("--seed", type=int, default=None, help=f"seed (default ${SEED_ENV} or 0)")


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--threads", type=int, default=1, help="worker threads (results do not change)")
    p.add_argument("--out", type=Path, default=None, help="output directory")
    p.add_argument("--backend", choices=kernels.available_backends(), default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pulse-ilp", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve one instance file")
    s.add_argument("instance", type=Path)
    _add_solver_flags(s, "impulse")
    s.add_argument("--max-iters", type=int, default=1000)
    s.add_argument("--clamp", action="store_true", help="project x onto [0,1]^N after each step")
    s.add_argument("--trace", type=Path, default=None, help="write the (t, K, event) trace CSV here")
    s.add_argument("--oracle", action="store_true", help="cross-check with exhaustive search")
    s.add_argument("--backend", choices=kernels.available_backends(), default=None)

    g = sub.add_parser("gen", help="generate a planted instance and its .sol sidecar")
    g.add_argument("--m", type=int, required=True)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--r", type=int, required=True)
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--out", type=Path, required=True)

    b = sub.add_parser("bench", help="success-rate grid over (M, N, R)")
    b.add_argument("--m-list", type=_int_list, default=[3, 5])
    b.add_argument("--n-list", type=_int_list, default=[5, 10])
    b.add_argument("--r-list", type=_int_list, default=[10])
    b.add_argument("--trials", type=int, default=50)
    b.add_argument("--max-iters", type=int, default=1000)
    b.add_argument("--full-grid", action="store_true",
                   help="the full 7x6x6 grid at 200 trials per cell (hours)")
    _add_solver_flags(b, "impulse,randomize", many=True)
    _add_run_flags(b)

    t = sub.add_parser("tts", help="time-to-solution distribution for one condition")
    t.add_argument("--m", type=int, default=3)
    t.add_argument("--n", type=int, default=5)
    t.add_argument("--r", type=int, default=10)
    t.add_argument("--trials", type=int, default=500)
    t.add_argument("--budget", type=int, default=2000)
    t.add_argument("--bins", type=int, default=100)
    _add_solver_flags(t, "impulse")
    _add_run_flags(t)

    e = sub.add_parser("basin", help="basin-of-attraction size vs 2^-N")
    e.add_argument("--m-list", type=_int_list, default=[3])
    e.add_argument("--n-list", type=_int_list, default=[5, 8])
    e.add_argument("--r-list", type=_int_list, default=[3, 5, 10])
    e.add_argument("--trials", type=int, default=100)
    e.add_argument("--points", type=int, default=100)
    e.add_argument("--budget", type=int, default=1000)
    _add_solver_flags(e, "none")
    _add_run_flags(e)

    lo = sub.add_parser("locate", help="per-dimension basin location tests")
    lo.add_argument("--m", type=int, default=3)
    lo.add_argument("--n", type=int, default=10)
    lo.add_argument("--r", type=int, default=10)
    lo.add_argument("--trials", type=int, default=50)
    lo.add_argument("--points", type=int, default=5000)
    lo.add_argument("--budget", type=int, default=1000)
    lo.add_argument("--sig-level", type=float, default=0.05)
    _add_solver_flags(lo, "none")
    _add_run_flags(lo)

    r = sub.add_parser("replay", help="re-run an experiment from its manifest.json")
    r.add_argument("manifest", type=Path)
    r.add_argument("--out", type=Path, default=None)
    r.add_argument("--threads", type=int, default=None)
    return ap


def _experiment_params(args) -> dict:
    cmd = args.command
    p = {"seed": args.seed if args.seed is not None else _default_seed(),
         "step": args.step, "l0": args.l0, "escape": args.escape if isinstance(args.escape, list)
         else [args.escape], "backend": args.backend}
    if cmd == "bench":
        if args.full_grid:
            p.update(m_list=list(FULL_GRID["m_values"]), n_list=list(FULL_GRID["n_values"]),
                     r_list=list(FULL_GRID["r_values"]), trials=200)
        else:
            p.update(m_list=args.m_list, n_list=args.n_list, r_list=args.r_list, trials=args.trials)
        p["max_iters"] = args.max_iters
    elif cmd == "tts":
        p.update(m=args.m, n=args.n, r=args.r, trials=args.trials, budget=args.budget, bins=args.bins)
    elif cmd == "basin":
        p.update(m_list=args.m_list, n_list=args.n_list, r_list=args.r_list, trials=args.trials,
                 points=args.points, budget=args.budget)
    elif cmd == "locate":
        p.update(m=args.m, n=args.n, r=args.r, trials=args.trials, points=args.points,
                 budget=args.budget, sig_level=args.sig_level)
    if cmd in ("basin", "locate") and p["escape"] != ["none"]:
        raise UsageError("basin studies use the unescaped flow; --escape must be none")
    for key in ("trials", "points", "budget", "bins", "max_iters"):
        if key in p and p[key] < 1:
            raise UsageError(f"--{key.replace('_', '-')} must be >= 1")
    if args.threads < 1:
        raise UsageError("--threads must be >= 1")
    return p


def _cmd_solve(args) -> int:
    inst = load_instance(args.instance)
    cfg = SolverConfig(step=args.step, max_iters=args.max_iters, l0=args.l0, escape=args.escape,
                       clamp=(0.0, 1.0) if args.clamp else None,
                       seed=args.seed if args.seed is not None else _default_seed(),
                       record_trace=args.trace is not None)
    with kernels.use_backend(args.backend or kernels.get_backend()):
        try:
            res = solve(inst, cfg)
        except NumericalDivergenceError as exc:
            if args.trace is not None and exc.trace is not None:
                exc.trace.to_csv(args.trace)
            print(json.dumps({"status": "diverged", "error": str(exc)}))
            return EXIT_UNSOLVED
    doc = {
        "status": res.status,
        "solution": res.solution.tolist() if res.solution is not None else None,
        "iterations": res.iterations,
        "escapes_fired": res.escapes_fired,
        "excursions": res.excursions,
        "seed": cfg.seed,
        "escape": cfg.escape,
    }
    if args.trace is not None:
        res.trace.to_csv(args.trace)
        doc["trace"] = str(args.trace)
    if args.oracle:
        orc = exhaustive_solve(inst)
        doc["oracle"] = {
            "count": orc.count,
            "solutions": orc.solutions.tolist(),
            "agrees": res.solution is None or orc.contains(res.solution),
        }
    print(json.dumps(doc))
    return EXIT_OK if res.solved else EXIT_UNSOLVED


def _cmd_gen(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    try:
        spec = GenSpec(args.m, args.n, args.r, seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    inst, planted = generate_planted(spec)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    save_instance(inst, args.out)
    sol = args.out.with_suffix(".sol")
    sol.write_text(" ".join(str(int(v)) for v in planted) + "\n", encoding="utf-8")
    print(json.dumps({"instance": str(args.out), "solution": str(sol), "seed": seed}))
    return EXIT_OK


def _cmd_replay(args) -> int:
    try:
        manifest = json.loads(args.manifest.read_text(encoding="utf-8"))
        command, params = manifest["command"], manifest["params"]
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot read manifest {args.manifest}: {exc}") from None
    if command not in _RUNNERS:
        raise UsageError(f"manifest command {command!r} is not an experiment")
    out = args.out or args.manifest.parent
    threads = args.threads if args.threads is not None else manifest.get("threads", 1)
    run_experiment(command, params, out, threads, manifest.get("argv"))
    print(json.dumps({"replayed": command, "out": str(out)}))
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        if args.command == "solve":
            return _cmd_solve(args)
        if args.command == "gen":
            return _cmd_gen(args)
        if args.command == "replay":
            return _cmd_replay(args)
        params = _experiment_params(args)
        out = args.out or Path("results") / args.command
        run_experiment(args.command, params, out, args.threads, argv)
        print(json.dumps({"command": args.command, "out": str(out)}))
        return EXIT_OK
    except (UsageError, InstanceError, OracleLimitError, ValueError, OSError) as exc:
        print(f"pulse-ilp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
