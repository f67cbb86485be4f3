"""Command-line front end.

Exit codes: 0 success, 1 runtime failure, 2 usage or parse error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import io as dio
from .energy import SingularityError, depth_energy
from .experiments import (
    EXPERIMENTS,
    depth_convergence,
    neighborhood_compare,
    ordering,
    parse_neighborhood,
    search_compare,
    write_csv,
)
from .lattice import GenerationError, is_feasible
from .localsearch import local_search
from .relax import RelaxSettings, relax
from .search import SearchSettings, run_search

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _depth(text: str) -> int:
    try:
        k = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"depth must be an integer, got {text!r}") from None
    if not 1 <= k <= 10:
        raise argparse.ArgumentTypeError(f"depth must lie in [1, 10], got {k}")
    return k


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {v}")
    return v


def _forcefield(path):
    return dio.load_forcefield(path) if path else dio.default_forcefield()


def _print_json(obj) -> None:
    sys.stdout.write(dio.dumps(obj))


def _warn_infeasible(s) -> None:
    if not is_feasible(s):
        print("warning: structure is not feasible (hard spheres overlap)", file=sys.stderr)


def cmd_energy(args) -> int:
    s = dio.load_structure(args.structure)
    ff = _forcefield(args.forcefield)
    _warn_infeasible(s)
    _print_json(depth_energy(s, ff, args.depth, conventional=args.conventional).to_dict())
    return EXIT_OK


def _relax_settings(args) -> RelaxSettings:
    return RelaxSettings(
        depth=args.depth,
        report_depth=args.report_depth,
        max_iters=args.max_iters,
        grad_tol=args.grad_tol,
    )


def cmd_relax(args) -> int:
    s = dio.load_structure(args.structure)
    ff = _forcefield(args.forcefield)
    _warn_infeasible(s)
    r = relax(s, ff, _relax_settings(args))
    if args.out:
        dio.save_structure(r.structure, args.out)
    _print_json(
        {
            "initial_energy": r.energy_trace[0],
            "final_energy": r.final_energy,
            "depth": args.depth,
            "iterations": r.iterations,
            "converged": r.converged,
            "max_gradient": r.max_gradient,
            "report": r.energy.to_dict(),
        }
    )
    return EXIT_OK


def cmd_local_search(args) -> int:
    s = dio.load_structure(args.structure)
    ff = _forcefield(args.forcefield)
    spec = parse_neighborhood(args.neighborhood, args.delta)
    if not is_feasible(s):
        raise UsageError(f"{args.structure}: local search needs a feasible start")
    ls = local_search(s, spec, ff, args.depth, args.max_steps)
    if args.out:
        dio.save_structure(ls.structure, args.out)
    _print_json(
        {
            "neighborhood": spec.label,
            "depth": args.depth,
            "steps": ls.steps,
            "energy_trace": ls.energy_trace,
            "final_energy": ls.energy,
        }
    )
    return EXIT_OK


def _search_settings(args, mode) -> SearchSettings:
    neighborhood = None
    if mode == "axes_bh":
        if args.delta is None:
            raise UsageError("axes_bh needs --delta")
        neighborhood = parse_neighborhood("axes", args.delta)
    return SearchSettings(
        mode=mode,
        seed=args.seed,
        patience=args.patience,
        max_relaxations=args.max_relaxations,
        neighborhood=neighborhood,
        relax=RelaxSettings(depth=args.depth, max_iters=args.max_iters),
        k_report=args.report_depth,
        target_energy=args.target,
    )


def cmd_search(args) -> int:
    cell, comp = dio.load_problem(args.problem)
    ff = _forcefield(args.forcefield)
    rec = run_search(cell, comp, None, ff, _search_settings(args, args.mode))
    text = rec.to_json()
    if args.out:
        Path(args.out).write_text(text)
    if args.csv:
        Path(args.csv).write_text(rec.to_csv())
    _print_json(
        {
            "mode": rec.mode,
            "seed": rec.seed,
            "relaxations": rec.relaxations,
            "local_search_steps": rec.local_search_steps,
            "best_energy": rec.best_energy,
            "best_report_energy": rec.best_report_energy,
            "stop_reason": rec.stop_reason,
        }
    )
    return EXIT_OK


def _config(args) -> dict:
    if not args.config:
        return {}
    data = dio.read_json(args.config)
    if not isinstance(data, dict):
        raise dio.SchemaError(args.config, "expected an object")
    if data.get("experiment", args.name) != args.name:
        raise dio.SchemaError(args.config, f"field 'experiment': {data['experiment']!r} does not match {args.name!r}")
    return data


def _pick(args, cfg, name, default=None):
    v = getattr(args, name, None)
    if v is not None:
        return v
    return cfg.get(name, default)


def cmd_experiment(args) -> int:
    cfg = _config(args)
    seed = _pick(args, cfg, "seed")
    if seed is None:
        raise UsageError("experiments need an explicit --seed")
    out = Path(_pick(args, cfg, "out") or ".")
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        print(f"error: cannot create output directory {out}: {e.strerror}", file=sys.stderr)
        return EXIT_RUNTIME
    problem = _pick(args, cfg, "problem")
    if problem:
        cell, comp = dio.load_problem(problem)
    else:
        default = "srtio3_z3_stacked.json" if args.name in ("neighborhood_compare", "search_compare") else "srtio3_z3_cubic.json"
        cell, comp = dio.bundled_problem(default)
    ff = _forcefield(_pick(args, cfg, "forcefield"))
    name = args.name
    extra = {}
    if name == "depth_convergence":
        k_max = _pick(args, cfg, "k_max", 6)
        rows, summary = depth_convergence(
            cell, comp, ff, _pick(args, cfg, "count", 100), range(1, k_max + 1), _pick(args, cfg, "k_ref", 10), seed
        )
    elif name == "ordering":
        rows, summary = ordering(
            cell, comp, ff, _pick(args, cfg, "count", 500), _pick(args, cfg, "k_low", 1), _pick(args, cfg, "k_high", 6), seed
        )
    elif name == "neighborhood_compare":
        delta = _pick(args, cfg, "delta", 1.0)
        labels = _pick(args, cfg, "neighborhoods", "axes,2-ion-swap,1-swap")
        labels = labels.split(",") if isinstance(labels, str) else labels
        specs = [parse_neighborhood(t, delta) for t in labels]
        rows, summary = neighborhood_compare(
            cell, comp, ff, specs, _pick(args, cfg, "count", 50), _pick(args, cfg, "depth", 1), seed
        )
    else:
        delta = _pick(args, cfg, "delta", 1.0)
        settings = SearchSettings(
            mode="axes_bh",
            patience=_pick(args, cfg, "patience", 10),
            max_relaxations=_pick(args, cfg, "max_relaxations", 20),
            neighborhood=parse_neighborhood("axes", delta),
            relax=RelaxSettings(depth=_pick(args, cfg, "depth", 2)),
            k_report=_pick(args, cfg, "report_depth", 6),
        )
        threshold = _pick(args, cfg, "target")
        rows, summary, envelopes, _ = search_compare(
            cell, comp, ff, settings, _pick(args, cfg, "count", 20), seed, threshold=threshold
        )
        length = max(len(v) for v in envelopes.values())
        extra["envelope"] = [
            {"relaxations": i + 1, **{m: env[min(i, len(env) - 1)] for m, env in envelopes.items()}}
            for i in range(length)
        ]
    try:
        write_csv(rows, out / f"{name}_rows.csv")
        write_csv(summary, out / f"{name}_summary.csv")
        for label, table in extra.items():
            write_csv(table, out / f"{name}_{label}.csv")
    except OSError as e:
        print(f"error: cannot write to {out}: {e.strerror}", file=sys.stderr)
        return EXIT_RUNTIME
    _print_json({"experiment": name, "summary": summary})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="depthcsp", description="Depth-k lattice energies, local search and basin hopping.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, depth_default):
        sp.add_argument("--forcefield", help="force-field JSON (default: bundled table)")
        sp.add_argument("--depth", type=_depth, default=depth_default, help="image layers k (1-10)")

    e = sub.add_parser("energy", help="depth-k energy of a structure")
    e.add_argument("--structure", required=True)
    common(e, 1)
    e.add_argument("--conventional", action="store_true", help="halve the double-counted pair sum")
    e.set_defaults(func=cmd_energy)

    r = sub.add_parser("relax", help="fixed-cell relaxation")
    r.add_argument("--structure", required=True)
    common(r, 2)
    r.add_argument("--report-depth", type=_depth, default=6)
    r.add_argument("--max-iters", type=_positive_int, default=2000)
    r.add_argument("--grad-tol", type=_positive_float, default=1e-3)
    r.add_argument("--out", help="write the relaxed structure here")
    r.set_defaults(func=cmd_relax)

    ls = sub.add_parser("local-search", help="greedy descent over a combinatorial neighborhood")
    ls.add_argument("--structure", required=True)
    common(ls, 1)
    ls.add_argument("--neighborhood", required=True, help="axes, <k>-ion-swap or <k>-swap")
    ls.add_argument("--delta", type=_positive_float, help="grid step in A (axes and k-swap)")
    ls.add_argument("--max-steps", type=_positive_int, default=10_000)
    ls.add_argument("--out", help="write the final structure here")
    ls.set_defaults(func=cmd_local_search)

    s = sub.add_parser("search", help="basin hopping from random feasible structures")
    s.add_argument("--problem", required=True, help="JSON with cell and composition")
    common(s, 2)
    s.add_argument("--mode", choices=("basin_hopping", "axes_bh"), default="basin_hopping")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--patience", type=_positive_int, default=10)
    s.add_argument("--max-relaxations", type=_positive_int, default=100)
    s.add_argument("--delta", type=_positive_float)
    s.add_argument("--report-depth", type=_depth, default=6)
    s.add_argument("--max-iters", type=_positive_int, default=2000)
    s.add_argument("--target", type=float, help="stop once the best total energy is at or below this")
    s.add_argument("--out", help="write the run record JSON here")
    s.add_argument("--csv", help="write per-iteration rows here")
    s.set_defaults(func=cmd_search)

    x = sub.add_parser("experiment", help="seeded experiment harness writing CSV")
    x.add_argument("name", choices=EXPERIMENTS)
    x.add_argument("--config", help="JSON with experiment settings; flags override it")
    x.add_argument("--seed", type=int)
    x.add_argument("--problem")
    x.add_argument("--forcefield")
    x.add_argument("--count", type=_positive_int, help="structures, pairs, starts or runs")
    x.add_argument("--k-max", dest="k_max", type=_depth)
    x.add_argument("--k-ref", dest="k_ref", type=_depth)
    x.add_argument("--k-low", dest="k_low", type=_depth)
    x.add_argument("--k-high", dest="k_high", type=_depth)
    x.add_argument("--depth", type=_depth)
    x.add_argument("--report-depth", dest="report_depth", type=_depth)
    x.add_argument("--delta", type=_positive_float)
    x.add_argument("--neighborhood", dest="neighborhoods")
    x.add_argument("--patience", type=_positive_int)
    x.add_argument("--max-relaxations", dest="max_relaxations", type=_positive_int)
    x.add_argument("--target", type=float)
    x.add_argument("--out")
    x.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_OK
    try:
        return args.func(args)
    except (dio.SchemaError, UsageError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as e:
        if isinstance(e, SingularityError):
            print(f"error: {e}", file=sys.stderr)
            return EXIT_RUNTIME
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (GenerationError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
