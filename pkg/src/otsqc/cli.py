"""Command-line front end: parse a case, tighten, solve a tier, report.

Tiers select how much of the machinery runs: "pm" is the baseline on/off
relaxation, "e" adds the extreme-point and current strengthening, "ec"
embeds cycle hulls in the model, "ecb" runs bound tightening before the
hull model, and "ecb-star" runs bound tightening and then separates cycle
cuts lazily instead of embedding hulls.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from dataclasses import dataclass
from pathlib import Path

from . import mip, netparse, obbt, prep, verify
from .mip import Incumbent, MipOptions, SolveReport
from .modelir import SubsolverError, solve_continuous
from .netparse import Network, ParseError
from .obbt import BoundsState, ModelRecipe, ObbtOptions
from .qcmodel import FormulationOptions

__all__ = ["RunConfig", "run", "main", "TIERS"]

log = logging.getLogger(__name__)

TIERS = ("pm", "e", "ec", "ecb", "ecb-star")

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_SOLVER = 3
EXIT_TIME = 4


@dataclass
class RunConfig:
    """One solve invocation's inputs."""

    case_path: str
    tier: str = "e"
    all_on: bool = False
    time_limit_s: float = 7200.0
    gap_tol: float = 1e-3
    max_cuts: int = 200
    obbt_iters: int = 10
    load_scale: float = 1.0
    ub: float | None = None
    output: str | None = None
    seed: int = 0
    threads: int = 1


def _resolve_case(case: str) -> Path:
    path = Path(case)
    if path.exists():
        return path
    return netparse.bundled_case_path(case)


def _load_network(case: str, load_scale: float) -> tuple[Network, str]:
    path = _resolve_case(case)
    net = netparse.load_case(path)
    if load_scale != 1.0:
        for bus in net.buses:
            bus.demand_p *= load_scale
            bus.demand_q *= load_scale
    return net, path.stem


def _warm_from_plain(net: Network, fo: FormulationOptions,
                     bounds: BoundsState | None, target) -> Incumbent | None:
    """Round the plain-tier continuous optimum into an incumbent candidate."""
    plain = ModelRecipe(net, fo).build(bounds)
    sol = solve_continuous(plain)
    if not sol.ok:
        return None
    pattern = {}
    for j in plain.binary_indices():
        name = plain.var_names[j]
        pattern[name] = int(round(sol.x[j]))
    return mip.pattern_incumbent(target, pattern)


def run(config: RunConfig) -> tuple[SolveReport | None, int]:
    """Execute the solve pipeline; returns the report and an exit code."""
    t0 = time.monotonic()
    if config.tier not in TIERS:
        print(f"unknown tier {config.tier!r}; choose from {', '.join(TIERS)}",
              file=sys.stderr)
        return None, EXIT_PARSE
    try:
        net, case_name = _load_network(config.case_path, config.load_scale)
    except (ParseError, FileNotFoundError, OSError) as exc:
        print(f"cannot read case: {exc}", file=sys.stderr)
        return None, EXIT_PARSE

    tier = config.tier
    needs_cycles = tier in ("ec", "ecb", "ecb-star")
    cycles = prep.enumerate_cycles(net) if needs_cycles else ()
    base = "pm" if tier == "pm" else "e"
    fo = FormulationOptions(tier=base, all_lines_on=config.all_on)

    bounds: BoundsState | None = None
    obbt_iterations = 0
    try:
        if tier in ("ecb", "ecb-star") and config.obbt_iters > 0:
            ob_recipe = ModelRecipe(net, fo, cycles=cycles, cycle_mode="bigm")
            ob_opts = ObbtOptions(max_iterations=config.obbt_iters,
                                  time_limit_s=0.5 * config.time_limit_s,
                                  threads=config.threads)
            bounds = obbt.tighten(ob_recipe, options=ob_opts)
            obbt_iterations = bounds.iterations

        cycle_mode = "hull" if tier in ("ec", "ecb") else "none"
        recipe = ModelRecipe(net, fo, cycles=cycles, cycle_mode=cycle_mode)
        model = recipe.build(bounds)

        remaining = max(config.time_limit_s - (time.monotonic() - t0), 0.0)
        mo = MipOptions(gap_tol=config.gap_tol, time_limit_s=remaining,
                        max_cuts=config.max_cuts, seed=config.seed,
                        threads=config.threads)
        if tier == "ecb-star":
            blocks = recipe.blocks_for(bounds)
            report = mip.branch_and_cut(model, blocks, mo)
        else:
            warm = None
            if tier in ("ec", "ecb"):
                warm = _warm_from_plain(net, fo, bounds, model)
            report = mip.branch_and_bound(model, mo, warm_start=warm)
    except obbt.InfeasibleModelError as exc:
        print(f"relaxation infeasible: {exc}", file=sys.stderr)
        return None, EXIT_SOLVER
    except SubsolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return None, EXIT_SOLVER

    report.case = case_name
    report.tier = tier
    report.obbt_iterations = obbt_iterations
    report.wall_time_s = time.monotonic() - t0

    ub = config.ub
    if ub is None:
        try:
            ub = verify.reference_ub(case_name)
        except KeyError:
            ub = None
    if ub is not None:
        report.ub = ub
        if math.isfinite(report.lb) and report.lb > 0:
            report.gap_percent = verify.optimality_gap(ub, report.lb)

    code = EXIT_OK
    if report.termination == "time_limit" and not math.isfinite(report.lb):
        code = EXIT_TIME

    out = config.output or f"{case_name}.{tier}.report.json"
    Path(out).write_text(report.to_json(), encoding="utf-8")

    ub_text = f"{ub:.1f}" if ub is not None else "n/a"
    gap_text = (f"{report.gap_percent:.1f}"
                if math.isfinite(report.gap_percent) else "n/a")
    lb_text = f"{report.lb:.1f}" if math.isfinite(report.lb) else "n/a"
    print(f"{case_name} {tier} {lb_text} {ub_text} {gap_text} "
          f"{report.wall_time_s:.1f}")
    return report, code


def _cmd_solve(args: argparse.Namespace) -> int:
    config = RunConfig(case_path=args.case, tier=args.tier, all_on=args.all_on,
                       time_limit_s=args.time_limit, gap_tol=args.gap_tol,
                       max_cuts=args.max_cuts, obbt_iters=args.obbt_iters,
                       load_scale=args.load_scale, ub=args.ub,
                       output=args.output, seed=args.seed,
                       threads=args.threads)
    _, code = run(config)
    return code


def _cmd_obbt(args: argparse.Namespace) -> int:
    try:
        net, case_name = _load_network(args.case, args.load_scale)
    except (ParseError, FileNotFoundError, OSError) as exc:
        print(f"cannot read case: {exc}", file=sys.stderr)
        return EXIT_PARSE
    cycles = prep.enumerate_cycles(net) if args.cycles else ()
    fo = FormulationOptions(tier="e", all_lines_on=args.all_on)
    recipe = ModelRecipe(net, fo, cycles=cycles,
                         cycle_mode="bigm" if args.cycles else "none")
    initial = None
    if args.initial:
        initial = BoundsState.from_json(Path(args.initial).read_text())
    options = ObbtOptions(max_iterations=args.iters,
                          time_limit_s=args.time_limit, threads=args.threads)
    try:
        bounds = obbt.tighten(recipe, options=options, initial=initial)
    except obbt.InfeasibleModelError as exc:
        print(f"relaxation infeasible: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except SubsolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    out = args.output or f"{case_name}.bounds.json"
    Path(out).write_text(bounds.to_json(), encoding="utf-8")
    fixed_on = sum(1 for lo, _ in bounds.z_bounds.values() if lo >= 1.0)
    fixed_off = sum(1 for _, hi in bounds.z_bounds.values() if hi <= 0.0)
    print(f"{case_name} obbt iterations={bounds.iterations} "
          f"width_reduction={bounds.total_width_reduction:.6f} "
          f"z_fixed_on={fixed_on} z_fixed_off={fixed_off} -> {out}")
    return EXIT_OK


def _cmd_cycles(args: argparse.Namespace) -> int:
    try:
        net, case_name = _load_network(args.case, 1.0)
    except (ParseError, FileNotFoundError, OSError) as exc:
        print(f"cannot read case: {exc}", file=sys.stderr)
        return EXIT_PARSE
    cycles = prep.enumerate_cycles(net)
    if args.json:
        doc = [{"id": c.id, "vertices": list(c.vertices),
                "arcs": list(c.arcs), "signs": list(c.signs)}
               for c in cycles]
        print(json.dumps(doc, indent=1))
    else:
        print(f"{case_name}: {len(cycles)} cycles")
        for c in cycles:
            verts = "-".join(str(v) for v in c.vertices)
            arcs = ",".join(str(a) for a in c.arcs)
            print(f"  cycle {c.id}: buses {verts} arcs [{arcs}]")
    return EXIT_OK


def _cmd_validate(args: argparse.Namespace) -> int:
    try:
        net, case_name = _load_network(args.case, args.load_scale)
    except (ParseError, FileNotFoundError, OSError) as exc:
        print(f"invalid case: {exc}", file=sys.stderr)
        return EXIT_PARSE
    violations = netparse.validate(net)
    demand = sum(bus.demand_p for bus in net.buses)
    cycles = prep.enumerate_cycles(net)
    print(f"{case_name}: {len(net.buses)} buses, {len(net.branches)} branches, "
          f"{len(net.generators)} generators, {len(cycles)} cycles, "
          f"demand {demand:.3f} pu")
    if violations:
        for v in violations:
            print(f"  {v.entity} {v.entity_id} violates {v.rule}: {v.message}",
                  file=sys.stderr)
        return EXIT_PARSE
    print("ok")
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="otsqc",
        description="Convex relaxation bounds for AC optimal transmission "
                    "switching")
    parser.add_argument("--verbose", action="store_true",
                        help="enable info-level logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--case", required=True,
                       help="path to a MATPOWER case file or a bundled case "
                            "name")
        p.add_argument("--load-scale", type=float, default=1.0,
                       help="scale all bus demands by this factor")
        p.add_argument("--all-on", action="store_true",
                       help="fix every line in service")
        p.add_argument("--seed", type=int, default=0, help="random seed")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads; 1 is deterministic (parallel "
                            "execution is not implemented, values above 1 "
                            "run serially)")

    ps = sub.add_parser("solve", help="solve one case at one tier")
    add_common(ps)
    ps.add_argument("--tier", choices=TIERS, default="e")
    ps.add_argument("--time-limit", type=float, default=7200.0,
                    help="wall-clock limit in seconds")
    ps.add_argument("--gap-tol", type=float, default=1e-3,
                    help="relative incumbent/bound gap at which to stop")
    ps.add_argument("--max-cuts", type=int, default=200,
                    help="total cycle-cut budget")
    ps.add_argument("--obbt-iters", type=int, default=10,
                    help="bound-tightening passes for ecb tiers")
    ps.add_argument("--ub", type=float, default=None,
                    help="reference upper bound override")
    ps.add_argument("--output", default=None,
                    help="report path (default <case>.<tier>.report.json)")
    ps.set_defaults(func=_cmd_solve)

    po = sub.add_parser("obbt", help="tighten bounds and write them to JSON")
    add_common(po)
    po.add_argument("--iters", type=int, default=10,
                    help="maximum tightening passes")
    po.add_argument("--time-limit", type=float, default=3600.0,
                    help="wall-clock limit in seconds")
    po.add_argument("--cycles", action=argparse.BooleanOptionalAction,
                    default=True,
                    help="include big-M cycle rows in subproblems")
    po.add_argument("--initial", default=None,
                    help="warm-start bounds JSON from an earlier run")
    po.add_argument("--output", default=None,
                    help="bounds path (default <case>.bounds.json)")
    po.set_defaults(func=_cmd_obbt)

    pc = sub.add_parser("cycles", help="enumerate short cycles of a case")
    pc.add_argument("--case", required=True)
    pc.add_argument("--json", action="store_true", help="emit JSON")
    pc.set_defaults(func=_cmd_cycles)

    pv = sub.add_parser("validate", help="parse a case and check consistency")
    pv.add_argument("--case", required=True)
    pv.add_argument("--load-scale", type=float, default=1.0)
    pv.set_defaults(func=_cmd_validate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
