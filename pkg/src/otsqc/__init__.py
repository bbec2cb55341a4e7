"""Convex relaxations of AC optimal transmission switching (ACOTS).

Builds mixed-integer conic relaxations of the line-switching ACOPF problem:
on/off quadratic-convex trigonometric envelopes, extreme-point convex-hull
linearizations of trilinear voltage products, lifted cycle constraints (added
directly or by branch-and-cut), and optimization-based bound tightening.
Reports lower bounds and optimality gaps against reference upper bounds.
"""

from otsqc.netparse import Network, Bus, Generator, Branch, parse_matpower, load_case, validate
from otsqc.prep import LineConstants, Cycle, derive_line_constants, enumerate_cycles
from otsqc.modelir import ModelIR, CompiledModel, solve_continuous
from otsqc.qcmodel import FormulationOptions, build_model
from otsqc.cyclecuts import (CycleOptions, CycleBlock, Cut, cycle_block,
                             blocks_for_cycles, build_cycle_hull,
                             build_bigm_cycle_constraints, ensure_voltage_lifts,
                             separate)
from otsqc.mip import (MipOptions, Incumbent, SolveReport, branch_and_bound,
                       branch_and_cut, all_on_warm_start, pattern_incumbent)
from otsqc.obbt import (BoundsState, ObbtOptions, ModelRecipe,
                        InfeasibleModelError, tighten)
from otsqc.verify import optimality_gap, reference_ub
from otsqc.cli import RunConfig, run

__all__ = [
    "Network", "Bus", "Generator", "Branch", "parse_matpower", "load_case", "validate",
    "LineConstants", "Cycle", "derive_line_constants", "enumerate_cycles",
    "ModelIR", "CompiledModel", "solve_continuous",
    "FormulationOptions", "build_model",
    "CycleOptions", "CycleBlock", "Cut", "cycle_block", "blocks_for_cycles",
    "build_cycle_hull", "build_bigm_cycle_constraints", "ensure_voltage_lifts",
    "separate",
    "MipOptions", "Incumbent", "SolveReport", "branch_and_bound",
    "branch_and_cut", "all_on_warm_start", "pattern_incumbent",
    "BoundsState", "ObbtOptions", "ModelRecipe", "InfeasibleModelError",
    "tighten",
    "optimality_gap", "reference_ub",
    "RunConfig", "run",
]

__version__ = "0.1.0"
