"""Branch-and-bound and branch-and-cut over the mixed-integer conic model.

The continuous subsolver interface lives in modelir; this module adds the
tree search over binary switching variables and the lazy cutting loop that
separates cycle inequalities at the root and at integral nodes.  Incumbents
are relaxation-feasible points obtained by fixing binaries and re-solving;
they bound the mixed-integer optimum of the relaxation, not the nonconvex
problem, and are used only for pruning and gap measurement.
"""

from __future__ import annotations

import heapq
import json
import logging
import math
import re
import time
from dataclasses import dataclass, field

import numpy as np

from . import cyclecuts
from .cyclecuts import CycleBlock, CycleOptions
from .modelir import (INF, CompiledModel, ContinuousSolution, ModelIR,
                      SubsolverError, solve_continuous, subsolver_capabilities)
from .qcmodel import vname_z

__all__ = [
    "MipOptions", "Incumbent", "NodeState", "SolveReport",
    "branch_and_bound", "branch_and_cut", "all_on_warm_start",
    "pattern_incumbent", "solve_continuous", "subsolver_capabilities",
]

log = logging.getLogger(__name__)

_INDEX_RE = re.compile(r"\[(\d+)\]$")


@dataclass
class MipOptions:
    """Search controls shared by branch-and-bound and branch-and-cut."""

    gap_tol: float = 1e-3
    int_tol: float = 1e-6
    node_limit: int = 100_000
    time_limit_s: float = 7200.0
    max_cuts: int = 200
    max_rounds_per_node: int = 20
    seed: int = 0
    threads: int = 1


@dataclass
class Incumbent:
    """A binary assignment with the objective of its fixed continuous solve."""

    pattern: dict[str, int]
    objective: float


@dataclass
class NodeState:
    """Open node: branch fixings, the bound inherited from its parent, depth."""

    fixings: dict[str, int]
    parent_bound: float
    depth: int


@dataclass
class SolveReport:
    """Outcome of one solve run, serializable for the CLI report."""

    case: str = ""
    tier: str = ""
    lb: float = math.nan
    ub: float = math.nan
    gap_percent: float = math.nan
    cuts_added: int = 0
    obbt_iterations: int = 0
    nodes: int = 0
    wall_time_s: float = 0.0
    termination: str = "unsolved"
    switching: list[int] = field(default_factory=list)
    incumbent_objective: float | None = None
    incumbent_pattern: dict[str, int] | None = None

    def to_json(self) -> str:
        def scrub(v: float) -> float | None:
            return None if isinstance(v, float) and not math.isfinite(v) else v

        doc = {
            "case": self.case, "tier": self.tier, "lb": scrub(self.lb),
            "ub": scrub(self.ub), "gap_percent": scrub(self.gap_percent),
            "cuts_added": self.cuts_added,
            "obbt_iterations": self.obbt_iterations, "nodes": self.nodes,
            "wall_time_s": self.wall_time_s, "termination": self.termination,
            "switching": self.switching,
            "incumbent_objective": self.incumbent_objective,
            "incumbent_pattern": self.incumbent_pattern,
        }
        return json.dumps(doc, indent=1, allow_nan=False)

    @classmethod
    def from_json(cls, text: str) -> "SolveReport":
        doc = json.loads(text)
        for key in ("lb", "ub", "gap_percent"):
            if doc.get(key) is None:
                doc[key] = math.nan
        return cls(**doc)


def _switched_off(pattern: dict[str, int] | None) -> list[int]:
    if not pattern:
        return []
    off = []
    for name, val in pattern.items():
        if val == 0:
            m = _INDEX_RE.search(name)
            if m:
                off.append(int(m.group(1)))
    return sorted(off)


def pattern_incumbent(model: ModelIR, pattern: dict[str, int]) -> Incumbent | None:
    """Fix binaries to the given 0/1 pattern and solve; None when infeasible."""
    bins = model.binary_indices()
    if not bins:
        return None
    lb = np.asarray(model.lb, dtype=float)
    ub = np.asarray(model.ub, dtype=float)
    full = {}
    for j in bins:
        val = int(pattern.get(model.var_names[j], 1))
        full[model.var_names[j]] = val
        lb[j] = float(val)
        ub[j] = float(val)
    sol = CompiledModel(model).solve(lb=lb, ub=ub)
    if not sol.ok:
        return None
    return Incumbent(pattern=full, objective=sol.objective)


def all_on_warm_start(model: ModelIR, options: MipOptions | None = None) -> Incumbent | None:
    """Solve with every binary fixed to 1; the result seeds the incumbent."""
    return pattern_incumbent(model, {})


class _Search:
    """Best-bound tree search with optional lazy cycle-cut separation."""

    def __init__(self, model: ModelIR, options: MipOptions,
                 blocks: list[CycleBlock] | None,
                 cut_options: CycleOptions | None,
                 warm_start: Incumbent | None):
        self.model = model
        self.opt = options
        self.blocks = blocks or []
        self.cut_options = cut_options or CycleOptions(max_cuts=options.max_cuts)
        # Cuts over bus-voltage products need their lifted columns before the
        # first compile; creating them here keeps block order deterministic.
        for blk in self.blocks:
            if blk.space == "w":
                cyclecuts.ensure_voltage_lifts(model, blk)
        self.cm = CompiledModel(model)
        self.bins = model.binary_indices()
        self.base_lb = np.asarray(model.lb, dtype=float)
        self.base_ub = np.asarray(model.ub, dtype=float)
        self.incumbent = warm_start
        self.tried: set[tuple[int, ...]] = set()
        if warm_start is not None:
            self.tried.add(self._key(warm_start.pattern))
        self.nodes = 0
        self.cuts_added = 0
        self.t0 = time.monotonic()

    # -- helpers -----------------------------------------------------------

    def _key(self, pattern: dict[str, int]) -> tuple[int, ...]:
        return tuple(pattern.get(self.model.var_names[j], 1) for j in self.bins)

    def _bounds_for(self, fixings: dict[str, int]) -> tuple[np.ndarray, np.ndarray]:
        lb = self.base_lb.copy()
        ub = self.base_ub.copy()
        for name, val in fixings.items():
            j = self.model.var(name)
            lb[j] = float(val)
            ub[j] = float(val)
        return lb, ub

    def _solve_fixings(self, fixings: dict[str, int]) -> ContinuousSolution:
        lb, ub = self._bounds_for(fixings)
        return self.cm.solve(lb=lb, ub=ub)

    def _fractionality(self, x: np.ndarray) -> tuple[float, int]:
        """(largest distance to the nearest integer, column) over binaries."""
        best, col = -1.0, -1
        for j in self.bins:
            dist = min(x[j] - math.floor(x[j]), math.ceil(x[j]) - x[j])
            frac = min(x[j], 1.0 - x[j])
            if dist > self.opt.int_tol and frac > best + 1e-12:
                best, col = frac, j
        return best, col

    def _update_incumbent(self, pattern: dict[str, int], objective: float) -> None:
        if self.incumbent is None or objective < self.incumbent.objective:
            self.incumbent = Incumbent(pattern=dict(pattern), objective=objective)

    def _try_rounding(self, x: np.ndarray) -> None:
        """Fix binaries at their rounded values and re-solve once per pattern."""
        pattern = {self.model.var_names[j]: int(round(x[j])) for j in self.bins}
        key = self._key(pattern)
        if key in self.tried:
            return
        self.tried.add(key)
        sol = self._solve_fixings(pattern)
        if sol.ok:
            self._update_incumbent(pattern, sol.objective)

    def _time_left(self) -> float:
        return self.opt.time_limit_s - (time.monotonic() - self.t0)

    def _gap_reached(self, lb: float) -> bool:
        if self.incumbent is None or not math.isfinite(lb):
            return False
        scale = max(abs(lb), 1e-12)
        return (self.incumbent.objective - lb) / scale <= self.opt.gap_tol

    # -- separation --------------------------------------------------------

    def _eligible(self, x: np.ndarray, blk: CycleBlock) -> bool:
        for a in blk.cycle.arcs:
            if x[self.model.var(vname_z(a))] < 1.0 - self.opt.int_tol:
                return False
        return True

    def _separate_round(self, x: np.ndarray) -> int:
        """One pass over closed cycles; returns the number of cuts added."""
        values = dict(zip(self.model.var_names, x))
        added = 0
        for blk in self.blocks:
            if self.cuts_added >= self.opt.max_cuts:
                break
            if not self._eligible(x, blk):
                continue
            try:
                cut = cyclecuts.separate(blk, values, self.cut_options)
            except Exception as exc:  # noqa: BLE001 - separation is advisory
                log.warning("separation failed on cycle %d space %s: %s",
                            blk.cycle.id, blk.space, exc)
                continue
            if cut is None:
                continue
            coeffs, rel, rhs, label = cut.model_row()
            self.model.add_linear(coeffs, rel, rhs, f"{label}#{self.cuts_added}")
            self.cuts_added += 1
            added += 1
        if added:
            self.cm = CompiledModel(self.model)
        return added

    # -- main loop ---------------------------------------------------------

    def run(self) -> SolveReport:
        report = SolveReport()
        root = NodeState(fixings={}, parent_bound=-INF, depth=0)
        heap: list[tuple[float, int, NodeState]] = [(-INF, 0, root)]
        seq = 1
        global_lb = -INF
        termination = "tolerance"

        while heap:
            if self.nodes >= self.opt.node_limit:
                termination = "node_limit"
                break
            if self._time_left() <= 0.0:
                termination = "time_limit"
                break
            bound, _, node = heapq.heappop(heap)
            global_lb = max(global_lb, bound) if math.isfinite(bound) else global_lb
            if self.incumbent is not None and bound >= self.incumbent.objective - 1e-12:
                # best-bound order: every remaining node is at least as high
                global_lb = self.incumbent.objective
                break

            sol = self._solve_fixings(node.fixings)
            self.nodes += 1
            if sol.status == "infeasible":
                continue
            if sol.status in ("unbounded", "numerical"):
                raise SubsolverError(
                    f"node solve returned {sol.status} ({sol.raw_status})")

            obj = max(sol.objective, node.parent_bound)  # bounds grow down a branch
            x = sol.x

            if self.blocks and self.cuts_added < self.opt.max_cuts:
                rounds = 0
                while rounds < self.opt.max_rounds_per_node:
                    frac, _ = self._fractionality(x)
                    integral = frac < 0.0
                    if node.depth > 0 and not integral:
                        break
                    if self._separate_round(x) == 0:
                        break
                    rounds += 1
                    sol = self._solve_fixings(node.fixings)
                    if sol.status == "infeasible":
                        break
                    if not sol.ok:
                        raise SubsolverError(
                            f"post-cut solve returned {sol.status} ({sol.raw_status})")
                    # cuts only shrink the feasible set; the bound cannot drop
                    obj = max(obj, sol.objective)
                    x = sol.x
                if sol.status == "infeasible":
                    continue

            if self.incumbent is not None and obj >= self.incumbent.objective - 1e-12:
                continue

            frac, branch_col = self._fractionality(x)
            if branch_col < 0:
                pattern = {self.model.var_names[j]: int(round(x[j])) for j in self.bins}
                self.tried.add(self._key(pattern))
                self._update_incumbent(pattern, obj)
                lb_now = min([obj] + [b for b, _, _ in heap])
                if self._gap_reached(lb_now):
                    global_lb = lb_now
                    termination = "tolerance"
                    break
                continue

            self._try_rounding(x)
            lb_now = min([obj] + [b for b, _, _ in heap])
            if self._gap_reached(lb_now):
                global_lb = lb_now
                termination = "tolerance"
                break

            name = self.model.var_names[branch_col]
            for val in (0, 1):
                child = NodeState(fixings={**node.fixings, name: val},
                                  parent_bound=obj, depth=node.depth + 1)
                heapq.heappush(heap, (obj, seq, child))
                seq += 1

        else:
            # tree exhausted: the incumbent, if any, is optimal
            if self.incumbent is not None:
                global_lb = self.incumbent.objective
                termination = "tolerance"
            else:
                global_lb = INF
                termination = "infeasible"

        if heap and termination in ("node_limit", "time_limit"):
            open_lb = min(b for b, _, _ in heap)
            if math.isfinite(open_lb):
                global_lb = max(global_lb, open_lb) if math.isfinite(global_lb) else open_lb

        report.lb = global_lb
        report.nodes = self.nodes
        report.cuts_added = self.cuts_added
        report.wall_time_s = time.monotonic() - self.t0
        report.termination = termination
        if self.incumbent is not None:
            report.incumbent_objective = self.incumbent.objective
            report.incumbent_pattern = dict(self.incumbent.pattern)
            report.switching = _switched_off(self.incumbent.pattern)
        return report


def branch_and_bound(model: ModelIR, options: MipOptions | None = None,
                     warm_start: Incumbent | None = None) -> SolveReport:
    """Best-bound search over the model's binaries.

    Branches on the most fractional binary (ties to the lowest column),
    prunes against relaxation-feasible incumbents from rounding, and stops
    at the relative gap tolerance or a node or time limit.
    """
    options = options or MipOptions()
    search = _Search(model, options, blocks=None, cut_options=None,
                     warm_start=warm_start)
    return search.run()


def branch_and_cut(model: ModelIR, blocks: list[CycleBlock],
                   options: MipOptions | None = None,
                   warm_start: Incumbent | None = None,
                   cut_options: CycleOptions | None = None) -> SolveReport:
    """Branch-and-bound with lazy cycle cuts.

    The hull constraints of the given blocks must not be embedded in the
    model; instead, points at the root and at integral nodes are separated
    over every cycle whose lines are all on at the point, and violated
    inequalities are added globally with their open-line slack so they stay
    valid at every node.  Appends cut rows to the model in place.
    """
    options = options or MipOptions()
    search = _Search(model, options, blocks=blocks, cut_options=cut_options,
                     warm_start=warm_start)
    return search.run()
