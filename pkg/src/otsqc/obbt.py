"""Optimization-based bound tightening over voltage, angle, and switching
variables.

Each pass minimizes and maximizes every target variable subject to the
continuous relaxation, shrinks the target's interval to the proven range,
and fixes binaries whose relaxed range excludes one of {0, 1}.  Updates
within a pass are batched against the start-of-pass model, so subproblem
order cannot change the result and the pass parallelizes cleanly.  After
each pass the model is rebuilt so every derived constant (angle big-M,
chord slopes, trig boxes, extreme-point corners) reflects the new bounds.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from . import cyclecuts
from .modelir import CompiledModel, ModelIR, SubsolverError
from .netparse import Network
from .prep import Cycle, LineConstants, derive_line_constants
from .qcmodel import (FormulationOptions, build_model, vname_td, vname_v,
                      vname_z)

__all__ = [
    "BoundsState", "ObbtOptions", "ModelRecipe", "InfeasibleModelError",
    "tighten",
]

log = logging.getLogger(__name__)

_CYCLE_MODES = ("none", "bigm", "hull")


class InfeasibleModelError(RuntimeError):
    """The relaxation admits no point; a tightening subproblem was infeasible."""


@dataclass
class BoundsState:
    """Proven intervals for bus voltages, branch angle differences, and
    switching indicators, plus tightening progress counters."""

    v_bounds: dict[int, tuple[float, float]] = field(default_factory=dict)
    theta_bounds: dict[int, tuple[float, float]] = field(default_factory=dict)
    z_bounds: dict[int, tuple[float, float]] = field(default_factory=dict)
    y_bounds: dict[int, tuple[float, float]] = field(default_factory=dict)
    iterations: int = 0
    total_width_reduction: float = 0.0

    def copy(self) -> "BoundsState":
        return BoundsState(dict(self.v_bounds), dict(self.theta_bounds),
                           dict(self.z_bounds), dict(self.y_bounds),
                           self.iterations, self.total_width_reduction)

    def width(self) -> float:
        total = 0.0
        for box in (self.v_bounds, self.theta_bounds, self.z_bounds,
                    self.y_bounds):
            total += sum(hi - lo for lo, hi in box.values())
        return total

    def to_json(self) -> str:
        def enc(box: dict[int, tuple[float, float]]) -> dict[str, list[float]]:
            return {str(k): [lo, hi] for k, (lo, hi) in sorted(box.items())}

        doc = {
            "v_bounds": enc(self.v_bounds),
            "theta_bounds": enc(self.theta_bounds),
            "z_bounds": enc(self.z_bounds),
            "y_bounds": enc(self.y_bounds),
            "iterations": self.iterations,
            "total_width_reduction": self.total_width_reduction,
        }
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "BoundsState":
        doc = json.loads(text)

        def dec(box: dict[str, list[float]]) -> dict[int, tuple[float, float]]:
            return {int(k): (v[0], v[1]) for k, v in box.items()}

        return cls(v_bounds=dec(doc["v_bounds"]),
                   theta_bounds=dec(doc["theta_bounds"]),
                   z_bounds=dec(doc["z_bounds"]),
                   y_bounds=dec(doc["y_bounds"]),
                   iterations=doc["iterations"],
                   total_width_reduction=doc["total_width_reduction"])


@dataclass
class ObbtOptions:
    """Controls for the tightening loop."""

    conv_tol: float = 1e-4
    fix_tol: float = 1e-6
    max_iterations: int = 10
    time_limit_s: float = 3600.0
    margin: float = 1e-7
    threads: int = 1


@dataclass
class ModelRecipe:
    """Everything needed to rebuild the relaxation under revised bounds.

    Tightened intervals change derived constants, which change rows, so the
    model must be reconstructed rather than patched.  Cycle constraints can
    be included as slack big-M identity rows (valid at fractional switching,
    the form used inside tightening), as full extreme-point hulls, or left
    out.
    """

    net: Network
    options: FormulationOptions
    cycles: Sequence[Cycle] = ()
    spaces: Sequence[str] = cyclecuts.SPACES
    cycle_mode: str = "none"

    def __post_init__(self) -> None:
        if self.cycle_mode not in _CYCLE_MODES:
            raise ValueError(f"unknown cycle mode {self.cycle_mode!r}")

    def constants_for(self, bounds: BoundsState | None) -> LineConstants:
        if bounds is None or not bounds.theta_bounds:
            return derive_line_constants(self.net)
        theta = []
        for a, br in enumerate(self.net.branches):
            lo, hi = bounds.theta_bounds.get(a, (br.theta_min, br.theta_max))
            theta.append((max(lo, br.theta_min), min(hi, br.theta_max)))
        return derive_line_constants(self.net, theta_bounds=theta)

    def blocks_for(self, bounds: BoundsState | None) -> list[cyclecuts.CycleBlock]:
        constants = self.constants_for(bounds)
        v_bounds = bounds.v_bounds if bounds else None
        return cyclecuts.blocks_for_cycles(self.net, constants, self.cycles,
                                           spaces=tuple(self.spaces),
                                           v_bounds=v_bounds)

    def build(self, bounds: BoundsState | None = None) -> ModelIR:
        constants = self.constants_for(bounds)
        v_bounds = bounds.v_bounds if bounds else None
        z_bounds = bounds.z_bounds if bounds else None
        theta_var_bounds = bounds.theta_bounds if bounds else None
        model = build_model(self.net, constants, self.options,
                            v_bounds=v_bounds, z_bounds=z_bounds,
                            theta_var_bounds=theta_var_bounds)
        if self.cycle_mode != "none" and self.cycles:
            for block in self.blocks_for(bounds):
                if self.cycle_mode == "bigm":
                    cyclecuts.build_bigm_cycle_constraints(model, block)
                else:
                    cyclecuts.ensure_voltage_lifts(model, block)
                    cyclecuts.build_cycle_hull(model, block)
        return model

    def initial_bounds(self) -> BoundsState:
        """Read starting intervals off a probe build of the model."""
        model = self.build()
        state = BoundsState()
        for bus in self.net.buses:
            j = model.var(vname_v(bus.id))
            state.v_bounds[bus.id] = (model.lb[j], model.ub[j])
        for a in range(len(self.net.branches)):
            j = model.var(vname_td(a))
            state.theta_bounds[a] = (model.lb[j], model.ub[j])
            j = model.var(vname_z(a))
            state.z_bounds[a] = (model.lb[j], model.ub[j])
        for cyc in self.cycles:
            name = cyclecuts.vname_y(cyc.id)
            if name in model.variable_index:
                j = model.var(name)
                state.y_bounds[cyc.id] = (model.lb[j], model.ub[j])
        return state


@dataclass
class _Job:
    family: str
    key: int
    var_name: str
    binary: bool


def _jobs_for(model: ModelIR, bounds: BoundsState,
              targets: Iterable[str] | None) -> list[_Job]:
    jobs: list[_Job] = []
    wanted = None if targets is None else set(targets)

    def add(family: str, key: int, name: str, binary: bool,
            box: dict[int, tuple[float, float]]) -> None:
        if name not in model.variable_index:
            return
        if wanted is not None and name not in wanted:
            return
        lo, hi = box[key]
        if hi - lo < 1e-12:
            return
        jobs.append(_Job(family, key, name, binary))

    for i in sorted(bounds.v_bounds):
        add("v", i, vname_v(i), False, bounds.v_bounds)
    for a in sorted(bounds.theta_bounds):
        add("theta", a, vname_td(a), False, bounds.theta_bounds)
    for a in sorted(bounds.z_bounds):
        add("z", a, vname_z(a), True, bounds.z_bounds)
    for c in sorted(bounds.y_bounds):
        add("y", c, cyclecuts.vname_y(c), True, bounds.y_bounds)
    return jobs


def _extreme(cm: CompiledModel, col: int, sense: int) -> float | None:
    """Optimal value of sense * x_col minimized; None when not proven."""
    c = np.zeros(cm.model.num_vars)
    c[col] = float(sense)
    sol = cm.solve(obj_linear=c)
    if sol.status == "infeasible":
        raise InfeasibleModelError(
            "relaxation infeasible while bounding "
            f"{cm.model.var_names[col]}")
    if not sol.ok:
        log.warning("bounding %s (%s) returned %s; keeping old bound",
                    cm.model.var_names[col], "min" if sense > 0 else "max",
                    sol.raw_status)
        return None
    return sense * sol.objective


def tighten(recipe: ModelRecipe, targets: Iterable[str] | None = None,
            options: ObbtOptions | None = None,
            initial: BoundsState | None = None) -> BoundsState:
    """Shrink variable intervals by repeated min/max subproblems.

    Runs passes until no single interval improves by more than the
    convergence tolerance or a pass, time, or iteration limit is hit.
    Intervals never grow; binaries whose relaxed range excludes an endpoint
    are fixed to the other one.  Raises InfeasibleModelError when any
    subproblem shows the relaxation is empty.
    """
    options = options or ObbtOptions()
    bounds = initial.copy() if initial is not None else recipe.initial_bounds()
    t0 = time.monotonic()

    for _ in range(options.max_iterations):
        model = recipe.build(bounds)
        cm = CompiledModel(model)
        jobs = _jobs_for(model, bounds, targets)
        updates: dict[tuple[str, int], tuple[float, float]] = {}
        best_improve = 0.0
        timed_out = False

        for job in jobs:
            if time.monotonic() - t0 > options.time_limit_s:
                timed_out = True
                break
            box = getattr(bounds, f"{job.family}_bounds")
            old_lo, old_hi = box[job.key]
            col = model.var(job.var_name)
            lo_val = _extreme(cm, col, +1)
            hi_val = _extreme(cm, col, -1)

            if job.binary and lo_val is not None and lo_val > options.fix_tol:
                updates[(job.family, job.key)] = (1.0, 1.0)
                best_improve = max(best_improve, old_hi - old_lo)
                continue
            if job.binary and hi_val is not None and hi_val < 1.0 - options.fix_tol:
                updates[(job.family, job.key)] = (0.0, 0.0)
                best_improve = max(best_improve, old_hi - old_lo)
                continue

            lo = old_lo if lo_val is None else max(old_lo, lo_val - options.margin)
            hi = old_hi if hi_val is None else min(old_hi, hi_val + options.margin)
            if lo > hi:  # numerical crossing, collapse to the midpoint
                lo = hi = 0.5 * (lo + hi)
            updates[(job.family, job.key)] = (lo, hi)
            best_improve = max(best_improve, (old_hi - old_lo) - (hi - lo))

        reduction = 0.0
        for (family, key), (lo, hi) in updates.items():
            box = getattr(bounds, f"{family}_bounds")
            old_lo, old_hi = box[key]
            box[key] = (lo, hi)
            reduction += (old_hi - old_lo) - (hi - lo)
        bounds.total_width_reduction += reduction
        bounds.iterations += 1

        if timed_out or best_improve < options.conv_tol:
            break

    return bounds
