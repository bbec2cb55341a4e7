"""Cycle constraint tests: identity tables, containment, bounds, separation.

The exact-point oracle assigns vertex angles and voltages directly and
evaluates arc coordinates from scratch, so it checks the sign conventions
of the identity tables independently of the emitters.
"""

import itertools

import numpy as np
import pytest

from otsqc import cyclecuts, prep, qcmodel
from otsqc.cyclecuts import (blocks_for_cycles, build_bigm_cycle_constraints,
                             build_cycle_hull, cut_excess, cycle_block,
                             ensure_voltage_lifts, separate)
from otsqc.modelir import CompiledModel, ModelIR, solve_continuous
from otsqc.prep import Cycle
from otsqc.qcmodel import vname_w, vname_z

from helpers import cut_values_with_lifts, cycle_eq_residual, exact_cycle_values


@pytest.fixture(scope="module")
def case14_blocks(case14, case14_constants):
    cycles = prep.enumerate_cycles(case14)
    return blocks_for_cycles(case14, case14_constants, cycles)


def _probe_model(net, block):
    """A model holding just the variables one cycle block hooks into."""
    model = ModelIR(name="probe")
    for a in block.cycle.arcs:
        model.add_var(vname_z(a), 0.0, 1.0, binary=True)
    for v in block.cycle.vertices:
        bus = net.bus(v)
        model.add_var(vname_w(v), bus.v_min ** 2, bus.v_max ** 2)
    for c in block.coords:
        if c.var not in model.variable_index:
            model.add_var(c.var, c.wide_lo, c.wide_hi)
    model.add_objective(linear={})
    return model


def _pin_and_solve(model, vals):
    for name, value in vals.items():
        j = model.var(name)
        model.lb[j] = value
        model.ub[j] = value
    return CompiledModel(model).solve()


# -- identity tables ---------------------------------------------------------

def test_identities_vanish_on_exact_points(case3, case14):
    rng = np.random.default_rng(0)
    worst = 0.0
    for net in (case3, case14):
        constants = prep.derive_line_constants(net)
        blocks = blocks_for_cycles(net, constants, prep.enumerate_cycles(net))
        for blk in blocks:
            for _ in range(5):
                vals = exact_cycle_values(net, blk, rng)
                for q in range(len(blk.equations)):
                    worst = max(worst, abs(cycle_eq_residual(blk, q, vals)))
    assert worst < 1e-12


def test_orientation_coverage(case3):
    # The bundled three-bus cycle traverses two branches against their
    # parsed orientation, so the sign handling really is exercised.
    constants = prep.derive_line_constants(case3)
    blocks = blocks_for_cycles(case3, constants, prep.enumerate_cycles(case3))
    assert any(c.sign < 0 for blk in blocks for c in blk.coords)


def test_both_cycle_lengths_present(case14_blocks):
    lengths = {len(blk.cycle.arcs) for blk in case14_blocks}
    assert lengths == {3, 4}


# -- containment of exact points ---------------------------------------------

@pytest.mark.parametrize("builder", [build_cycle_hull,
                                     build_bigm_cycle_constraints])
def test_exact_points_satisfy_constraints(case14, case14_blocks, builder):
    rng = np.random.default_rng(1)
    for blk in case14_blocks:
        for off in ((), (0,), (1, 2)):
            model = _probe_model(case14, blk)
            builder(model, blk)
            vals = exact_cycle_values(case14, blk, rng, off=off)
            sol = _pin_and_solve(model, vals)
            assert sol.ok, (f"cycle {blk.cycle.id} ({blk.space}) rejected "
                            f"exact point with off={off}: {sol.status}")


def test_bigm_constants_cover_open_line_states(case14, case14_blocks):
    rng = np.random.default_rng(2)
    for blk in case14_blocks:
        n = len(blk.cycle.arcs)
        for k in range(1, n + 1):
            for off in itertools.combinations(range(n), k):
                vals = exact_cycle_values(case14, blk, rng, off=off)
                for q in range(len(blk.equations)):
                    m = cyclecuts.bigm_constant(blk, q)
                    resid = abs(cycle_eq_residual(blk, q, vals))
                    assert resid <= m * k + 1e-9


def test_voltage_lift_emission_is_idempotent(case14, case14_blocks):
    blk = next(b for b in case14_blocks if b.space == "w"
               and len(b.cycle.arcs) == 3)
    model = _probe_model(case14, blk)
    ensure_voltage_lifts(model, blk)
    rows, cols = len(model.row_labels), len(model.var_names)
    ensure_voltage_lifts(model, blk)
    assert (len(model.row_labels), len(model.var_names)) == (rows, cols)


# -- bound ordering ----------------------------------------------------------

def test_cycle_rows_tighten_in_order(case3_sad):
    # With every line closed the hull rows imply the big-M rows, so the
    # three bounds must come out sorted; the hull should visibly improve.
    constants = prep.derive_line_constants(case3_sad)
    cycles = prep.enumerate_cycles(case3_sad)
    fo = qcmodel.FormulationOptions(tier="e", all_lines_on=True)

    def bound(mode):
        model = qcmodel.build_model(case3_sad, constants, fo)
        for blk in blocks_for_cycles(case3_sad, constants, cycles):
            if mode == "hull":
                build_cycle_hull(model, blk)
            elif mode == "bigm":
                build_bigm_cycle_constraints(model, blk)
        sol = solve_continuous(model)
        assert sol.ok
        return sol.objective

    plain, bigm, hull = bound("plain"), bound("bigm"), bound("hull")
    scale = abs(plain)
    assert plain <= bigm + 1e-6 * scale
    assert bigm <= hull + 1e-6 * scale
    assert hull >= plain + 1.0


# -- separation --------------------------------------------------------------

@pytest.fixture(scope="module")
def separation_run(case3_sad):
    """Cutting-plane loop on the all-lines-on model until no cut is found."""
    constants = prep.derive_line_constants(case3_sad)
    cycles = prep.enumerate_cycles(case3_sad)
    fo = qcmodel.FormulationOptions(tier="e", all_lines_on=True)
    blocks = blocks_for_cycles(case3_sad, constants, cycles)

    model = qcmodel.build_model(case3_sad, constants, fo)
    for blk in blocks:
        if blk.space == "w":
            ensure_voltage_lifts(model, blk)
    first = solve_continuous(model)
    assert first.ok
    cuts = []
    history = []
    for _ in range(60):
        sol = solve_continuous(model)
        assert sol.ok
        values = {name: sol.x[j] for j, name in enumerate(model.var_names)}
        history.append((sol.objective, values))
        added = 0
        for blk in blocks:
            cut = separate(blk, values)
            if cut is not None:
                coeffs, rel, rhs, label = cut.model_row()
                model.add_linear(coeffs, rel, rhs, f"{label}#{len(cuts)}")
                cuts.append((blk, cut))
                added += 1
        if added == 0:
            break
    hull = qcmodel.build_model(case3_sad, constants, fo)
    for blk in blocks:
        build_cycle_hull(hull, blk)
    hull_sol = solve_continuous(hull)
    assert hull_sol.ok
    return {"blocks": blocks, "cuts": cuts, "history": history,
            "start": first.objective, "final": history[-1][0],
            "hull": hull_sol.objective}


def test_separation_converges_to_hull_bound(separation_run):
    start, final, hull = (separation_run["start"], separation_run["final"],
                          separation_run["hull"])
    assert final <= hull + 1e-6 * abs(hull)
    assert final >= hull - 1e-6 * abs(hull)
    assert hull > start


def test_separated_cuts_are_valid_on_hull(separation_run):
    assert separation_run["cuts"]
    for blk, cut in separation_run["cuts"]:
        assert cut_excess(blk, cut) <= 1e-8


def test_cuts_cut_their_generating_point(separation_run):
    # Each cut was produced in some round; re-evaluating it at that
    # round's solution must show the reported violation.
    history = separation_run["history"]
    for blk, cut in separation_run["cuts"]:
        assert cut.violation >= 1e-6
        violated_somewhere = False
        for _, values in history:
            vals = cut_values_with_lifts(blk, values)
            coeffs, _, rhs, _ = cut.model_row()
            lhs = sum(c * vals[name] for name, c in coeffs.items())
            if lhs > rhs + 1e-6:
                violated_somewhere = True
                break
        assert violated_somewhere


def test_cuts_hold_on_exact_points(case3_sad, separation_run):
    rng = np.random.default_rng(3)
    offs = [(), (0,), (1,), (2,)]
    for blk, cut in separation_run["cuts"]:
        coeffs, _, rhs, _ = cut.model_row()
        for i in range(250):
            vals = cut_values_with_lifts(
                blk, exact_cycle_values(case3_sad, blk, rng,
                                        off=offs[i % len(offs)]))
            lhs = sum(c * vals[name] for name, c in coeffs.items())
            assert lhs <= rhs + 1e-8


def test_separation_accepts_consistent_points(case3_sad):
    constants = prep.derive_line_constants(case3_sad)
    cycles = prep.enumerate_cycles(case3_sad)
    rng = np.random.default_rng(4)
    for blk in blocks_for_cycles(case3_sad, constants, cycles):
        vals = exact_cycle_values(case3_sad, blk, rng)
        assert separate(blk, vals) is None


# -- argument validation -----------------------------------------------------

def test_unknown_space_rejected(case3, case3_constants):
    cycle = prep.enumerate_cycles(case3)[0]
    with pytest.raises(ValueError, match="space"):
        cycle_block(case3, case3_constants, cycle, "polar")


def test_unsupported_cycle_length_rejected(case14, case14_constants):
    fake = Cycle(id=99, vertices=(1, 2, 3, 4, 5), arcs=(0, 1, 2, 3, 4),
                 signs=(1, 1, 1, 1, 1))
    with pytest.raises(ValueError, match="length"):
        cycle_block(case14, case14_constants, fake, "cs")
