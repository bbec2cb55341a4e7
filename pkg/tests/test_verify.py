"""Oracle-module tests: gap arithmetic, hull geometry, identity checks.

The independent routes exercised here are hand-derived: textbook real-form
branch flows for the feasibility checker, nested trigonometric grids for
the trilinear oracle, and sampled hull vertices for the decomposition.
"""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from otsqc import netparse, qcmodel, verify
from otsqc.modelir import solve_continuous

from helpers import random_trilinear_box, sample_hull_points


# -- optimality gap ----------------------------------------------------------

def test_gap_example():
    assert verify.optimality_gap(15174.0, 15008.9) == pytest.approx(1.1, abs=0.05)


def test_gap_zero_when_tight():
    assert verify.optimality_gap(100.0, 100.0) == 0.0


@given(ub=st.floats(1.0, 1e6), lb=st.floats(1.0, 1e6),
       scale=st.floats(1e-3, 1e3))
def test_gap_scale_invariant(ub, lb, scale):
    base = verify.optimality_gap(ub, lb)
    scaled = verify.optimality_gap(scale * ub, scale * lb)
    assert scaled == pytest.approx(base, rel=1e-9, abs=1e-9)


@pytest.mark.parametrize("lb", [0.0, -5.0])
def test_gap_rejects_nonpositive_lb(lb):
    with pytest.raises(ValueError):
        verify.optimality_gap(10.0, lb)


# -- reference upper bounds --------------------------------------------------

def test_reference_ub_lookup():
    assert verify.reference_ub("case5_pjm") == 15174.0
    assert verify.reference_ub("case14_ieee__sad") == 2727.5


def test_reference_ub_normalizes_names():
    plain = verify.reference_ub("case14_ieee")
    assert verify.reference_ub("pglib_opf_case14_ieee.m") == plain
    assert verify.reference_ub("CASE14_IEEE") == plain


def test_reference_ub_unknown_case():
    with pytest.raises(KeyError):
        verify.reference_ub("case9999_nowhere")


# -- trilinear box corners ---------------------------------------------------

def test_corner_ordering():
    box = verify.TrilinearBox.from_angles(0.9, 1.1, 0.92, 1.08, -0.3, 0.5)
    corners = box.corners("c")
    assert len(corners) == 8
    # k = 2m + t: m sweeps voltage corners with the v_i bit high first,
    # t picks the trig bound.
    assert corners[0] == (0.9, 0.92, box.c_min)
    assert corners[1] == (0.9, 0.92, box.c_max)
    assert corners[2] == (0.9, 1.08, box.c_min)
    assert corners[4] == (1.1, 0.92, box.c_min)
    assert corners[7] == (1.1, 1.08, box.c_max)
    sines = box.corners("s")
    assert sines[0] == (0.9, 0.92, box.s_min)
    assert sines[1] == (0.9, 0.92, box.s_max)


def test_cos_interval_spans_unity_inside_box():
    box = verify.TrilinearBox.from_angles(0.9, 1.1, 0.9, 1.1, -0.4, 0.3)
    assert box.c_max == 1.0
    assert box.c_min == pytest.approx(math.cos(0.4))
    one_sided = verify.TrilinearBox.from_angles(0.9, 1.1, 0.9, 1.1, 0.1, 0.5)
    assert one_sided.c_max == pytest.approx(math.cos(0.1))
    assert one_sided.c_min == pytest.approx(math.cos(0.5))
    assert one_sided.s_min == pytest.approx(math.sin(0.1))
    assert one_sided.s_max == pytest.approx(math.sin(0.5))


# -- 3-cycle identities ------------------------------------------------------

@given(th1=st.floats(-0.785, 0.785), th2=st.floats(-0.785, 0.785))
def test_cycle_identities_hold_exactly(th1, th2):
    assert verify.check_prop1(th1, th2, tol=1e-12)


def test_cycle_identity_residuals_zero_form():
    r = verify.cycle_equation_residuals(math.cos(0.2), math.sin(0.2),
                                        math.cos(-0.1), math.sin(-0.1),
                                        math.cos(0.1), math.sin(0.1))
    assert max(r) < 1e-15


@pytest.mark.parametrize("key", ["c_ik", "s_ik", "c_ij", "s_jk"])
def test_cycle_identity_detects_perturbation(key):
    assert not verify.check_prop1(0.3, -0.2, perturb={key: 1e-6}, tol=1e-12)


def test_cycle_identity_angle_range():
    with pytest.raises(ValueError):
        verify.check_prop1(1.2, 0.8)


# -- hull decomposition ------------------------------------------------------

def test_decomposition_on_sampled_hull_points():
    rng = np.random.default_rng(7)
    for _ in range(3):
        box = random_trilinear_box(rng)
        for point in sample_hull_points(box, 4, rng):
            res = verify.check_theorem1(point, box)
            assert res.ok(1e-9), f"residual {res.max_residual:.3e}"
            assert res.eta1["z"] == 1.0
            assert all(v == 0.0 for k, v in res.eta0.items()
                       if k not in ("vi", "vj", "lc", "ls"))


def test_decomposition_rejects_integral_z():
    box = verify.TrilinearBox.from_angles(0.9, 1.1, 0.9, 1.1, -0.3, 0.3)
    rng = np.random.default_rng(1)
    point = sample_hull_points(box, 1, rng)[0]
    point["z"] = 1.0
    with pytest.raises(ValueError, match="strictly inside"):
        verify.check_theorem1(point, box)


def test_decomposition_rejects_missing_keys():
    box = verify.TrilinearBox.from_angles(0.9, 1.1, 0.9, 1.1, -0.3, 0.3)
    with pytest.raises(ValueError, match="missing"):
        verify.check_theorem1({"z": 0.5}, box)


def test_decomposition_rejects_infeasible_point():
    box = verify.TrilinearBox.from_angles(0.9, 1.1, 0.9, 1.1, -0.3, 0.3)
    rng = np.random.default_rng(2)
    point = sample_hull_points(box, 1, rng)[0]
    point["wr"] += 0.1
    with pytest.raises(ValueError, match="hull row"):
        verify.check_theorem1(point, box)


# -- trilinear bounds: grid oracle vs relaxations ----------------------------

def _random_objective(rng):
    keys = ("vi", "vj", "c", "s", "wr", "wi")
    return dict(zip(keys, rng.normal(size=len(keys))))


def test_grid_refinement_never_raises_minimum():
    # Grids with n and 2n-1 points nest, so the finer one can only find
    # a lower or equal minimum.
    rng = np.random.default_rng(3)
    for _ in range(10):
        box = random_trilinear_box(rng)
        obj = _random_objective(rng)
        coarse = verify.brute_force_hull_bound(box, obj, grid_n=5)
        fine = verify.brute_force_hull_bound(box, obj, grid_n=9)
        assert fine <= coarse + 1e-12


def test_extreme_point_hull_dominates_mccormick():
    rng = np.random.default_rng(4)
    for _ in range(20):
        box = random_trilinear_box(rng)
        obj = _random_objective(rng)
        grid = verify.brute_force_hull_bound(box, obj, grid_n=20)
        mc = verify.relaxation_hull_bound(box, obj, tier="pm")
        ep = verify.relaxation_hull_bound(box, obj, tier="e")
        assert mc <= ep + 1e-7
        assert ep <= grid + 1e-7


def test_grid_requires_two_points():
    box = verify.TrilinearBox.from_angles(0.9, 1.1, 0.9, 1.1, -0.3, 0.3)
    with pytest.raises(ValueError):
        verify.brute_force_hull_bound(box, {"c": 1.0}, grid_n=1)


# -- nonconvex feasibility ---------------------------------------------------

# Two buses joined by one line; both ends host a generator so every
# switching state can balance. Bus 2 carries load and a shunt.
PAIR = """
function mpc = pair
mpc.version = '2';
mpc.baseMVA = 100.0;
mpc.bus = [
\t1\t3\t0.0\t0.0\t0.0\t0.0\t1\t1.0\t0.0\t135.0\t1\t1.08\t0.92;
\t2\t2\t40.0\t15.0\t2.0\t3.0\t1\t1.0\t0.0\t135.0\t1\t1.08\t0.92;
];
mpc.gen = [
\t1\t50.0\t0.0\t100.0\t-100.0\t1.0\t100.0\t1\t200.0\t-200.0;
\t2\t10.0\t0.0\t100.0\t-100.0\t1.0\t100.0\t1\t200.0\t-200.0;
];
mpc.gencost = [
\t2\t0.0\t0.0\t3\t0.01\t10.0\t0.0;
\t2\t0.0\t0.0\t3\t0.02\t12.0\t0.0;
];
mpc.branch = [
\t1\t2\t0.02\t0.08\t0.10\t0.0\t0.0\t0.0\t0.0\t0.0\t1\t-28.0\t28.0;
];
"""


def _textbook_pair_point(net, v1, v2, theta, z=1):
    """Build an exact feasible point for PAIR from real-form flow formulas,
    a route independent of both the model builder and the checker's
    complex arithmetic."""
    br = net.branches[0]
    g, b, b_c = br.g, br.b, br.b_c
    if z == 1:
        pf = g * v1 * v1 - v1 * v2 * (g * math.cos(theta) + b * math.sin(theta))
        qf = (-(b + b_c) * v1 * v1
              - v1 * v2 * (g * math.sin(theta) - b * math.cos(theta)))
        pt = g * v2 * v2 - v2 * v1 * (g * math.cos(-theta) + b * math.sin(-theta))
        qt = (-(b + b_c) * v2 * v2
              - v2 * v1 * (g * math.sin(-theta) - b * math.cos(-theta)))
        wr = v1 * v2 * math.cos(theta)
        wi = v1 * v2 * math.sin(theta)
    else:
        pf = qf = pt = qt = wr = wi = 0.0
    b1, b2 = net.bus(1), net.bus(2)
    return {
        "v": {1: v1, 2: v2}, "va": {1: theta, 2: 0.0},
        "z": {0: z}, "pf": {0: pf}, "qf": {0: qf},
        "pt": {0: pt}, "qt": {0: qt},
        "wr": {0: wr}, "wi": {0: wi},
        "pg": {0: b1.demand_p + b1.shunt_g * v1 * v1 + pf,
               1: b2.demand_p + b2.shunt_g * v2 * v2 + pt},
        "qg": {0: b1.demand_q - b1.shunt_b * v1 * v1 + qf,
               1: b2.demand_q - b2.shunt_b * v2 * v2 + qt},
    }


def test_exact_point_passes_feasibility_check():
    net = netparse.parse_matpower(PAIR, name="pair")
    rng = np.random.default_rng(5)
    for _ in range(20):
        v1, v2 = rng.uniform(0.92, 1.08, size=2)
        theta = rng.uniform(-0.48, 0.48)
        report = verify.check_nonconvex_feasibility(
            net, _textbook_pair_point(net, v1, v2, theta), tol=1e-9)
        assert report.ok(1e-9), (report.worst_family, report.max_residual)


def test_switched_off_point_passes_feasibility_check():
    net = netparse.parse_matpower(PAIR, name="pair")
    point = _textbook_pair_point(net, 1.05, 0.95, 0.2, z=0)
    report = verify.check_nonconvex_feasibility(net, point, tol=1e-9)
    assert report.ok(1e-9), (report.worst_family, report.max_residual)


def test_feasibility_check_flags_bad_flow():
    net = netparse.parse_matpower(PAIR, name="pair")
    point = _textbook_pair_point(net, 1.0, 1.0, 0.1)
    point["pf"][0] += 1e-4
    report = verify.check_nonconvex_feasibility(net, point)
    assert not report.ok(1e-6)
    assert report.worst_family in ("flow_pf", "balance_p")


def test_relaxation_optimum_is_not_ac_feasible(case3, case3_constants):
    # The continuous relaxation optimum lies outside the nonconvex set,
    # so the independent checker must reject it at modest tolerance.
    model = qcmodel.build_model(case3, case3_constants,
                                qcmodel.FormulationOptions(
                                    tier="e", all_lines_on=True))
    sol = solve_continuous(model)
    assert sol.ok
    val = {name: sol.x[j] for j, name in enumerate(model.var_names)}
    point = {
        "v": {b.id: val[qcmodel.vname_v(b.id)] for b in case3.buses},
        "va": {b.id: val[qcmodel.vname_va(b.id)] for b in case3.buses},
        "z": {a: 1.0 for a in range(len(case3.branches))},
        "pf": {a: val[qcmodel.vname_pf(a)] for a in range(len(case3.branches))},
        "qf": {a: val[qcmodel.vname_qf(a)] for a in range(len(case3.branches))},
        "pt": {a: val[qcmodel.vname_pt(a)] for a in range(len(case3.branches))},
        "qt": {a: val[qcmodel.vname_qt(a)] for a in range(len(case3.branches))},
        "wr": {a: val[qcmodel.vname_wr(a)] for a in range(len(case3.branches))},
        "wi": {a: val[qcmodel.vname_wi(a)] for a in range(len(case3.branches))},
        "pg": {k: val[qcmodel.vname_pg(k)] for k in range(len(case3.generators))},
        "qg": {k: val[qcmodel.vname_qg(k)] for k in range(len(case3.generators))},
    }
    report = verify.check_nonconvex_feasibility(case3, point)
    assert not report.ok(1e-6)
    assert report.max_residual > 1e-4
