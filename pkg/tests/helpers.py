"""Shared oracles for the test suite.

The exact-point constructor computes every lifted variable of a branch from
complex phasor arithmetic, which is an independent route from the real
coefficient assembly in the model builder.  The hull sampler draws points
from the single-branch switched hull by minimizing random linear objectives.
"""

import cmath
import math

import numpy as np

from otsqc import qcmodel
from otsqc.modelir import ModelIR, solve_continuous
from otsqc.netparse import Branch
from otsqc.prep import _branch_constants
from otsqc.verify import TrilinearBox


def _frac(value: float, lo: float, hi: float) -> float:
    if hi - lo <= 1e-15:
        return 0.0
    return (value - lo) / (hi - lo)


def hull_multipliers(vi, vj, cval, sval, vbox_i, vbox_j, c_box, s_box):
    """Corner weights reproducing the point as a product distribution.

    Corner k = 2m + t: m indexes the voltage corner (v_i bit high first),
    t the trig bound.  Independent per-axis interpolation makes every
    moment of the distribution factorize, so the coordinate and product
    rows of the hull hold exactly.
    """
    ai = _frac(vi, *vbox_i)
    aj = _frac(vj, *vbox_j)
    u = [(ai if m & 2 else 1.0 - ai) * (aj if m & 1 else 1.0 - aj)
         for m in range(4)]
    tc = _frac(cval, *c_box)
    ts = _frac(sval, *s_box)
    lc = []
    ls = []
    for m in range(4):
        lc.extend([u[m] * (1.0 - tc), u[m] * tc])
        ls.extend([u[m] * (1.0 - ts), u[m] * ts])
    return lc, ls


def exact_branch_values(br: Branch, vi: float, vj: float,
                        thi: float, thj: float) -> dict:
    """Lifted on-state variable values at an exact voltage assignment."""
    td = thi - thj
    tap = complex(br.tap_re, br.tap_im)
    v_i = vi * cmath.exp(1j * thi)
    v_j = vj * cmath.exp(1j * thj)
    y = complex(br.g, br.b)
    yc = complex(br.g_c, br.b_c)
    i_f = (y + yc) / br.tap_mag_sq * v_i - y / tap.conjugate() * v_j
    i_t = -y / tap * v_i + (y + yc) * v_j
    s_f = v_i * i_f.conjugate()
    s_t = v_j * i_t.conjugate()
    c, s = math.cos(td), math.sin(td)
    return {
        "td": td, "c": c, "s": s,
        "wr": vi * vj * c, "wi": vi * vj * s,
        "wzf": vi * vi, "wzt": vj * vj, "vv": vi * vj,
        "pf": s_f.real, "qf": s_f.imag, "pt": s_t.real, "qt": s_t.imag,
        "current_sq": br.tap_mag_sq * abs(i_f) ** 2,
    }


def sample_hull_points(box: TrilinearBox, count: int, rng: np.random.Generator,
                       z_lo: float = 0.05, z_hi: float = 0.95) -> list[dict]:
    """H-feasible points of the switched single-branch hull, found as LP
    minimizers of random objectives with the indicator boxed inside (0,1)."""
    model = ModelIR("hullsample")
    bc = _branch_constants(box.theta_min, box.theta_max)
    ctx = qcmodel._BranchCtx(a=0, i=0, j=1,
                             vl_i=box.vl_i, vu_i=box.vu_i,
                             vl_j=box.vl_j, vu_j=box.vu_j,
                             bc=bc, theta_big_m=max(bc.theta_u, 1e-6))
    model.add_var(qcmodel.vname_v(0), box.vl_i, box.vu_i)
    model.add_var(qcmodel.vname_v(1), box.vl_j, box.vu_j)
    model.add_var(qcmodel.vname_z(0), z_lo, z_hi, binary=True)
    model.add_var(qcmodel.vname_td(0), box.theta_min, box.theta_max)
    model.add_var(qcmodel.vname_c(0), min(0.0, bc.c_min), max(0.0, bc.c_max))
    model.add_var(qcmodel.vname_s(0), min(0.0, bc.s_min), max(0.0, bc.s_max))
    wr_lo, wr_hi = ctx.wr_range()
    wi_lo, wi_hi = ctx.wi_range()
    model.add_var(qcmodel.vname_wr(0), min(0.0, wr_lo), max(0.0, wr_hi))
    model.add_var(qcmodel.vname_wi(0), min(0.0, wi_lo), max(0.0, wi_hi))
    model.add_var(qcmodel.vname_vv(0), min(0.0, ctx.vv_lo), ctx.vv_hi)
    for k in range(8):
        model.add_var(qcmodel.vname_lc(0, k), 0.0, 1.0)
        model.add_var(qcmodel.vname_ls(0, k), 0.0, 1.0)
    qcmodel.add_extreme_point_block(model, 0, ctx)

    probe_vars = [qcmodel.vname_v(0), qcmodel.vname_v(1), qcmodel.vname_z(0),
                  qcmodel.vname_c(0), qcmodel.vname_s(0), qcmodel.vname_wr(0),
                  qcmodel.vname_wi(0)]
    points = []
    for _ in range(count):
        model.add_objective(
            {name: rng.normal() for name in probe_vars}, {}, 0.0)
        sol = solve_continuous(model)
        if not sol.ok:
            continue
        x = sol.x
        v = model.var
        points.append({
            "vi": x[v(qcmodel.vname_v(0))], "vj": x[v(qcmodel.vname_v(1))],
            "z": x[v(qcmodel.vname_z(0))],
            "c": x[v(qcmodel.vname_c(0))], "s": x[v(qcmodel.vname_s(0))],
            "wr": x[v(qcmodel.vname_wr(0))], "wi": x[v(qcmodel.vname_wi(0))],
            "lc": [x[v(qcmodel.vname_lc(0, k))] for k in range(8)],
            "ls": [x[v(qcmodel.vname_ls(0, k))] for k in range(8)],
        })
    return points


def random_trilinear_box(rng: np.random.Generator) -> TrilinearBox:
    """A plausible branch box: voltages near one, angles inside +/- pi/2."""
    vl_i = rng.uniform(0.85, 1.0)
    vl_j = rng.uniform(0.85, 1.0)
    lo = rng.uniform(-1.4, 1.2)
    hi = min(lo + rng.uniform(0.05, 0.8), 1.5)
    return TrilinearBox.from_angles(
        vl_i=vl_i, vu_i=vl_i + rng.uniform(0.05, 0.25),
        vl_j=vl_j, vu_j=vl_j + rng.uniform(0.05, 0.25),
        theta_min=lo, theta_max=hi)


def exact_cycle_values(net, block, rng, spread=0.015, off=()):
    """Exact consistent values for one cycle block's model variables.

    Draws vertex angles within +/- spread and voltages within their bus
    boxes, then evaluates each arc's trigonometric or voltage-product
    coordinates in the branch's own orientation.  Positions listed in off
    are opened: their line is off and their coordinates are zero.
    """
    cyc = block.cycle
    th = {v: rng.uniform(-spread, spread) for v in cyc.vertices}
    vv = {v: rng.uniform(net.bus(v).v_min, net.bus(v).v_max)
          for v in cyc.vertices}
    values = {}
    for v in cyc.vertices:
        values[qcmodel.vname_w(v)] = vv[v] * vv[v]
    for pos, a in enumerate(cyc.arcs):
        br = net.branches[a]
        on = pos not in off
        values[qcmodel.vname_z(a)] = 1.0 if on else 0.0
        td = th[br.from_bus] - th[br.to_bus]
        c = math.cos(td) if on else 0.0
        s = math.sin(td) if on else 0.0
        vij = vv[br.from_bus] * vv[br.to_bus] if on else 0.0
        if block.space == "cs":
            values[qcmodel.vname_c(a)] = c
            values[qcmodel.vname_s(a)] = s
        else:
            values[qcmodel.vname_wr(a)] = vij * c
            values[qcmodel.vname_wi(a)] = vij * s
    return values


def cycle_eq_residual(block, q, values):
    """Residual of one cycle identity at the given model-variable values."""
    x = block.coord_values(values)
    lifts = block.lift_values(values, x)
    eq = block.equations[q]
    val = 0.0
    if lifts[q] is not None:
        (sb, _), = eq.bare_terms
        val += sb * lifts[q]
    else:
        for sb, j in eq.bare_terms:
            val += sb * x[j]
    for s, (j1, j2) in eq.pair_terms:
        val += s * x[j1] * x[j2]
    return val


def cut_values_with_lifts(block, values):
    """Extend exact values with the block's lifted products for cut rows."""
    vals = dict(values)
    x = block.coord_values(values)
    for q, uvar in enumerate(block.lift_vars):
        if uvar is not None:
            vals[uvar] = values[block.lift_bus_vars[q]] * x[block.lift_coord[q]]
    return vals
