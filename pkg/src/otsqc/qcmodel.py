"""Builder for the on/off quadratic-convex relaxation of line switching.

Produces a :class:`~otsqc.modelir.ModelIR` holding the mixed-integer conic
relaxation: linearized power flows over lifted voltage products, convex
envelopes for the squared-voltage and trigonometric terms, a per-tier
linearization of the trilinear voltage-voltage-trig products, and optional
strengthening inequalities.  Every constraint that involves a switched
quantity carries the branch binary so that switching a line off collapses
its lifted variables to zero while leaving bus quantities free.

Two tiers are supported.  The "pm" tier linearizes the trilinear products
with recursive on/off McCormick envelopes.  The "e" tier adds the
extreme-point convex-hull block on top of the same rows, together with
tighter switched bounds and the optional strengthening cuts, so the "e"
feasible set is contained in the "pm" one by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from otsqc.modelir import INF, ModelIR
from otsqc.netparse import Network
from otsqc.prep import BranchConstants, LineConstants

TIERS = ("pm", "e")


@dataclass
class FormulationOptions:
    """Tier selection and strengthening switches for the relaxation.

    lnc_variant selects the coefficient scheme of the two lifted nonlinear
    cuts: "corner" derives them from a corner McCormick bound on the
    voltage products, which is valid for arbitrary per-bus voltage boxes
    and coincides with the published constants whenever both endpoints of
    a branch share the same voltage box; "printed" and "sigma_j" keep the
    published constants (second w^z coefficient built from the first or
    second bus's bound sum respectively), which are exact only for equal
    boxes.
    """

    tier: str = "e"
    all_lines_on: bool = False
    include_lifted_nonlinear_cuts: bool = True
    include_current_constraints: bool = True
    lnc_variant: str = "corner"

    def normalized_tier(self) -> str:
        tier = self.tier.lower()
        if tier not in TIERS:
            raise ValueError(f"unknown tier {self.tier!r}")
        return tier


# -- variable naming ---------------------------------------------------------
# Downstream modules (cycle cuts, bound tightening, branch-and-bound) locate
# columns through these helpers rather than a side table, which keeps the
# serialized model self-describing.

def vname_v(bus: int) -> str:
    return f"v[{bus}]"


def vname_w(bus: int) -> str:
    return f"w[{bus}]"


def vname_va(bus: int) -> str:
    return f"va[{bus}]"


def vname_z(a: int) -> str:
    return f"z[{a}]"


def vname_td(a: int) -> str:
    return f"td[{a}]"


def vname_c(a: int) -> str:
    return f"c[{a}]"


def vname_s(a: int) -> str:
    return f"s[{a}]"


def vname_wr(a: int) -> str:
    return f"wr[{a}]"


def vname_wi(a: int) -> str:
    return f"wi[{a}]"


def vname_wzf(a: int) -> str:
    return f"wzf[{a}]"


def vname_wzt(a: int) -> str:
    return f"wzt[{a}]"


def vname_pf(a: int) -> str:
    return f"pf[{a}]"


def vname_qf(a: int) -> str:
    return f"qf[{a}]"


def vname_pt(a: int) -> str:
    return f"pt[{a}]"


def vname_qt(a: int) -> str:
    return f"qt[{a}]"


def vname_l(a: int) -> str:
    return f"l[{a}]"


def vname_pg(k: int) -> str:
    return f"pg[{k}]"


def vname_qg(k: int) -> str:
    return f"qg[{k}]"


def vname_vv(a: int) -> str:
    return f"vv[{a}]"


def vname_lc(a: int, k: int) -> str:
    return f"lc[{a},{k}]"


def vname_ls(a: int, k: int) -> str:
    return f"ls[{a},{k}]"


@dataclass
class _BranchCtx:
    """Effective numeric data for one branch under the current bounds."""

    a: int
    i: int
    j: int
    vl_i: float
    vu_i: float
    vl_j: float
    vu_j: float
    bc: BranchConstants
    theta_big_m: float

    @property
    def vv_lo(self) -> float:
        return self.vl_i * self.vl_j

    @property
    def vv_hi(self) -> float:
        return self.vu_i * self.vu_j

    def wr_range(self) -> tuple[float, float]:
        prods = [vv * cc for vv in (self.vv_lo, self.vv_hi)
                 for cc in (self.bc.c_min, self.bc.c_max)]
        return min(prods), max(prods)

    def wi_range(self) -> tuple[float, float]:
        prods = [vv * ss for vv in (self.vv_lo, self.vv_hi)
                 for ss in (self.bc.s_min, self.bc.s_max)]
        return min(prods), max(prods)


def _effective_v_bounds(net: Network, v_bounds) -> dict[int, tuple[float, float]]:
    out = {}
    for bus in net.buses:
        lo, hi = bus.v_min, bus.v_max
        if v_bounds is not None and bus.id in v_bounds:
            olo, ohi = v_bounds[bus.id]
            lo, hi = max(lo, olo), min(hi, ohi)
        if hi < lo:
            raise ValueError(f"empty voltage box at bus {bus.id}: [{lo}, {hi}]")
        out[bus.id] = (lo, hi)
    return out


def build_model(net: Network, constants: LineConstants, options: FormulationOptions,
                v_bounds: dict[int, tuple[float, float]] | None = None,
                z_bounds: dict[int, tuple[float, float]] | None = None,
                theta_var_bounds: dict[int, tuple[float, float]] | None = None,
                ) -> ModelIR:
    """Assemble the full relaxation for the network at the given tier.

    The three bound maps tighten (never widen) the parsed data and exist so
    bound tightening can rebuild the model around refreshed boxes: voltage
    boxes feed every envelope and corner constant, z bound pairs fix
    switching decisions, and angle-difference variable bounds clip the
    big-M box of the per-branch angle variable.
    """
    tier = options.normalized_tier()
    if options.lnc_variant not in ("corner", "printed", "sigma_j"):
        raise ValueError(f"unknown lnc_variant {options.lnc_variant!r}")
    if len(constants.branch) != len(net.branches):
        raise ValueError("constants do not match branch count")

    model = ModelIR(name=net.name)
    theta_m = constants.theta_big_m
    vbox = _effective_v_bounds(net, v_bounds)
    nbus = len(net.buses)

    va_span = max(nbus - 1, 1) * theta_m
    for bus in net.buses:
        lo, hi = vbox[bus.id]
        model.add_var(vname_v(bus.id), lo, hi)
        model.add_var(vname_w(bus.id), lo * lo, hi * hi)
        if bus.id in net.ref_buses:
            model.add_var(vname_va(bus.id), 0.0, 0.0)
        else:
            model.add_var(vname_va(bus.id), -va_span, va_span)

    ctxs: list[_BranchCtx] = []
    for a, br in enumerate(net.branches):
        bc = constants.branch[a]
        vl_i, vu_i = vbox[br.from_bus]
        vl_j, vu_j = vbox[br.to_bus]
        ctx = _BranchCtx(a=a, i=br.from_bus, j=br.to_bus, vl_i=vl_i, vu_i=vu_i,
                         vl_j=vl_j, vu_j=vu_j, bc=bc, theta_big_m=theta_m)
        ctxs.append(ctx)

        if options.all_lines_on:
            zlo, zhi = 1.0, 1.0
        elif z_bounds is not None and a in z_bounds:
            zlo, zhi = z_bounds[a]
        else:
            zlo, zhi = 0.0, 1.0
        model.add_var(vname_z(a), zlo, zhi, binary=True)

        if options.all_lines_on:
            td_lo, td_hi = bc.theta_min, bc.theta_max
        else:
            td_lo, td_hi = -theta_m, theta_m
        if theta_var_bounds is not None and a in theta_var_bounds:
            olo, ohi = theta_var_bounds[a]
            td_lo, td_hi = max(td_lo, olo), min(td_hi, ohi)
        if td_hi < td_lo:
            raise ValueError(f"empty angle box on branch {a}: [{td_lo}, {td_hi}]")
        model.add_var(vname_td(a), td_lo, td_hi)

        model.add_var(vname_c(a), min(0.0, bc.c_min), max(0.0, bc.c_max))
        model.add_var(vname_s(a), min(0.0, bc.s_min), max(0.0, bc.s_max))
        wr_lo, wr_hi = ctx.wr_range()
        wi_lo, wi_hi = ctx.wi_range()
        model.add_var(vname_wr(a), min(0.0, wr_lo), max(0.0, wr_hi))
        model.add_var(vname_wi(a), min(0.0, wi_lo), max(0.0, wi_hi))
        model.add_var(vname_wzf(a), 0.0, vu_i * vu_i)
        model.add_var(vname_wzt(a), 0.0, vu_j * vu_j)
        fmax = br.s_max if br.s_max is not None else INF
        model.add_var(vname_pf(a), -fmax, fmax)
        model.add_var(vname_qf(a), -fmax, fmax)
        model.add_var(vname_pt(a), -fmax, fmax)
        model.add_var(vname_qt(a), -fmax, fmax)
        if tier == "e" and options.include_current_constraints:
            lmax = br.i_sq_max if br.i_sq_max is not None else INF
            model.add_var(vname_l(a), 0.0, lmax)
        model.add_var(vname_vv(a), min(0.0, ctx.vv_lo), ctx.vv_hi)
        if tier == "e":
            for k in range(8):
                model.add_var(vname_lc(a, k), 0.0, 1.0)
                model.add_var(vname_ls(a, k), 0.0, 1.0)

    for k, gen in enumerate(net.generators):
        model.add_var(vname_pg(k), gen.p_min, gen.p_max)
        model.add_var(vname_qg(k), gen.q_min, gen.q_max)

    _add_objective(model, net)
    _add_bus_blocks(model, net, vbox)
    for ctx in ctxs:
        add_flow_block(model, net, ctx.a, ctx, emit_switched_wz_bounds=(tier == "e"))
        add_trig_envelopes(model, ctx.a, ctx.bc, theta_m,
                           emit_chord_lower=(tier == "e"))
        _add_angle_rows(model, net, ctx.a, ctx.bc, theta_m)
        add_mccormick_block(model, ctx.a, ctx)
        if tier == "e":
            add_extreme_point_block(model, ctx.a, ctx)
        add_valid_inequalities(model, net, ctx.a, ctx, options, tier)

    return model


def _add_objective(model: ModelIR, net: Network) -> None:
    """Quadratic dispatch cost; fixed costs of no-load leaf generators are
    charged only while their single incident line is on."""
    base = net.base_mva
    linear: dict = {}
    quad: dict = {}
    constant = 0.0
    for k, gen in enumerate(net.generators):
        name = vname_pg(k)
        if gen.c1:
            linear[name] = linear.get(name, 0.0) + gen.c1 * base
        if gen.c2:
            quad[name] = quad.get(name, 0.0) + gen.c2 * base * base
        if gen.bus in net.leaf_noload_buses:
            incident = net.branches_at(gen.bus)
            if len(incident) == 1:
                zn = vname_z(incident[0])
                linear[zn] = linear.get(zn, 0.0) + gen.c0
                continue
        constant += gen.c0
    model.add_objective(linear=linear, quad_diag=quad, constant=constant)


def _add_bus_blocks(model: ModelIR, net: Network,
                    vbox: dict[int, tuple[float, float]]) -> None:
    """Power balance plus the squared-voltage envelope at every bus."""
    for bus in net.buses:
        i = bus.id
        lo, hi = vbox[i]
        p_row: dict = {}
        q_row: dict = {}
        for k in net.gens_at(i):
            p_row[vname_pg(k)] = p_row.get(vname_pg(k), 0.0) + 1.0
            q_row[vname_qg(k)] = q_row.get(vname_qg(k), 0.0) + 1.0
        if bus.shunt_g:
            p_row[vname_w(i)] = p_row.get(vname_w(i), 0.0) - bus.shunt_g
        if bus.shunt_b:
            q_row[vname_w(i)] = q_row.get(vname_w(i), 0.0) + bus.shunt_b
        for a in net.branches_at(i):
            br = net.branches[a]
            if br.from_bus == i:
                p_row[vname_pf(a)] = p_row.get(vname_pf(a), 0.0) - 1.0
                q_row[vname_qf(a)] = q_row.get(vname_qf(a), 0.0) - 1.0
            if br.to_bus == i:
                p_row[vname_pt(a)] = p_row.get(vname_pt(a), 0.0) - 1.0
                q_row[vname_qt(a)] = q_row.get(vname_qt(a), 0.0) - 1.0
        model.add_linear(p_row, "=", bus.demand_p, f"balance_p[{i}]")
        model.add_linear(q_row, "=", bus.demand_q, f"balance_q[{i}]")

        # w >= v^2 as a cone, w below the box chord
        v, w = vname_v(i), vname_w(i)
        model.add_soc([({v: 2.0}, 0.0), ({w: 1.0}, -1.0)], ({w: 1.0}, 1.0),
                      f"vsq[{i}]")
        model.add_linear({w: 1.0, v: -(lo + hi)}, "<=", -lo * hi, f"vsq_ub[{i}]")


def add_flow_block(model: ModelIR, net: Network, a: int, ctx: _BranchCtx,
                   emit_switched_wz_bounds: bool) -> None:
    """Linear flow definitions, switched bounds on the split squared
    voltages, and both thermal cones for one branch."""
    br = net.branches[a]
    g, b, g_c, b_c = br.g, br.b, br.g_c, br.b_c
    tr, ti = br.tap_re, br.tap_im
    tm2 = br.tap_mag_sq
    i, j = ctx.i, ctx.j

    pf, qf = vname_pf(a), vname_qf(a)
    pt, qt = vname_pt(a), vname_qt(a)
    wzf, wzt = vname_wzf(a), vname_wzt(a)
    wr, wi = vname_wr(a), vname_wi(a)
    z = vname_z(a)

    model.add_linear({pf: 1.0,
                      wzf: -(g + g_c) / tm2,
                      wr: -(-g * tr + b * ti) / tm2,
                      wi: -(-g * ti - b * tr) / tm2}, "=", 0.0, f"flow_pf[{a}]")
    model.add_linear({qf: 1.0,
                      wzf: (b + b_c) / tm2,
                      wr: -(b * tr + g * ti) / tm2,
                      wi: -(b * ti - g * tr) / tm2}, "=", 0.0, f"flow_qf[{a}]")
    model.add_linear({pt: 1.0,
                      wzt: -(g + g_c),
                      wr: (g * tr + b * ti) / tm2,
                      wi: -(-g * ti + b * tr) / tm2}, "=", 0.0, f"flow_pt[{a}]")
    model.add_linear({qt: 1.0,
                      wzt: (b + b_c),
                      wr: -(b * tr - g * ti) / tm2,
                      wi: -(g * tr + b * ti) / tm2}, "=", 0.0, f"flow_qt[{a}]")

    # split squared voltage tracks the bus value while on, floats to 0 off
    for wz, bus, vl, vu in ((wzf, i, ctx.vl_i, ctx.vu_i),
                            (wzt, j, ctx.vl_j, ctx.vu_j)):
        w = vname_w(bus)
        model.add_linear({wz: 1.0, w: -1.0, z: -vl * vl}, "<=", -vl * vl,
                         f"wz_track_ub[{a},{bus}]")
        model.add_linear({wz: 1.0, w: -1.0, z: -vu * vu}, ">=", -vu * vu,
                         f"wz_track_lb[{a},{bus}]")
        if emit_switched_wz_bounds:
            model.add_linear({wz: 1.0, z: -vu * vu}, "<=", 0.0,
                             f"wz_on_ub[{a},{bus}]")
            model.add_linear({wz: 1.0, z: -vl * vl}, ">=", 0.0,
                             f"wz_on_lb[{a},{bus}]")

    if br.s_max is not None:
        model.add_soc([({pf: 1.0}, 0.0), ({qf: 1.0}, 0.0)],
                      ({z: br.s_max}, 0.0), f"thermal_f[{a}]")
        model.add_soc([({pt: 1.0}, 0.0), ({qt: 1.0}, 0.0)],
                      ({z: br.s_max}, 0.0), f"thermal_t[{a}]")


def _add_angle_rows(model: ModelIR, net: Network, a: int, bc: BranchConstants,
                    theta_m: float) -> None:
    """Angle-difference definition and its on/off interval."""
    br = net.branches[a]
    td, z = vname_td(a), vname_z(a)
    model.add_linear({td: 1.0, vname_va(br.from_bus): -1.0,
                      vname_va(br.to_bus): 1.0}, "=", 0.0, f"angle_link[{a}]")
    model.add_linear({td: 1.0, z: theta_m - bc.theta_max}, "<=", theta_m,
                     f"angle_onoff_ub[{a}]")
    model.add_linear({td: 1.0, z: -(bc.theta_min + theta_m)}, ">=", -theta_m,
                     f"angle_onoff_lb[{a}]")


def add_trig_envelopes(model: ModelIR, a: int, bc: BranchConstants,
                       theta_m: float, emit_chord_lower: bool) -> None:
    """On/off envelopes for the cosine and sine of the angle difference."""
    td, z = vname_td(a), vname_z(a)
    c, s = vname_c(a), vname_s(a)

    # cosine: switched range, curvature cone, and (tier e) the chord floor
    model.add_linear({c: 1.0, z: -bc.c_max}, "<=", 0.0, f"cos_on_ub[{a}]")
    model.add_linear({c: 1.0, z: -bc.c_min}, ">=", 0.0, f"cos_on_lb[{a}]")

    theta_u = bc.theta_u
    if theta_u > 1e-7:
        kcurv = (1.0 - math.cos(theta_u)) / (theta_u * theta_u)
    else:
        kcurv = 0.0
    if kcurv > 1e-14:
        # K td^2 <= z - c + K theta_m^2 (1 - z), written as a cone on
        # r = -c + (1 - K theta_m^2) z + K theta_m^2
        zc = 1.0 - kcurv * theta_m * theta_m
        km2 = kcurv * theta_m * theta_m
        root = 2.0 * math.sqrt(kcurv)
        model.add_soc([({td: root}, 0.0), ({c: -1.0, z: zc}, km2 - 1.0)],
                      ({c: -1.0, z: zc}, km2 + 1.0), f"cos_curve[{a}]")

    if emit_chord_lower:
        chord = bc.cos_chord
        shift = chord * bc.theta_min - math.cos(bc.theta_min)
        slack = abs(chord) * theta_m
        model.add_linear({c: -1.0, td: chord, z: -(shift - slack)}, "<=", slack,
                         f"cos_chord[{a}]")

    # sine: switched range plus the applicable tangent/chord sides
    model.add_linear({s: 1.0, z: -bc.s_max}, "<=", 0.0, f"sin_on_ub[{a}]")
    model.add_linear({s: 1.0, z: -bc.s_min}, ">=", 0.0, f"sin_on_lb[{a}]")

    half = theta_u / 2.0
    cos_half = math.cos(half)
    tangent_shift = math.sin(half) - cos_half * half
    tangent_slack = cos_half * theta_m
    if bc.theta_max >= 0.0:
        model.add_linear({s: 1.0, td: -cos_half,
                          z: -(tangent_shift - tangent_slack)}, "<=",
                         tangent_slack, f"sin_tan_ub[{a}]")
    if bc.theta_min <= 0.0:
        model.add_linear({s: -1.0, td: cos_half,
                          z: -(tangent_shift - tangent_slack)}, "<=",
                         tangent_slack, f"sin_tan_lb[{a}]")
    chord = bc.sin_chord
    if bc.theta_max <= 0.0:
        shift = -chord * bc.theta_min + math.sin(bc.theta_min)
        slack = chord * theta_m
        model.add_linear({s: 1.0, td: -chord, z: -(shift - slack)}, "<=",
                         slack, f"sin_chord_ub[{a}]")
    if bc.theta_min >= 0.0:
        shift = chord * bc.theta_min - math.sin(bc.theta_min)
        slack = chord * theta_m
        model.add_linear({s: -1.0, td: chord, z: -(shift - slack)}, "<=",
                         slack, f"sin_chord_lb[{a}]")


def _onoff_mccormick(model: ModelIR, u: str, x: str, y: str,
                     xbox: tuple[float, float], ybox: tuple[float, float],
                     z: str, x_gated: bool, y_gated: bool, label: str) -> None:
    """Four McCormick rows for u = x*y, each padded so that the off state
    (u = 0, gated factors at 0, free factors anywhere in their box) stays
    feasible with slack proportional to 1 - z."""
    xl, xu = xbox
    yl, yu = ybox
    x0 = (0.0,) if x_gated else (xl, xu)
    y0 = (0.0,) if y_gated else (yl, yu)

    def pad(fn) -> float:
        return max(0.0, max(fn(xv, yv) for xv in x0 for yv in y0))

    m1 = pad(lambda xv, yv: xl * yv + yl * xv - xl * yl)
    m2 = pad(lambda xv, yv: xu * yv + yu * xv - xu * yu)
    m3 = pad(lambda xv, yv: -(xl * yv + yu * xv - xl * yu))
    m4 = pad(lambda xv, yv: -(xu * yv + yl * xv - xu * yl))

    model.add_linear({u: 1.0, y: -xl, x: -yl, z: -m1}, ">=", -xl * yl - m1,
                     label + ".lo1")
    model.add_linear({u: 1.0, y: -xu, x: -yu, z: -m2}, ">=", -xu * yu - m2,
                     label + ".lo2")
    model.add_linear({u: 1.0, y: -xl, x: -yu, z: m3}, "<=", -xl * yu + m3,
                     label + ".up1")
    model.add_linear({u: 1.0, y: -xu, x: -yl, z: m4}, "<=", -xu * yl + m4,
                     label + ".up2")


def add_mccormick_block(model: ModelIR, a: int, ctx: _BranchCtx) -> None:
    """Recursive on/off McCormick linearization of the trilinear products:
    first the voltage product, then its products with cosine and sine."""
    z = vname_z(a)
    vv = vname_vv(a)
    vvbox = (ctx.vv_lo, ctx.vv_hi)

    _onoff_mccormick(model, vv, vname_v(ctx.i), vname_v(ctx.j),
                     (ctx.vl_i, ctx.vu_i), (ctx.vl_j, ctx.vu_j), z,
                     x_gated=False, y_gated=False, label=f"mc_vv[{a}]")
    model.add_linear({vv: 1.0, z: -ctx.vv_hi}, "<=", 0.0, f"vv_on_ub[{a}]")
    model.add_linear({vv: 1.0, z: -ctx.vv_lo}, ">=", 0.0, f"vv_on_lb[{a}]")

    _onoff_mccormick(model, vname_wr(a), vv, vname_c(a), vvbox,
                     (ctx.bc.c_min, ctx.bc.c_max), z,
                     x_gated=True, y_gated=True, label=f"mc_wr[{a}]")
    _onoff_mccormick(model, vname_wi(a), vv, vname_s(a), vvbox,
                     (ctx.bc.s_min, ctx.bc.s_max), z,
                     x_gated=True, y_gated=True, label=f"mc_wi[{a}]")

    wr_lo, wr_hi = ctx.wr_range()
    wi_lo, wi_hi = ctx.wi_range()
    model.add_linear({vname_wr(a): 1.0, z: -wr_hi}, "<=", 0.0, f"wr_on_ub[{a}]")
    model.add_linear({vname_wr(a): 1.0, z: -wr_lo}, ">=", 0.0, f"wr_on_lb[{a}]")
    model.add_linear({vname_wi(a): 1.0, z: -wi_hi}, "<=", 0.0, f"wi_on_ub[{a}]")
    model.add_linear({vname_wi(a): 1.0, z: -wi_lo}, ">=", 0.0, f"wi_on_lb[{a}]")


def extreme_point_corners(ctx: _BranchCtx, trig: str) -> list[tuple[float, float, float]]:
    """The eight (v_i, v_j, trig) box corners, ordered so that k = 2m + t
    where m indexes the voltage corner (v_i bit high first) and t the trig
    bound bit."""
    if trig == "c":
        tvals = (ctx.bc.c_min, ctx.bc.c_max)
    elif trig == "s":
        tvals = (ctx.bc.s_min, ctx.bc.s_max)
    else:
        raise ValueError(f"unknown trig coordinate {trig!r}")
    corners = []
    for m in range(4):
        vi = ctx.vu_i if m & 2 else ctx.vl_i
        vj = ctx.vu_j if m & 1 else ctx.vl_j
        for t in range(2):
            corners.append((vi, vj, tvals[t]))
    return corners


def add_extreme_point_block(model: ModelIR, a: int, ctx: _BranchCtx) -> None:
    """Convex-hull linearization of the two trilinear products through
    multipliers on the eight corners of each (v_i, v_j, trig) box."""
    z = vname_z(a)
    cor_c = extreme_point_corners(ctx, "c")
    cor_s = extreme_point_corners(ctx, "s")
    lc = [vname_lc(a, k) for k in range(8)]
    ls = [vname_ls(a, k) for k in range(8)]

    row = {vname_wr(a): 1.0}
    for k in range(8):
        vi, vj, cc = cor_c[k]
        row[lc[k]] = -vi * vj * cc
    model.add_linear(row, "=", 0.0, f"ep_wr[{a}]")

    row = {vname_wi(a): 1.0}
    for k in range(8):
        vi, vj, ss = cor_s[k]
        row[ls[k]] = -vi * vj * ss
    model.add_linear(row, "=", 0.0, f"ep_wi[{a}]")

    row = {vname_c(a): 1.0}
    for k in range(8):
        row[lc[k]] = -cor_c[k][2]
    model.add_linear(row, "=", 0.0, f"ep_c[{a}]")

    row = {vname_s(a): 1.0}
    for k in range(8):
        row[ls[k]] = -cor_s[k][2]
    model.add_linear(row, "=", 0.0, f"ep_s[{a}]")

    model.add_linear({**{n: 1.0 for n in lc}, z: -1.0}, "=", 0.0, f"ep_sum_c[{a}]")
    model.add_linear({**{n: 1.0 for n in ls}, z: -1.0}, "=", 0.0, f"ep_sum_s[{a}]")

    # each voltage variable must sit above/below its multiplier average,
    # with the gap vanishing as z reaches 1
    for fam, corners in ((lc, cor_c), (ls, cor_s)):
        for coord, bus, vlo, vhi in ((0, ctx.i, ctx.vl_i, ctx.vu_i),
                                     (1, ctx.j, ctx.vl_j, ctx.vu_j)):
            v = vname_v(bus)
            base = {v: 1.0}
            for k in range(8):
                base[fam[k]] = base.get(fam[k], 0.0) - corners[k][coord]
            lo_row = dict(base)
            lo_row[z] = lo_row.get(z, 0.0) + vlo
            model.add_linear(lo_row, ">=", vlo,
                             f"ep_link_lb[{a},{bus},{'c' if fam is lc else 's'}]")
            hi_row = dict(base)
            hi_row[z] = hi_row.get(z, 0.0) + vhi
            model.add_linear(hi_row, "<=", vhi,
                             f"ep_link_ub[{a},{bus},{'c' if fam is lc else 's'}]")

    # both multiplier families must agree on the implied voltage product
    row = {}
    for m in range(4):
        vi, vj, _ = cor_c[2 * m]
        prod = vi * vj
        for t in range(2):
            row[lc[2 * m + t]] = row.get(lc[2 * m + t], 0.0) + prod
            row[ls[2 * m + t]] = row.get(ls[2 * m + t], 0.0) - prod
    model.add_linear(row, "=", 0.0, f"ep_vv_match[{a}]")


def _lnc_coefficients(ctx: _BranchCtx, variant: str, upper: bool
                      ) -> tuple[float, float, float]:
    """(alpha, beta, gamma) for one lifted nonlinear cut, as coefficients of
    w^z_ij, w^z_ji, z in

        sig_i*sig_j*(cos(phi)*wr + sin(phi)*wi) - alpha*wzf - beta*wzt >= gamma*z
    """
    delta = (ctx.bc.theta_max - ctx.bc.theta_min) / 2.0
    cd = math.cos(delta)
    sig_i = ctx.vl_i + ctx.vu_i
    sig_j = ctx.vl_j + ctx.vu_j
    if variant == "corner":
        ai = ctx.vu_i if upper else ctx.vl_i
        aj = ctx.vu_j if upper else ctx.vl_j
        alpha = cd * sig_j * aj
        beta = cd * sig_i * ai
        gamma = cd * (sig_j * aj * ctx.vl_i * ctx.vu_i
                      + sig_i * ai * ctx.vl_j * ctx.vu_j
                      - sig_i * ai * sig_j * aj)
        return alpha, beta, gamma
    ai = ctx.vu_i if upper else ctx.vl_i
    aj = ctx.vu_j if upper else ctx.vl_j
    alpha = cd * aj * sig_i
    beta = cd * ai * (sig_i if variant == "printed" else sig_j)
    if upper:
        gamma = cd * ctx.vu_i * ctx.vu_j * (ctx.vl_i * ctx.vl_j - ctx.vu_i * ctx.vu_j)
    else:
        gamma = cd * ctx.vl_i * ctx.vl_j * (ctx.vu_i * ctx.vu_j - ctx.vl_i * ctx.vl_j)
    return alpha, beta, gamma


def add_valid_inequalities(model: ModelIR, net: Network, a: int, ctx: _BranchCtx,
                           options: FormulationOptions, tier: str) -> None:
    """Phase-angle cone on the lifted products (both tiers) plus, on tier e,
    the lifted nonlinear cuts and the current-linking constraints."""
    bc = ctx.bc
    wr, wi = vname_wr(a), vname_wi(a)

    if bc.theta_max < math.pi / 2.0 - 1e-9:
        model.add_linear({wi: 1.0, wr: -math.tan(bc.theta_max)}, "<=", 0.0,
                         f"pad_ub[{a}]")
    if bc.theta_min > -math.pi / 2.0 + 1e-9:
        model.add_linear({wi: 1.0, wr: -math.tan(bc.theta_min)}, ">=", 0.0,
                         f"pad_lb[{a}]")

    if tier != "e":
        return

    z = vname_z(a)
    if options.include_lifted_nonlinear_cuts:
        phi = (bc.theta_max + bc.theta_min) / 2.0
        sig = (ctx.vl_i + ctx.vu_i) * (ctx.vl_j + ctx.vu_j)
        for upper, tag in ((True, "u"), (False, "l")):
            alpha, beta, gamma = _lnc_coefficients(ctx, options.lnc_variant, upper)
            model.add_linear({wr: sig * math.cos(phi), wi: sig * math.sin(phi),
                              vname_wzf(a): -alpha, vname_wzt(a): -beta,
                              z: -gamma}, ">=", 0.0, f"lnc_{tag}[{a}]")

    if options.include_current_constraints:
        br = net.branches[a]
        tm2 = br.tap_mag_sq
        ysq = br.g * br.g + br.b * br.b
        ycsq = br.g_c * br.g_c + br.b_c * br.b_c
        lvar = vname_l(a)
        model.add_linear({lvar: 1.0,
                          vname_wzf(a): -(ysq - ycsq) / tm2,
                          vname_wzt(a): -ysq,
                          wr: 2.0 * ysq * br.tap_re / tm2,
                          wi: 2.0 * ysq * br.tap_im / tm2,
                          vname_pf(a): -2.0 * br.g_c,
                          vname_qf(a): 2.0 * br.b_c}, "=", 0.0,
                         f"current_def[{a}]")
        w_i = vname_w(ctx.i)
        model.add_soc([({vname_pf(a): 2.0}, 0.0), ({vname_qf(a): 2.0}, 0.0),
                       ({w_i: 1.0 / tm2, lvar: -1.0}, 0.0)],
                      ({w_i: 1.0 / tm2, lvar: 1.0}, 0.0), f"current_soc[{a}]")
