"""Independent oracles and reporting helpers.

Everything here is deliberately written against the problem data rather
than the relaxation builder: flow residuals go through complex branch
admittances, the trilinear-hull oracle samples exact points on a grid, and
the decomposition checker re-states the corner geometry on its own.  These
routines back the tests that compare the relaxation against ground truth.
"""

from __future__ import annotations

import cmath
import csv
import math
from dataclasses import dataclass
from importlib import resources

from otsqc.netparse import Network


def optimality_gap(ub: float, lb: float) -> float:
    """Percent gap (ub - lb) / lb * 100; requires a positive lower bound."""
    if lb <= 0:
        raise ValueError(f"lower bound must be positive, got {lb}")
    return (ub - lb) / lb * 100.0


_UB_TABLE: dict[str, float] | None = None


def _normalize_case_name(case_name: str) -> str:
    name = case_name.strip().lower()
    if name.endswith(".m"):
        name = name[:-2]
    if name.startswith("pglib_opf_"):
        name = name[len("pglib_opf_"):]
    return name


def reference_ub(case_name: str) -> float:
    """Reference upper bound (best known switching objective) for a case."""
    global _UB_TABLE
    if _UB_TABLE is None:
        table = {}
        path = resources.files("otsqc").joinpath("data/reference_ub.csv")
        with path.open("r", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                table[_normalize_case_name(row["case_name"])] = float(row["ub"])
        _UB_TABLE = table
    key = _normalize_case_name(case_name)
    if key not in _UB_TABLE:
        raise KeyError(f"no reference upper bound for case {case_name!r}")
    return _UB_TABLE[key]


# -- trilinear box geometry --------------------------------------------------

@dataclass
class TrilinearBox:
    """Variable box of one branch's trilinear terms: two voltage intervals
    plus the cosine and sine intervals implied by the angle bounds."""

    vl_i: float
    vu_i: float
    vl_j: float
    vu_j: float
    c_min: float
    c_max: float
    s_min: float
    s_max: float
    theta_min: float = 0.0
    theta_max: float = 0.0

    @classmethod
    def from_angles(cls, vl_i: float, vu_i: float, vl_j: float, vu_j: float,
                    theta_min: float, theta_max: float) -> "TrilinearBox":
        c_lo, c_hi = math.cos(theta_min), math.cos(theta_max)
        c_max = 1.0 if theta_min <= 0.0 <= theta_max else max(c_lo, c_hi)
        return cls(vl_i=vl_i, vu_i=vu_i, vl_j=vl_j, vu_j=vu_j,
                   c_min=min(c_lo, c_hi), c_max=c_max,
                   s_min=math.sin(theta_min), s_max=math.sin(theta_max),
                   theta_min=theta_min, theta_max=theta_max)

    def corners(self, trig: str) -> list[tuple[float, float, float]]:
        """Eight (v_i, v_j, trig) corners, k = 2m + t with m the voltage
        corner (v_i bit high first) and t the trig bound bit."""
        lo, hi = ((self.c_min, self.c_max) if trig == "c"
                  else (self.s_min, self.s_max))
        out = []
        for m in range(4):
            vi = self.vu_i if m & 2 else self.vl_i
            vj = self.vu_j if m & 1 else self.vl_j
            out.append((vi, vj, lo))
            out.append((vi, vj, hi))
        return out


# -- Theorem 1: on/off hull decomposition ------------------------------------

_ETA_KEYS = ("wr", "wi", "c", "s", "lc", "ls", "z", "vi", "vj")


@dataclass
class DecompositionResult:
    eta0: dict
    eta1: dict
    h0_residual: float
    h1_residual: float
    recombine_residual: float

    @property
    def max_residual(self) -> float:
        return max(self.h0_residual, self.h1_residual, self.recombine_residual)

    def ok(self, tol: float = 1e-9) -> bool:
        return self.max_residual <= tol


def _hull_row_residuals(point: dict, box: TrilinearBox) -> list[tuple[str, float]]:
    """Signed violations of every row of the on/off hull at the point;
    equality rows contribute |lhs - rhs|, inequality rows max(0, excess)."""
    xi = box.corners("c")
    ga = box.corners("s")
    lc, ls = point["lc"], point["ls"]
    z = point["z"]
    rows: list[tuple[str, float]] = []
    rows.append(("wr_combo", abs(point["wr"] - sum(
        l * v1 * v2 * t for l, (v1, v2, t) in zip(lc, xi)))))
    rows.append(("wi_combo", abs(point["wi"] - sum(
        l * v1 * v2 * t for l, (v1, v2, t) in zip(ls, ga)))))
    rows.append(("c_combo", abs(point["c"] - sum(
        l * t for l, (_, _, t) in zip(lc, xi)))))
    rows.append(("s_combo", abs(point["s"] - sum(
        l * t for l, (_, _, t) in zip(ls, ga)))))
    rows.append(("lc_sum", abs(sum(lc) - z)))
    rows.append(("ls_sum", abs(sum(ls) - z)))
    for k in range(8):
        rows.append((f"lc_nonneg[{k}]", max(0.0, -lc[k])))
        rows.append((f"ls_nonneg[{k}]", max(0.0, -ls[k])))
    rows.append(("z_range", max(0.0, -z, z - 1.0)))
    for fam, corners, tag in ((lc, xi, "c"), (ls, ga, "s")):
        for coord, val, vlo, vhi in ((0, point["vi"], box.vl_i, box.vu_i),
                                     (1, point["vj"], box.vl_j, box.vu_j)):
            avg = sum(l * cr[coord] for l, cr in zip(fam, corners))
            gap = val - avg
            rows.append((f"v_link_lb[{coord},{tag}]",
                         max(0.0, vlo * (1.0 - z) - gap)))
            rows.append((f"v_link_ub[{coord},{tag}]",
                         max(0.0, gap - vhi * (1.0 - z))))
    moment = 0.0
    for m in range(4):
        vi, vj, _ = xi[2 * m]
        moment += (lc[2 * m] + lc[2 * m + 1] - ls[2 * m] - ls[2 * m + 1]) * vi * vj
    rows.append(("vv_match", abs(moment)))
    rows.append(("vi_box", max(0.0, box.vl_i - point["vi"], point["vi"] - box.vu_i)))
    rows.append(("vj_box", max(0.0, box.vl_j - point["vj"], point["vj"] - box.vu_j)))
    return rows


def check_theorem1(point: dict, box: TrilinearBox, tol: float = 1e-9,
                   pre_tol: float = 1e-7) -> DecompositionResult:
    """Split a fractional-z hull point into its off-state and on-state parts.

    The point must satisfy the single-branch hull with z strictly inside
    (0, 1); the off part keeps only voltages, the on part rescales every
    switched quantity by 1/z, and the convex recombination must reproduce
    the input exactly.
    """
    missing = [k for k in _ETA_KEYS if k not in point]
    if missing:
        raise ValueError(f"point is missing components {missing}")
    z = point["z"]
    if not 0.0 < z < 1.0:
        raise ValueError(f"decomposition needs z strictly inside (0,1), got {z}")
    for label, resid in _hull_row_residuals(point, box):
        if resid > pre_tol:
            raise ValueError(f"point violates hull row {label} by {resid:.3e}")

    xi = box.corners("c")
    lc, ls = point["lc"], point["ls"]
    avg_i = sum(l * cr[0] for l, cr in zip(lc, xi))
    avg_j = sum(l * cr[1] for l, cr in zip(lc, xi))
    eta0 = {"wr": 0.0, "wi": 0.0, "c": 0.0, "s": 0.0,
            "lc": [0.0] * 8, "ls": [0.0] * 8, "z": 0.0,
            "vi": (point["vi"] - avg_i) / (1.0 - z),
            "vj": (point["vj"] - avg_j) / (1.0 - z)}
    eta1 = {"wr": point["wr"] / z, "wi": point["wi"] / z,
            "c": point["c"] / z, "s": point["s"] / z,
            "lc": [l / z for l in lc], "ls": [l / z for l in ls],
            "z": 1.0,
            "vi": sum(l / z * cr[0] for l, cr in zip(lc, xi)),
            "vj": sum(l / z * cr[1] for l, cr in zip(lc, xi))}

    h0 = max(0.0,
             box.vl_i - eta0["vi"], eta0["vi"] - box.vu_i,
             box.vl_j - eta0["vj"], eta0["vj"] - box.vu_j)
    h1 = max(r for _, r in _hull_row_residuals(eta1, box))

    recomb = 0.0
    for key in ("wr", "wi", "c", "s", "z", "vi", "vj"):
        recomb = max(recomb, abs(point[key]
                                 - (1.0 - z) * eta0[key] - z * eta1[key]))
    for k in range(8):
        recomb = max(recomb,
                     abs(lc[k] - (1.0 - z) * eta0["lc"][k] - z * eta1["lc"][k]),
                     abs(ls[k] - (1.0 - z) * eta0["ls"][k] - z * eta1["ls"][k]))

    return DecompositionResult(eta0=eta0, eta1=eta1, h0_residual=h0,
                               h1_residual=h1, recombine_residual=recomb)


# -- Proposition 1: the two 3-cycle identity families ------------------------

def cycle_equation_residuals(c_ij: float, s_ij: float, c_jk: float, s_jk: float,
                             c_ik: float, s_ik: float) -> tuple[float, float, float, float]:
    """Residuals of the product form (first two) and the summed alternative
    form (last two) of the 3-cycle trigonometric identities."""
    r1 = c_ik - (c_ij * c_jk - s_ij * s_jk)
    r2 = s_ik - (c_ij * s_jk + s_ij * c_jk)
    r3 = (c_ij * c_jk * c_ik + c_ij * s_jk * s_ik
          - s_ij * s_jk * c_ik + s_ij * c_jk * s_ik) - 1.0
    r4 = (s_ij * c_jk * c_ik + s_ij * s_jk * s_ik
          + c_ij * s_jk * c_ik - c_ij * c_jk * s_ik)
    return abs(r1), abs(r2), abs(r3), abs(r4)


def check_prop1(theta_ij: float, theta_jk: float,
                perturb: dict | None = None, tol: float = 1e-12) -> bool:
    """True iff exact trig values on the triangle satisfy both identity
    families to tol; perturb injects named deviations (e.g. {"c_ik": 1e-3})
    to demonstrate the residual really bites."""
    theta_ik = theta_ij + theta_jk
    for th in (theta_ij, theta_jk, theta_ik):
        if abs(th) > math.pi / 2.0 + 1e-12:
            raise ValueError(f"angle {th} outside +/- pi/2")
    vals = {"c_ij": math.cos(theta_ij), "s_ij": math.sin(theta_ij),
            "c_jk": math.cos(theta_jk), "s_jk": math.sin(theta_jk),
            "c_ik": math.cos(theta_ik), "s_ik": math.sin(theta_ik)}
    for key, delta in (perturb or {}).items():
        vals[key] += delta
    residuals = cycle_equation_residuals(vals["c_ij"], vals["s_ij"],
                                         vals["c_jk"], vals["s_jk"],
                                         vals["c_ik"], vals["s_ik"])
    return max(residuals) <= tol


# -- brute-force trilinear oracle --------------------------------------------

def brute_force_hull_bound(box: TrilinearBox, objective: dict,
                           grid_n: int = 20) -> float:
    """Minimum of a linear objective over exact trilinear points sampled on
    a grid of (v_i, v_j, theta).  Objective keys: vi, vj, c, s, wr, wi.
    Lower-bounds nothing by itself; it is the reference the relaxations
    must stay below (a relaxation minimum can only be smaller)."""
    if grid_n < 2:
        raise ValueError("grid_n must be at least 2")

    def axis(lo: float, hi: float) -> list[float]:
        if hi <= lo:
            return [lo]
        step = (hi - lo) / (grid_n - 1)
        return [lo + step * t for t in range(grid_n)]

    best = math.inf
    for vi in axis(box.vl_i, box.vu_i):
        for vj in axis(box.vl_j, box.vu_j):
            for th in axis(box.theta_min, box.theta_max):
                cc, ss = math.cos(th), math.sin(th)
                val = (objective.get("vi", 0.0) * vi
                       + objective.get("vj", 0.0) * vj
                       + objective.get("c", 0.0) * cc
                       + objective.get("s", 0.0) * ss
                       + objective.get("wr", 0.0) * vi * vj * cc
                       + objective.get("wi", 0.0) * vi * vj * ss)
                best = min(best, val)
    return best


def relaxation_hull_bound(box: TrilinearBox, objective: dict, tier: str) -> float:
    """Minimum of the same linear objective over one branch's trilinear
    relaxation block at z = 1, for hull-dominance comparisons."""
    from otsqc.modelir import solve_continuous
    from otsqc.prep import _branch_constants
    from otsqc import qcmodel

    model = qcmodel.ModelIR(name="hullprobe")
    bc = _branch_constants(box.theta_min, box.theta_max)
    ctx = qcmodel._BranchCtx(a=0, i=0, j=1,
                             vl_i=box.vl_i, vu_i=box.vu_i,
                             vl_j=box.vl_j, vu_j=box.vu_j,
                             bc=bc, theta_big_m=max(bc.theta_u, 1e-6))
    model.add_var(qcmodel.vname_v(0), box.vl_i, box.vu_i)
    model.add_var(qcmodel.vname_v(1), box.vl_j, box.vu_j)
    model.add_var(qcmodel.vname_z(0), 1.0, 1.0, binary=True)
    model.add_var(qcmodel.vname_td(0), box.theta_min, box.theta_max)
    model.add_var(qcmodel.vname_c(0), min(0.0, bc.c_min), max(0.0, bc.c_max))
    model.add_var(qcmodel.vname_s(0), min(0.0, bc.s_min), max(0.0, bc.s_max))
    wr_lo, wr_hi = ctx.wr_range()
    wi_lo, wi_hi = ctx.wi_range()
    model.add_var(qcmodel.vname_wr(0), min(0.0, wr_lo), max(0.0, wr_hi))
    model.add_var(qcmodel.vname_wi(0), min(0.0, wi_lo), max(0.0, wi_hi))
    model.add_var(qcmodel.vname_vv(0), min(0.0, ctx.vv_lo), ctx.vv_hi)
    if tier == "e":
        for k in range(8):
            model.add_var(qcmodel.vname_lc(0, k), 0.0, 1.0)
            model.add_var(qcmodel.vname_ls(0, k), 0.0, 1.0)
    qcmodel.add_mccormick_block(model, 0, ctx)
    if tier == "e":
        qcmodel.add_extreme_point_block(model, 0, ctx)
    model.add_objective(linear={
        qcmodel.vname_v(0): objective.get("vi", 0.0),
        qcmodel.vname_v(1): objective.get("vj", 0.0),
        qcmodel.vname_c(0): objective.get("c", 0.0),
        qcmodel.vname_s(0): objective.get("s", 0.0),
        qcmodel.vname_wr(0): objective.get("wr", 0.0),
        qcmodel.vname_wi(0): objective.get("wi", 0.0),
    })
    sol = solve_continuous(model)
    if not sol.ok:
        raise RuntimeError(f"hull probe solve failed: {sol.status}")
    return sol.objective


# -- nonconvex feasibility ---------------------------------------------------

@dataclass
class ViolationReport:
    family_residuals: dict[str, float]
    worst_family: str
    worst_id: object
    max_residual: float

    def ok(self, tol: float) -> bool:
        return self.max_residual <= tol


def check_nonconvex_feasibility(net: Network, point: dict,
                                tol: float = 1e-6) -> ViolationReport:
    """Residuals of the nonconvex switching model at a candidate point.

    The point maps: v and va per bus id, z/pf/qf/pt/qt per branch index,
    pg/qg per generator index, optionally wr/wi per branch index.  Flow
    residuals are computed from complex branch admittances so this is an
    independent route from the linearized builder.  Bus power balance is
    included: without it a zero-residual report would not imply
    AC-feasibility at the fixed switching.
    """
    fams = {"flow_pf": (0.0, None), "flow_qf": (0.0, None),
            "flow_pt": (0.0, None), "flow_qt": (0.0, None),
            "product_wr": (0.0, None), "product_wi": (0.0, None),
            "balance_p": (0.0, None), "balance_q": (0.0, None)}

    def hit(fam: str, ident, resid: float) -> None:
        resid = abs(resid)
        if resid > fams[fam][0]:
            fams[fam] = (resid, ident)

    v, va = point["v"], point["va"]
    volt = {i: v[i] * cmath.exp(1j * va[i]) for i in v}

    for a, br in enumerate(net.branches):
        z = point["z"][a]
        y = complex(br.g, br.b)
        yc = complex(br.g_c, br.b_c)
        tap = complex(br.tap_re, br.tap_im)
        vi, vj = volt[br.from_bus], volt[br.to_bus]
        i_f = (y + yc) / br.tap_mag_sq * vi - y / tap.conjugate() * vj
        i_t = -y / tap * vi + (y + yc) * vj
        s_f = vi * i_f.conjugate() * z
        s_t = vj * i_t.conjugate() * z
        hit("flow_pf", a, point["pf"][a] - s_f.real)
        hit("flow_qf", a, point["qf"][a] - s_f.imag)
        hit("flow_pt", a, point["pt"][a] - s_t.real)
        hit("flow_qt", a, point["qt"][a] - s_t.imag)
        if "wr" in point:
            prod = vi * vj.conjugate() * z
            hit("product_wr", a, point["wr"][a] - prod.real)
            hit("product_wi", a, point["wi"][a] - prod.imag)

    for bus in net.buses:
        i = bus.id
        wsq = v[i] * v[i]
        p_in = sum(point["pg"][k] for k in net.gens_at(i))
        q_in = sum(point["qg"][k] for k in net.gens_at(i))
        p_out = q_out = 0.0
        for a in net.branches_at(i):
            br = net.branches[a]
            if br.from_bus == i:
                p_out += point["pf"][a]
                q_out += point["qf"][a]
            if br.to_bus == i:
                p_out += point["pt"][a]
                q_out += point["qt"][a]
        hit("balance_p", i, p_in - bus.demand_p - bus.shunt_g * wsq - p_out)
        hit("balance_q", i, q_in - bus.demand_q + bus.shunt_b * wsq - q_out)

    worst_fam = max(fams, key=lambda f: fams[f][0])
    worst_res, worst_id = fams[worst_fam]
    return ViolationReport(
        family_residuals={f: r for f, (r, _) in fams.items()},
        worst_family=worst_fam, worst_id=worst_id, max_residual=worst_res)
