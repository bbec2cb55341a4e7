"""On/off cycle consistency constraints and their separation.

Around any closed cycle the branch angle differences sum to zero, so the
lifted cosine/sine pairs of the cycle's branches satisfy polynomial
identities (angle addition expanded around the cycle), and so do the
lifted voltage products.  This module turns those identities into convex
constraints that respect line switching:

* relaxed identity rows whose slack grows with the number of open lines
  in the cycle (big-M form),
* an extreme-point convex hull of the identity manifold over the
  coordinate boxes, driven by a per-cycle indicator that collapses the
  hull whenever any line of the cycle opens,
* a separation routine that extracts violated valid inequalities for
  that hull from a relaxation solution via phase-one duals and gates
  them so they stay valid when lines open.

3-cycles are covered in both the trigonometric space (cosine/sine
variables) and the voltage-product space (real/imaginary lifted
products); the trilinear bus terms of the voltage-product identities are
lifted into auxiliary products with envelope rows.  4-cycles contribute
the identities pairing opposite arcs, which are free of bus terms, in
both spaces.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from otsqc.modelir import ModelIR
from otsqc.netparse import Network
from otsqc.prep import Cycle, LineConstants
from otsqc.qcmodel import vname_c, vname_s, vname_w, vname_wi, vname_wr, vname_z

log = logging.getLogger(__name__)

SPACES = ("cs", "w")


@dataclass
class CycleOptions:
    """Tolerances and switches for cycle constraint generation."""

    violation_tol: float = 1e-6
    validity_tol: float = 1e-8
    max_cuts: int = 200
    include_alternative_form: bool = False


def vname_y(cid: int) -> str:
    return f"yc[{cid}]"


def vname_lam(space: str, cid: int, r: int) -> str:
    return f"lam_{space}[{cid},{r}]"


def vname_pair(space: str, cid: int, j1: int, j2: int) -> str:
    return f"xp_{space}[{cid},{j1},{j2}]"


def vname_pair_bigm(space: str, cid: int, j1: int, j2: int) -> str:
    return f"xb_{space}[{cid},{j1},{j2}]"


def vname_lift(cid: int, q: int) -> str:
    return f"uw[{cid},{q}]"


@dataclass(frozen=True)
class CoordSpec:
    """One cycle coordinate: a signed model variable with closed-line bounds."""

    var: str
    sign: float
    lo: float
    hi: float

    @property
    def wide_lo(self) -> float:
        return min(0.0, self.lo)

    @property
    def wide_hi(self) -> float:
        return max(0.0, self.hi)


@dataclass(frozen=True)
class Equation:
    """One cycle identity, as signed bare-coordinate and pair-product terms.

    Terms sum to zero on consistent points.  bus_pos names the cycle
    vertex whose squared voltage multiplies the bare term in the
    voltage-product space; it is ignored in the trigonometric space.
    """

    terms: tuple[tuple[float, tuple[int, ...]], ...]
    bus_pos: int | None = None

    @property
    def bare_terms(self) -> list[tuple[float, int]]:
        return [(s, ix[0]) for s, ix in self.terms if len(ix) == 1]

    @property
    def pair_terms(self) -> list[tuple[float, tuple[int, int]]]:
        return [(s, ix) for s, ix in self.terms if len(ix) == 2]


# 3-cycle identities over (c1, c2, c3, s1, s2, s3): each bare coordinate
# equals the angle-addition expansion over the other two arcs.  In the
# voltage-product space the bare term is scaled by the squared voltage of
# the vertex shared by the two expanded arcs.
_EQ_3 = (
    Equation(((1.0, (2,)), (-1.0, (0, 1)), (1.0, (3, 4))), bus_pos=1),
    Equation(((1.0, (5,)), (-1.0, (0, 4)), (-1.0, (1, 3))), bus_pos=1),
    Equation(((1.0, (0,)), (-1.0, (1, 2)), (-1.0, (4, 5))), bus_pos=2),
    Equation(((1.0, (3,)), (-1.0, (1, 5)), (1.0, (2, 4))), bus_pos=2),
    Equation(((1.0, (1,)), (-1.0, (0, 2)), (-1.0, (3, 5))), bus_pos=0),
    Equation(((1.0, (4,)), (-1.0, (0, 5)), (1.0, (2, 3))), bus_pos=0),
)

# 4-cycle identities over (c1..c4, s1..s4): three ways to split the cycle
# into two two-arc paths give pure pair identities.  Only the first split
# (opposite arcs) survives in the voltage-product space; the other two
# pick up trilinear bus terms there and are dropped.
_EQ_4 = (
    Equation(((1.0, (0, 2)), (-1.0, (4, 6)), (-1.0, (1, 3)), (-1.0, (5, 7)))),
    Equation(((1.0, (0, 6)), (1.0, (2, 4)), (1.0, (3, 5)), (-1.0, (1, 7)))),
    Equation(((1.0, (0, 1)), (-1.0, (4, 5)), (-1.0, (2, 3)), (-1.0, (6, 7)))),
    Equation(((1.0, (0, 5)), (1.0, (1, 4)), (1.0, (3, 6)), (-1.0, (2, 7)))),
    Equation(((1.0, (1, 2)), (-1.0, (5, 6)), (-1.0, (0, 3)), (-1.0, (4, 7)))),
    Equation(((1.0, (1, 6)), (1.0, (2, 5)), (1.0, (3, 4)), (-1.0, (0, 7)))),
)

# Alternative product form of the 3-cycle identities: multiplying through
# by the closing coordinate pair turns them into trilinear moment rows
# (the cosine row sums to one, the sine row to zero, on consistent points).
_ALT_3_COS = ((1.0, (0, 1, 2)), (1.0, (0, 4, 5)), (-1.0, (3, 4, 2)), (1.0, (3, 1, 5)))
_ALT_3_SIN = ((1.0, (3, 1, 2)), (1.0, (3, 4, 5)), (1.0, (0, 4, 2)), (-1.0, (0, 1, 5)))


def _equations(space: str, n_arcs: int) -> tuple[Equation, ...]:
    if n_arcs == 3:
        return _EQ_3
    if n_arcs == 4:
        return _EQ_4 if space == "cs" else _EQ_4[:2]
    raise ValueError(f"unsupported cycle length {n_arcs}")


def _minmax_product(b1: tuple[float, float], b2: tuple[float, float]) -> tuple[float, float]:
    corners = [b1[0] * b2[0], b1[0] * b2[1], b1[1] * b2[0], b1[1] * b2[1]]
    return min(corners), max(corners)


@dataclass
class CycleBlock:
    """Prepared cycle constraint data for one cycle in one space.

    Holds the signed coordinate mapping onto model variables, their
    closed-line boxes, the identity list, the extreme-point matrix over
    the box corners, and the names of the indicator / multiplier /
    lifted-product variables.  Emission into a model and separation both
    work from this.
    """

    cycle: Cycle
    space: str
    coords: list[CoordSpec]
    equations: tuple[Equation, ...]
    pair_set: list[tuple[int, int]]
    y_var: str
    lambda_vars: list[str]
    extreme_matrix: np.ndarray
    lift_vars: list[str | None]
    lift_bounds: list[tuple[float, float] | None]
    lift_bus_vars: list[str | None]
    lift_w_bounds: list[tuple[float, float] | None]
    lift_coord: list[int | None]

    @property
    def x_vars(self) -> list[str]:
        return [c.var for c in self.coords]

    @property
    def x_bounds(self) -> list[tuple[float, float]]:
        return [(c.lo, c.hi) for c in self.coords]

    def coord_values(self, values: dict[str, float]) -> np.ndarray:
        return np.array([c.sign * values[c.var] for c in self.coords])

    def lift_values(self, values: dict[str, float], x: np.ndarray) -> list[float | None]:
        """Lifted bus-product values, from the model when present else recomputed."""
        out: list[float | None] = []
        for q in range(len(self.equations)):
            if self.lift_vars[q] is None:
                out.append(None)
            elif self.lift_vars[q] in values:
                out.append(values[self.lift_vars[q]])
            else:
                out.append(values[self.lift_bus_vars[q]] * x[self.lift_coord[q]])
        return out

    def pair_matrix(self, eq: Equation) -> np.ndarray:
        """Per extreme point, the signed sum of this identity's pair products."""
        X = self.extreme_matrix
        out = np.zeros(X.shape[0])
        for s, (j1, j2) in eq.pair_terms:
            out += s * X[:, j1] * X[:, j2]
        return out

    def bare_matrix(self, eq: Equation) -> np.ndarray:
        X = self.extreme_matrix
        out = np.zeros(X.shape[0])
        for s, j in eq.bare_terms:
            out += s * X[:, j]
        return out


@dataclass
class Cut:
    """A gated valid inequality over one cycle's coordinates.

    terms hold model-variable coefficients; the ungated form
    sum(terms) <= rhs is valid whenever every line of the cycle is
    closed, and gate_m of slack per open line makes it valid everywhere.
    """

    cycle_id: int
    space: str
    terms: list[tuple[str, float]]
    rhs: float
    violation: float
    gate_arcs: tuple[int, ...]
    gate_m: float

    def model_row(self) -> tuple[dict[str, float], str, float, str]:
        coeffs = dict(self.terms)
        for a in self.gate_arcs:
            coeffs[vname_z(a)] = coeffs.get(vname_z(a), 0.0) + self.gate_m
        rhs = self.rhs + self.gate_m * len(self.gate_arcs)
        return coeffs, "<=", rhs, f"cyc_cut[{self.cycle_id},{self.space}]"


def _vbox(net: Network, v_bounds: dict[int, tuple[float, float]] | None,
          bus_id: int) -> tuple[float, float]:
    if v_bounds and bus_id in v_bounds:
        return v_bounds[bus_id]
    bus = net.bus(bus_id)
    return bus.v_min, bus.v_max


def cycle_block(net: Network, constants: LineConstants, cycle: Cycle, space: str,
                v_bounds: dict[int, tuple[float, float]] | None = None) -> CycleBlock:
    """Prepare coordinates, boxes, and variable names for one cycle and space.

    Coordinate order is the cycle's cosine-like variables along the
    traversal followed by its sine-like ones; sine coordinates are
    sign-adjusted so every arc reads in traversal direction, with the
    closing arc flipped to match the identity tables.
    """
    if space not in SPACES:
        raise ValueError(f"unknown space {space!r}")
    n = len(cycle.arcs)
    equations = _equations(space, n)

    def vv_box(a: int) -> tuple[float, float]:
        br = net.branches[a]
        return _minmax_product(_vbox(net, v_bounds, br.from_bus),
                               _vbox(net, v_bounds, br.to_bus))

    coords: list[CoordSpec] = []
    for a in cycle.arcs:
        bc = constants.branch[a]
        if space == "cs":
            coords.append(CoordSpec(vname_c(a), 1.0, bc.c_min, bc.c_max))
        else:
            lo, hi = _minmax_product(vv_box(a), (bc.c_min, bc.c_max))
            coords.append(CoordSpec(vname_wr(a), 1.0, lo, hi))
    for m, a in enumerate(cycle.arcs):
        bc = constants.branch[a]
        sign = float(cycle.signs[m]) * (-1.0 if m == n - 1 else 1.0)
        if space == "cs":
            lo, hi = bc.s_min, bc.s_max
            var = vname_s(a)
        else:
            lo, hi = _minmax_product(vv_box(a), (bc.s_min, bc.s_max))
            var = vname_wi(a)
        if sign < 0:
            lo, hi = -hi, -lo
        coords.append(CoordSpec(var, sign, lo, hi))

    dim = 2 * n
    X = np.empty((2 ** dim, dim))
    for r in range(2 ** dim):
        for j in range(dim):
            X[r, j] = coords[j].hi if (r >> j) & 1 else coords[j].lo

    pair_set = sorted({ix for eq in equations for _, ix in eq.pair_terms})

    lift_vars: list[str | None] = []
    lift_bounds: list[tuple[float, float] | None] = []
    lift_bus_vars: list[str | None] = []
    lift_w_bounds: list[tuple[float, float] | None] = []
    lift_coord: list[int | None] = []
    for q, eq in enumerate(equations):
        if space == "w" and eq.bus_pos is not None:
            (_, j), = eq.bare_terms
            bus_id = cycle.vertices[eq.bus_pos]
            vlo, vhi = _vbox(net, v_bounds, bus_id)
            wbox = (vlo * vlo, vhi * vhi)
            cj = coords[j]
            lift_vars.append(vname_lift(cycle.id, q))
            lift_bounds.append(_minmax_product(wbox, (cj.wide_lo, cj.wide_hi)))
            lift_bus_vars.append(vname_w(bus_id))
            lift_w_bounds.append(wbox)
            lift_coord.append(j)
        else:
            lift_vars.append(None)
            lift_bounds.append(None)
            lift_bus_vars.append(None)
            lift_w_bounds.append(None)
            lift_coord.append(None)

    return CycleBlock(
        cycle=cycle, space=space, coords=coords, equations=equations,
        pair_set=pair_set, y_var=vname_y(cycle.id),
        lambda_vars=[vname_lam(space, cycle.id, r) for r in range(2 ** dim)],
        extreme_matrix=X, lift_vars=lift_vars, lift_bounds=lift_bounds,
        lift_bus_vars=lift_bus_vars, lift_w_bounds=lift_w_bounds,
        lift_coord=lift_coord)


def blocks_for_cycles(net: Network, constants: LineConstants, cycles: list[Cycle],
                      spaces: tuple[str, ...] = SPACES,
                      v_bounds: dict[int, tuple[float, float]] | None = None,
                      ) -> list[CycleBlock]:
    return [cycle_block(net, constants, cyc, space, v_bounds)
            for cyc in cycles for space in spaces]


def _ensure_indicator(model: ModelIR, block: CycleBlock) -> None:
    """Create the cycle's closed-indicator and its line links once per cycle."""
    if block.y_var in model.variable_index:
        return
    cid = block.cycle.id
    model.add_var(block.y_var, 0.0, 1.0, binary=True)
    n = len(block.cycle.arcs)
    zs = {vname_z(a): -1.0 for a in block.cycle.arcs}
    model.add_linear({block.y_var: 1.0, **zs}, ">=", 1.0 - n, f"cyc_y_lb[{cid}]")
    model.add_linear({block.y_var: float(n), **zs}, "<=", 0.0, f"cyc_y_ub[{cid}]")


def ensure_voltage_lifts(model: ModelIR, block: CycleBlock) -> None:
    """Create lifted bus-voltage products with envelope rows where needed.

    Each lifted variable is the product of a bus squared-voltage and one
    signed coordinate; a four-row envelope over the (voltage, widened
    coordinate) box keeps it valid for open and closed lines alike.
    """
    cid = block.cycle.id
    for q, uvar in enumerate(block.lift_vars):
        if uvar is None or uvar in model.variable_index:
            continue
        ulo, uhi = block.lift_bounds[q]
        model.add_var(uvar, ulo, uhi)
        wvar = block.lift_bus_vars[q]
        wl, wh = block.lift_w_bounds[q]
        cj = block.coords[block.lift_coord[q]]
        xl, xh = cj.wide_lo, cj.wide_hi
        xcoef = cj.sign
        lab = f"cyc_lift[{cid},{q}]"
        model.add_linear({uvar: 1.0, cj.var: -wl * xcoef, wvar: -xl}, ">=",
                         -wl * xl, lab + ".ll")
        model.add_linear({uvar: 1.0, cj.var: -wh * xcoef, wvar: -xh}, ">=",
                         -wh * xh, lab + ".uu")
        model.add_linear({uvar: 1.0, cj.var: -wl * xcoef, wvar: -xh}, "<=",
                         -wl * xh, lab + ".lu")
        model.add_linear({uvar: 1.0, cj.var: -wh * xcoef, wvar: -xl}, "<=",
                         -wh * xl, lab + ".ul")


def build_cycle_hull(model: ModelIR, block: CycleBlock,
                     options: CycleOptions | None = None) -> CycleBlock:
    """Emit the switched extreme-point hull of the cycle's identities.

    Multipliers over the coordinate-box corners reproduce the coordinates
    and their pairwise products when the cycle indicator is one; slack
    proportional to the indicator's complement releases every row when a
    line opens, which forces the multipliers to zero.
    """
    options = options or CycleOptions()
    cid, space = block.cycle.id, block.space
    X = block.extreme_matrix
    n_pts = X.shape[0]
    _ensure_indicator(model, block)
    ensure_voltage_lifts(model, block)
    for name in block.lambda_vars:
        model.add_var(name, 0.0, 1.0)

    lam_sum = {name: 1.0 for name in block.lambda_vars}
    model.add_linear({**lam_sum, block.y_var: -1.0}, "=", 0.0,
                     f"cyc_lam_sum_{space}[{cid}]")

    for j, cj in enumerate(block.coords):
        moments = {name: -X[r, j] for r, name in enumerate(block.lambda_vars)}
        lo, hi = cj.wide_lo, cj.wide_hi
        model.add_linear({cj.var: cj.sign, **moments, block.y_var: lo}, ">=", lo,
                         f"cyc_link_lb_{space}[{cid},{j}]")
        model.add_linear({cj.var: cj.sign, **moments, block.y_var: hi}, "<=", hi,
                         f"cyc_link_ub_{space}[{cid},{j}]")

    for j1, j2 in block.pair_set:
        plo, phi = _minmax_product((block.coords[j1].lo, block.coords[j1].hi),
                                   (block.coords[j2].lo, block.coords[j2].hi))
        model.add_var(vname_pair(space, cid, j1, j2), min(0.0, plo), max(0.0, phi))
        prods = {name: -X[r, j1] * X[r, j2] for r, name in enumerate(block.lambda_vars)}
        model.add_linear({vname_pair(space, cid, j1, j2): 1.0, **prods}, "=", 0.0,
                         f"cyc_pair_{space}[{cid},{j1},{j2}]")

    for q, eq in enumerate(block.equations):
        row: dict[str, float] = {}
        slack_lo = slack_hi = 0.0
        if block.lift_vars[q] is not None:
            (sign_b, _), = eq.bare_terms
            row[block.lift_vars[q]] = sign_b
            ulo, uhi = block.lift_bounds[q]
            slack_lo += min(sign_b * ulo, sign_b * uhi)
            slack_hi += max(sign_b * ulo, sign_b * uhi)
        else:
            for sign_b, j in eq.bare_terms:
                cj = block.coords[j]
                row[cj.var] = row.get(cj.var, 0.0) + sign_b * cj.sign
                slack_lo += min(sign_b * cj.wide_lo, sign_b * cj.wide_hi)
                slack_hi += max(sign_b * cj.wide_lo, sign_b * cj.wide_hi)
        for s, (j1, j2) in eq.pair_terms:
            name = vname_pair(space, cid, j1, j2)
            row[name] = row.get(name, 0.0) + s
        if slack_lo == 0.0 and slack_hi == 0.0:
            model.add_linear(row, "=", 0.0, f"cyc_eq_{space}[{cid},{q}]")
        else:
            model.add_linear({**row, block.y_var: slack_lo}, ">=", slack_lo,
                             f"cyc_eq_lb_{space}[{cid},{q}]")
            model.add_linear({**row, block.y_var: slack_hi}, "<=", slack_hi,
                             f"cyc_eq_ub_{space}[{cid},{q}]")

    if (options.include_alternative_form and space == "cs"
            and len(block.cycle.arcs) == 3):
        for label, terms, target in (("cos", _ALT_3_COS, -1.0), ("sin", _ALT_3_SIN, 0.0)):
            moments = np.zeros(n_pts)
            for s, (j1, j2, j3) in terms:
                moments += s * X[:, j1] * X[:, j2] * X[:, j3]
            row = {name: moments[r] for r, name in enumerate(block.lambda_vars)}
            row[block.y_var] = target
            model.add_linear(row, "=", 0.0, f"cyc_alt_{label}[{cid}]")
    return block


def _coord_state_boxes(block: CycleBlock, off: tuple[int, ...]) -> list[tuple[float, float]]:
    """Coordinate intervals when the arcs at the given positions are open."""
    n = len(block.cycle.arcs)
    out = []
    for j, cj in enumerate(block.coords):
        if (j % n) in off:
            out.append((0.0, 0.0))
        else:
            out.append((cj.lo, cj.hi))
    return out


def bigm_constant(block: CycleBlock, q: int) -> float:
    """Smallest per-open-line slack covering one identity over all states.

    For every pattern with at least one open line, interval arithmetic
    bounds the identity residual with open-line coordinates pinned to
    zero; the constant is the worst bound divided by that pattern's open
    count.
    """
    eq = block.equations[q]
    n = len(block.cycle.arcs)
    worst = 0.0
    for k in range(1, n + 1):
        for off in itertools.combinations(range(n), k):
            boxes = _coord_state_boxes(block, off)
            lo = hi = 0.0
            if block.lift_vars[q] is not None:
                (sign_b, j), = eq.bare_terms
                plo, phi = _minmax_product(block.lift_w_bounds[q], boxes[j])
                lo += min(sign_b * plo, sign_b * phi)
                hi += max(sign_b * plo, sign_b * phi)
            else:
                for sign_b, j in eq.bare_terms:
                    lo += min(sign_b * boxes[j][0], sign_b * boxes[j][1])
                    hi += max(sign_b * boxes[j][0], sign_b * boxes[j][1])
            for s, (j1, j2) in eq.pair_terms:
                plo, phi = _minmax_product(boxes[j1], boxes[j2])
                lo += min(s * plo, s * phi)
                hi += max(s * plo, s * phi)
            worst = max(worst, max(abs(lo), abs(hi)) / k)
    return worst


def build_bigm_cycle_constraints(model: ModelIR, block: CycleBlock) -> CycleBlock:
    """Emit relaxed identity rows with slack per open line in the cycle.

    Pairwise products are lifted over widened coordinate boxes (so the
    envelopes stay valid with lines open) and each identity holds up to
    a per-identity constant times the number of open lines.
    """
    cid, space = block.cycle.id, block.space
    arcs = block.cycle.arcs
    n = len(arcs)
    for j1, j2 in block.pair_set:
        name = vname_pair_bigm(space, cid, j1, j2)
        if name in model.variable_index:
            continue
        c1, c2 = block.coords[j1], block.coords[j2]
        b1 = (c1.wide_lo, c1.wide_hi)
        b2 = (c2.wide_lo, c2.wide_hi)
        plo, phi = _minmax_product(b1, b2)
        model.add_var(name, plo, phi)
        lab = f"cyc_bm_mc_{space}[{cid},{j1},{j2}]"
        model.add_linear({name: 1.0, c2.var: -b1[0] * c2.sign, c1.var: -b2[0] * c1.sign},
                         ">=", -b1[0] * b2[0], lab + ".ll")
        model.add_linear({name: 1.0, c2.var: -b1[1] * c2.sign, c1.var: -b2[1] * c1.sign},
                         ">=", -b1[1] * b2[1], lab + ".uu")
        model.add_linear({name: 1.0, c2.var: -b1[0] * c2.sign, c1.var: -b2[1] * c1.sign},
                         "<=", -b1[0] * b2[1], lab + ".lu")
        model.add_linear({name: 1.0, c2.var: -b1[1] * c2.sign, c1.var: -b2[0] * c1.sign},
                         "<=", -b1[1] * b2[0], lab + ".ul")
    ensure_voltage_lifts(model, block)

    for q, eq in enumerate(block.equations):
        row: dict[str, float] = {}
        if block.lift_vars[q] is not None:
            (sign_b, _), = eq.bare_terms
            row[block.lift_vars[q]] = sign_b
        else:
            for sign_b, j in eq.bare_terms:
                cj = block.coords[j]
                row[cj.var] = row.get(cj.var, 0.0) + sign_b * cj.sign
        for s, (j1, j2) in eq.pair_terms:
            name = vname_pair_bigm(space, cid, j1, j2)
            row[name] = row.get(name, 0.0) + s
        m = bigm_constant(block, q)
        zs_pos = {vname_z(a): m for a in arcs}
        zs_neg = {vname_z(a): -m for a in arcs}
        model.add_linear({**row, **zs_pos}, "<=", m * n, f"cyc_bm_ub_{space}[{cid},{q}]")
        model.add_linear({**row, **zs_neg}, ">=", -m * n, f"cyc_bm_lb_{space}[{cid},{q}]")
    return block


def _separation_system(block: CycleBlock, x: np.ndarray, lifts: list[float | None],
                       ) -> tuple[np.ndarray, np.ndarray, list[list[tuple[str, int, float]]]]:
    """Equality system over the hull multipliers at a fixed point.

    Returns the matrix over multipliers, the right-hand side, and per-row
    carriers describing how the right-hand side depends on the point
    (constant, coordinate, or lifted-product entries), which is what cut
    assembly from the duals needs.
    """
    X = block.extreme_matrix
    n_pts, dim = X.shape
    rows: list[np.ndarray] = [np.ones(n_pts)]
    rhs: list[float] = [1.0]
    carriers: list[list[tuple[str, int, float]]] = [[("const", 0, 1.0)]]
    for j in range(dim):
        rows.append(X[:, j])
        rhs.append(x[j])
        carriers.append([("x", j, 1.0)])
    for q, eq in enumerate(block.equations):
        rows.append(block.pair_matrix(eq))
        if block.lift_vars[q] is not None:
            (sign_b, _), = eq.bare_terms
            rhs.append(-sign_b * lifts[q])
            carriers.append([("u", q, -sign_b)])
        else:
            val = 0.0
            carrier: list[tuple[str, int, float]] = []
            for sign_b, j in eq.bare_terms:
                val += -sign_b * x[j]
                carrier.append(("x", j, -sign_b))
            rhs.append(val)
            carriers.append(carrier)
    return np.vstack(rows), np.asarray(rhs), carriers


def hull_excess(block: CycleBlock, beta_x: np.ndarray, beta_u: dict[int, float],
                rhs: float) -> float:
    """Worst violation of a candidate cut over the closed-cycle hull.

    Maximizes the cut body over multipliers on the extreme points subject
    to the identities that constrain them; lifted products are eliminated
    through their defining identities.  Nonpositive means valid.
    """
    X = block.extreme_matrix
    n_pts = X.shape[0]
    obj = X @ beta_x
    a_eq = [np.ones(n_pts)]
    b_eq = [1.0]
    for q, eq in enumerate(block.equations):
        if block.lift_vars[q] is not None:
            (sign_b, _), = eq.bare_terms
            if beta_u.get(q):
                obj = obj - beta_u[q] * block.pair_matrix(eq) / sign_b
        else:
            a_eq.append(block.bare_matrix(eq) + block.pair_matrix(eq))
            b_eq.append(0.0)
    res = linprog(-obj, A_eq=np.vstack(a_eq), b_eq=np.asarray(b_eq),
                  bounds=(0.0, None), method="highs")
    if res.status == 2:
        return -np.inf
    if not res.success:
        raise RuntimeError(f"hull validity check failed: {res.message}")
    return float(-res.fun - rhs)


def separate(block: CycleBlock, values: dict[str, float],
             options: CycleOptions | None = None) -> Cut | None:
    """Find one violated, gated valid inequality at a relaxation point.

    Solves the phase-one feasibility problem for multipliers reproducing
    the point over the closed-cycle hull; a positive optimum yields an
    infeasibility certificate from the duals, which reads as a valid
    inequality violated by the point.  Returns None when the point is
    representable, the violation is below tolerance, or the certificate
    fails its validity re-check.
    """
    options = options or CycleOptions()
    x = block.coord_values(values)
    lifts = block.lift_values(values, x)
    a_lam, rhs, carriers = _separation_system(block, x, lifts)
    m, n_pts = a_lam.shape
    cost = np.concatenate([np.zeros(n_pts), np.ones(2 * m)])
    a_full = np.hstack([a_lam, np.eye(m), -np.eye(m)])
    res = linprog(cost, A_eq=a_full, b_eq=rhs, bounds=(0.0, None), method="highs")
    if not res.success:
        log.warning("separation solve failed on cycle %d (%s): %s",
                    block.cycle.id, block.space, res.message)
        return None
    if res.fun <= options.violation_tol:
        return None
    mu = np.asarray(res.eqlin.marginals, dtype=float)
    if float(mu @ rhs) < 0.0:
        mu = -mu

    beta_x = np.zeros(len(block.coords))
    beta_u: dict[int, float] = {}
    cut_rhs = 0.0
    for r, carrier in enumerate(carriers):
        for kind, idx, coef in carrier:
            if kind == "const":
                cut_rhs -= mu[r] * coef
            elif kind == "x":
                beta_x[idx] += mu[r] * coef
            else:
                beta_u[idx] = beta_u.get(idx, 0.0) + mu[r] * coef
    scale = max(float(np.max(np.abs(beta_x), initial=0.0)),
                max((abs(v) for v in beta_u.values()), default=0.0))
    if scale <= 0.0:
        return None
    beta_x /= scale
    beta_u = {q: v / scale for q, v in beta_u.items()}
    cut_rhs /= scale
    violation = float(beta_x @ x) + sum(v * lifts[q] for q, v in beta_u.items()) - cut_rhs
    if violation <= options.violation_tol:
        return None

    excess = hull_excess(block, beta_x, beta_u, cut_rhs)
    if excess > options.validity_tol:
        log.warning("discarding unsound certificate on cycle %d (%s): excess %.2e",
                    block.cycle.id, block.space, excess)
        return None

    gate = -cut_rhs
    for j, cj in enumerate(block.coords):
        gate += max(beta_x[j] * cj.wide_lo, beta_x[j] * cj.wide_hi)
    for q, v in beta_u.items():
        ulo, uhi = block.lift_bounds[q]
        gate += max(v * ulo, v * uhi)
    terms = [(cj.var, float(beta_x[j] * cj.sign))
             for j, cj in enumerate(block.coords) if beta_x[j] != 0.0]
    terms += [(block.lift_vars[q], float(v)) for q, v in sorted(beta_u.items()) if v != 0.0]
    return Cut(cycle_id=block.cycle.id, space=block.space, terms=terms,
               rhs=cut_rhs, violation=violation, gate_arcs=block.cycle.arcs,
               gate_m=max(0.0, gate))


def cut_excess(block: CycleBlock, cut: Cut) -> float:
    """Re-check a finished cut against the closed-cycle hull it came from."""
    coef = dict(cut.terms)
    beta_x = np.array([coef.get(cj.var, 0.0) * cj.sign for cj in block.coords])
    beta_u = {q: coef[v] for q, v in enumerate(block.lift_vars)
              if v is not None and v in coef}
    return hull_excess(block, beta_x, beta_u, cut.rhs)
