"""Derived per-branch constants and 3-/4-cycle enumeration.

Constants cover the trigonometric envelope data for each branch (chord
slopes, cosine/sine variable bounds, the symmetric angle magnitude) plus the
network-wide big-M angle constant used by the on/off angle constraints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from otsqc.netparse import Network

HALF_PI = math.pi / 2.0


@dataclass
class BranchConstants:
    theta_min: float
    theta_max: float
    theta_u: float
    cos_chord: float
    sin_chord: float
    c_min: float
    c_max: float
    s_min: float
    s_max: float


@dataclass
class LineConstants:
    branch: list[BranchConstants]
    theta_big_m: float


def _branch_constants(lo: float, hi: float) -> BranchConstants:
    if hi < lo:
        raise ValueError(f"angle bounds out of order: [{lo}, {hi}]")
    theta_u = max(abs(lo), abs(hi))
    if theta_u > HALF_PI + 1e-12:
        raise ValueError(f"angle bound {theta_u:.4f} exceeds pi/2")
    if hi > lo:
        cos_chord = (math.cos(hi) - math.cos(lo)) / (hi - lo)
        sin_chord = (math.sin(hi) - math.sin(lo)) / (hi - lo)
    else:
        # degenerate interval: chord slopes collapse to derivatives
        cos_chord = -math.sin(lo)
        sin_chord = math.cos(lo)
    c_lo, c_hi = math.cos(lo), math.cos(hi)
    c_min = min(c_lo, c_hi)
    c_max = 1.0 if lo <= 0.0 <= hi else max(c_lo, c_hi)
    return BranchConstants(
        theta_min=lo, theta_max=hi, theta_u=theta_u,
        cos_chord=cos_chord, sin_chord=sin_chord,
        c_min=c_min, c_max=c_max,
        s_min=math.sin(lo), s_max=math.sin(hi),
    )


def derive_line_constants(net: Network,
                          theta_bounds: list[tuple[float, float]] | None = None
                          ) -> LineConstants:
    """Constants for every branch; theta_bounds overrides the parsed limits.

    The override is how bound tightening refreshes envelope data without
    mutating the network. theta_big_m sums the min(|N|-1, |A|) largest
    theta_u values, which bounds any spanning-path angle difference and so
    validates the big-M in the off-state angle constraints.
    """
    per = []
    for a, br in enumerate(net.branches):
        lo, hi = (br.theta_min, br.theta_max) if theta_bounds is None else theta_bounds[a]
        per.append(_branch_constants(lo, hi))
    top = sorted((bc.theta_u for bc in per), reverse=True)
    k = min(max(len(net.buses) - 1, 0), len(net.branches))
    big_m = sum(top[:k])
    return LineConstants(branch=per, theta_big_m=big_m)


@dataclass(frozen=True)
class Cycle:
    id: int
    vertices: tuple[int, ...]
    arcs: tuple[int, ...]
    signs: tuple[int, ...]


def _arc_sign(net: Network, arc: int, tail: int) -> int:
    return 1 if net.branches[arc].from_bus == tail else -1


def enumerate_cycles(net: Network, max_cycles: int = 5000) -> list[Cycle]:
    """All simple 3- and 4-vertex cycles, canonically ordered and capped.

    Each vertex set starts at its lowest bus id and proceeds toward the
    lower-id neighbor; parallel branches yield one cycle per branch
    combination. The cap keeps 3-cycles ahead of 4-cycles, both sorted by
    vertex tuple then arc ids.
    """
    pair_arcs: dict[tuple[int, int], list[int]] = {}
    neighbors: dict[int, set[int]] = {bus.id: set() for bus in net.buses}
    for a, br in enumerate(net.branches):
        u, v = br.from_bus, br.to_bus
        if u == v:
            continue
        key = (min(u, v), max(u, v))
        pair_arcs.setdefault(key, []).append(a)
        neighbors[u].add(v)
        neighbors[v].add(u)

    def arcs_between(u: int, v: int) -> list[int]:
        return pair_arcs[(min(u, v), max(u, v))]

    raw: list[tuple[tuple[int, ...], tuple[int, ...]]] = []

    ids = sorted(neighbors)
    for a_id in ids:
        nbrs = sorted(v for v in neighbors[a_id] if v > a_id)
        # triangles a-b-c with a < b < c
        for i, b_id in enumerate(nbrs):
            for c_id in nbrs[i + 1:]:
                if c_id in neighbors[b_id]:
                    verts = (a_id, b_id, c_id)
                    for e1 in arcs_between(a_id, b_id):
                        for e2 in arcs_between(b_id, c_id):
                            for e3 in arcs_between(c_id, a_id):
                                raw.append((verts, (e1, e2, e3)))
        # quadrilaterals a-x-z-y with x < y and z > a
        for i, x_id in enumerate(nbrs):
            for y_id in nbrs[i + 1:]:
                common = (neighbors[x_id] & neighbors[y_id]) - {a_id}
                for z_id in sorted(c for c in common if c > a_id):
                    verts = (a_id, x_id, z_id, y_id)
                    for e1 in arcs_between(a_id, x_id):
                        for e2 in arcs_between(x_id, z_id):
                            for e3 in arcs_between(z_id, y_id):
                                for e4 in arcs_between(y_id, a_id):
                                    raw.append((verts, (e1, e2, e3, e4)))

    raw.sort(key=lambda item: (len(item[0]), item[0], item[1]))
    out: list[Cycle] = []
    for cid, (verts, arcs) in enumerate(raw[:max_cycles]):
        signs = tuple(_arc_sign(net, arc, verts[k]) for k, arc in enumerate(arcs))
        out.append(Cycle(id=cid, vertices=verts, arcs=arcs, signs=signs))
    return out
