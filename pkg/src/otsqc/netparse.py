"""MATPOWER/PGLib case file parsing into a validated per-unit network model.

Reads the MATPOWER .m subset used by the switching formulation: baseMVA and
the bus/gen/branch/gencost matrices. Power quantities are converted to
per-unit on the system base; branch angle limits are converted to radians.
Generator cost coefficients are kept in their file units (MW basis); model
builders rescale them when assembling per-unit objectives.
"""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

HALF_PI = math.pi / 2.0

# MATPOWER column positions (manual ordering).
_BUS_TYPE, _BUS_PD, _BUS_QD, _BUS_GS, _BUS_BS = 1, 2, 3, 4, 5
_BUS_VMAX, _BUS_VMIN = 11, 12
_GEN_BUS, _GEN_QMAX, _GEN_QMIN, _GEN_STATUS, _GEN_PMAX, _GEN_PMIN = 0, 3, 4, 7, 8, 9
_BR_F, _BR_T, _BR_R, _BR_X, _BR_B, _BR_RATE_A = 0, 1, 2, 3, 4, 5
_BR_TAP, _BR_SHIFT, _BR_STATUS, _BR_ANGMIN, _BR_ANGMAX = 8, 9, 10, 11, 12


class ParseError(ValueError):
    """Malformed case text; carries the 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass
class Bus:
    id: int
    demand_p: float = 0.0
    demand_q: float = 0.0
    shunt_g: float = 0.0
    shunt_b: float = 0.0
    v_min: float = 0.9
    v_max: float = 1.1


@dataclass
class Generator:
    bus: int
    p_min: float
    p_max: float
    q_min: float
    q_max: float
    c2: float = 0.0
    c1: float = 0.0
    c0: float = 0.0


@dataclass
class Branch:
    from_bus: int
    to_bus: int
    g: float
    b: float
    g_c: float = 0.0
    b_c: float = 0.0
    tap_re: float = 1.0
    tap_im: float = 0.0
    s_max: float | None = None
    theta_min: float = -HALF_PI
    theta_max: float = HALF_PI
    i_sq_max: float | None = None

    @property
    def tap_mag_sq(self) -> float:
        return self.tap_re * self.tap_re + self.tap_im * self.tap_im


@dataclass
class Network:
    name: str
    base_mva: float
    buses: list[Bus]
    generators: list[Generator]
    branches: list[Branch]
    ref_buses: set[int] = field(default_factory=set)
    leaf_noload_buses: set[int] = field(default_factory=set)

    def __post_init__(self):
        self._bus_pos = {bus.id: k for k, bus in enumerate(self.buses)}

    def bus(self, bus_id: int) -> Bus:
        return self.buses[self._bus_pos[bus_id]]

    def has_bus(self, bus_id: int) -> bool:
        return bus_id in self._bus_pos

    def gens_at(self, bus_id: int) -> list[int]:
        return [k for k, g in enumerate(self.generators) if g.bus == bus_id]

    def branches_at(self, bus_id: int) -> list[int]:
        return [a for a, br in enumerate(self.branches)
                if br.from_bus == bus_id or br.to_bus == bus_id]


@dataclass
class Violation:
    entity: str
    entity_id: int | str
    rule: str
    message: str


_BASE_RE = re.compile(r"mpc\.baseMVA\s*=\s*([0-9eE+\-.]+)\s*;")
_BLOCK_RE = re.compile(r"mpc\.(\w+)\s*=\s*\[(.*?)\];", re.DOTALL)


def _strip_comments(text: str) -> str:
    return re.sub(r"%[^\n]*", "", text)


def _parse_matrix(name: str, body: str, line0: int) -> list[list[float]]:
    rows = []
    line = line0
    for chunk in body.split(";"):
        line += chunk.count("\n")
        tokens = chunk.split()
        if not tokens:
            continue
        try:
            rows.append([float(t) for t in tokens])
        except ValueError as exc:
            raise ParseError(f"non-numeric token in mpc.{name}: {exc}", line) from None
    return rows


def parse_matpower(text: str, name: str = "") -> Network:
    """Parse MATPOWER case text into a per-unit Network.

    Out-of-service branches and generators (status 0) are dropped; missing
    angle limits default to +/- pi/2; a tap ratio of 0 means 1.0.
    """
    clean = _strip_comments(text)

    m = _BASE_RE.search(clean)
    if m is None:
        raise ParseError("missing mpc.baseMVA")
    base = float(m.group(1))
    if base <= 0:
        raise ParseError(f"baseMVA must be positive, got {base}")

    blocks: dict[str, list[list[float]]] = {}
    for bm in _BLOCK_RE.finditer(clean):
        line0 = clean.count("\n", 0, bm.start()) + 1
        blocks[bm.group(1)] = _parse_matrix(bm.group(1), bm.group(2), line0)

    for required in ("bus", "gen", "branch", "gencost"):
        if required not in blocks:
            raise ParseError(f"missing mpc.{required} block")

    buses: list[Bus] = []
    ref_buses: set[int] = set()
    for row in blocks["bus"]:
        if len(row) < 13:
            raise ParseError(f"bus row has {len(row)} columns, expected >= 13")
        bus_id = int(row[0])
        buses.append(Bus(
            id=bus_id,
            demand_p=row[_BUS_PD] / base,
            demand_q=row[_BUS_QD] / base,
            shunt_g=row[_BUS_GS] / base,
            shunt_b=row[_BUS_BS] / base,
            v_min=row[_BUS_VMIN],
            v_max=row[_BUS_VMAX],
        ))
        if int(row[_BUS_TYPE]) == 3:
            ref_buses.add(bus_id)

    gencost = blocks["gencost"]
    if len(gencost) not in (len(blocks["gen"]), 2 * len(blocks["gen"])):
        warnings.warn("gencost row count differs from gen; extra rows ignored")

    generators: list[Generator] = []
    for k, row in enumerate(blocks["gen"]):
        if len(row) < 10:
            raise ParseError(f"gen row has {len(row)} columns, expected >= 10")
        if int(row[_GEN_STATUS]) <= 0:
            continue
        c2, c1, c0 = _parse_cost_row(gencost[k]) if k < len(gencost) else (0.0, 0.0, 0.0)
        generators.append(Generator(
            bus=int(row[_GEN_BUS]),
            p_min=row[_GEN_PMIN] / base,
            p_max=row[_GEN_PMAX] / base,
            q_min=row[_GEN_QMIN] / base,
            q_max=row[_GEN_QMAX] / base,
            c2=c2, c1=c1, c0=c0,
        ))

    branches: list[Branch] = []
    for row in blocks["branch"]:
        if len(row) < 13:
            raise ParseError(f"branch row has {len(row)} columns, expected >= 13")
        if int(row[_BR_STATUS]) == 0:
            continue
        r, x = row[_BR_R], row[_BR_X]
        zsq = r * r + x * x
        if zsq == 0:
            raise ParseError(f"branch {int(row[_BR_F])}-{int(row[_BR_T])} has zero impedance")
        ratio = row[_BR_TAP] if row[_BR_TAP] != 0.0 else 1.0
        shift = math.radians(row[_BR_SHIFT])
        angmin, angmax = row[_BR_ANGMIN], row[_BR_ANGMAX]
        # MATPOWER marks unconstrained angles with 0,0 or +/-360.
        if (angmin == 0.0 and angmax == 0.0) or angmin <= -360 or angmax >= 360:
            theta_min, theta_max = -HALF_PI, HALF_PI
        else:
            theta_min, theta_max = math.radians(angmin), math.radians(angmax)
        rate_a = row[_BR_RATE_A]
        branches.append(Branch(
            from_bus=int(row[_BR_F]),
            to_bus=int(row[_BR_T]),
            g=r / zsq,
            b=-x / zsq,
            g_c=0.0,
            b_c=row[_BR_B] / 2.0,
            tap_re=ratio * math.cos(shift),
            tap_im=ratio * math.sin(shift),
            s_max=(rate_a / base) if rate_a > 0 else None,
            theta_min=theta_min,
            theta_max=theta_max,
        ))

    net = Network(name=name, base_mva=base, buses=buses,
                  generators=generators, branches=branches, ref_buses=ref_buses)
    net.leaf_noload_buses = _find_leaf_noload(net)
    return net


def _parse_cost_row(row: list[float]) -> tuple[float, float, float]:
    model = int(row[0])
    if model != 2:
        raise ParseError(f"gencost model {model} unsupported (need polynomial, model 2)")
    ncost = int(row[3])
    coeffs = row[4:4 + ncost]
    if len(coeffs) != ncost:
        raise ParseError(f"gencost row declares {ncost} coefficients, found {len(coeffs)}")
    if ncost > 3:
        raise ParseError(f"gencost degree {ncost - 1} > 2 unsupported")
    padded = [0.0] * (3 - ncost) + coeffs
    return padded[0], padded[1], padded[2]


def _find_leaf_noload(net: Network) -> set[int]:
    degree: dict[int, int] = {bus.id: 0 for bus in net.buses}
    for br in net.branches:
        degree[br.from_bus] += 1
        degree[br.to_bus] += 1
    return {bus.id for bus in net.buses
            if degree[bus.id] == 1 and bus.demand_p == 0.0 and bus.demand_q == 0.0}


def load_case(path: str | Path) -> Network:
    """Parse a case file from disk; the network name is the file stem."""
    path = Path(path)
    stem = path.stem
    if stem.startswith("pglib_opf_"):
        stem = stem[len("pglib_opf_"):]
    return parse_matpower(path.read_text(), name=stem)


def bundled_case_path(case_name: str) -> Path:
    """Path to a case file shipped with the package (pglib-opf v23.07 subset).

    Accepts short names like 'case14_ieee__sad' or full pglib stems.
    """
    stem = case_name.removesuffix(".m")
    if not stem.startswith("pglib_opf_"):
        stem = "pglib_opf_" + stem
    root = resources.files("otsqc").joinpath("data", "cases")
    path = Path(str(root.joinpath(stem + ".m")))
    if not path.exists():
        available = sorted(p.name for p in Path(str(root)).glob("*.m"))
        raise FileNotFoundError(f"no bundled case {case_name!r}; available: {available}")
    return path


def validate(net: Network) -> list[Violation]:
    """Check every type invariant; an empty list means the network is well formed."""
    out: list[Violation] = []
    seen: set[int] = set()
    for bus in net.buses:
        if bus.id in seen:
            out.append(Violation("bus", bus.id, "unique-id", f"duplicate bus id {bus.id}"))
        seen.add(bus.id)
        if not (0 < bus.v_min <= bus.v_max):
            out.append(Violation("bus", bus.id, "voltage-bounds",
                                 f"need 0 < v_min <= v_max, got [{bus.v_min}, {bus.v_max}]"))
    for k, gen in enumerate(net.generators):
        if not net.has_bus(gen.bus):
            out.append(Violation("generator", k, "bus-ref", f"references missing bus {gen.bus}"))
        if gen.p_min > gen.p_max:
            out.append(Violation("generator", k, "p-bounds", f"p_min {gen.p_min} > p_max {gen.p_max}"))
        if gen.q_min > gen.q_max:
            out.append(Violation("generator", k, "q-bounds", f"q_min {gen.q_min} > q_max {gen.q_max}"))
        if gen.c2 < 0:
            out.append(Violation("generator", k, "convex-cost", f"c2 = {gen.c2} < 0"))
    for a, br in enumerate(net.branches):
        for end in (br.from_bus, br.to_bus):
            if not net.has_bus(end):
                out.append(Violation("branch", a, "bus-ref", f"references missing bus {end}"))
        if br.tap_mag_sq <= 0:
            out.append(Violation("branch", a, "tap-magnitude", "zero tap ratio"))
        if br.theta_min > br.theta_max:
            out.append(Violation("branch", a, "angle-order",
                                 f"theta_min {br.theta_min} > theta_max {br.theta_max}"))
        theta_u = max(abs(br.theta_min), abs(br.theta_max))
        if theta_u > HALF_PI + 1e-12:
            out.append(Violation("branch", a, "angle-assumption",
                                 f"max |angle bound| = {theta_u:.4f} exceeds pi/2"))
    if not net.ref_buses:
        out.append(Violation("network", net.name or "-", "ref-bus", "no reference bus (type 3)"))
    expected_leaves = _find_leaf_noload(net)
    if net.leaf_noload_buses != expected_leaves:
        out.append(Violation("network", net.name or "-", "leaf-set",
                             f"leaf_noload_buses {sorted(net.leaf_noload_buses)} != "
                             f"recomputed {sorted(expected_leaves)}"))
    return out
