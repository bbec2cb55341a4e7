"""Solver-agnostic mixed-integer conic model and the continuous subsolver.

A ModelIR holds variables with bounds and integrality flags, sparse linear
rows, second-order-cone blocks ||t(x)|| <= r(x) with affine t and r, and a
convex (diagonal-quadratic + linear + constant) objective. Continuous solves
go through Clarabel; infeasible problems surface a certificate when the
solver provides one.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

import clarabel

INF = math.inf

Affine = tuple[dict[int, float], float]  # sparse coefficients, constant


@dataclass
class SocBlock:
    t: list[Affine]
    r: Affine


@dataclass
class SubsolverCapabilities:
    linear_rows: bool = True
    soc_blocks: bool = True
    quad_objective: bool = True
    tolerance: float = 1e-8


@dataclass
class ContinuousSolution:
    status: str  # optimal | infeasible | unbounded | numerical
    objective: float | None
    x: np.ndarray | None
    farkas: np.ndarray | None = None
    raw_status: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


class SubsolverError(RuntimeError):
    """Continuous solve failed for numerical reasons."""


class ModelIR:
    """Mixed-integer conic program in a builder-friendly sparse form."""

    def __init__(self, name: str = ""):
        self.name = name
        self.var_names: list[str] = []
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.is_binary: list[bool] = []
        self.variable_index: dict[str, int] = {}
        self.row_cols: list[np.ndarray] = []
        self.row_vals: list[np.ndarray] = []
        self.row_rel: list[str] = []  # "<=", ">=", "="
        self.row_rhs: list[float] = []
        self.row_labels: list[str] = []
        self.soc_blocks: list[SocBlock] = []
        self.obj_linear: dict[int, float] = {}
        self.obj_quad_diag: dict[int, float] = {}
        self.obj_constant: float = 0.0

    # -- construction ------------------------------------------------------

    def add_var(self, name: str, lb: float = -INF, ub: float = INF,
                binary: bool = False) -> int:
        if name in self.variable_index:
            raise ValueError(f"duplicate variable {name!r}")
        idx = len(self.var_names)
        self.var_names.append(name)
        self.lb.append(lb)
        self.ub.append(ub)
        self.is_binary.append(binary)
        self.variable_index[name] = idx
        return idx

    def var(self, name: str) -> int:
        return self.variable_index[name]

    def _resolve(self, coeffs: dict) -> dict[int, float]:
        out: dict[int, float] = {}
        for key, val in coeffs.items():
            idx = key if isinstance(key, int) else self.variable_index[key]
            if idx < 0 or idx >= len(self.var_names):
                raise ValueError(f"coefficient references unknown variable column {idx}")
            if val != 0.0:
                out[idx] = out.get(idx, 0.0) + val
        return out

    def add_linear(self, coeffs: dict, rel: str, rhs: float, label: str = "") -> int:
        if rel not in ("<=", ">=", "="):
            raise ValueError(f"bad relation {rel!r}")
        resolved = self._resolve(coeffs)
        self.row_cols.append(np.fromiter(resolved.keys(), dtype=np.int64, count=len(resolved)))
        self.row_vals.append(np.fromiter(resolved.values(), dtype=np.float64, count=len(resolved)))
        self.row_rel.append(rel)
        self.row_rhs.append(float(rhs))
        self.row_labels.append(label)
        return len(self.row_rhs) - 1

    def add_range(self, coeffs: dict, lo: float, hi: float, label: str = "") -> None:
        """lo <= expr <= hi as two rows (either side skipped when infinite)."""
        if hi < INF:
            self.add_linear(coeffs, "<=", hi, label + ".ub" if label else "")
        if lo > -INF:
            self.add_linear(coeffs, ">=", lo, label + ".lb" if label else "")

    def add_soc(self, t: list[Affine], r: Affine, label: str = "") -> None:
        """||t(x)|| <= r(x); each entry is ({col: coeff}, constant)."""
        t_resolved = [(self._resolve(c), float(k)) for c, k in t]
        self.soc_blocks.append(SocBlock(t=t_resolved, r=(self._resolve(r[0]), float(r[1]))))

    def add_objective(self, linear: dict | None = None, quad_diag: dict | None = None,
                      constant: float = 0.0) -> None:
        for idx, val in self._resolve(linear or {}).items():
            self.obj_linear[idx] = self.obj_linear.get(idx, 0.0) + val
        for idx, val in self._resolve(quad_diag or {}).items():
            if val < 0:
                raise ValueError("quadratic objective must be convex (diagonal >= 0)")
            self.obj_quad_diag[idx] = self.obj_quad_diag.get(idx, 0.0) + val
        self.obj_constant += constant

    @property
    def num_vars(self) -> int:
        return len(self.var_names)

    @property
    def num_rows(self) -> int:
        return len(self.row_rhs)

    def binary_indices(self) -> list[int]:
        return [i for i, flag in enumerate(self.is_binary) if flag]

    # -- serialization -----------------------------------------------------

    def to_json(self) -> str:
        def num(v: float):
            if v == INF:
                return None
            if v == -INF:
                return None
            return v

        def affine(a: Affine):
            coeffs, const = a
            cols = sorted(coeffs)
            return {"cols": cols, "vals": [coeffs[c] for c in cols], "const": const}

        doc = {
            "name": self.name,
            "variables": [
                {"name": n, "lb": num(lo), "ub": num(hi), "binary": bool(bi)}
                for n, lo, hi, bi in zip(self.var_names, self.lb, self.ub, self.is_binary)
            ],
            "linear_constraints": [
                {"cols": cols.tolist(), "vals": vals.tolist(), "rel": rel, "rhs": rhs,
                 "label": lab}
                for cols, vals, rel, rhs, lab in zip(
                    self.row_cols, self.row_vals, self.row_rel, self.row_rhs, self.row_labels)
            ],
            "soc_blocks": [
                {"t": [affine(a) for a in blk.t], "r": affine(blk.r)}
                for blk in self.soc_blocks
            ],
            "objective": {
                "linear": affine((self.obj_linear, 0.0)),
                "quad_diag": affine((self.obj_quad_diag, 0.0)),
                "constant": self.obj_constant,
            },
        }
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "ModelIR":
        doc = json.loads(text)
        model = cls(name=doc.get("name", ""))
        for v in doc["variables"]:
            lo = -INF if v["lb"] is None else v["lb"]
            hi = INF if v["ub"] is None else v["ub"]
            model.add_var(v["name"], lo, hi, binary=v["binary"])
        for row in doc["linear_constraints"]:
            model.add_linear(dict(zip(row["cols"], row["vals"])), row["rel"], row["rhs"],
                             row.get("label", ""))
        for blk in doc["soc_blocks"]:
            t = [(dict(zip(a["cols"], a["vals"])), a["const"]) for a in blk["t"]]
            r = (dict(zip(blk["r"]["cols"], blk["r"]["vals"])), blk["r"]["const"])
            model.add_soc(t, r)
        obj = doc["objective"]
        model.add_objective(
            linear=dict(zip(obj["linear"]["cols"], obj["linear"]["vals"])),
            quad_diag=dict(zip(obj["quad_diag"]["cols"], obj["quad_diag"]["vals"])),
            constant=obj["constant"],
        )
        return model


def subsolver_capabilities() -> SubsolverCapabilities:
    return SubsolverCapabilities()


class CompiledModel:
    """One-time conic assembly of a ModelIR for repeated continuous solves.

    Binaries are relaxed to their [lb, ub] boxes. Bound and objective
    overrides are applied per solve without touching the sparse structure:
    each finitely bounded variable gets a pair of bound rows whose rhs can
    be patched later. Overrides on variables that start unbounded are
    rejected, since no row exists to carry them.
    """

    def __init__(self, model: ModelIR):
        self.model = model
        n = model.num_vars
        rows_c: list[np.ndarray] = []
        rows_v: list[np.ndarray] = []
        rhs: list[float] = []

        eq_idx = [i for i, rel in enumerate(model.row_rel) if rel == "="]
        in_idx = [i for i, rel in enumerate(model.row_rel) if rel != "="]
        for i in eq_idx:
            rows_c.append(model.row_cols[i])
            rows_v.append(model.row_vals[i])
            rhs.append(model.row_rhs[i])
        self.n_eq = len(eq_idx)

        for i in in_idx:
            sign = 1.0 if model.row_rel[i] == "<=" else -1.0
            rows_c.append(model.row_cols[i])
            rows_v.append(sign * model.row_vals[i])
            rhs.append(sign * model.row_rhs[i])

        # bound rows: x_j <= ub_j and -x_j <= -lb_j for finite bounds only
        self.ub_row = np.full(n, -1, dtype=np.int64)
        self.lb_row = np.full(n, -1, dtype=np.int64)
        one = np.ones(1)
        for j in range(n):
            if model.ub[j] < INF:
                rows_c.append(np.array([j], dtype=np.int64))
                rows_v.append(one)
                self.ub_row[j] = len(rhs)
                rhs.append(model.ub[j])
            if model.lb[j] > -INF:
                rows_c.append(np.array([j], dtype=np.int64))
                rows_v.append(-one)
                self.lb_row[j] = len(rhs)
                rhs.append(-model.lb[j])
        self.n_ineq = len(rhs) - self.n_eq

        soc_dims: list[int] = []
        for blk in model.soc_blocks:
            r_coeffs, r_const = blk.r
            cols = np.fromiter(r_coeffs.keys(), dtype=np.int64, count=len(r_coeffs))
            vals = np.fromiter(r_coeffs.values(), dtype=np.float64, count=len(r_coeffs))
            rows_c.append(cols)
            rows_v.append(-vals)
            rhs.append(r_const)
            for t_coeffs, t_const in blk.t:
                cols = np.fromiter(t_coeffs.keys(), dtype=np.int64, count=len(t_coeffs))
                vals = np.fromiter(t_coeffs.values(), dtype=np.float64, count=len(t_coeffs))
                rows_c.append(cols)
                rows_v.append(-vals)
                rhs.append(t_const)
            soc_dims.append(len(blk.t) + 1)

        m = len(rhs)
        counts = np.fromiter((len(c) for c in rows_c), dtype=np.int64, count=m)
        row_ind = np.repeat(np.arange(m, dtype=np.int64), counts)
        col_ind = np.concatenate(rows_c) if rows_c else np.zeros(0, dtype=np.int64)
        data = np.concatenate(rows_v) if rows_v else np.zeros(0)
        self.A = sp.csc_matrix((data, (row_ind, col_ind)), shape=(m, n))
        self.b0 = np.asarray(rhs)

        self.cones = []
        if self.n_eq:
            self.cones.append(clarabel.ZeroConeT(self.n_eq))
        if self.n_ineq:
            self.cones.append(clarabel.NonnegativeConeT(self.n_ineq))
        for d in soc_dims:
            self.cones.append(clarabel.SecondOrderConeT(d))

        self.q0 = np.zeros(n)
        for j, val in model.obj_linear.items():
            self.q0[j] = val
        pdiag = np.zeros(n)
        for j, val in model.obj_quad_diag.items():
            pdiag[j] = 2.0 * val  # clarabel minimizes (1/2) x'Px + q'x
        self.P = sp.diags(pdiag, format="csc") if pdiag.any() else sp.csc_matrix((n, n))
        self.obj_constant = model.obj_constant

        self.settings = clarabel.DefaultSettings()
        self.settings.verbose = False

    def solve(self, lb: np.ndarray | None = None, ub: np.ndarray | None = None,
              obj_linear: np.ndarray | None = None,
              obj_constant: float | None = None) -> ContinuousSolution:
        """Solve with optional full-length bound arrays and objective override.

        An obj_linear override replaces the whole objective (quadratic part
        and constant dropped), which is what bound-tightening subproblems need.
        """
        b = self.b0.copy()
        if ub is not None:
            mask = self.ub_row >= 0
            if np.any(~mask & (np.asarray(ub) < INF)):
                raise ValueError("cannot tighten a variable that was compiled unbounded")
            b[self.ub_row[mask]] = np.asarray(ub)[mask]
        if lb is not None:
            mask = self.lb_row >= 0
            if np.any(~mask & (np.asarray(lb) > -INF)):
                raise ValueError("cannot tighten a variable that was compiled unbounded")
            b[self.lb_row[mask]] = -np.asarray(lb)[mask]
        q = self.q0 if obj_linear is None else obj_linear
        if obj_constant is not None:
            const = obj_constant
        else:
            const = self.obj_constant if obj_linear is None else 0.0
        P = self.P if obj_linear is None else sp.csc_matrix((self.model.num_vars,) * 2)

        solver = clarabel.DefaultSolver(P, q, self.A, b, self.cones, self.settings)
        sol = solver.solve()
        name = str(sol.status)
        if name in ("Solved", "AlmostSolved"):
            return ContinuousSolution("optimal", float(sol.obj_val) + const,
                                      np.asarray(sol.x), raw_status=name)
        if name in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
            cert = np.asarray(sol.z) if sol.z is not None else None
            return ContinuousSolution("infeasible", None, None, farkas=cert, raw_status=name)
        if name in ("DualInfeasible", "AlmostDualInfeasible"):
            return ContinuousSolution("unbounded", None,
                                      np.asarray(sol.x) if sol.x is not None else None,
                                      raw_status=name)
        return ContinuousSolution("numerical", None, None, raw_status=name)


def solve_continuous(model: ModelIR, lb: np.ndarray | None = None,
                     ub: np.ndarray | None = None) -> ContinuousSolution:
    """Solve the continuous relaxation of a ModelIR (binaries boxed to [lb, ub])."""
    return CompiledModel(model).solve(lb=lb, ub=ub)
