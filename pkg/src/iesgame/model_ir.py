"""Solver-agnostic mixed-integer program representation.

Variables and rows are kept in insertion order, which makes serialized
models byte-stable across runs. The objective is linear plus diagonal
quadratic plus piecewise-linear terms; `lower_pwl` rewrites the PWL
terms into a convex-combination (lambda) form that needs no extra
binaries because every term's curvature matches the optimization sense.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SENSES = ("<=", ">=", "==")


@dataclass(frozen=True)
class Variable:
    name: str
    lb: float
    ub: float
    binary: bool = False

    def __post_init__(self):
        if not self.name or any(c.isspace() for c in self.name):
            raise ValueError(f"bad variable name {self.name!r}")
        if not (math.isfinite(self.lb) and math.isfinite(self.ub)):
            raise ValueError(f"variable {self.name} needs finite bounds")
        if self.lb > self.ub:
            raise ValueError(f"variable {self.name}: lb {self.lb} > ub {self.ub}")


@dataclass
class LinearRow:
    name: str
    coeffs: dict[str, float]
    sense: str
    rhs: float

    def __post_init__(self):
        if self.sense not in SENSES:
            raise ValueError(f"row {self.name}: sense must be one of {SENSES}")
        if not self.coeffs:
            raise ValueError(f"row {self.name} has no coefficients")


@dataclass(frozen=True)
class QuadObjTerm:
    """Objective contribution coef * var^2."""

    var: str
    coef: float


@dataclass(frozen=True)
class PwlObjTerm:
    """Objective contribution interpolating `values` at `breakpoints` of var."""

    var: str
    breakpoints: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.breakpoints) != len(self.values) or len(self.breakpoints) < 2:
            raise ValueError("need matching breakpoints/values, at least two")
        if any(b2 <= b1 for b1, b2 in zip(self.breakpoints, self.breakpoints[1:])):
            raise ValueError("breakpoints must be strictly increasing")


class ModelIR:
    """A named-variable LP/MILP with optional quadratic and PWL objective terms."""

    def __init__(self, name: str = "model", sense: str = "max"):
        if sense not in ("max", "min"):
            raise ValueError("sense must be 'max' or 'min'")
        self.name = name
        self.sense = sense
        self.variables: dict[str, Variable] = {}
        self.rows: list[LinearRow] = []
        self._row_names: set[str] = set()
        self.obj_linear: dict[str, float] = {}
        self.obj_quad: list[QuadObjTerm] = []
        self.obj_pwl: list[PwlObjTerm] = []
        self.obj_const: float = 0.0

    # -- construction -------------------------------------------------

    def add_variable(self, name: str, lb: float, ub: float,
                     binary: bool = False) -> str:
        if name in self.variables:
            raise ValueError(f"variable {name} declared twice")
        self.variables[name] = Variable(name, lb, ub, binary)
        return name

    def add_row(self, name: str, coeffs: dict[str, float], sense: str,
                rhs: float) -> None:
        if name in self._row_names:
            raise ValueError(f"row {name} declared twice")
        coeffs = {v: c for v, c in coeffs.items() if c != 0.0}
        if not coeffs:
            raise ValueError(f"row {name} reduces to a constant")
        self.rows.append(LinearRow(name, coeffs, sense, rhs))
        self._row_names.add(name)

    def add_obj_linear(self, var: str, coef: float) -> None:
        self.obj_linear[var] = self.obj_linear.get(var, 0.0) + coef

    def add_obj_quad(self, var: str, coef: float) -> None:
        if coef != 0.0:
            self.obj_quad.append(QuadObjTerm(var, coef))

    def add_obj_pwl(self, term: PwlObjTerm) -> None:
        self.obj_pwl.append(term)

    # -- queries ------------------------------------------------------

    @property
    def binary_names(self) -> list[str]:
        return [v.name for v in self.variables.values() if v.binary]

    def has_quadratic(self) -> bool:
        return bool(self.obj_quad)

    def validate(self) -> None:
        """Reject dangling references; bounds are checked at declaration."""
        for row in self.rows:
            for var in row.coeffs:
                if var not in self.variables:
                    raise ValueError(f"row {row.name} references unknown variable {var}")
        for var in self.obj_linear:
            if var not in self.variables:
                raise ValueError(f"objective references unknown variable {var}")
        for term in self.obj_quad:
            if term.var not in self.variables:
                raise ValueError(f"quadratic term on unknown variable {term.var}")
        for term in self.obj_pwl:
            if term.var not in self.variables:
                raise ValueError(f"PWL term on unknown variable {term.var}")

    def evaluate_objective(self, values: dict[str, float]) -> float:
        """Objective at a point, PWL terms evaluated by interpolation."""
        total = self.obj_const
        total += sum(c * values[v] for v, c in self.obj_linear.items())
        total += sum(t.coef * values[t.var] ** 2 for t in self.obj_quad)
        for t in self.obj_pwl:
            total += float(np.interp(values[t.var], t.breakpoints, t.values))
        return total

    # -- lowering -----------------------------------------------------

    def lower_pwl(self) -> "ModelIR":
        """Expand PWL objective terms into lambda variables and rows.

        Valid without adjacency binaries only when each term's value
        sequence is concave for a max sense (convex for min); violating
        terms raise, since silently lowering them would change the model.
        """
        if not self.obj_pwl:
            return self
        out = ModelIR(self.name, self.sense)
        out.variables = dict(self.variables)
        out.rows = list(self.rows)
        out._row_names = set(self._row_names)
        out.obj_linear = dict(self.obj_linear)
        out.obj_quad = list(self.obj_quad)
        out.obj_const = self.obj_const
        for idx, term in enumerate(self.obj_pwl):
            _check_curvature(term, self.sense)
            lam_names = []
            for k in range(len(term.breakpoints)):
                lam = out.add_variable(f"lam_{idx}_{term.var}_{k}", 0.0, 1.0)
                lam_names.append(lam)
                out.add_obj_linear(lam, term.values[k])
            out.add_row(f"pwl_sum_{idx}_{term.var}",
                        {lam: 1.0 for lam in lam_names}, "==", 1.0)
            link = {lam: bp for lam, bp in zip(lam_names, term.breakpoints)}
            link[term.var] = -1.0
            out.add_row(f"pwl_link_{idx}_{term.var}", link, "==", 0.0)
        out.validate()
        return out


def _check_curvature(term: PwlObjTerm, sense: str) -> None:
    vals = np.asarray(term.values)
    bps = np.asarray(term.breakpoints)
    slopes = np.diff(vals) / np.diff(bps)
    second = np.diff(slopes)
    scale = max(1.0, float(np.max(np.abs(vals))))
    if sense == "max" and np.any(second > 1e-9 * scale):
        raise ValueError(f"PWL term on {term.var} is not concave; "
                         "maximization would need adjacency binaries")
    if sense == "min" and np.any(second < -1e-9 * scale):
        raise ValueError(f"PWL term on {term.var} is not convex; "
                         "minimization would need adjacency binaries")
