"""LP-format model writer and solution-file parser.

The writer emits variables and rows in declaration order with
shortest-round-trip float formatting, so identical models produce
byte-identical files. The parser accepts plain "name value" lines and
skips anything else, which covers the header/comment noise that
different solvers put at the top of their solution files.
"""
from __future__ import annotations

from .model_ir import ModelIR


def _fmt(x: float) -> str:
    if x == int(x) and abs(x) < 1e16:
        return str(int(x))
    return repr(float(x))


def _expr(coeffs: dict[str, float]) -> str:
    parts = []
    for var, coef in coeffs.items():
        sign = "-" if coef < 0 else "+"
        if not parts and sign == "+":
            parts.append(f"{_fmt(coef)} {var}")
        else:
            parts.append(f"{sign} {_fmt(abs(coef))} {var}")
    return " ".join(parts)


def write_lp(ir: ModelIR) -> str:
    """Serialize a (PWL-lowered) model to CPLEX LP text format."""
    if ir.obj_pwl:
        ir = ir.lower_pwl()
    if ir.has_quadratic():
        raise ValueError("LP writer handles linear objectives only; "
                         "apply the PWL approximation first")
    ir.validate()
    lines = [f"\\ {ir.name}"]
    lines.append("Maximize" if ir.sense == "max" else "Minimize")
    obj = {v: c for v, c in ir.obj_linear.items() if c != 0.0}
    lines.append(" obj: " + (_expr(obj) if obj else "0 " + next(iter(ir.variables))))
    if ir.obj_const:
        lines[0] += f"  (objective constant {_fmt(ir.obj_const)} applied on read-back)"
    lines.append("Subject To")
    for row in ir.rows:
        op = {"<=": "<=", ">=": ">=", "==": "="}[row.sense]
        lines.append(f" {row.name}: {_expr(row.coeffs)} {op} {_fmt(row.rhs)}")
    lines.append("Bounds")
    for var in ir.variables.values():
        if var.binary:
            continue
        lines.append(f" {_fmt(var.lb)} <= {var.name} <= {_fmt(var.ub)}")
    binaries = ir.binary_names
    if binaries:
        lines.append("Binaries")
        for name in binaries:
            lines.append(f" {name}")
    lines.append("End")
    return "\n".join(lines) + "\n"


def parse_solution(text: str, known: set[str] | None = None) -> dict[str, float]:
    """Extract variable values from solver solution text.

    Lines that are not "<name> <number>" pairs (status banners, comments,
    objective summaries and the like) are ignored. When `known` is given,
    names outside it are dropped as well.
    """
    values: dict[str, float] = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line[0] in "#*\\/;":
            continue
        tokens = line.replace("=", " ").split()
        if len(tokens) < 2:
            continue
        name = tokens[0]
        try:
            value = float(tokens[-1])
        except ValueError:
            continue
        if known is not None and name not in known:
            continue
        values[name] = value
    return values
