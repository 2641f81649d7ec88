"""Single-level collapse of the bilevel pricing game.

The follower's convex program is replaced by its optimality conditions:
per-period stationarity, primal feasibility, and complementarity pairs
linearized with per-pair big-M constants derived from the variable and
price ranges (never a blanket constant). The price*quantity revenue
terms, bilinear across the two levels, are rewritten through the
complementarity identities into expressions linear in the multipliers
plus a quadratic-in-follower term whose curvature matches maximization.
Quadratic cost terms are finally replaced by secant piecewise-linear
approximations with an analytic error bound.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .game_model import BuildError, FollowerFragment, ModelBundle
from .model_ir import ModelIR, PwlObjTerm


@dataclass(frozen=True)
class PwlApprox:
    """Secant piecewise-linear stand-in for coef*x^2 on [lo, hi]."""

    coef: float
    breakpoints: tuple[float, ...]
    values: tuple[float, ...]
    slopes: tuple[float, ...]
    max_error: float


def pwl_quadratic(coef: float, lo: float, hi: float, n_segments: int) -> PwlApprox:
    """Chord interpolation of coef*x^2 with its worst-case gap coef*w^2/4."""
    if n_segments < 1:
        raise ValueError("need at least one segment")
    if hi < lo:
        raise ValueError("empty range")
    if coef == 0.0 or hi == lo:
        bps = (lo, hi) if hi > lo else (lo, lo + 1.0)
        vals = tuple(coef * x ** 2 for x in bps)
        return PwlApprox(coef, bps, vals, ((vals[1] - vals[0]) / (bps[1] - bps[0]),),
                         0.0)
    bps = tuple(np.linspace(lo, hi, n_segments + 1))
    vals = tuple(coef * x ** 2 for x in bps)
    slopes = tuple((v2 - v1) / (b2 - b1) for v1, v2, b1, b2
                   in zip(vals, vals[1:], bps, bps[1:]))
    width = (hi - lo) / n_segments
    return PwlApprox(coef, bps, vals, slopes, abs(coef) * width ** 2 / 4.0)


@dataclass
class ComplementarityPair:
    """0 <= g(x) perp dual >= 0 with g given as an affine expression."""

    name: str
    primal_coeffs: dict[str, float]
    primal_const: float
    dual_var: str
    big_m_primal: float
    big_m_dual: float
    binary: str | None = None

    def primal_value(self, values: dict[str, float]) -> float:
        return self.primal_const + sum(c * values[v]
                                       for v, c in self.primal_coeffs.items())


@dataclass
class KktBlock:
    """Multipliers, stationarity rows and complementarity pairs."""

    xi: str
    deltas: dict[str, list[str]]
    pairs: list[ComplementarityPair]
    stationarity: list[tuple[str, dict[str, float], float]] = field(default_factory=list)

    def stationarity_residuals(self, values: dict[str, float]
                               ) -> list[tuple[str, float]]:
        out = []
        for name, coeffs, rhs in self.stationarity:
            out.append((name, sum(c * values[v] for v, c in coeffs.items()) - rhs))
        return out


def emit_kkt(ir: ModelIR, follower: FollowerFragment,
             mu_names: list[str], gamma_names: list[str],
             mu_max: float, gamma_max: float) -> KktBlock:
    """Optimality conditions of the users' problem, one block per period.

    Electric stationarity:  mu_t - d1_t + d2_t + xi = 0
    Heat stationarity:      -gamma_t + 2*theta*hcl_t - d3_t + d4_t = 0
    plus the four complementarity families over the response bounds.
    """
    t_count = follower.horizon
    theta = follower.theta
    cut_cap = float(np.max(follower.cut_ub, initial=0.0))
    dual_cap_e = 2.0 * mu_max
    dual_cap_h = gamma_max + 2.0 * theta * cut_cap

    xi = ir.add_variable("xi", -mu_max, mu_max)
    deltas: dict[str, list[str]] = {
        "delta1": [ir.add_variable(f"delta1_{t}", 0.0, dual_cap_e)
                   for t in range(t_count)],
        "delta2": [ir.add_variable(f"delta2_{t}", 0.0, dual_cap_e)
                   for t in range(t_count)],
        "delta3": [ir.add_variable(f"delta3_{t}", 0.0, dual_cap_h)
                   for t in range(t_count)],
        "delta4": [ir.add_variable(f"delta4_{t}", 0.0, dual_cap_h)
                   for t in range(t_count)],
    }

    block = KktBlock(xi=xi, deltas=deltas, pairs=[])
    for t in range(t_count):
        stat_e = {mu_names[t]: 1.0, deltas["delta1"][t]: -1.0,
                  deltas["delta2"][t]: 1.0, xi: 1.0}
        ir.add_row(f"kkt_stat_e_{t}", stat_e, "==", 0.0)
        block.stationarity.append((f"kkt_stat_e_{t}", stat_e, 0.0))
        stat_h = {gamma_names[t]: -1.0, follower.h_cl[t]: 2.0 * theta,
                  deltas["delta3"][t]: -1.0, deltas["delta4"][t]: 1.0}
        ir.add_row(f"kkt_stat_h_{t}", stat_h, "==", 0.0)
        block.stationarity.append((f"kkt_stat_h_{t}", stat_h, 0.0))

        sl_range = float(follower.sl_ub[t] - follower.sl_lb[t])
        cut_range = float(follower.cut_ub[t])
        block.pairs.append(ComplementarityPair(
            f"shift_lb_{t}", {follower.p_sl[t]: 1.0}, -float(follower.sl_lb[t]),
            deltas["delta1"][t], sl_range, dual_cap_e))
        block.pairs.append(ComplementarityPair(
            f"shift_ub_{t}", {follower.p_sl[t]: -1.0}, float(follower.sl_ub[t]),
            deltas["delta2"][t], sl_range, dual_cap_e))
        block.pairs.append(ComplementarityPair(
            f"cut_lb_{t}", {follower.h_cl[t]: 1.0}, 0.0,
            deltas["delta3"][t], cut_range, dual_cap_h))
        block.pairs.append(ComplementarityPair(
            f"cut_ub_{t}", {follower.h_cl[t]: -1.0}, cut_range,
            deltas["delta4"][t], cut_range, dual_cap_h))
    return block


def big_m_linearize(ir: ModelIR, pair: ComplementarityPair) -> str:
    """Replace one complementarity pair by two big-M rows and a binary.

    With indicator 1 the dual is forced to zero; with indicator 0 the
    primal expression is. Nonnegativity of both sides is carried by the
    variable bounds from which the expressions are built.
    """
    if pair.big_m_primal < 0 or not np.isfinite(pair.big_m_primal):
        raise BuildError(f"pair {pair.name}: primal expression lacks a finite range")
    binary = ir.add_variable(f"pi_{pair.name}", 0.0, 1.0, binary=True)
    pair.binary = binary
    m_g = max(pair.big_m_primal, 1e-9)
    coeffs = dict(pair.primal_coeffs)
    coeffs[binary] = -m_g
    ir.add_row(f"bigm_g_{pair.name}", coeffs, "<=", -pair.primal_const)
    ir.add_row(f"bigm_d_{pair.name}",
               {pair.dual_var: 1.0, binary: pair.big_m_dual}, "<=", pair.big_m_dual)
    return binary


def eliminate_bilinear(ir: ModelIR, bundle: ModelBundle, block: KktBlock) -> None:
    """Rewrite price*quantity revenue using the complementarity identities.

    mu_t * psl_t   = d1_t*lb_t - d2_t*ub_t - xi*psl_t   (sums to -xi*S)
    gamma_t * hcl_t = 2*theta*hcl_t^2 + d4_t*cut_ub_t
    leaving the objective linear in multipliers plus a concave quadratic
    in the heat cut, which a maximization handles without binaries.
    """
    follower = bundle.follower
    if follower is None:
        if bundle.bilinear:
            raise BuildError("bilinear revenue terms without a follower block")
        return
    sl_index = {v: t for t, v in enumerate(follower.p_sl)}
    cl_index = {v: t for t, v in enumerate(follower.h_cl)}
    elec_signs: set[float] = set()
    for term in bundle.bilinear:
        if term.qty_var in sl_index:
            t = sl_index[term.qty_var]
            ir.add_obj_linear(block.deltas["delta1"][t],
                              term.sign * float(follower.sl_lb[t]))
            ir.add_obj_linear(block.deltas["delta2"][t],
                              -term.sign * float(follower.sl_ub[t]))
            elec_signs.add(term.sign)
        elif term.qty_var in cl_index:
            t = cl_index[term.qty_var]
            ir.add_obj_quad(term.qty_var, term.sign * 2.0 * follower.theta)
            ir.add_obj_linear(block.deltas["delta4"][t],
                              term.sign * float(follower.cut_ub[t]))
        else:
            raise BuildError(f"bilinear term on unknown follower variable "
                             f"{term.qty_var}")
    if elec_signs:
        # the per-period -xi*psl_t pieces only aggregate to -xi*S when all
        # electric terms carry one weight, which the shift-total row fixes
        if len(elec_signs) > 1:
            raise BuildError("electric revenue terms must share one weight")
        ir.add_obj_linear(block.xi, -elec_signs.pop() * follower.shift_total)


def bilinear_identity_residuals(bundle: ModelBundle, block: KktBlock,
                                values: dict[str, float]) -> list[tuple[str, float]]:
    """Per-term gap between price*quantity and its substituted expression."""
    follower = bundle.follower
    out = []
    for term in bundle.bilinear:
        if follower and term.qty_var in set(follower.p_sl):
            t = follower.p_sl.index(term.qty_var)
            lhs = values[term.price_var] * values[term.qty_var]
            rhs = (values[block.deltas["delta1"][t]] * float(follower.sl_lb[t])
                   - values[block.deltas["delta2"][t]] * float(follower.sl_ub[t])
                   - values[block.xi] * values[term.qty_var])
            out.append((f"elec_{t}", lhs - rhs))
        elif follower and term.qty_var in set(follower.h_cl):
            t = follower.h_cl.index(term.qty_var)
            lhs = values[term.price_var] * values[term.qty_var]
            rhs = (2.0 * follower.theta * values[term.qty_var] ** 2
                   + values[block.deltas["delta4"][t]] * float(follower.cut_ub[t]))
            out.append((f"heat_{t}", lhs - rhs))
    return out


def apply_pwl(ir: ModelIR, n_segments: int) -> tuple[float, list[PwlApprox]]:
    """Replace every diagonal quadratic objective term by its chord PWL.

    Returns the summed worst-case objective error and the per-term
    approximations. Terms on effectively fixed variables fold into the
    objective constant exactly.
    """
    total_bound = 0.0
    approxes: list[PwlApprox] = []
    for term in ir.obj_quad:
        var = ir.variables[term.var]
        if var.ub - var.lb < 1e-12:
            ir.obj_const += term.coef * var.lb ** 2
            continue
        approx = pwl_quadratic(term.coef, var.lb, var.ub, n_segments)
        ir.add_obj_pwl(PwlObjTerm(term.var, approx.breakpoints, approx.values))
        total_bound += approx.max_error
        approxes.append(approx)
    ir.obj_quad = []
    return total_bound, approxes


def assemble_single_level(bundle: ModelBundle, n_segments: int = 8,
                          use_pwl: bool = True) -> ModelBundle:
    """Finish the program: optimality conditions, big-M rows, bilinear
    elimination, and (by default) the PWL pass that makes it a pure MILP.

    Without demand response the follower block is absent and no KKT rows
    are emitted; the same entry point then just linearizes the costs.
    """
    ir = bundle.ir
    if bundle.follower is not None and bundle.mode.optimize_prices:
        p = bundle.cfg.prices
        block = emit_kkt(ir, bundle.follower, bundle.names["mu"],
                         bundle.names["gamma"], p.mu_max, p.gamma_max)
        for pair in block.pairs:
            big_m_linearize(ir, pair)
        eliminate_bilinear(ir, bundle, block)
        bundle.kkt_names = {"block": block}
    elif bundle.bilinear:
        raise BuildError("bilinear revenue requires the KKT path")
    if use_pwl:
        bound, approxes = apply_pwl(ir, n_segments)
        bundle.pwl_error_bound = bound
        bundle.names["pwl"] = approxes
    ir.validate()
    return bundle
