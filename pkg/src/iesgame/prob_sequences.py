"""Discrete probability sequences over output levels {0, q, 2q, ...}.

A renewable output distribution is discretized onto a uniform power grid
with step q; independent units combine by addition-type convolution.
The per-period spinning-reserve chance constraint then reduces to level
indicators w_m with big-M coupling plus one probability-coverage row,
which is its exact deterministic equivalent.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .stochastic_renewables import OutputDistribution

SUM_TOL = 1e-9


@dataclass(frozen=True)
class ProbSequence:
    """Probability mass over levels 0, q, 2q, ..., N*q."""

    q: float
    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "probs", np.asarray(self.probs, dtype=float))
        if self.q <= 0:
            raise ValueError("step q must be positive")
        if self.probs.ndim != 1 or self.probs.size == 0:
            raise ValueError("probs must be a nonempty 1-D array")
        if np.any(self.probs < -SUM_TOL) or np.any(self.probs > 1 + SUM_TOL):
            raise ValueError("probabilities must lie in [0, 1]")
        total = float(self.probs.sum())
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"probabilities sum to {total}, expected 1")

    def __len__(self) -> int:
        return int(self.probs.size)

    def levels(self) -> np.ndarray:
        return np.arange(self.probs.size) * self.q


def discretize(dist: OutputDistribution, q: float) -> ProbSequence:
    """Discretize a bounded mixed distribution onto the grid {0, q, ...}.

    Cell 0 integrates [0, q/2); interior cell i integrates
    [iq - q/2, iq + q/2); the last cell absorbs the remaining upper tail.
    Point masses land in the cell whose center is nearest (half-up).
    """
    if q <= 0:
        raise ValueError("step q must be positive")
    level_max = dist.support_max
    if level_max <= 0:
        # degenerate: all mass at level zero
        return ProbSequence(q, np.array([dist.total_mass()]))
    if q >= level_max:
        raise ValueError(
            f"step q={q} >= support maximum {level_max}: sequence would "
            "collapse to a single cell; choose a smaller q")
    n = math.ceil(level_max / q)
    probs = np.zeros(n + 1)
    for i in range(n + 1):
        lo = 0.0 if i == 0 else i * q - q / 2
        hi = i * q + q / 2 if i < n else level_max
        probs[i] = dist.cont_mass(lo, hi)
    for loc, mass in dist.point_masses:
        cell = min(n, int(math.floor(loc / q + 0.5)))
        probs[cell] += mass
    return ProbSequence(q, probs)


def convolve(a: ProbSequence, b: ProbSequence) -> ProbSequence:
    """Addition-type convolution d(i) = sum_{j+k=i} a(j) b(k)."""
    if abs(a.q - b.q) > 1e-12:
        raise ValueError(f"step mismatch: {a.q} vs {b.q} (no implicit resampling)")
    return ProbSequence(a.q, np.convolve(a.probs, b.probs))


def expectation(s: ProbSequence) -> float:
    """Expected output sum_m m*q*s(m) in MW."""
    return float(np.dot(s.levels(), s.probs))


@dataclass(frozen=True)
class ReserveRequirementRows:
    """Data for the deterministic-equivalent reserve rows of one period.

    For each level m the MILP gets a binary w_m with
        total_reserve >= thresholds[m] - big_m * (1 - w_m)
    plus the coverage row  sum_m level_probs[m] * w_m >= confidence.
    thresholds[m] = expected_output - m*q, strictly decreasing in m.
    """

    expected_output: float
    q: float
    thresholds: np.ndarray
    level_probs: np.ndarray
    confidence: float

    def __post_init__(self):
        if not (0 < self.confidence < 1):
            raise ValueError("confidence must lie in (0, 1)")
        if np.any(np.diff(self.thresholds) >= 0):
            raise ValueError("thresholds must be strictly decreasing")
        total = float(np.asarray(self.level_probs).sum())
        if abs(total - 1.0) > 1e-6:
            raise ValueError("level probabilities must sum to 1")

    @property
    def big_m(self) -> float:
        # thresholds never exceed expected_output, so this M is valid and tight
        return max(self.expected_output, 1e-9)

    def min_reserve(self) -> float:
        """Smallest feasible total reserve: the largest m whose upper tail
        still covers the confidence level fixes the binding threshold."""
        tails = np.cumsum(self.level_probs[::-1])[::-1]
        feasible = np.nonzero(tails >= self.confidence - 1e-12)[0]
        if feasible.size == 0:
            return float(self.thresholds[0])
        m_star = int(feasible.max())
        return max(0.0, float(self.thresholds[m_star]))


def reserve_rows(joint: ProbSequence, confidence: float) -> ReserveRequirementRows:
    """Deterministic-equivalent reserve data for one period's joint sequence."""
    e = expectation(joint)
    thresholds = e - joint.levels()
    return ReserveRequirementRows(
        expected_output=e,
        q=joint.q,
        thresholds=thresholds,
        level_probs=joint.probs.copy(),
        confidence=confidence,
    )


def chance_satisfaction_mc(pv_model, wt_model, expected_output: float,
                           reserve: float, n_samples: int,
                           rng: np.random.Generator) -> tuple[float, float]:
    """Monte Carlo estimate of Pr[reserve >= expected_output - joint output].

    Either model may be None (unit absent that period). Returns the
    estimate and its 95% binomial half-width. Requires n_samples >= 1e4.
    """
    from .stochastic_renewables import sample_pv, sample_wt

    if n_samples < 10_000:
        raise ValueError("n_samples must be at least 10^4")
    joint = np.zeros(n_samples)
    if pv_model is not None:
        joint += sample_pv(pv_model, rng, size=n_samples)
    if wt_model is not None:
        joint += sample_wt(wt_model, rng, size=n_samples)
    hits = float(np.mean(reserve >= expected_output - joint - 1e-12))
    half_width = 1.96 * math.sqrt(max(hits * (1 - hits), 1e-12) / n_samples)
    return hits, half_width
