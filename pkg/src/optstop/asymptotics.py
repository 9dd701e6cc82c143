"""Closed-form and quadrature values for the level inflation rho_{n,k}.

Two predictors are provided:

* the partial-sum form
  rho ~ h(alpha)/sqrt(n) * sqrt(2 pi) * sum_{l=1}^k E(S_l)+ / l,
* its large-k limit rho ~ 2 h(alpha) sqrt(k/n).

For the Gauss test with one optional observation the exact rejection
probability is a one-dimensional integral, evaluated here by composite
Gauss-Legendre quadrature. Exact rational oracles for the Kac identity
E max_{0<=l<=k} S_l = sum_l E(S_l)+ / l live here too.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np

from . import special_fn as sf
from .families import Family


class Mode(str, enum.Enum):
    SUM = "sum"
    SQRT = "sqrt"


class EslSource(str, enum.Enum):
    CLOSED_FORM_GAUSS = "closed_form_gauss"
    CLOSED_FORM_EXPONENTIAL = "closed_form_exponential"
    MONTE_CARLO = "monte_carlo"


class QuadratureError(ArithmeticError):
    pass


class EnumerationBudgetError(ArithmeticError):
    pass


# ---------------------------------------------------------------- E(S_l)+


def esl_plus_closed_form(family, ell: int) -> float:
    """E(S_l)+ for Gauss scores (sqrt(l / 2 pi)) or centred Exp(1) scores ((l/e)^l / (l-1)!)."""
    family = Family.parse(family)
    if int(ell) != ell or ell < 1:
        raise ValueError(f"l must be a positive integer, got {ell!r}")
    if family is Family.EXPONENTIAL:
        return math.exp(ell * (math.log(ell) - 1.0) - sf.log_gamma(ell))
    return math.sqrt(ell / (2.0 * math.pi))


def closed_form_source(family) -> EslSource:
    family = Family.parse(family)
    if family is Family.EXPONENTIAL:
        return EslSource.CLOSED_FORM_EXPONENTIAL
    return EslSource.CLOSED_FORM_GAUSS


def esl_lower_bound_check(family, l_max: int):
    """Rows (l, E(S_l)+, sqrt(l/2) * E(S_1)+) for l = 1..l_max."""
    first = esl_plus_closed_form(family, 1)
    return [
        (ell, esl_plus_closed_form(family, ell), math.sqrt(ell / 2.0) * first)
        for ell in range(1, l_max + 1)
    ]


# ---------------------------------------------------------------- predictors


@dataclass(frozen=True)
class PredictionBreakdown:
    n: int
    k: int
    alpha: float
    rho: float
    h: sf.HValue
    terms: tuple  # (1/l) E(S_l)+ for l = 1..k; empty in sqrt mode
    mode: Mode
    esl_source: EslSource | None

    @property
    def percent(self) -> float:
        """Inflation as a percentage of alpha (not percentage points)."""
        return 100.0 * self.rho

    @property
    def alpha_nk(self) -> float:
        return self.alpha * (1.0 + self.rho)


def _check_nk(n, k):
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    if int(k) != k or k < 1:
        raise ValueError(f"k must be a positive integer, got {k!r}")
    return int(n), int(k)


def predict_rho_sum(n: int, k: int, alpha: float, esl: Sequence[float],
                    esl_source: EslSource | None = None) -> PredictionBreakdown:
    n, k = _check_nk(n, k)
    if len(esl) < k:
        raise ValueError(f"need E(S_l)+ for l = 1..{k}, got {len(esl)} values")
    values = [float(v) for v in esl[:k]]
    if any(not v > 0.0 for v in values):
        raise ValueError("E(S_l)+ values must be positive")
    h = sf.h_alpha(alpha)
    terms = tuple(v / ell for ell, v in enumerate(values, start=1))
    rho = h.value / math.sqrt(n) * sf.SQRT2PI * math.fsum(terms)
    return PredictionBreakdown(n, k, float(alpha), rho, h, terms, Mode.SUM, esl_source)


def predict_rho_closed_form(family, n: int, k: int, alpha: float) -> PredictionBreakdown:
    _, k = _check_nk(n, k)
    esl = [esl_plus_closed_form(family, ell) for ell in range(1, k + 1)]
    return predict_rho_sum(n, k, alpha, esl, closed_form_source(family))


def predict_rho_sqrt(n: int, k: int, alpha: float) -> PredictionBreakdown:
    n, k = _check_nk(n, k)
    if k / n > 0.1:
        warnings.warn(f"k/n = {k / n:.3g} is not small; the sqrt(k/n) limit may be poor", stacklevel=2)
    h = sf.h_alpha(alpha)
    return PredictionBreakdown(n, k, float(alpha), 2.0 * h.value * math.sqrt(k / n), h, (), Mode.SQRT, None)


def gauss_sum_multiplier(k: int) -> float:
    """sum_{l=1}^k 1/sqrt(l): sqrt(n)/h(alpha) times the Gauss-test prediction."""
    return math.fsum(1.0 / math.sqrt(ell) for ell in range(1, k + 1))


# ---------------------------------------------------------------- Gauss k = 1


@dataclass(frozen=True)
class QuadratureResult:
    value: float
    error: float
    panels: int
    excess: float = math.nan  # value - alpha, without cancellation


@lru_cache(maxsize=1)
def _legendre_rule():
    return np.polynomial.legendre.leggauss(64)


def _composite_gl(f, a: float, b: float, panels: int) -> float:
    nodes, weights = _legendre_rule()
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    x = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
    fx = f(x).reshape(panels, -1)
    return float(np.sum(half * (fx @ weights)))


_erfc = np.vectorize(math.erfc, otypes=[float])


def gauss_k1_integral(n: int, alpha: float, tol: float = 1e-13, upper: float = 45.0,
                      max_panels: int = 45 * 2 ** 8) -> QuadratureResult:
    """sqrt(n) * (alpha_{n,1} - alpha) for the Gauss test.

    Integrand after t = z - u/sqrt(n):
    (1 - Phi((sqrt(n+1) - sqrt(n)) z + u)) * phi(z - u/sqrt(n)) on u in [0, inf).
    The tail beyond ``upper`` is below double precision.
    """
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    if not tol > 0.0:
        raise ValueError("tol must be positive")
    a = float(sf.Probability(alpha))
    z = -sf.std_normal_quantile(a) if a < 0.5 else sf.std_normal_quantile(1.0 - a)
    rn = math.sqrt(n)
    shift = z / (math.sqrt(n + 1) + rn)  # (sqrt(n+1) - sqrt(n)) z without cancellation

    def integrand(u):
        tail = 0.5 * _erfc((shift + u) / sf.SQRT2)
        t = z - u / rn
        return tail * sf.INV_SQRT2PI * np.exp(-0.5 * t * t)

    panels = int(math.ceil(upper))
    prev = _composite_gl(integrand, 0.0, upper, panels)
    while True:
        panels *= 2
        if panels > max_panels:
            raise QuadratureError(f"tolerance {tol} not reached with {max_panels} panels")
        cur = _composite_gl(integrand, 0.0, upper, panels)
        err = abs(cur - prev)
        if err <= tol:
            return QuadratureResult(cur, err, panels)
        prev = cur


def exact_gauss_k1(n: int, alpha: float, tol: float = 1e-13) -> QuadratureResult:
    """alpha_{n,1} for the Gauss test; ``tol`` bounds the error of the returned probability."""
    rn = math.sqrt(n)
    inner = gauss_k1_integral(n, alpha, tol * rn)
    excess = inner.value / rn
    return QuadratureResult(alpha + excess, inner.error / rn, inner.panels, excess)


# ---------------------------------------------------------------- Kac identity


@dataclass(frozen=True)
class WalkDistribution:
    """Finite-support step law with rational values and probabilities."""

    support: tuple  # ((value, probability), ...)

    def __post_init__(self):
        pairs = tuple((Fraction(v), Fraction(p)) for v, p in self.support)
        if not pairs:
            raise ValueError("support must be non-empty")
        if any(p < 0 for _, p in pairs):
            raise ValueError("probabilities must be non-negative")
        if sum(p for _, p in pairs) != 1:
            raise ValueError("probabilities must sum to exactly 1")
        object.__setattr__(self, "support", pairs)

    @classmethod
    def fair_coin(cls) -> "WalkDistribution":
        return cls(((1, Fraction(1, 2)), (-1, Fraction(1, 2))))

    @classmethod
    def skewed(cls) -> "WalkDistribution":
        """+2 with probability 1/3, -1 with probability 2/3 (mean zero)."""
        return cls(((2, Fraction(1, 3)), (-1, Fraction(2, 3))))


WALK_PRESETS = {"fair": WalkDistribution.fair_coin, "skewed": WalkDistribution.skewed}

ENUMERATION_BUDGET = 10 ** 8


def _expected_running_max(dist: WalkDistribution, k: int) -> Fraction:
    # depth-first over all |support|^k paths
    total = Fraction(0)
    stack = [(0, Fraction(0), Fraction(0), Fraction(1))]
    while stack:
        depth, s, best, prob = stack.pop()
        if depth == k:
            total += prob * best
            continue
        for v, p in dist.support:
            if p:
                s2 = s + v
                stack.append((depth + 1, s2, max(best, s2), prob * p))
    return total


def _weighted_positive_parts(dist: WalkDistribution, k: int) -> Fraction:
    law = {Fraction(0): Fraction(1)}
    total = Fraction(0)
    for ell in range(1, k + 1):
        nxt: dict = {}
        for s, ps in law.items():
            for v, p in dist.support:
                nxt[s + v] = nxt.get(s + v, Fraction(0)) + ps * p
        law = nxt
        total += sum((s * p for s, p in law.items() if s > 0), Fraction(0)) / ell
    return total


def kac_both_sides_exact(dist: WalkDistribution, k: int):
    """(E max_{0<=l<=k} S_l by path enumeration, sum_l E(S_l)+ / l by convolution)."""
    if int(k) != k or k < 1:
        raise ValueError(f"k must be a positive integer, got {k!r}")
    if len(dist.support) ** k > ENUMERATION_BUDGET:
        raise EnumerationBudgetError(
            f"{len(dist.support)}^{k} paths exceeds the budget of {ENUMERATION_BUDGET}"
        )
    return _expected_running_max(dist, k), _weighted_positive_parts(dist, k)
