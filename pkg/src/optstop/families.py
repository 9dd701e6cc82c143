"""The three one-sample test families as streaming sequential statistics.

Each family rejects at sample size m iff ``T_m > 0``. Observations are first
mapped to standardized scores y (mean 0, variance 1 under the null boundary)
and the statistic only ever sees the running sums of y and y**2.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import special_fn as sf


class Family(str, enum.Enum):
    GAUSS = "gauss"
    EXPONENTIAL = "exp"
    STUDENT_T = "t"

    @property
    def min_m(self) -> int:
        return 2 if self is Family.STUDENT_T else 1

    @classmethod
    def parse(cls, value) -> "Family":
        if isinstance(value, cls):
            return value
        aliases = {
            "gauss": cls.GAUSS, "gaussknownvariance": cls.GAUSS, "normal": cls.GAUSS,
            "exp": cls.EXPONENTIAL, "exponential": cls.EXPONENTIAL, "exponentialmean": cls.EXPONENTIAL,
            "t": cls.STUDENT_T, "studentt": cls.STUDENT_T, "student_t": cls.STUDENT_T,
        }
        try:
            return aliases[str(value).lower()]
        except KeyError:
            raise ValueError(f"unknown test family {value!r}") from None


class DegenerateSampleWarning(RuntimeWarning):
    """Sample spread was numerically negative and has been clamped to zero."""


@dataclass(frozen=True)
class Standardizer:
    """Maps a raw observation to its null score."""

    family: Family
    mu0: float = 0.0
    sigma0: float = 1.0
    lambda0: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "family", Family.parse(self.family))
        if not self.sigma0 > 0.0:
            raise ValueError(f"sigma0 must be positive, got {self.sigma0!r}")
        if not self.lambda0 > 0.0:
            raise ValueError(f"lambda0 must be positive, got {self.lambda0!r}")

    def __call__(self, x):
        if self.family is Family.EXPONENTIAL:
            return self.lambda0 * x - 1.0
        return (x - self.mu0) / self.sigma0


IDENTITY = Standardizer(Family.GAUSS)


@dataclass(frozen=True)
class TestConfig:
    family: Family
    alpha: float
    n: int
    k: int = 0
    mu0: float = 0.0
    sigma0: float = 1.0
    lambda0: float = 1.0

    __test__ = False  # not a pytest class

    def __post_init__(self):
        object.__setattr__(self, "family", Family.parse(self.family))
        sf.Probability(self.alpha)
        if int(self.n) != self.n or self.n < self.family.min_m:
            raise ValueError(f"n must be an integer >= {self.family.min_m} for {self.family.value}, got {self.n!r}")
        if int(self.k) != self.k or self.k < 0:
            raise ValueError(f"k must be a non-negative integer, got {self.k!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "k", int(self.k))
        Standardizer(self.family, self.mu0, self.sigma0, self.lambda0)

    @property
    def standardizer(self) -> Standardizer:
        return Standardizer(self.family, self.mu0, self.sigma0, self.lambda0)


@dataclass(frozen=True)
class SequentialState:
    """Count and compensated running sums of scores and squared scores.

    ``c1``/``c2`` hold the Neumaier compensation terms; read the sums through
    :attr:`s1` and :attr:`s2`.
    """

    m: int = 0
    sum1: float = 0.0
    sum2: float = 0.0
    c1: float = 0.0
    c2: float = 0.0

    @property
    def s1(self) -> float:
        return self.sum1 + self.c1

    @property
    def s2(self) -> float:
        return self.sum2 + self.c2


def init_state() -> SequentialState:
    return SequentialState()


def _neumaier(total: float, comp: float, value: float):
    t = total + value
    if abs(total) >= abs(value):
        comp += (total - t) + value
    else:
        comp += (value - t) + total
    return t, comp


def push(state: SequentialState, x: float, std: Standardizer = IDENTITY) -> SequentialState:
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"observation must be finite, got {x!r}")
    y = std(x)
    sum1, c1 = _neumaier(state.sum1, state.c1, y)
    sum2, c2 = _neumaier(state.sum2, state.c2, y * y)
    return SequentialState(state.m + 1, sum1, sum2, c1, c2)


def push_many(state: SequentialState, xs, std: Standardizer = IDENTITY) -> SequentialState:
    for x in xs:
        state = push(state, x, std)
    return state


@lru_cache(maxsize=4096)
def critical_value(family, m: int, alpha: float) -> float:
    """Threshold for s1/sqrt(m); for the t-test this is the multiplier c_m on the sample sd."""
    family = Family.parse(family)
    alpha = float(sf.Probability(alpha))
    if int(m) != m or m < family.min_m:
        raise ValueError(f"{family.value} needs m >= {family.min_m}, got {m!r}")
    m = int(m)
    if family is Family.GAUSS:
        return -sf.std_normal_quantile(alpha)
    if family is Family.EXPONENTIAL:
        # standardized (1 - alpha)-quantile of Gamma(m, 1)
        return (sf.gamma_quantile(m, 1.0 - alpha) - m) / math.sqrt(m)
    return sf.student_t_quantile(m - 1, 1.0 - alpha)


def _check_m(family: Family, m: int):
    if m < family.min_m:
        raise ValueError(
            f"{family.value} statistic needs at least {family.min_m} observations, got {m}"
        )


def statistic(family, state: SequentialState, alpha: float) -> float:
    """T_m for the current state; the test rejects iff this is > 0."""
    family = Family.parse(family)
    _check_m(family, state.m)
    m = state.m
    s1 = state.s1
    crit = critical_value(family, m, alpha)
    if family is not Family.STUDENT_T:
        return s1 / math.sqrt(m) - crit
    ss = state.s2 - s1 * s1 / m
    if ss < 0.0:
        warnings.warn(f"negative sum of squared deviations {ss!r} clamped to 0", DegenerateSampleWarning, stacklevel=2)
        ss = 0.0
    return s1 / math.sqrt(m) - crit * math.sqrt(ss / (m - 1))


def rejects(family, state: SequentialState, alpha: float) -> bool:
    return statistic(family, state, alpha) > 0.0


def statistic_batch(family, m: int, s1: np.ndarray, s2: np.ndarray | None, alpha: float) -> np.ndarray:
    """Vectorized T_m over many replications sharing the same m."""
    family = Family.parse(family)
    _check_m(family, m)
    crit = critical_value(family, m, alpha)
    lead = s1 / math.sqrt(m)
    if family is not Family.STUDENT_T:
        return lead - crit
    ss = np.maximum(s2 - s1 * s1 / m, 0.0)
    return lead - crit * np.sqrt(ss / (m - 1))


# ---------------------------------------------------------------- null sampling


def standard_normals(rng: np.random.Generator, size: int) -> np.ndarray:
    """Box-Muller normals; always consumes exactly 2*ceil(size/2) uniforms."""
    half = (size + 1) // 2
    u1 = 1.0 - rng.random(half)  # (0, 1]
    u2 = rng.random(half)
    r = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    out = np.empty(2 * half)
    out[0::2] = r * np.cos(theta)
    out[1::2] = r * np.sin(theta)
    return out[:size]


def exponential_from_uniform(u, lambda0: float = 1.0):
    return -np.log(u) / lambda0


def null_scores(family, rng: np.random.Generator, size: int) -> np.ndarray:
    """Standardized null scores: N(0,1) for Gauss/t, Exp(1) - 1 for the exponential test."""
    family = Family.parse(family)
    if family is Family.EXPONENTIAL:
        return exponential_from_uniform(1.0 - rng.random(size)) - 1.0
    return standard_normals(rng, size)


def null_sampler(family, rng: np.random.Generator, config: TestConfig | None = None) -> float:
    """One raw observation from the null boundary distribution."""
    family = Family.parse(family)
    mu0, sigma0, lambda0 = (config.mu0, config.sigma0, config.lambda0) if config else (0.0, 1.0, 1.0)
    if family is Family.EXPONENTIAL:
        return float(exponential_from_uniform(1.0 - rng.random(), lambda0))
    return mu0 + sigma0 * float(standard_normals(rng, 1)[0])


def base_block_sums(family, rng: np.random.Generator, n: int, size: int):
    """Exact joint draw of (sum y, sum y^2) over n null scores, for ``size`` replications.

    Uses the sampling distributions of the sufficient statistics: N(0, n) for
    the sum of normals (with an independent chi-square(n-1) spread for the
    t-test) and Gamma(n) - n for exponential scores. The sum of squares is
    only drawn where the statistic needs it.
    """
    family = Family.parse(family)
    if family is Family.EXPONENTIAL:
        return rng.standard_gamma(float(n), size) - n, None
    s1 = math.sqrt(n) * standard_normals(rng, size)
    if family is Family.GAUSS:
        return s1, None
    spread = rng.chisquare(n - 1, size) if n > 1 else np.zeros(size)
    return s1, s1 * s1 / n + spread
