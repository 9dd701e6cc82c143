"""Seeded, reproducibly parallel Monte Carlo for rejection probabilities and E(S_l)+.

Replications are grouped into fixed-size chunks by replication index. Chunk
``c`` draws from its own generator seeded with ``mix64(seed, c)``, so a run's
output depends only on (seed, reps, config) and not on the number of workers.
Chunk results are merged in index order.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import special_fn as sf
from .families import Family, TestConfig, base_block_sums, null_scores, statistic_batch

MASK64 = (1 << 64) - 1
GOLDEN64 = 0x9E3779B97F4A7C15
CHUNK_SIZE = 1 << 16
_COLUMN_BLOCK = 64


def _splitmix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def mix64(seed: int, index: int) -> int:
    """Avalanche mix of (seed, index); injective in ``index`` for a fixed seed."""
    return _splitmix64(_splitmix64(seed) + (index + 1) * GOLDEN64)


@dataclass(frozen=True)
class RngSpec:
    master_seed: int = 0
    chunk_size: int = CHUNK_SIZE

    def __post_init__(self):
        if int(self.master_seed) != self.master_seed:
            raise ValueError("master_seed must be an integer")
        object.__setattr__(self, "master_seed", int(self.master_seed) & MASK64)
        if self.chunk_size < 1:
            raise ValueError("chunk_size must be positive")

    def stream(self, index: int) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(mix64(self.master_seed, index)))

    def chunks(self, reps: int):
        """(chunk index, size) pairs covering ``reps`` replications."""
        full, rest = divmod(reps, self.chunk_size)
        out = [(c, self.chunk_size) for c in range(full)]
        if rest:
            out.append((full, rest))
        return out


def _as_rng(rng) -> RngSpec:
    if isinstance(rng, RngSpec):
        return rng
    return RngSpec(int(rng))


def _run_chunks(fn, rng: RngSpec, reps: int, workers: int):
    if reps < 1 or int(reps) != reps:
        raise ValueError(f"reps must be a positive integer, got {reps!r}")
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers!r}")
    jobs = rng.chunks(int(reps))
    if workers == 1 or len(jobs) == 1:
        return [fn(rng.stream(c), size) for c, size in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        # map preserves submission order, so merging below is index-ordered
        return list(pool.map(lambda job: fn(rng.stream(job[0]), job[1]), jobs))


# ---------------------------------------------------------------- statistics helpers


def wilson_interval(successes: int, trials: int, z: float = 1.959963984540054):
    if trials < 1:
        raise ValueError("trials must be positive")
    p = successes / trials
    z2 = z * z
    denom = 1.0 + z2 / trials
    centre = (p + z2 / (2 * trials)) / denom
    half = z * math.sqrt(p * (1.0 - p) / trials + z2 / (4 * trials * trials)) / denom
    return centre - half, centre + half


@dataclass
class Moments:
    """Count, mean and centred second moment; merges by Chan's pairwise rule."""

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    @classmethod
    def of(cls, values: np.ndarray) -> "Moments":
        values = np.asarray(values, dtype=float)
        if values.size == 0:
            return cls()
        mean = float(values.mean())
        return cls(values.size, mean, float(((values - mean) ** 2).sum()))

    def merge(self, other: "Moments") -> "Moments":
        if other.count == 0:
            return Moments(self.count, self.mean, self.m2)
        if self.count == 0:
            return Moments(other.count, other.mean, other.m2)
        n = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * other.count / n
        m2 = self.m2 + other.m2 + delta * delta * self.count * other.count / n
        return Moments(n, mean, m2)

    @property
    def variance(self) -> float:
        return self.m2 / (self.count - 1) if self.count > 1 else 0.0

    @property
    def se(self) -> float:
        return math.sqrt(self.variance / self.count) if self.count > 0 else math.inf


def _merge_all(items):
    total = Moments()
    for item in items:
        total = total.merge(item)
    return total


# ---------------------------------------------------------------- alpha_{n,k}


@dataclass(frozen=True)
class InflationEstimate:
    config: TestConfig
    reps: int
    rejections: int
    first_rejection_histogram: tuple  # counts for m = n, ..., n + k
    alpha_hat_nk: float
    alpha_hat_n: float
    rho_hat: float
    se: float
    rho_se: float
    ci95: tuple

    @property
    def sample_sizes(self):
        return tuple(range(self.config.n, self.config.n + self.config.k + 1))

    def alpha_hat_by_budget(self) -> np.ndarray:
        """Estimated alpha_{n,j} for j = 0..k from the same paths."""
        return np.cumsum(self.first_rejection_histogram) / self.reps


def _alpha_chunk(config: TestConfig, base: str):
    family, n, k, alpha = config.family, config.n, config.k, config.alpha
    need_s2 = family is Family.STUDENT_T

    def run(gen: np.random.Generator, size: int) -> np.ndarray:
        if base == "exact":
            s1, s2 = base_block_sums(family, gen, n, size)
        else:
            s1 = np.zeros(size)
            s2 = np.zeros(size) if need_s2 else None
            for start in range(0, n, _COLUMN_BLOCK):
                width = min(_COLUMN_BLOCK, n - start)
                y = null_scores(family, gen, size * width).reshape(size, width)
                s1 += y.sum(axis=1)
                if need_s2:
                    s2 += (y * y).sum(axis=1)
        first = np.full(size, -1, dtype=np.int64)
        open_ = np.ones(size, dtype=bool)
        for offset in range(k + 1):
            m = n + offset
            if offset:
                y = null_scores(family, gen, size)
                s1 += y
                if need_s2:
                    s2 += y * y
            hit = open_ & (statistic_batch(family, m, s1, s2, alpha) > 0.0)
            first[hit] = offset
            open_ &= ~hit
        return np.bincount(first[first >= 0], minlength=k + 1)

    return run


def simulate_alpha_nk(config: TestConfig, reps: int, rng=0, workers: int = 1, base: str = "exact") -> InflationEstimate:
    """Estimate alpha_{n,k} = P(max_{n<=m<=n+k} T_m > 0) under the null.

    Every replication evaluates all m in {n, ..., n+k} on one sample path.
    ``base="exact"`` draws the first n observations' sufficient statistics
    from their exact joint law; ``base="stream"`` pushes all n + k scores.
    """
    if base not in ("exact", "stream"):
        raise ValueError(f"base must be 'exact' or 'stream', got {base!r}")
    rng = _as_rng(rng)
    parts = _run_chunks(_alpha_chunk(config, base), rng, reps, workers)
    hist = np.zeros(config.k + 1, dtype=np.int64)
    for part in parts:
        hist += part
    reps = int(reps)
    rejections = int(hist.sum())
    p = rejections / reps
    se = math.sqrt(p * (1.0 - p) / reps)
    return InflationEstimate(
        config=config,
        reps=reps,
        rejections=rejections,
        first_rejection_histogram=tuple(int(c) for c in hist),
        alpha_hat_nk=p,
        alpha_hat_n=int(hist[0]) / reps,
        rho_hat=p / config.alpha - 1.0,
        se=se,
        rho_se=se / config.alpha,
        ci95=wilson_interval(rejections, reps),
    )


# ---------------------------------------------------------------- E(S_l)+


@dataclass(frozen=True)
class EslEstimate:
    family: Family
    reps: int
    means: tuple  # index l - 1
    ses: tuple

    @property
    def l_max(self) -> int:
        return len(self.means)


def estimate_esl_plus(family, l_max: int, reps: int, rng=0, workers: int = 1) -> EslEstimate:
    family = Family.parse(family)
    if l_max < 1:
        raise ValueError(f"l_max must be >= 1, got {l_max!r}")

    def run(gen, size):
        s = np.zeros(size)
        out = []
        for _ in range(l_max):
            s += null_scores(family, gen, size)
            out.append(Moments.of(np.maximum(s, 0.0)))
        return out

    parts = _run_chunks(run, _as_rng(rng), reps, workers)
    per_l = [_merge_all(part[j] for part in parts) for j in range(l_max)]
    return EslEstimate(family, int(reps), tuple(mo.mean for mo in per_l), tuple(mo.se for mo in per_l))


@dataclass(frozen=True)
class KacEstimate:
    k: int
    reps: int
    max_mean: float
    max_se: float
    sum_mean: float
    sum_se: float
    diff_mean: float
    diff_se: float


def estimate_kac_sides(family, k: int, reps: int, rng=0, workers: int = 1) -> KacEstimate:
    """Both sides of E max_{0<=l<=k} S_l = sum_l E(S_l)+ / l on shared paths.

    ``diff_se`` is the standard error of the per-path difference, which
    accounts for the correlation between the two sides.
    """
    family = Family.parse(family)
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k!r}")

    def run(gen, size):
        s = np.zeros(size)
        running_max = np.zeros(size)
        weighted = np.zeros(size)
        for ell in range(1, k + 1):
            s += null_scores(family, gen, size)
            np.maximum(running_max, s, out=running_max)
            weighted += np.maximum(s, 0.0) / ell
        return Moments.of(running_max), Moments.of(weighted), Moments.of(running_max - weighted)

    parts = _run_chunks(run, _as_rng(rng), reps, workers)
    lhs, rhs, diff = (_merge_all(p[i] for p in parts) for i in range(3))
    return KacEstimate(k, int(reps), lhs.mean, lhs.se, rhs.mean, rhs.se, diff.mean, diff.se)


# ---------------------------------------------------------------- von Bahr-Esseen


VBE_KERNELS = ("normal_product", "exp_product")


@dataclass(frozen=True)
class VbeCheck:
    kernel: str
    n: int
    p: float
    reps: int
    lhs: float
    lhs_se: float
    rhs: float
    rhs_se: float
    margin_se: float  # SE of the per-path rhs - lhs

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    @property
    def margin_in_se(self) -> float:
        return self.margin / self.margin_se if self.margin_se > 0 else math.inf


def vbe_bound_check(kernel: str, n: int, p: float, reps: int, rng=0, workers: int = 1) -> VbeCheck:
    """Monte Carlo of both sides of E|M_n|^p <= 4 sum_{i<j} E|f(X_i, X_j)|^p for f(x, y) = x*y.

    M_n = sum_{i<j} x_i x_j is evaluated per path as ((sum x)^2 - sum x^2)/2
    and the right-hand sum likewise from a_i = |x_i|^p.
    """
    if kernel not in VBE_KERNELS:
        raise ValueError(f"kernel must be one of {VBE_KERNELS}, got {kernel!r}")
    if not (1.0 <= p <= 2.0):
        raise ValueError(f"p must lie in [1, 2], got {p!r}")
    if int(n) != n or n < 2:
        raise ValueError(f"n must be an integer >= 2, got {n!r}")
    n = int(n)
    family = Family.GAUSS if kernel == "normal_product" else Family.EXPONENTIAL

    def run(gen, size):
        x = null_scores(family, gen, size * n).reshape(size, n)
        if n == 2:
            prod = np.abs(x[:, 0] * x[:, 1]) ** p
            lhs, rhs = prod, 4.0 * prod
        else:
            sx = x.sum(axis=1)
            lhs = np.abs(0.5 * (sx * sx - (x * x).sum(axis=1))) ** p
            a = np.abs(x) ** p
            sa = a.sum(axis=1)
            rhs = 4.0 * 0.5 * (sa * sa - (a * a).sum(axis=1))
        return Moments.of(lhs), Moments.of(rhs), Moments.of(rhs - lhs)

    parts = _run_chunks(run, _as_rng(rng), reps, workers)
    lhs, rhs, diff = (_merge_all(part[i] for part in parts) for i in range(3))
    return VbeCheck(kernel, n, float(p), int(reps), lhs.mean, lhs.se, rhs.mean, rhs.se, diff.se)
