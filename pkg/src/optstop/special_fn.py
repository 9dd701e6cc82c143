"""Special functions: normal, gamma and Student-t distributions, Mills ratio, h(alpha).

Everything here is a pure function on Python floats. Tail probabilities are
evaluated directly (via ``erfc`` or the upper incomplete gamma/beta) rather
than as ``1 - cdf`` so small tails keep their relative accuracy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist

SQRT2 = math.sqrt(2.0)
SQRT2PI = math.sqrt(2.0 * math.pi)
INV_SQRT2PI = 1.0 / SQRT2PI

_EPS = 2.220446049250313e-16
_TINY = 1e-300
_MAX_ITER = 1_000_000

_NORMAL = NormalDist()


@dataclass(frozen=True)
class Probability:
    value: float

    def __post_init__(self):
        if not (0.0 < self.value < 1.0):
            raise ValueError(f"probability must lie in (0, 1), got {self.value!r}")

    def __float__(self):
        return self.value


@dataclass(frozen=True)
class HValue:
    """h(alpha) together with the level it was computed from."""

    value: float
    alpha: float

    def __post_init__(self):
        if not self.value > 0.0:
            raise ValueError(f"h must be positive, got {self.value!r}")

    def __float__(self):
        return self.value


def _prob(p) -> float:
    p = float(p)
    if not (0.0 < p < 1.0):
        raise ValueError(f"probability must lie in (0, 1), got {p!r}")
    return p


def _finite(x, name="x") -> float:
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"{name} must be finite, got {x!r}")
    return x


# ---------------------------------------------------------------- normal


def std_normal_pdf(x: float) -> float:
    x = _finite(x)
    return INV_SQRT2PI * math.exp(-0.5 * x * x)


def std_normal_cdf(x: float) -> float:
    x = _finite(x)
    return 0.5 * math.erfc(-x / SQRT2)


def std_normal_sf(x: float) -> float:
    """Upper tail 1 - Phi(x), accurate for large positive x."""
    x = _finite(x)
    return 0.5 * math.erfc(x / SQRT2)


def std_normal_quantile(p) -> float:
    """Inverse of :func:`std_normal_cdf`.

    Starts from the AS241 rational approximation and applies one Halley
    correction against the erfc-based cdf, working in whichever tail is
    smaller so the residual is not swamped by rounding of ``p`` near 1.
    """
    p = _prob(p)
    if p == 0.5:
        return 0.0
    if p > 0.5:
        return -_lower_normal_quantile(1.0 - p) if 1.0 - p > 0.0 else math.inf
    return _lower_normal_quantile(p)


def _lower_normal_quantile(p: float) -> float:
    x = _NORMAL.inv_cdf(p)
    for _ in range(2):
        pdf = INV_SQRT2PI * math.exp(-0.5 * x * x)
        if pdf == 0.0:
            break
        r = (0.5 * math.erfc(-x / SQRT2) - p) / pdf
        x_new = x - r / (1.0 + 0.5 * x * r)
        if x_new == x:
            break
        x = x_new
    return x


def mills_ratio(x: float) -> float:
    """(1 - Phi(x)) / phi(x), computed without cancellation.

    For x >= 0 this uses the scaled complementary error function
    ``erfcx``-style identity R(x) = sqrt(pi/2) * exp(x^2/2) * erfc(x/sqrt2),
    with a continued fraction once exp(x^2/2) would overflow.
    """
    x = _finite(x)
    if x < 25.0:
        return math.sqrt(math.pi / 2.0) * math.exp(0.5 * x * x) * math.erfc(x / SQRT2)
    # Laplace continued fraction R(x) = 1/(x+ 1/(x+ 2/(x+ 3/(x+ ...))))
    acc = x
    for j in range(60, 0, -1):
        acc = x + j / acc
    return 1.0 / acc


def h_alpha(alpha) -> HValue:
    """Inflation constant h(alpha) = phi(z) / (alpha * sqrt(2 pi)), z = Phi^-1(1 - alpha)."""
    a = _prob(alpha)
    z = std_normal_quantile(1.0 - a) if a >= 0.5 else -std_normal_quantile(a)
    return HValue(std_normal_pdf(z) / (a * SQRT2PI), a)


# ---------------------------------------------------------------- gamma


def log_gamma(a: float) -> float:
    a = float(a)
    if not a > 0.0 or not math.isfinite(a):
        raise ValueError(f"log_gamma needs a > 0, got {a!r}")
    return math.lgamma(a)


def _check_gamma_args(a, x):
    a, x = float(a), float(x)
    if not (a > 0.0 and math.isfinite(a)):
        raise ValueError(f"shape must be positive, got {a!r}")
    if not x >= 0.0 or math.isnan(x):
        raise ValueError(f"x must be >= 0, got {x!r}")
    return a, x


def _stirling_error(a: float) -> float:
    """lgamma(a) - ((a - 1/2) log a - a + log(2 pi)/2)."""
    if a < 15.0:
        return math.lgamma(a) - ((a - 0.5) * math.log(a) - a + 0.5 * math.log(2.0 * math.pi))
    r = 1.0 / a
    r2 = r * r
    return r * (1.0 / 12 - r2 * (1.0 / 360 - r2 * (1.0 / 1260 - r2 * (1.0 / 1680 - r2 / 1188))))


def _log1pmx(u: float) -> float:
    """log(1 + u) - u without cancellation for small u."""
    if abs(u) > 0.25:
        return math.log1p(u) - u
    # -u^2/2 + u^3/3 - ...
    total = 0.0
    power = u * u
    for j in range(2, 200):
        term = power / j
        total += -term if j % 2 == 0 else term
        if abs(term) < _EPS * abs(total):
            break
        power *= u
    return total


def _gamma_prefactor_log(a: float, x: float) -> float:
    # log(x^a e^-x / Gamma(a)), arranged so the O(a) parts cancel analytically
    if a < 15.0:
        return a * math.log(x) - x - math.lgamma(a)
    return (
        a * _log1pmx((x - a) / a)
        + 0.5 * math.log(a / (2.0 * math.pi))
        - _stirling_error(a)
    )


def _gamma_series(a: float, x: float) -> float:
    # P(a, x) = x^a e^-x / Gamma(a+1) * sum_n x^n / ((a+1)...(a+n))
    term = 1.0
    total = 1.0
    ap = a
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if term < total * _EPS:
            break
    else:
        raise ArithmeticError(f"incomplete gamma series failed to converge (a={a}, x={x})")
    return math.exp(_gamma_prefactor_log(a, x) - math.log(a)) * total


def _gamma_cf(a: float, x: float) -> float:
    # Q(a, x) by modified Lentz on the Legendre continued fraction
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    frac = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        frac *= delta
        if abs(delta - 1.0) < _EPS:
            break
    else:
        raise ArithmeticError(f"incomplete gamma fraction failed to converge (a={a}, x={x})")
    return math.exp(_gamma_prefactor_log(a, x)) * frac


def regularized_gamma_p(a: float, x: float) -> float:
    """Lower regularized incomplete gamma P(a, x)."""
    a, x = _check_gamma_args(a, x)
    if x == 0.0:
        return 0.0
    if math.isinf(x):
        return 1.0
    if x < a + 1.0:
        return min(1.0, _gamma_series(a, x))
    return max(0.0, 1.0 - _gamma_cf(a, x))


def regularized_gamma_q(a: float, x: float) -> float:
    """Upper regularized incomplete gamma Q(a, x) = 1 - P(a, x)."""
    a, x = _check_gamma_args(a, x)
    if x == 0.0:
        return 1.0
    if math.isinf(x):
        return 0.0
    if x < a + 1.0:
        return max(0.0, 1.0 - _gamma_series(a, x))
    return min(1.0, _gamma_cf(a, x))


def gamma_pdf(a: float, x: float) -> float:
    a, x = _check_gamma_args(a, x)
    if x == 0.0:
        return 1.0 if a == 1.0 else (math.inf if a < 1.0 else 0.0)
    return math.exp((a - 1.0) * math.log(x) - x - math.lgamma(a))


def gamma_quantile(a: float, p) -> float:
    """Inverse of P(a, .) by Wilson-Hilferty start and safeguarded Newton."""
    a = float(a)
    if not (a > 0.0 and math.isfinite(a)):
        raise ValueError(f"shape must be positive, got {a!r}")
    p = _prob(p)
    upper = p > 0.5
    target = 1.0 - p if upper else p

    z = std_normal_quantile(p)
    w = 1.0 / (9.0 * a)
    x = a * (1.0 - w + z * math.sqrt(w)) ** 3
    if not x > 0.0:
        # small-x branch of P(a, x) ~ x^a / Gamma(a+1)
        x = math.exp((math.log(p) + math.lgamma(a + 1.0)) / a)

    lo, hi = 0.0, math.inf
    for _ in range(200):
        if upper:
            f = target - regularized_gamma_q(a, x)  # increasing in x
        else:
            f = regularized_gamma_p(a, x) - target
        if f > 0.0:
            hi = x
        else:
            lo = x
        dens = gamma_pdf(a, x)
        step = f / dens if dens > 0.0 else math.inf
        x_new = x - step
        if not (lo < x_new < hi) or not math.isfinite(x_new):
            x_new = 0.5 * (lo + hi) if math.isfinite(hi) else 2.0 * max(x, 1.0)
        if abs(x_new - x) <= 4.0 * _EPS * max(x, _TINY):
            return x_new
        x = x_new
    return x


# ---------------------------------------------------------------- Student t


def _betacf(a: float, b: float, x: float) -> float:
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _MAX_ITER):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError(f"incomplete beta fraction failed to converge (a={a}, b={b}, x={x})")


def _log_beta(a: float, b: float) -> float:
    small, big = min(a, b), max(a, b)
    if big < 15.0:
        return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)
    # lgamma(big) - lgamma(big + small) via Stirling with the large terms cancelled
    diff = (
        -(big - 0.5) * math.log1p(small / big)
        - small * math.log(big + small)
        + small
        + _stirling_error(big)
        - _stirling_error(big + small)
    )
    return math.lgamma(small) + diff


def regularized_beta(a: float, b: float, x: float, y: float | None = None) -> float:
    """Regularized incomplete beta I_x(a, b).

    ``y`` may carry 1 - x when the caller has it in exact form.
    """
    if y is None:
        y = 1.0 - x
    if x <= 0.0:
        return 0.0
    if y <= 0.0:
        return 1.0
    log_x = math.log1p(-y) if x > 0.5 else math.log(x)
    log_y = math.log1p(-x) if y > 0.5 else math.log(y)
    log_front = a * log_x + b * log_y - _log_beta(a, b)
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _betacf(a, b, x) / a
    return 1.0 - math.exp(log_front) * _betacf(b, a, y) / b


def _check_df(df) -> int:
    if isinstance(df, bool) or int(df) != df or df < 1:
        raise ValueError(f"degrees of freedom must be a positive integer, got {df!r}")
    return int(df)


def student_t_sf(df: int, x: float) -> float:
    """Upper tail P(T > x)."""
    nu = _check_df(df)
    x = _finite(x)
    if x == 0.0:
        return 0.5
    t2 = x * x
    # P(|T| > |x|) = I_w(nu/2, 1/2) with w = nu/(nu + x^2)
    tail = regularized_beta(0.5 * nu, 0.5, nu / (nu + t2), t2 / (nu + t2))
    half = 0.5 * tail
    return half if x > 0.0 else 1.0 - half


def student_t_cdf(df: int, x: float) -> float:
    nu = _check_df(df)
    x = _finite(x)
    return student_t_sf(nu, -x)


def student_t_pdf(df: int, x: float) -> float:
    nu = _check_df(df)
    x = _finite(x)
    log_c = math.lgamma(0.5 * (nu + 1)) - math.lgamma(0.5 * nu) - 0.5 * math.log(nu * math.pi)
    return math.exp(log_c - 0.5 * (nu + 1) * math.log1p(x * x / nu))


def student_t_quantile(df: int, p) -> float:
    """Inverse t cdf by Newton iteration kept inside a shrinking bisection bracket."""
    nu = _check_df(df)
    p = _prob(p)
    if p == 0.5:
        return 0.0
    if p < 0.5:
        return -student_t_quantile(nu, 1.0 - p)
    if nu == 1:
        return math.tan(math.pi * (p - 0.5))
    if nu == 2:
        q = 1.0 - p
        return (1.0 - 2.0 * q) / math.sqrt(2.0 * q * (1.0 - q))
    tail = 1.0 - p  # upper tail target; exact for the p values used here
    x = std_normal_quantile(p)
    lo, hi = 0.0, math.inf
    for _ in range(300):
        f = tail - student_t_sf(nu, x)  # increasing in x
        if f > 0.0:
            hi = x
        else:
            lo = x
        dens = student_t_pdf(nu, x)
        x_new = x - f / dens if dens > 0.0 else math.inf
        if not (lo < x_new < hi) or not math.isfinite(x_new):
            x_new = 0.5 * (lo + hi) if math.isfinite(hi) else 2.0 * max(x, 1.0)
        if abs(x_new - x) <= 4.0 * _EPS * max(abs(x), 1.0):
            return x_new
        x = x_new
    return x
