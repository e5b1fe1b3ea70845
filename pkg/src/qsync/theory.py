"""Risk formulas for quantile-averaged estimates of a mean measure.

The estimand is the measure whose quantile function is the expectation of
a random quantile function; the estimator averages empirical quantile
functions of n independent units of p observations each.  With equal unit
sizes the risk E[d2(estimate, target)] splits exactly into

    V / n                                (dispersion of the random measures)
  + (1 - n) / (n p) * sum_j Var(Y*_j)    (averaging of sampling noise)
  + E[d2(empirical measure of p draws, target)]

where V integrates the pointwise variance of the random quantile function
over (0,1) and Y*_j are order statistics of p draws from the target.  The
same quantity regrouped around the bias term reads

    V / n + (1/(n p)) sum_j Var(Y*_j) + bias(p)

with bias(p) = E[d2] - (1/p) sum_j Var(Y*_j); both assemblies are exposed
and must agree to rounding error.

Everything downstream (upper bounds, the J2 functional, bandwidth-free
rate checks) lives here too, because the pieces share the order-statistic
moment machinery.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import IntegrationWarning, quad
from scipy.special import ndtri

from .errors import (
    DomainError,
    InvariantViolation,
    PrecisionError,
    UnsupportedDistributionError,
)
from .measures import (
    AnalyticDistribution,
    Gaussian,
    OneSidedExponential,
    TabulatedCdf,
    Uniform,
    expected_w2_empirical_to_target,
)

# ---------------------------------------------------------------------------
# Order statistic moments


@dataclass(frozen=True)
class OrderStatMoments:
    """First two moments of the order statistics of p iid draws.

    ``means[j-1]`` and ``variances[j-1]`` refer to the j-th smallest of p
    draws.  ``method`` records how the values were obtained ("closed-form"
    or "quadrature").
    """

    p: int
    means: np.ndarray
    variances: np.ndarray
    method: str

    def __post_init__(self):
        means = np.array(self.means, dtype=float)
        variances = np.array(self.variances, dtype=float)
        if means.shape != (self.p,) or variances.shape != (self.p,):
            raise InvariantViolation(
                f"moment arrays must have shape ({self.p},), got {means.shape} and {variances.shape}"
            )
        if np.any(variances < -1e-10):
            raise PrecisionError(
                f"order statistic variance came out negative: min {variances.min():.3e}"
            )
        np.maximum(variances, 0.0, out=variances)
        if np.any(np.diff(means) < -1e-8):
            raise PrecisionError(
                "order statistic means must be non-decreasing; worst gap "
                f"{np.diff(means).min():.3e}"
            )
        means.flags.writeable = False
        variances.flags.writeable = False
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "variances", variances)

    @property
    def variance_sum(self) -> float:
        return float(self.variances.sum())


def order_stat_moments(dist: AnalyticDistribution, p: int) -> OrderStatMoments:
    """Moments of the order statistics of p iid draws from ``dist``.

    Uniform and exponential laws use closed forms; everything else is
    integrated per order statistic with an adaptive rule against the Beta
    density of the corresponding uniform order statistic.
    """
    p = int(p)
    if p < 1:
        raise DomainError(f"sample size must be a positive integer, got {p}")
    if isinstance(dist, Uniform):
        j = np.arange(1, p + 1, dtype=float)
        means = j / (p + 1)
        variances = j * (p - j + 1) / ((p + 1) ** 2 * (p + 2))
        return OrderStatMoments(
            p, dist.lo + dist.width * means, dist.width**2 * variances, "closed-form"
        )
    if isinstance(dist, OneSidedExponential):
        # Spacings of exponential order statistics are independent
        # exponentials: Y*_j = sum_{k=1..j} E_k / (p - k + 1).
        inv = 1.0 / np.arange(p, 0, -1, dtype=float)
        means = np.cumsum(inv) / dist.rate
        variances = np.cumsum(inv**2) / dist.rate**2
        return OrderStatMoments(p, means, variances, "closed-form")
    if isinstance(dist, Gaussian):
        std = _standard_gaussian_order_moments(p)
        return OrderStatMoments(
            p,
            dist.mean + dist.sd * std.means,
            dist.sd**2 * std.variances,
            std.method,
        )
    if isinstance(dist, TabulatedCdf):
        return _order_moments_by_quadrature(dist, p)
    raise UnsupportedDistributionError(
        f"no order statistic moments for {type(dist).__name__}"
    )


def _beta_log_prefactor(j: int, p: int) -> float:
    return math.lgamma(p + 1) - math.lgamma(j) - math.lgamma(p - j + 1)


def _order_moment_pair(quantile, j: int, p: int) -> tuple[float, float]:
    """(E[Y*_j], E[Y*_j^2]) by adaptive quadrature over the unit interval.

    Integrates Q(a) and Q(a)^2 against the Beta(j, p-j+1) density, with
    the density's mode passed as a split point so QUADPACK resolves the
    sharp peak that appears for large p.
    """
    log_c = _beta_log_prefactor(j, p)

    def weight(a: float) -> float:
        t = log_c
        if j > 1:
            t += (j - 1) * math.log(a)
        if j < p:
            t += (p - j) * math.log1p(-a)
        return math.exp(t)

    points = None
    if 1 < j < p:
        points = [(j - 1) / (p - 1)]

    def integrate(f) -> float:
        val, err = quad(
            lambda a: f(a) * weight(a),
            0.0,
            1.0,
            points=points,
            limit=300,
            epsabs=1e-12,
            epsrel=1e-11,
        )
        if not math.isfinite(val) or err > 1e-6 * max(1.0, abs(val)):
            raise PrecisionError(
                f"order statistic moment quadrature for j={j}, p={p} reached "
                f"error estimate {err:.3e} on value {val:.6e}"
            )
        return val

    first = integrate(lambda a: float(quantile(a)))
    second = integrate(lambda a: float(quantile(a)) ** 2)
    return first, second


@lru_cache(maxsize=None)
def _standard_gaussian_order_moments(p: int) -> OrderStatMoments:
    means = np.empty(p)
    seconds = np.empty(p)
    for j in range(1, p + 1):
        # Symmetry of the standard normal: Y*_j of p draws is distributed
        # as -Y*_{p+1-j}, so only the upper half needs quadrature.
        if 2 * j < p + 1:
            continue
        m, s = _order_moment_pair(lambda a: float(ndtri(a)), j, p)
        means[j - 1] = m
        seconds[j - 1] = s
        means[p - j] = -m
        seconds[p - j] = s
    return OrderStatMoments(p, means, seconds - means**2, "quadrature")


@lru_cache(maxsize=None)
def _order_moments_by_quadrature(dist: AnalyticDistribution, p: int) -> OrderStatMoments:
    means = np.empty(p)
    seconds = np.empty(p)
    for j in range(1, p + 1):
        m, s = _order_moment_pair(lambda a: float(dist.quantile(a)), j, p)
        means[j - 1] = m
        seconds[j - 1] = s
    return OrderStatMoments(p, means, seconds - means**2, "quadrature")


# ---------------------------------------------------------------------------
# Exact risk with equal unit sizes


@dataclass(frozen=True)
class RiskFormulaInput:
    """Inputs shared by the exact risk formula and the upper bounds.

    ``sizes`` is either one integer (all units equal) or a tuple of
    per-unit sample sizes.  ``quantile_variance`` is V, the integral over
    (0,1) of the pointwise variance of the random quantile function; it is
    a property of the sampling model, not of the data.  ``expected_j2``
    feeds the bounds that hold for unequal sizes.
    """

    n: int
    sizes: int | tuple[int, ...]
    quantile_variance: float
    distribution: AnalyticDistribution | None = None
    expected_j2: float | None = None

    def __post_init__(self):
        if int(self.n) < 1:
            raise DomainError(f"number of units must be positive, got {self.n}")
        object.__setattr__(self, "n", int(self.n))
        sizes = self.sizes
        if np.ndim(sizes) == 0:
            sizes = int(sizes)
            if sizes < 1:
                raise DomainError(f"unit size must be positive, got {sizes}")
        else:
            sizes = tuple(int(s) for s in sizes)
            if len(sizes) != self.n:
                raise DomainError(
                    f"got {len(sizes)} unit sizes for {self.n} units"
                )
            if any(s < 1 for s in sizes):
                raise DomainError("all unit sizes must be positive")
        object.__setattr__(self, "sizes", sizes)
        v = float(self.quantile_variance)
        if not math.isfinite(v) or v < 0.0:
            raise DomainError(f"quantile variance must be finite and >= 0, got {v}")
        object.__setattr__(self, "quantile_variance", v)
        if self.expected_j2 is not None and float(self.expected_j2) < 0.0:
            raise DomainError("expected J2 must be nonnegative")

    @property
    def equal_size(self) -> int | None:
        """The common unit size, or None when sizes differ."""
        if isinstance(self.sizes, int):
            return self.sizes
        first = self.sizes[0]
        return first if all(s == first for s in self.sizes) else None

    @property
    def sizes_array(self) -> np.ndarray:
        if isinstance(self.sizes, int):
            return np.full(self.n, self.sizes, dtype=float)
        return np.asarray(self.sizes, dtype=float)


@dataclass(frozen=True)
class ExactRiskBreakdown:
    """The equal-size risk, kept in its three interpretable pieces."""

    n: int
    p: int
    quantile_variance: float
    variance_sum: float
    empirical_term: float

    @property
    def population_term(self) -> float:
        return self.quantile_variance / self.n

    @property
    def bias_term(self) -> float:
        return self.empirical_term - self.variance_sum / self.p

    @property
    def total(self) -> float:
        return (
            self.population_term
            + (1 - self.n) / (self.n * self.p) * self.variance_sum
            + self.empirical_term
        )

    @property
    def total_from_bias_form(self) -> float:
        return (
            self.population_term
            + self.variance_sum / (self.n * self.p)
            + self.bias_term
        )


def exact_risk_breakdown(inputs: RiskFormulaInput) -> ExactRiskBreakdown:
    p = inputs.equal_size
    if p is None:
        raise DomainError("the exact risk formula requires equal unit sizes")
    if inputs.distribution is None:
        raise DomainError("the exact risk formula needs the target distribution")
    moments = order_stat_moments(inputs.distribution, p)
    empirical = expected_w2_empirical_to_target(inputs.distribution, p)
    return ExactRiskBreakdown(
        n=inputs.n,
        p=p,
        quantile_variance=inputs.quantile_variance,
        variance_sum=moments.variance_sum,
        empirical_term=empirical,
    )


def exact_risk_equal_p(inputs: RiskFormulaInput) -> float:
    """Exact risk of the quantile-averaged estimate with equal unit sizes."""
    return exact_risk_breakdown(inputs).total


# ---------------------------------------------------------------------------
# Upper bounds


@dataclass(frozen=True)
class RiskBound:
    """An upper bound, possibly with one unresolved universal constant.

    ``base`` is the fully determined additive part and ``rate`` the factor
    multiplying the constant named by ``constant_name``; ``value`` is
    available once the constant is pinned (or when there is none).
    ``metric`` says what the bound controls: "squared-distance" for bounds
    on E[d2] and "distance" for bounds on E[d].
    """

    case: str
    metric: str
    base: float
    rate: float = 0.0
    constant_name: str | None = None
    constant_value: float | None = None
    note: str = ""

    @property
    def value(self) -> float | None:
        if self.constant_name is None:
            return self.base
        if self.constant_value is None:
            return None
        return self.base + self.constant_value * self.rate

    def evaluate(self, constant: float) -> float:
        if self.constant_name is None:
            raise DomainError(f"bound '{self.case}' has no free constant")
        return self.base + float(constant) * self.rate

    def describe(self) -> str:
        if self.constant_name is None:
            txt = f"{self.case}: {self.base:.17g} ({self.metric})"
        elif self.constant_value is None:
            txt = (
                f"{self.case}: {self.base:.17g} + {self.constant_name} * "
                f"{self.rate:.17g} ({self.metric}, {self.constant_name} unspecified)"
            )
        else:
            txt = f"{self.case}: {self.value:.17g} ({self.metric})"
        return txt + (f" [{self.note}]" if self.note else "")


def risk_upper_bounds(
    inputs: RiskFormulaInput,
    case: str,
    *,
    bandwidths=None,
    constant: float | None = None,
) -> RiskBound:
    """Upper bound on the estimation risk for the requested regime.

    Cases:

    * ``generic-j2`` - squared distance, equal sizes, finite J2: V/n +
      2 J2 / (p+1).  The J2 value comes from ``inputs.distribution``.
    * ``exponential`` - squared distance, equal sizes, exponential-like
      tails: V/n + c (1 + 1/n) log(p)/p with one universal constant c.
    * ``gaussian`` - squared distance, equal sizes, Gaussian tails: V/n +
      c2 (1/n + 1) log(log p)/p, needs p >= 3.
    * ``general-p`` - plain distance, arbitrary sizes: sqrt(V/n) +
      sqrt(2 E[J2]) * (1/n) sum_i size_i^{-1/2}.
    * ``smoothed`` - plain distance: the general-p bound plus a kernel
      constant times the mean bandwidth.
    """
    n = inputs.n
    v_over_n = inputs.quantile_variance / n

    if case == "generic-j2":
        p = _require_equal(inputs)
        if inputs.distribution is None:
            raise DomainError("generic-j2 bound needs the target distribution")
        j2 = j2_functional(inputs.distribution)
        if math.isinf(j2):
            return RiskBound(
                case,
                "squared-distance",
                math.inf,
                note="J2 diverges for this distribution; the bound is vacuous",
            )
        return RiskBound(case, "squared-distance", v_over_n + 2.0 * j2 / (p + 1))

    if case == "exponential":
        p = _require_equal(inputs)
        rate = (1.0 + 1.0 / n) * math.log(p) / p
        return RiskBound(
            case,
            "squared-distance",
            v_over_n,
            rate=rate,
            constant_name="c",
            constant_value=constant,
            note="tail-dependent universal constant",
        )

    if case == "gaussian":
        p = _require_equal(inputs)
        if p < 3:
            raise DomainError(
                f"the gaussian bound needs p >= 3 (log log p must be positive), got p={p}"
            )
        rate = (1.0 / n + 1.0) * math.log(math.log(p)) / p
        return RiskBound(
            case,
            "squared-distance",
            v_over_n,
            rate=rate,
            constant_name="c2",
            constant_value=constant,
            note="tail-dependent universal constant",
        )

    if case == "general-p":
        ej2 = _require_expected_j2(inputs)
        if math.isinf(ej2):
            return RiskBound(
                case, "distance", math.inf, note="E[J2] diverges; the bound is vacuous"
            )
        size_term = float(np.sum(inputs.sizes_array ** -0.5)) / n
        return RiskBound(
            case, "distance", math.sqrt(v_over_n) + math.sqrt(2.0 * ej2) * size_term
        )

    if case == "smoothed":
        if bandwidths is None:
            raise DomainError("the smoothed bound needs per-unit bandwidths")
        h = np.asarray(bandwidths, dtype=float)
        if h.shape != (n,) or np.any(h <= 0.0) or not np.all(np.isfinite(h)):
            raise DomainError(
                f"bandwidths must be {n} positive finite values, got shape {h.shape}"
            )
        unsmoothed = risk_upper_bounds(inputs, "general-p")
        return RiskBound(
            case,
            "distance",
            unsmoothed.base,
            rate=float(h.mean()),
            constant_name="c_kernel_sqrt",
            constant_value=constant,
            note="square root of the kernel smoothing constant",
        )

    raise DomainError(
        f"unknown bound case {case!r}; expected one of generic-j2, exponential, "
        "gaussian, general-p, smoothed"
    )


def _require_equal(inputs: RiskFormulaInput) -> int:
    p = inputs.equal_size
    if p is None:
        raise DomainError("this bound requires equal unit sizes")
    return p


def _require_expected_j2(inputs: RiskFormulaInput) -> float:
    if inputs.expected_j2 is not None:
        return float(inputs.expected_j2)
    if inputs.distribution is not None:
        return j2_functional(inputs.distribution)
    raise DomainError("this bound needs expected_j2 or a target distribution")


# ---------------------------------------------------------------------------
# The J2 functional


def j2_functional(dist: AnalyticDistribution, *, rel_tol: float = 1e-9) -> float:
    """Integral of F(x)(1 - F(x))/f(x) over the support of ``dist``.

    Finite only when the tails decay fast enough relative to the density;
    in particular it diverges for Gaussian and exponential laws.  On an
    unbounded side the integral is accumulated over windows that double in
    width; when the window contributions stop decaying the integral is
    declared infinite.  A density that vanishes on an interior interval
    makes the integrand blow up non-integrably, so that is rejected
    upfront.
    """
    lo, hi = dist.support
    integrand = _j2_integrand(dist)

    center = float(dist.quantile(0.5))
    spread = float(dist.quantile(0.75) - dist.quantile(0.25))
    if spread <= 0.0:
        raise DomainError("distribution has no interquartile spread; J2 undefined")

    left = lo if math.isfinite(lo) else center - spread
    right = hi if math.isfinite(hi) else center + spread
    _reject_interior_zeros(dist, left, right)

    total = _quad_window(integrand, left, right)
    if math.isfinite(hi) and math.isfinite(lo):
        return total

    for sign, edge, bounded in ((+1, right, math.isfinite(hi)), (-1, left, math.isfinite(lo))):
        if bounded:
            continue
        tail = _tail_contribution(integrand, edge, sign, spread, total, rel_tol)
        if math.isinf(tail):
            return math.inf
        total += tail
    return total


def _j2_integrand(dist: AnalyticDistribution):
    has_logs = all(hasattr(dist, a) for a in ("log_sf", "log_cdf", "log_pdf"))

    def g(x: float) -> float:
        if has_logs:
            # Far tails underflow in direct arithmetic long before the
            # integrand becomes negligible, so work in logs when the
            # distribution provides them.
            ls = float(dist.log_sf(x))
            lc = float(dist.log_cdf(x))
            lp = float(dist.log_pdf(x))
            return math.exp(ls + lc - lp)
        f = float(dist.pdf(x))
        if f <= 0.0:
            return math.inf
        F = float(dist.cdf(x))
        return F * float(dist.sf(x)) / f

    return g


def _reject_interior_zeros(dist: AnalyticDistribution, left: float, right: float):
    xs = np.linspace(left, right, 1025)[1:-1]
    if np.any(np.asarray(dist.pdf(xs)) <= 0.0):
        raise DomainError(
            "density vanishes inside the support; the J2 integrand is not integrable"
        )


def _quad_window(integrand, lo: float, hi: float) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("error", IntegrationWarning)
        try:
            val, _ = quad(integrand, lo, hi, limit=300)
        except IntegrationWarning as exc:
            raise PrecisionError(
                f"J2 quadrature failed on [{lo:.6g}, {hi:.6g}]: {exc}"
            ) from exc
    return float(val)


_MAX_DOUBLINGS = 64
_NONDECAY_RATIO = 0.8
_NONDECAY_RUN = 4


def _tail_contribution(
    integrand, edge: float, sign: int, spread: float, running_total: float, rel_tol: float
) -> float:
    """Tail integral beyond ``edge``, or inf when contributions stop decaying.

    Windows have widths spread/2, spread, 2*spread, ... so a convergent
    tail shows geometrically shrinking contributions while any tail with
    J2-divergent behavior (contributions flat or growing, as for Gaussian
    and exponential laws) trips the non-decay counter.
    """
    width = 0.5 * spread
    cursor = edge
    tail_total = 0.0
    previous = None
    nondecay_run = 0
    for _ in range(_MAX_DOUBLINGS):
        nxt = cursor + sign * width
        piece = _quad_window(integrand, *sorted((cursor, nxt)))
        tail_total += piece
        if previous is not None and piece >= _NONDECAY_RATIO * previous:
            nondecay_run += 1
            if nondecay_run >= _NONDECAY_RUN:
                return math.inf
        else:
            nondecay_run = 0
        scale = max(abs(running_total + tail_total), 1e-12)
        if piece < rel_tol * scale:
            return tail_total
        previous = piece
        cursor = nxt
        width *= 2.0
    raise PrecisionError(
        f"J2 tail integration did not settle after {_MAX_DOUBLINGS} doublings; "
        f"last window contributed {piece:.3e} against total {running_total + tail_total:.3e}"
    )
