"""Kernel smoothing of unit samples, with boundary correction on [0,1].

A raw kernel density estimate leaks mass outside a bounded support.  The
boundary-corrected measure used here keeps everything on [0,1] by folding
the escaped mass back through two correction weights

    b1 = 1 - K((1 - y)/h)      (mass lost past the right edge)
    b2 = K(-y/h)               (mass lost past the left edge)

where K is the kernel cdf.  The density centered at y is

    f(x) = k_h(x - y) * (1 + 2*b2*[x > y] + 2*b1*[x < y]) + 4*b1*b2

restricted to [0,1]; it integrates to one exactly, which the tests verify
both algebraically (endpoint identities) and by quadrature.

Smoothing a unit averages these one-point measures over the unit's
sample.  Quantiles come from bracketed root finding by default; the Monte
Carlo harness uses a tabulated-inversion variant since thousands of
evaluations share one mixture.
"""

from __future__ import annotations

import abc
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import IntegrationWarning, quad
from scipy.optimize import brentq
from scipy.special import ndtr

from .errors import DegenerateSampleError, DomainError, InvariantViolation
from .measures import (
    DEFAULT_GRID_SIZE,
    AnalyticQuantile,
    GridQuantile,
    midpoint_alphas,
)

# ---------------------------------------------------------------------------
# Kernels


class Kernel(abc.ABC):
    """A standardized smoothing kernel: symmetric density, unit second moment.

    ``tail_exponent`` declares a polynomial decay bound psi(x) <= C*x^(-a);
    math.inf marks faster-than-polynomial decay.  The smoothing error
    bound needs a >= 5.
    """

    tail_exponent: float = math.inf

    @abc.abstractmethod
    def pdf(self, x): ...

    @abc.abstractmethod
    def cdf(self, x): ...


@dataclass(frozen=True)
class GaussianKernel(Kernel):
    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)

    def cdf(self, x):
        return ndtr(np.asarray(x, dtype=float))


@dataclass(eq=False)
class CustomKernel(Kernel):
    """A user-supplied kernel given by density and cdf callables.

    With ``rescale=True`` the density is standardized at construction so
    its second moment is one; the stated functions are then evaluated at
    correspondingly scaled arguments.  ``tail_exponent`` is the decay
    order the caller certifies; it is spot-checked by ``validate_kernel``.
    """

    density: object
    cumulative: object
    tail_exponent: float = math.inf
    rescale: bool = False

    def __post_init__(self):
        scale = 1.0
        if self.rescale:
            mass, _ = quad(lambda t: float(self.density(t)), -np.inf, np.inf, limit=200)
            second, _ = quad(
                lambda t: t * t * float(self.density(t)), -np.inf, np.inf, limit=200
            )
            if mass <= 0.0 or second <= 0.0:
                raise InvariantViolation("kernel density must have positive mass and spread")
            scale = math.sqrt(second / mass)
            object.__setattr__(self, "_mass", mass)
        else:
            object.__setattr__(self, "_mass", 1.0)
        object.__setattr__(self, "_scale", scale)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        s = self._scale
        raw = np.vectorize(lambda t: float(self.density(t)), otypes=[float])(x * s)
        return raw * s / self._mass

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        raw = np.vectorize(lambda t: float(self.cumulative(t)), otypes=[float])(x * self._scale)
        return raw / self._mass


def validate_kernel(kernel: Kernel, *, grid_half_width: float = 8.0) -> None:
    """Check the structural kernel requirements, raising on violation.

    Symmetry is required to 1e-12 on a test grid, the density must
    integrate to one, the second moment must be one to 1e-6, and the
    declared polynomial tail bound must hold with exponent at least 5 on
    a grid of large arguments.
    """
    xs = np.linspace(0.01, grid_half_width, 257)
    gap = np.max(np.abs(np.asarray(kernel.pdf(xs)) - np.asarray(kernel.pdf(-xs))))
    if gap > 1e-12:
        raise InvariantViolation(f"kernel density is asymmetric: max gap {gap:.3e}")
    # Divergent moments surface as wrong values below; the quadrature
    # grumbling about them is expected, not actionable.
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IntegrationWarning)
        mass, _ = quad(lambda t: float(kernel.pdf(t)), -np.inf, np.inf, limit=200)
        if abs(mass - 1.0) > 1e-9:
            raise InvariantViolation(f"kernel density integrates to {mass!r}, not 1")
        second, _ = quad(
            lambda t: t * t * float(kernel.pdf(t)), -np.inf, np.inf, limit=200
        )
    if abs(second - 1.0) > 1e-6:
        raise InvariantViolation(f"kernel second moment is {second!r}, not 1")
    if not math.isfinite(kernel.tail_exponent):
        return
    if kernel.tail_exponent < 5.0:
        raise InvariantViolation(
            f"kernel tail exponent must be at least 5, got {kernel.tail_exponent}"
        )
    big = np.linspace(5.0, 50.0, 46)
    weighted = np.asarray(kernel.pdf(big)) * big**kernel.tail_exponent
    if not np.all(np.isfinite(weighted)):
        raise InvariantViolation("kernel tail bound check produced non-finite values")
    # A genuine power-law-or-faster tail keeps x^a * psi(x) from growing.
    if weighted.size > 1 and weighted[-1] > 4.0 * max(weighted[0], 1e-300):
        raise InvariantViolation(
            "kernel density decays slower than the declared tail exponent"
        )


# ---------------------------------------------------------------------------
# Boundary-corrected one-point measure


def _boundary_weights(kernel: Kernel, y, h: float):
    y = np.asarray(y, dtype=float)
    b1 = 1.0 - np.asarray(kernel.cdf((1.0 - y) / h))
    b2 = np.asarray(kernel.cdf(-y / h))
    if np.any(b1 < -1e-12) or np.any(b1 > 0.5 + 1e-12) or np.any(b2 < -1e-12) or np.any(b2 > 0.5 + 1e-12):
        raise InvariantViolation(
            "boundary correction weights left [0, 1/2]; the kernel cdf is inconsistent"
        )
    return np.clip(b1, 0.0, 0.5), np.clip(b2, 0.0, 0.5)


def _check_unit_interval(x, what: str):
    x = np.asarray(x, dtype=float)
    if x.size and (np.any(x < 0.0) or np.any(x > 1.0) or not np.all(np.isfinite(x))):
        raise DomainError(f"{what} must lie in [0,1]")
    return x


def _boundary_cdf_grid(kernel: Kernel, y: np.ndarray, h: float, x: np.ndarray) -> np.ndarray:
    """Closed-form cdf of the boundary-corrected measure.

    ``y`` has shape (m,), ``x`` shape (k,); the result is (m, k).  For
    x <= y the integral of the corrected density from 0 collects the
    left-corrected kernel mass plus the uniform folding term; past y the
    right correction takes over:

        x <= y:  (1 + 2*b1) * (K((x-y)/h) - K(-y/h)) + 4*b1*b2*x
        x >  y:  cdf(y) + (1 + 2*b2) * (K((x-y)/h) - 1/2) + 4*b1*b2*(x-y)
    """
    b1, b2 = _boundary_weights(kernel, y, h)
    b1 = b1[:, None]
    b2 = b2[:, None]
    yy = y[:, None]
    xx = x[None, :]
    kx = np.asarray(kernel.cdf((xx - yy) / h))
    k0 = np.asarray(kernel.cdf(-yy / h))
    fold = 4.0 * b1 * b2
    left = (1.0 + 2.0 * b1) * (kx - k0) + fold * xx
    at_y = (1.0 + 2.0 * b1) * (0.5 - k0) + fold * yy
    right = at_y + (1.0 + 2.0 * b2) * (kx - 0.5) + fold * (xx - yy)
    return np.where(xx <= yy, left, right)


def _boundary_pdf_grid(kernel: Kernel, y: np.ndarray, h: float, x: np.ndarray) -> np.ndarray:
    b1, b2 = _boundary_weights(kernel, y, h)
    b1 = b1[:, None]
    b2 = b2[:, None]
    yy = y[:, None]
    xx = x[None, :]
    base = np.asarray(kernel.pdf((xx - yy) / h)) / h
    side = np.where(xx > yy, 2.0 * b2, np.where(xx < yy, 2.0 * b1, 0.0))
    return base * (1.0 + side) + 4.0 * b1 * b2


class _OnUnitInterval:
    """Shared quantile machinery for measures supported on [0,1]."""

    support = (0.0, 1.0)

    def cdf(self, x):  # pragma: no cover - overridden
        raise NotImplementedError

    def quantile(self, alpha):
        """Inverse cdf by bracketed root finding, absolute tolerance 1e-12."""
        a = np.asarray(alpha, dtype=float)
        if a.size and (np.any(a <= 0.0) or np.any(a >= 1.0)):
            raise DomainError("quantile level must lie in (0,1)")
        flat = np.atleast_1d(a).ravel()
        out = np.empty(flat.shape)
        for i, ai in enumerate(flat):
            out[i] = brentq(lambda t: float(self.cdf(t)) - ai, 0.0, 1.0, xtol=1e-12)
        out = out.reshape(np.atleast_1d(a).shape)
        return float(out[0]) if np.ndim(alpha) == 0 else out

    def quantile_table(
        self, alphas: np.ndarray, *, x_grid_size: int = 4096
    ) -> np.ndarray:
        """Quantiles at ``alphas`` by inverting a tabulated cdf.

        Cheap enough for tight Monte Carlo loops; accuracy is limited by
        the x grid spacing (the tests compare it against the root-finding
        path).
        """
        xs = np.linspace(0.0, 1.0, int(x_grid_size))
        return _invert_cdf_table(xs, np.asarray(self.cdf(xs)), np.asarray(alphas, dtype=float))

    def quantile_function(self, *, grid_size: int | None = None, x_grid_size: int = 4096):
        """Exact quantile function, or a grid snapshot when ``grid_size`` is set.

        The grid variant builds its table once, up front, so repeated
        evaluation on shared mixtures costs one interpolation per call.
        """
        if grid_size is None:
            return AnalyticQuantile(self.quantile, support=self.support)
        alphas = midpoint_alphas(grid_size)
        return GridQuantile(alphas, self.quantile_table(alphas, x_grid_size=x_grid_size),
                            support=self.support)


def _invert_cdf_table(xs: np.ndarray, cdf_values: np.ndarray, alphas: np.ndarray) -> np.ndarray:
    # Flat stretches appear only where the cdf saturates in floating
    # point; dropping repeated values keeps np.interp on a strictly
    # increasing table.
    keep = np.concatenate(([True], np.diff(cdf_values) > 0.0))
    return np.interp(alphas, cdf_values[keep], xs[keep])


@dataclass(eq=False)
class BoundaryKernelMeasure(_OnUnitInterval):
    """The boundary-corrected kernel measure centered at one point of [0,1]."""

    center: float
    bandwidth: float
    kernel: Kernel = GaussianKernel()

    def __post_init__(self):
        if not (0.0 <= self.center <= 1.0):
            raise DomainError(f"center must lie in [0,1], got {self.center}")
        if not (self.bandwidth > 0.0 and math.isfinite(self.bandwidth)):
            raise DomainError(f"bandwidth must be positive and finite, got {self.bandwidth}")
        b1, b2 = _boundary_weights(self.kernel, self.center, self.bandwidth)
        object.__setattr__(self, "b1", float(b1))
        object.__setattr__(self, "b2", float(b2))

    def cdf(self, x):
        xv = _check_unit_interval(x, "cdf argument")
        out = _boundary_cdf_grid(
            self.kernel, np.array([self.center]), self.bandwidth, np.atleast_1d(xv)
        )[0]
        return float(out[0]) if np.ndim(x) == 0 else out

    def pdf(self, x):
        xv = _check_unit_interval(x, "density argument")
        out = _boundary_pdf_grid(
            self.kernel, np.array([self.center]), self.bandwidth, np.atleast_1d(xv)
        )[0]
        return float(out[0]) if np.ndim(x) == 0 else out


@dataclass(eq=False)
class SmoothedUnitMeasure(_OnUnitInterval):
    """Equal-weight mixture of boundary-corrected measures, one per sample."""

    samples: np.ndarray
    bandwidth: float
    kernel: Kernel = GaussianKernel()

    def __post_init__(self):
        atoms = np.sort(_check_unit_interval(np.ravel(self.samples), "samples"))
        if atoms.size == 0:
            raise DegenerateSampleError("smoothing needs at least one sample")
        if not (self.bandwidth > 0.0 and math.isfinite(self.bandwidth)):
            raise DomainError(f"bandwidth must be positive and finite, got {self.bandwidth}")
        atoms.flags.writeable = False
        object.__setattr__(self, "samples", atoms)

    @property
    def size(self) -> int:
        return int(self.samples.size)

    def cdf(self, x):
        xv = _check_unit_interval(x, "cdf argument")
        grid = _boundary_cdf_grid(self.kernel, self.samples, self.bandwidth, np.atleast_1d(xv))
        out = grid.mean(axis=0)
        return float(out[0]) if np.ndim(x) == 0 else out

    def pdf(self, x):
        xv = _check_unit_interval(x, "density argument")
        grid = _boundary_pdf_grid(self.kernel, self.samples, self.bandwidth, np.atleast_1d(xv))
        out = grid.mean(axis=0)
        return float(out[0]) if np.ndim(x) == 0 else out


def smoothed_unit_measure(samples, bandwidth: float, kernel: Kernel | None = None) -> SmoothedUnitMeasure:
    """Boundary-corrected smoothing of one unit's sample on [0,1]."""
    return SmoothedUnitMeasure(np.asarray(samples, dtype=float), bandwidth,
                               kernel if kernel is not None else GaussianKernel())


@dataclass(eq=False)
class KernelDensityMeasure:
    """Plain (uncorrected) kernel density estimate on the whole line.

    Used by the simulation harness when the sampling model's support is
    not [0,1]; mirrors the usual KDE with a standardized kernel.
    """

    samples: np.ndarray
    bandwidth: float
    kernel: Kernel = GaussianKernel()

    def __post_init__(self):
        atoms = np.sort(np.ravel(np.asarray(self.samples, dtype=float)))
        if atoms.size == 0:
            raise DegenerateSampleError("smoothing needs at least one sample")
        if not np.all(np.isfinite(atoms)):
            raise DomainError("samples must be finite")
        if not (self.bandwidth > 0.0 and math.isfinite(self.bandwidth)):
            raise DomainError(f"bandwidth must be positive and finite, got {self.bandwidth}")
        atoms.flags.writeable = False
        object.__setattr__(self, "samples", atoms)

    support = (-math.inf, math.inf)

    def cdf(self, x):
        xv = np.asarray(x, dtype=float)
        grid = np.asarray(
            self.kernel.cdf((np.atleast_1d(xv)[None, :] - self.samples[:, None]) / self.bandwidth)
        ).mean(axis=0)
        return float(grid[0]) if np.ndim(x) == 0 else grid

    def quantile(self, alpha):
        a = np.asarray(alpha, dtype=float)
        if a.size and (np.any(a <= 0.0) or np.any(a >= 1.0)):
            raise DomainError("quantile level must lie in (0,1)")
        lo, hi = self._bracket()
        flat = np.atleast_1d(a).ravel()
        out = np.empty(flat.shape)
        for i, ai in enumerate(flat):
            out[i] = brentq(lambda t: float(self.cdf(t)) - ai, lo, hi, xtol=1e-12)
        out = out.reshape(np.atleast_1d(a).shape)
        return float(out[0]) if np.ndim(alpha) == 0 else out

    def _bracket(self, *, pad: float = 10.0) -> tuple[float, float]:
        lo = float(self.samples[0]) - pad * self.bandwidth
        hi = float(self.samples[-1]) + pad * self.bandwidth
        for _ in range(200):
            if float(self.cdf(lo)) < 1e-15 and float(self.cdf(hi)) > 1.0 - 1e-15:
                return lo, hi
            width = hi - lo
            lo -= width
            hi += width
        raise DomainError("kernel tails too heavy to bracket the quantile")

    def quantile_table(self, alphas: np.ndarray, *, x_grid_size: int = 4096,
                       pad: float = 8.0) -> np.ndarray:
        xs = np.linspace(
            float(self.samples[0]) - pad * self.bandwidth,
            float(self.samples[-1]) + pad * self.bandwidth,
            int(x_grid_size),
        )
        return _invert_cdf_table(xs, np.asarray(self.cdf(xs)), np.asarray(alphas, dtype=float))

    def quantile_function(self, *, grid_size: int | None = None, x_grid_size: int = 4096):
        if grid_size is None:
            return AnalyticQuantile(self.quantile, support=self.support)
        alphas = midpoint_alphas(grid_size)
        return GridQuantile(alphas, self.quantile_table(alphas, x_grid_size=x_grid_size),
                            support=self.support)


# ---------------------------------------------------------------------------
# Smoothing error bound


def smoothing_error_bound(bandwidth: float, kernel: Kernel | None = None) -> float:
    """Upper bound on d2(smoothed unit measure, empirical unit measure).

    Valid for bandwidths in (0, 1/4] on [0,1]:  3*h^2 + 4*K(-1/sqrt(h)).
    The second term is the folded boundary mass; for kernels with tail
    exponent >= 5 the whole bound is itself O(h^2).
    """
    if not (0.0 < bandwidth <= 0.25):
        raise DomainError(
            f"the smoothing error bound holds for bandwidths in (0, 1/4], got {bandwidth}"
        )
    k = kernel if kernel is not None else GaussianKernel()
    return 3.0 * bandwidth**2 + 4.0 * float(k.cdf(-1.0 / math.sqrt(bandwidth)))


# ---------------------------------------------------------------------------
# Bandwidth selection


def select_bandwidth(samples, rule: str = "silverman", *, candidates=None) -> float:
    """Data-driven bandwidth for one unit's sample.

    ``silverman``:  0.9 * min(sd, IQR/1.34) * p^(-1/5), with the sample
    standard deviation (ddof=1) and the IQR read off the step quantile
    function (inverse empirical cdf).  A zero spread candidate is ignored;
    if both are zero the sample cannot be smoothed.

    ``cv``:  leave-one-out least-squares cross-validation with a Gaussian
    kernel, minimized over a log-spaced grid of candidates around the
    Silverman value (an explicit ``candidates`` array overrides the grid).
    """
    x = np.sort(np.ravel(np.asarray(samples, dtype=float)))
    if x.size < 2:
        raise DomainError("bandwidth selection needs at least two samples")
    if not np.all(np.isfinite(x)):
        raise DomainError("samples must be finite")
    if x[0] == x[-1]:
        raise DegenerateSampleError(
            "all samples are identical; smoothing is pointless, use the "
            "non-smoothed estimator for this unit"
        )
    if rule == "silverman":
        return _silverman(x)
    if rule == "cv":
        return _least_squares_cv(x, candidates)
    raise DomainError(f"unknown bandwidth rule {rule!r}; expected 'silverman' or 'cv'")


def _step_quantile_of_sample(x: np.ndarray, q: float) -> float:
    # Inverse empirical cdf: the smallest order statistic with at least
    # a q-fraction of the sample at or below it.
    j = int(math.ceil(q * x.size))
    return float(x[max(j, 1) - 1])


def _silverman(x: np.ndarray) -> float:
    p = x.size
    sd = float(np.std(x, ddof=1))
    iqr = _step_quantile_of_sample(x, 0.75) - _step_quantile_of_sample(x, 0.25)
    scales = [s for s in (sd, iqr / 1.34) if s > 0.0]
    return 0.9 * min(scales) * p ** (-0.2)


def _least_squares_cv(x: np.ndarray, candidates) -> float:
    if candidates is None:
        candidates = _silverman(x) * np.geomspace(0.125, 4.0, 16)
    candidates = np.asarray(candidates, dtype=float)
    if candidates.size == 0 or np.any(candidates <= 0.0):
        raise DomainError("cv candidates must be positive bandwidths")
    scores = np.array([least_squares_cv_score(x, h) for h in candidates])
    return float(candidates[int(np.argmin(scores))])


def least_squares_cv_score(samples, bandwidth: float) -> float:
    """The leave-one-out integrated squared error surrogate for a Gaussian KDE.

    Both terms are closed forms in the pairwise sample distances: the
    integral of the squared estimate is a Gaussian convolution at scale
    h*sqrt(2), and the leave-one-out cross term is the plain kernel sum.
    """
    x = np.ravel(np.asarray(samples, dtype=float))
    p = x.size
    if p < 2:
        raise DomainError("the cv score needs at least two samples")
    h = float(bandwidth)
    if h <= 0.0:
        raise DomainError("bandwidth must be positive")
    d2 = (x[:, None] - x[None, :]) ** 2
    off = ~np.eye(p, dtype=bool)

    def gauss_sum(scale: float, pairs_only: bool) -> float:
        vals = np.exp(-0.5 * d2 / scale**2) / (scale * math.sqrt(2.0 * math.pi))
        return float(vals[off].sum()) if pairs_only else float(vals.sum())

    integral_sq = gauss_sum(h * math.sqrt(2.0), pairs_only=False) / p**2
    cross = gauss_sum(h, pairs_only=True) / (p * (p - 1))
    return integral_sq - 2.0 * cross
