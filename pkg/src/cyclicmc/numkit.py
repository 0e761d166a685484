"""Dense SPD linear algebra and the distribution quantiles used by the estimators.

Cholesky factorization (with an explicit pivot tolerance), log-determinants and
inverses, chi-square / Hotelling T-squared quantiles, and seeded multivariate
normal / gamma sampling. Quantiles are computed from scratch: the regularized
incomplete gamma and beta functions (series + Lentz continued fractions)
inverted by bisection, so no special-function library is required.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "NotPositiveDefinite",
    "DomainError",
    "DegenerateDof",
    "SpdMatrix",
    "cholesky",
    "det_logdet_inverse",
    "reg_gamma_lower",
    "reg_beta",
    "chisq_cdf",
    "chisq_quantile",
    "f_cdf",
    "f_quantile",
    "hotelling_t2_quantile",
    "mvn_sample",
    "gamma_sample",
]

# Pivot tolerance: a Cholesky pivot <= PIVOT_RTOL * max diagonal entry is
# treated as a failure rather than silently producing a huge factor.
PIVOT_RTOL = 1e-12

_SYM_RTOL = 1e-12


class NotPositiveDefinite(Exception):
    """Matrix is not symmetric positive definite (a Cholesky pivot failed)."""


class DomainError(ValueError):
    """Argument outside the mathematical domain of the function."""


class DegenerateDof(Exception):
    """Hotelling degrees of freedom df <= d: too few batches, grow the chain."""


def _as_square(m) -> np.ndarray:
    a = np.asarray(getattr(m, "array", m), dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


def _check_symmetric(a: np.ndarray) -> None:
    scale = max(float(np.max(np.abs(a))), 1.0)
    if float(np.max(np.abs(a - a.T))) > _SYM_RTOL * scale * a.shape[0]:
        raise ValueError("matrix is not symmetric")


def cholesky_lower(a: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of a symmetric matrix, or NotPositiveDefinite.

    Uses LAPACK, then enforces the pivot rule explicitly: every pivot
    (squared diagonal of L) must exceed PIVOT_RTOL times the largest
    diagonal entry of the input.
    """
    a = _as_square(a)
    n = a.shape[0]
    if n < 1:
        raise ValueError("empty matrix")
    try:
        lower = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(f"Cholesky failed: {exc}") from None
    pivots = np.diagonal(lower) ** 2
    tol = PIVOT_RTOL * float(np.max(np.diagonal(a)))
    if np.any(pivots <= tol):
        raise NotPositiveDefinite(
            f"pivot {pivots.min():.3e} below tolerance {tol:.3e}"
        )
    return lower


class SpdMatrix:
    """Symmetric positive definite matrix with a cached Cholesky factor.

    Construction validates symmetry and factorizes immediately; it raises
    NotPositiveDefinite when any pivot fails, so holding an SpdMatrix is a
    proof that downstream determinant/inverse/sampling operations are safe.
    """

    __slots__ = ("array", "chol")

    def __init__(self, array) -> None:
        a = _as_square(array)
        _check_symmetric(a)
        a = 0.5 * (a + a.T)
        self.array = a
        self.chol = cholesky_lower(a)

    @property
    def dim(self) -> int:
        return self.array.shape[0]

    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diagonal(self.chol))))

    def det(self) -> float:
        return math.exp(self.logdet())

    def inverse(self) -> np.ndarray:
        linv = np.linalg.inv(self.chol)
        return linv.T @ linv

    def solve(self, b: np.ndarray) -> np.ndarray:
        return np.linalg.solve(self.array, b)

    def __repr__(self) -> str:  # pragma: no cover
        return f"SpdMatrix(dim={self.dim})"


def cholesky(m) -> np.ndarray:
    """Lower triangular L with L @ L.T == m, for symmetric positive definite m."""
    a = _as_square(m)
    _check_symmetric(a)
    return cholesky_lower(a)


def det_logdet_inverse(m) -> tuple[float, float, SpdMatrix]:
    """(determinant, log-determinant, inverse) of an SPD matrix, via Cholesky."""
    spd = m if isinstance(m, SpdMatrix) else SpdMatrix(m)
    ld = spd.logdet()
    return math.exp(ld), ld, SpdMatrix(spd.inverse())


# ---------------------------------------------------------------------------
# Special functions: regularized incomplete gamma and beta.
# ---------------------------------------------------------------------------

_EPS = 1e-15
_TINY = 1e-300
_MAX_ITER = 300


def reg_gamma_lower(a: float, x: float) -> float:
    """Regularized lower incomplete gamma function P(a, x)."""
    if a <= 0.0:
        raise DomainError(f"shape must be positive, got {a}")
    if x < 0.0:
        raise DomainError(f"x must be nonnegative, got {x}")
    if x == 0.0:
        return 0.0
    if x < a + 1.0:
        # series expansion around 0
        term = 1.0 / a
        total = term
        denom = a
        for _ in range(10 * _MAX_ITER):
            denom += 1.0
            term *= x / denom
            total += term
            if abs(term) < abs(total) * _EPS:
                break
        return total * math.exp(-x + a * math.log(x) - math.lgamma(a))
    # continued fraction for Q(a, x), modified Lentz
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    frac = d
    for i in range(1, 10 * _MAX_ITER):
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
    q = frac * math.exp(-x + a * math.log(x) - math.lgamma(a))
    return 1.0 - q


def reg_beta(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b)."""
    if a <= 0.0 or b <= 0.0:
        raise DomainError(f"shape parameters must be positive, got ({a}, {b})")
    if x < 0.0 or x > 1.0:
        raise DomainError(f"x must lie in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return float(x)
    log_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _beta_cf(a, b, x) / a
    return 1.0 - math.exp(log_front) * _beta_cf(b, a, 1.0 - x) / b


def _beta_cf(a: float, b: float, x: float) -> float:
    # continued fraction for the incomplete beta, modified Lentz
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    frac = d
    for m in range(1, _MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        frac *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        frac *= delta
        if abs(delta - 1.0) < 1e-12:
            break
    return frac


def _bisect_cdf(cdf, p: float, lo: float, hi: float) -> float:
    # cdf is monotone increasing with cdf(lo) < p <= cdf(hi)
    for _ in range(_MAX_ITER):
        mid = 0.5 * (lo + hi)
        if cdf(mid) < p:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-13 * max(1.0, abs(lo)):
            break
    return 0.5 * (lo + hi)


def chisq_cdf(x: float, d: int) -> float:
    """CDF of the chi-square distribution with d degrees of freedom."""
    if d < 1:
        raise DomainError(f"degrees of freedom must be >= 1, got {d}")
    if x <= 0.0:
        return 0.0
    return reg_gamma_lower(d / 2.0, x / 2.0)


def chisq_quantile(p: float, d: int) -> float:
    """Quantile of the chi-square distribution with d degrees of freedom."""
    if not 0.0 < p < 1.0:
        raise DomainError(f"p must lie in (0, 1), got {p}")
    if d < 1:
        raise DomainError(f"degrees of freedom must be >= 1, got {d}")
    hi = d + 10.0 * math.sqrt(2.0 * d) + 10.0
    while chisq_cdf(hi, d) < p:
        hi *= 2.0
    return _bisect_cdf(lambda x: chisq_cdf(x, d), p, 0.0, hi)


def f_cdf(x: float, d1: float, d2: float) -> float:
    """CDF of the F distribution with (d1, d2) degrees of freedom."""
    if d1 <= 0 or d2 <= 0:
        raise DomainError(f"degrees of freedom must be positive, got ({d1}, {d2})")
    if x <= 0.0:
        return 0.0
    return reg_beta(d1 / 2.0, d2 / 2.0, d1 * x / (d1 * x + d2))


def f_quantile(p: float, d1: float, d2: float) -> float:
    """Quantile of the F distribution, by bisection on the incomplete beta CDF."""
    if not 0.0 < p < 1.0:
        raise DomainError(f"p must lie in (0, 1), got {p}")
    if d1 <= 0 or d2 <= 0:
        raise DomainError(f"degrees of freedom must be positive, got ({d1}, {d2})")
    hi = 1.0
    while f_cdf(hi, d1, d2) < p:
        hi *= 2.0
        if hi > 1e300:  # pragma: no cover
            raise ArithmeticError("F quantile bracket expansion failed")
    return _bisect_cdf(lambda x: f_cdf(x, d1, d2), p, 0.0, hi)


def hotelling_t2_quantile(p: float, d: int, df: int) -> float:
    """Quantile of Hotelling's T-squared with dimension d and df degrees of freedom.

    Equals df*d/(df-d+1) times the F(d, df-d+1) quantile; converges to the
    chi-square quantile as df grows. Raises DegenerateDof for df <= d, which
    signals that the batch count is too small for the region to exist.
    """
    if not 0.0 < p < 1.0:
        raise DomainError(f"p must lie in (0, 1), got {p}")
    if d < 1:
        raise DomainError(f"dimension must be >= 1, got {d}")
    if df <= d:
        raise DegenerateDof(
            f"df={df} <= d={d}: need more batches (a_n > 2d) before the "
            "Hotelling quantile is defined"
        )
    return df * d / (df - d + 1.0) * f_quantile(p, d, df - d + 1.0)


# ---------------------------------------------------------------------------
# Sampling.
# ---------------------------------------------------------------------------


def mvn_sample(mean, cov, rng: np.random.Generator) -> np.ndarray:
    """One draw from N(mean, cov) as mean + L z with L the Cholesky factor."""
    mean = np.asarray(mean, dtype=float)
    spd = cov if isinstance(cov, SpdMatrix) else SpdMatrix(cov)
    if mean.shape != (spd.dim,):
        raise ValueError(
            f"mean has shape {mean.shape}, covariance dimension is {spd.dim}"
        )
    z = rng.standard_normal(spd.dim)
    return mean + spd.chol @ z


def gamma_sample(shape: float, rate: float, rng: np.random.Generator) -> float:
    """One Gamma(shape, rate) draw (density proportional to x^(shape-1) e^(-rate x))."""
    if shape <= 0.0 or rate <= 0.0:
        raise DomainError(f"shape and rate must be positive, got ({shape}, {rate})")
    return float(rng.gamma(shape)) / rate
