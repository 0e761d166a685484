"""Output analysis for cyclic MCMC runs.

Sample mean and covariance, phase-indexed autocovariances with the
truncated-sum asymptotic-covariance oracle, the multivariate batch means
estimator, determinant/trace effective sample sizes, and Hotelling
confidence regions with their volumes. Covariance estimates are returned as
CovMatrix values with an is_spd flag rather than raising, because small-n
degeneracy is a signal to grow the chain, not a programming error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import numkit
from .chain import SampleMatrix
from .numkit import DegenerateDof, NotPositiveDefinite

__all__ = [
    "TooFewBatches",
    "InsufficientLag",
    "ZeroTrace",
    "CovMatrix",
    "BatchPlan",
    "sample_mean_cov",
    "batch_means_cov",
    "autocov",
    "sigma_truncated_oracle",
    "ess",
    "tess",
    "ConfidenceRegion",
    "confidence_region",
    "region_volume",
    "estimator_report",
]


class TooFewBatches(Exception):
    """Batch plan has fewer than 2 batches."""


class InsufficientLag(Exception):
    """Not enough samples to form any pair at the requested phase/lag."""


class ZeroTrace(Exception):
    """Trace ratio undefined."""


class CovMatrix:
    """Symmetric covariance estimate with a cached Cholesky attempt.

    is_spd records whether the factorization succeeded; determinant and
    inverse raise NotPositiveDefinite on a flagged-degenerate value.
    """

    __slots__ = ("array", "chol", "is_spd")

    def __init__(self, array) -> None:
        a = np.asarray(array, dtype=float)
        a = 0.5 * (a + a.T)
        self.array = a
        try:
            self.chol = numkit.cholesky_lower(a)
            self.is_spd = True
        except NotPositiveDefinite:
            self.chol = None
            self.is_spd = False

    @property
    def dim(self) -> int:
        return self.array.shape[0]

    def _require_spd(self) -> None:
        if not self.is_spd:
            raise NotPositiveDefinite(
                "covariance estimate is not positive definite; grow the chain"
            )

    def logdet(self) -> float:
        self._require_spd()
        return 2.0 * float(np.sum(np.log(np.diagonal(self.chol))))

    def det(self) -> float:
        return math.exp(self.logdet())

    def inverse(self) -> np.ndarray:
        self._require_spd()
        linv = np.linalg.inv(self.chol)
        return linv.T @ linv

    def solve(self, b: np.ndarray) -> np.ndarray:
        self._require_spd()
        y = np.linalg.solve(self.chol, b)
        return np.linalg.solve(self.chol.T, y)

    def trace(self) -> float:
        return float(np.trace(self.array))

    def __repr__(self) -> str:  # pragma: no cover
        return f"CovMatrix(dim={self.dim}, is_spd={self.is_spd})"


def _as_cov(m) -> CovMatrix:
    if isinstance(m, CovMatrix):
        return m
    if isinstance(m, numkit.SpdMatrix):
        return CovMatrix(m.array)
    return CovMatrix(m)


@dataclass(frozen=True)
class BatchPlan:
    """Batch layout: a_n batches of length b_n covering the first a_n * b_n rows."""

    n: int
    a_n: int
    b_n: int
    kappa: float = 0.51

    def __post_init__(self):
        if self.a_n < 2:
            raise TooFewBatches(f"need at least 2 batches, got {self.a_n}")
        if self.b_n < 1:
            raise ValueError(f"batch length must be >= 1, got {self.b_n}")
        if self.a_n * self.b_n > self.n:
            raise ValueError("a_n * b_n exceeds the available sample count")

    @classmethod
    def from_n(cls, n: int, kappa: float = 0.51) -> "BatchPlan":
        """b_n = floor(n^kappa), a_n = floor(n / b_n)."""
        if not 0.0 < kappa < 1.0:
            raise ValueError(f"kappa must lie in (0, 1), got {kappa}")
        b = max(int(n**kappa), 1)
        a = n // b
        if a < 2:
            raise TooFewBatches(
                f"n = {n} with kappa = {kappa} leaves {a} batch(es)"
            )
        return cls(n=n, a_n=a, b_n=b, kappa=kappa)


def sample_mean_cov(s: SampleMatrix) -> tuple[np.ndarray, CovMatrix]:
    """Sample mean and (n-1)-denominator covariance of the rows.

    A rank-deficient covariance (e.g. a constant coordinate) comes back
    flagged non-SPD rather than raising.
    """
    if s.n < 2:
        raise ValueError(f"need at least 2 samples, got {s.n}")
    mean = s.values.mean(axis=0)
    dev = s.values - mean
    psi = dev.T @ dev / (s.n - 1)
    return mean, CovMatrix(psi)


def batch_means_cov(s: SampleMatrix, plan: Optional[BatchPlan] = None,
                    kappa: float = 0.51) -> CovMatrix:
    """Multivariate batch means estimate of the asymptotic covariance.

    Uses the first a_n * b_n rows; both the batch means and the grand mean
    are taken over exactly those rows.
    """
    if plan is None:
        plan = BatchPlan.from_n(s.n, kappa)
    if plan.n > s.n:
        raise ValueError("plan refers to more rows than the sample has")
    a, b = plan.a_n, plan.b_n
    used = s.values[: a * b]
    batch_means = used.reshape(a, b, s.d).mean(axis=1)
    dev = batch_means - used.mean(axis=0)
    sigma = b / (a - 1) * dev.T @ dev
    return CovMatrix(sigma)


def _rows_at_time_class(s: SampleMatrix, j: int) -> int:
    # 0-based row index of the first row whose chain time is congruent j mod k
    return (j - s.phase_offset) % s.k


def autocov(s: SampleMatrix, j: int, l: int) -> np.ndarray:
    """Empirical (j, l) autocovariance matrix, centered at the overall mean.

    j indexes the chain time modulo k (time class 0 is the state entering a
    cycle, i.e. produced by kernel k; time class i < k by kernel i). For
    l < 0 the transposed convention applies: autocov(j, l) equals
    autocov(j, -l) transposed.
    """
    if not 0 <= j < s.k:
        raise ValueError(f"phase index j = {j} outside 0..{s.k - 1}")
    if l < 0:
        return autocov(s, j, -l).T
    mean = s.values.mean(axis=0)
    start = _rows_at_time_class(s, j)
    first = s.values[start::s.k] - mean
    if start + l >= s.n:
        raise InsufficientLag(f"no pairs at phase {j}, lag {l} with n = {s.n}")
    second = s.values[start + l::s.k] - mean
    m = min(first.shape[0], second.shape[0])
    if m == 0:
        raise InsufficientLag(f"no pairs at phase {j}, lag {l} with n = {s.n}")
    return first[:m].T @ second[:m] / m


def sigma_truncated_oracle(s: SampleMatrix, max_lag: int) -> np.ndarray:
    """Truncated double sum over lags and phases of the autocovariances.

    Slow cross-check for batch_means_cov: averages the per-time-class
    autocovariance matrices over the k classes and sums lags -max_lag to
    max_lag. Not meant for production use.
    """
    if max_lag < 1:
        raise ValueError(f"max_lag must be >= 1, got {max_lag}")
    if max_lag * s.k >= s.n:
        raise InsufficientLag(
            f"max_lag = {max_lag} too large for n = {s.n}, k = {s.k}"
        )
    d = s.d
    total = np.zeros((d, d))
    for j in range(s.k):
        total += autocov(s, j, 0)
        for l in range(1, max_lag + 1):
            c = autocov(s, j, l)
            total += c + c.T
    return total / s.k


def ess(n: int, psi_hat, sigma_hat) -> float:
    """Determinant effective sample size n (|psi| / |sigma|)^(1/d)."""
    psi, sigma = _as_cov(psi_hat), _as_cov(sigma_hat)
    if psi.dim != sigma.dim:
        raise ValueError("psi and sigma dimensions differ")
    return n * math.exp((psi.logdet() - sigma.logdet()) / psi.dim)


def tess(n: int, psi_hat, sigma_hat) -> float:
    """Trace effective sample size n tr(psi) / tr(sigma)."""
    psi, sigma = _as_cov(psi_hat), _as_cov(sigma_hat)
    if psi.dim != sigma.dim:
        raise ValueError("psi and sigma dimensions differ")
    tr_sigma = sigma.trace()
    if tr_sigma <= 0:
        raise ZeroTrace("trace of the asymptotic covariance is not positive")
    return n * psi.trace() / tr_sigma


@dataclass
class ConfidenceRegion:
    """Ellipsoidal region {x: (center - x)' shape^-1 (center - x) < radius2}."""

    center: np.ndarray
    shape: CovMatrix
    radius2: float
    alpha: float
    n: int
    dof: int

    def contains(self, x) -> bool:
        diff = self.center - np.asarray(x, dtype=float)
        return float(diff @ self.shape.solve(diff)) < self.radius2

    @property
    def d(self) -> int:
        return self.center.shape[0]


def confidence_region(s: SampleMatrix, plan: Optional[BatchPlan] = None,
                      alpha: float = 0.10, kappa: float = 0.51) -> ConfidenceRegion:
    """Hotelling confidence region from the batch means covariance.

    radius2 is the T-squared quantile with dof = a_n - d, divided by n.
    Raises DegenerateDof when a_n <= 2d and NotPositiveDefinite when the
    batch means estimate is degenerate.
    """
    if plan is None:
        plan = BatchPlan.from_n(s.n, kappa)
    used = plan.a_n * plan.b_n
    mean = s.values[:used].mean(axis=0)
    sigma = batch_means_cov(s, plan)
    sigma._require_spd()
    dof = plan.a_n - s.d
    t2 = numkit.hotelling_t2_quantile(1.0 - alpha, s.d, dof)
    return ConfidenceRegion(
        center=mean,
        shape=sigma,
        radius2=t2 / used,
        alpha=alpha,
        n=used,
        dof=dof,
    )


def region_volume(region: ConfidenceRegion) -> float:
    """Volume 2 pi^(d/2) / (d Gamma(d/2)) * radius2^(d/2) * |shape|^(1/2)."""
    d = region.d
    const = 2.0 * math.pi ** (d / 2.0) / (d * math.gamma(d / 2.0))
    return const * region.radius2 ** (d / 2.0) * math.exp(0.5 * region.shape.logdet())


def estimator_report(s: SampleMatrix, plan: Optional[BatchPlan] = None,
                     kappa: float = 0.51) -> dict:
    """JSON-ready summary: mean, sample covariance, batch means, ESS, TESS."""
    if plan is None:
        plan = BatchPlan.from_n(s.n, kappa)
    mean, psi = sample_mean_cov(s)
    sigma = batch_means_cov(s, plan)
    ok = psi.is_spd and sigma.is_spd
    return {
        "n": s.n,
        "d": s.d,
        "k": s.k,
        "kappa": plan.kappa,
        "a_n": plan.a_n,
        "b_n": plan.b_n,
        "mean": mean.tolist(),
        "psi_hat": psi.array.tolist(),
        "sigma_bm": sigma.array.tolist(),
        "ess": ess(s.n, psi, sigma) if ok else None,
        "tess": tess(s.n, psi, sigma) if ok and sigma.trace() > 0 else None,
    }
