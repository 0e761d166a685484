"""Fixed-volume sequential termination rule.

Stop the chain at the first check point where the d-th root of the
confidence-region volume, plus a padding term that blocks early stopping
and vanishes at rate 1/n, drops below epsilon times a scale estimate (1, or
the 2d-th root of the sample covariance determinant). Checks follow a
geometric schedule so the chain is extended, never restarted.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import estimators, numkit
from .chain import ChainRunner, CyclicSampler, SampleMatrix
from .numkit import DegenerateDof, NotPositiveDefinite

__all__ = [
    "BudgetExceeded",
    "StopConfig",
    "CheckRecord",
    "StopReport",
    "pad_term",
    "stop_rule_holds",
    "run_until_stop",
    "ess_threshold",
]

SCALINGS = ("unit", "det_psi")


class BudgetExceeded(Exception):
    """The max-n cap was reached before the rule fired; carries the partial report."""

    def __init__(self, report: "StopReport"):
        super().__init__(f"rule did not fire within n = {report.n_stop}")
        self.report = report


@dataclass(frozen=True)
class StopConfig:
    """Parameters of the termination rule and its check schedule."""

    epsilon: float
    alpha: float = 0.10
    n0: int = 1000
    scaling: str = "det_psi"
    check_growth: float = 1.2
    n_start: Optional[int] = None
    kappa: float = 0.51
    max_n: Optional[int] = None

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.epsilon <= 0.0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.n0 < 1:
            raise ValueError(f"n0 must be >= 1, got {self.n0}")
        if self.scaling not in SCALINGS:
            raise ValueError(f"scaling must be one of {SCALINGS}, got {self.scaling!r}")
        if self.check_growth <= 1.0:
            raise ValueError(f"check_growth must exceed 1, got {self.check_growth}")
        if self.n_start is not None and self.n_start < 2:
            raise ValueError(f"n_start must be >= 2, got {self.n_start}")
        if self.max_n is not None and self.max_n < self.first_check:
            raise ValueError("max_n is smaller than the first check point")

    @property
    def first_check(self) -> int:
        return self.n_start if self.n_start is not None else max(self.n0, 1000)


@dataclass
class CheckRecord:
    n: int
    lhs: float
    rhs: float
    holds: bool
    reason: str = ""


@dataclass
class StopReport:
    """Outcome of a sequential run: stop time, estimate, region, diagnostics."""

    n_stop: int
    estimate: np.ndarray
    region: Optional[estimators.ConfidenceRegion]
    volume: Optional[float]
    ess_at_stop: Optional[float]
    checks: list = field(default_factory=list)
    stopped: bool = True

    def phase_counts(self, k: int) -> dict[int, int]:
        """Number of kernel applications per phase among the n_stop updates."""
        counts = {}
        for phase in range(1, k + 1):
            counts[phase] = (self.n_stop - phase) // k + 1 if self.n_stop >= phase else 0
        return counts

    def to_json(self) -> dict:
        return {
            "n_stop": self.n_stop,
            "stopped": self.stopped,
            "estimate": self.estimate.tolist(),
            "volume": self.volume,
            "ess_at_stop": self.ess_at_stop,
            "checks": [
                {"n": c.n, "lhs": c.lhs, "rhs": c.rhs, "holds": c.holds,
                 "reason": c.reason}
                for c in self.checks
            ],
        }

    def checks_to_csv(self, path_or_buf) -> None:
        close = False
        if isinstance(path_or_buf, (str, bytes, os.PathLike)):
            buf = open(path_or_buf, "w")
            close = True
        else:
            buf = path_or_buf
        try:
            buf.write("n,lhs,rhs,holds\n")
            for c in self.checks:
                buf.write(f"{c.n},{float(c.lhs)!r},{float(c.rhs)!r},{int(c.holds)}\n")
        finally:
            if close:
                buf.close()


def pad_term(n: int, epsilon: float, scale_hat: float, n0: int) -> float:
    """Padding epsilon * scale * [n < n0] + 1/n added to the volume root."""
    return (epsilon * scale_hat if n < n0 else 0.0) + 1.0 / n


def _scale_estimate(cfg: StopConfig, psi: estimators.CovMatrix) -> float:
    if cfg.scaling == "unit":
        return 1.0
    return math.exp(psi.logdet() / (2.0 * psi.dim))


def stop_rule_holds(s: SampleMatrix, cfg: StopConfig) -> tuple[bool, CheckRecord]:
    """Evaluate volume^(1/d) + pad <= epsilon * scale at the current length.

    Degenerate estimates (too few batches for the Hotelling quantile, or a
    non-SPD covariance) make the rule fail with the reason recorded, since
    the rule cannot responsibly fire on them.
    """
    n = s.n
    try:
        mean, psi = estimators.sample_mean_cov(s)
        if cfg.scaling == "det_psi" and not psi.is_spd:
            raise NotPositiveDefinite("sample covariance is degenerate")
        scale = _scale_estimate(cfg, psi)
        region = estimators.confidence_region(s, alpha=cfg.alpha, kappa=cfg.kappa)
        volume = estimators.region_volume(region)
    except (DegenerateDof, NotPositiveDefinite, estimators.TooFewBatches) as exc:
        rec = CheckRecord(n=n, lhs=math.inf, rhs=0.0, holds=False,
                          reason=f"{type(exc).__name__}: {exc}")
        return False, rec
    lhs = volume ** (1.0 / s.d) + pad_term(n, cfg.epsilon, scale, cfg.n0)
    rhs = cfg.epsilon * scale
    rec = CheckRecord(n=n, lhs=lhs, rhs=rhs, holds=lhs <= rhs)
    return rec.holds, rec


def run_until_stop(sampler: CyclicSampler, cfg: StopConfig,
                   rng: np.random.Generator, init=None) -> StopReport:
    """Extend the chain along the geometric check schedule until the rule fires.

    Chain state and random stream persist across checks. Raises
    BudgetExceeded (carrying the partial report) if max_n is hit first.
    """
    runner = ChainRunner(sampler, rng, init=init)
    n = cfg.first_check
    runner.advance(n)
    checks: list[CheckRecord] = []
    while True:
        s = runner.samples()
        holds, rec = stop_rule_holds(s, cfg)
        checks.append(rec)
        if holds:
            return _final_report(s, cfg, checks)
        next_n = math.ceil(n * cfg.check_growth)
        if next_n == n:
            next_n = n + 1
        if cfg.max_n is not None and next_n > cfg.max_n:
            report = _final_report(s, cfg, checks, stopped=False)
            raise BudgetExceeded(report)
        runner.advance(next_n - n)
        n = next_n


def _final_report(s: SampleMatrix, cfg: StopConfig, checks: list[CheckRecord],
                  stopped: bool = True) -> StopReport:
    mean, psi = estimators.sample_mean_cov(s)
    region = volume = ess_val = None
    try:
        region = estimators.confidence_region(s, alpha=cfg.alpha, kappa=cfg.kappa)
        volume = estimators.region_volume(region)
        sigma = region.shape
        if psi.is_spd:
            ess_val = estimators.ess(s.n, psi, sigma)
    except (DegenerateDof, NotPositiveDefinite, estimators.TooFewBatches):
        pass
    return StopReport(
        n_stop=s.n,
        estimate=mean,
        region=region,
        volume=volume,
        ess_at_stop=ess_val,
        checks=checks,
        stopped=stopped,
    )


def ess_threshold(alpha: float, d: int, epsilon: float) -> float:
    """A-priori minimum ESS implied by the rule with the det_psi scaling.

    (2 pi^(d/2) / (d Gamma(d/2)))^(2/d) * chisq_quantile(1-alpha, d) / epsilon^2.
    """
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    const = (2.0 * math.pi ** (d / 2.0) / (d * math.gamma(d / 2.0))) ** (2.0 / d)
    return const * numkit.chisq_quantile(1.0 - alpha, d) / epsilon**2
