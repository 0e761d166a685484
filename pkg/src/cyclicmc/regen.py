"""Split-chain regeneration for chains with an explicit 1-step minorization.

Given a kernel K(u, .) >= h(u) mu(.), the split chain is realized by the
conditional-bell construction: run the base chain, then after each
transition u -> v ring a bell with probability r(u, v), the Radon-Nikodym
derivative of h(u) mu(.) against K(u, .) at v. Bell times cut the path into
tours whose statistics satisfy exact identities (mean tour length equals
1 / pi(h); tour sums of f average to k * theta * tour length) that make the
construction testable.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Any, Callable, Optional, Sequence

import numpy as np

__all__ = [
    "RatioOutOfRange",
    "NoRegeneration",
    "InsufficientTours",
    "MinorizedKernel",
    "TourRecord",
    "run_split_chain",
    "regeneration_times",
    "tours",
    "tour_identity_check",
    "kac_check",
    "tours_to_csv",
    "matrix_minorized_kernel",
]

_RATIO_SLACK = 1e-12


class RatioOutOfRange(Exception):
    """r(u, v) fell outside [0, 1]: h, mu and the kernel are inconsistent."""


class NoRegeneration(Exception):
    """No bell rang over the whole run; pi(h) is too small for this length."""


class InsufficientTours(Exception):
    """Too few complete tours for the requested check."""


@dataclass(frozen=True)
class MinorizedKernel:
    """Base kernel plus the minorization data needed to ring bells.

    step(u, rng) draws the next state; ratio(u, v) = h(u) mu(v) / K(u, v)
    must lie in [0, 1] for every reachable transition; h is kept separately
    so the Kac identity can be checked from the same run.
    """

    step: Callable[[Any, np.random.Generator], Any]
    ratio: Callable[[Any, Any], float]
    h: Callable[[Any], float]
    name: str = "kernel"


@dataclass
class TourRecord:
    """One complete tour: start time, length, f-sum and centered f-sum."""

    start: int
    length: int
    y: np.ndarray
    y_centered: Optional[np.ndarray] = None


def run_split_chain(kernel: MinorizedKernel, init, n: int,
                    rng: np.random.Generator) -> tuple[list, np.ndarray]:
    """Run n transitions from init; return (states U_0..U_n, bells).

    bells[t] is drawn Bernoulli(r(U_t, U_{t+1})) right after transition t.
    """
    if n < 2:
        raise ValueError(f"need at least 2 transitions, got {n}")
    states = [init]
    bells = np.zeros(n, dtype=bool)
    step, ratio = kernel.step, kernel.ratio
    u = init
    for t in range(n):
        v = step(u, rng)
        r = ratio(u, v)
        if r < -_RATIO_SLACK or r > 1.0 + _RATIO_SLACK:
            raise RatioOutOfRange(
                f"r(u, v) = {r} at step {t}; minorization inputs inconsistent"
            )
        bells[t] = rng.random() < min(max(r, 0.0), 1.0)
        states.append(v)
        u = v
    return states, bells


def regeneration_times(bells: np.ndarray) -> np.ndarray:
    """Times t >= 1 with bells[t-1] set (the chain regenerates entering t)."""
    return np.flatnonzero(bells) + 1


def tours(states: Sequence, bells: np.ndarray, f_block: Callable[[Any, Any], Any],
          k: int = 1, theta=None) -> list[TourRecord]:
    """Cut the split-chain run into complete tours and accumulate f over each.

    f_block(u, v) must return the length-d sum of f over the k underlying
    samples generated by the transition u -> v (for a homogeneous chain,
    simply f(v)). The segment before the first regeneration and the tail
    after the last one are dropped. When theta is given, each record also
    carries y - k * theta * length.
    """
    times = regeneration_times(bells)
    if times.size == 0:
        raise NoRegeneration("no bells in the run")
    if times.size < 2:
        return []
    fs = np.asarray([f_block(states[t], states[t + 1])
                     for t in range(len(states) - 1)], dtype=float)
    if fs.ndim == 1:
        fs = fs[:, None]
    # zero pad so a bell on the final transition stays a valid segment start
    fs = np.vstack([fs, np.zeros((1, fs.shape[1]))])
    sums = np.add.reduceat(fs, times, axis=0)[:-1]
    lengths = np.diff(times)
    th = None if theta is None else np.atleast_1d(np.asarray(theta, dtype=float))
    records = []
    for start, tau, y in zip(times[:-1], lengths, sums):
        rec = TourRecord(start=int(start), length=int(tau), y=y)
        if th is not None:
            rec.y_centered = y - k * th * rec.length
        records.append(rec)
    return records


@dataclass
class TourIdentityReport:
    n_tours: int
    theta_hat: np.ndarray
    theta: np.ndarray
    se: np.ndarray
    z: np.ndarray
    ok: bool
    lag2_corr: np.ndarray


def _lagged_corr(x: np.ndarray, lag: int) -> np.ndarray:
    x = x - x.mean(axis=0)
    num = (x[:-lag] * x[lag:]).mean(axis=0)
    den = (x * x).mean(axis=0)
    return num / np.where(den > 0, den, 1.0)


def tour_identity_check(records: list[TourRecord], k: int,
                        theta) -> TourIdentityReport:
    """Check mean(Y) / (k mean(tau)) against theta, with 1-dependent SEs.

    The centered tour sums form a mean-zero stationary 1-dependent sequence,
    so the long-run variance of their mean is var + 2 cov(lag 1); the lag-2
    autocorrelation is reported as well (it should vanish).
    """
    m = len(records)
    if m < 1000:
        raise InsufficientTours(f"need >= 1000 complete tours, got {m}")
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    ys = np.stack([r.y for r in records])
    taus = np.array([r.length for r in records], dtype=float)
    mean_tau = taus.mean()
    theta_hat = ys.mean(axis=0) / (k * mean_tau)

    centered = ys - k * np.outer(taus, theta)
    var0 = centered.var(axis=0)
    cov1 = ((centered[:-1] - centered.mean(axis=0))
            * (centered[1:] - centered.mean(axis=0))).mean(axis=0)
    longrun = np.maximum(var0 + 2.0 * cov1, var0 * 1e-3)
    se = np.sqrt(longrun / m) / (k * mean_tau)
    z = (theta_hat - theta) / np.where(se > 0, se, 1.0)
    return TourIdentityReport(
        n_tours=m,
        theta_hat=theta_hat,
        theta=theta,
        se=se,
        z=z,
        ok=bool(np.all(np.abs(z) <= 4.0)),
        lag2_corr=_lagged_corr(centered, 2),
    )


@dataclass
class KacReport:
    mean_tour: float
    inv_pi_h: float
    se: float
    ok: bool


def kac_check(states: Sequence, bells: np.ndarray,
              h: Callable[[Any], float]) -> KacReport:
    """Compare the mean tour length with 1 over the long-run average of h."""
    times = regeneration_times(bells)
    if times.size < 2:
        raise NoRegeneration("need at least two regenerations")
    taus = np.diff(times).astype(float)
    pi_h = float(np.mean([h(u) for u in states[:-1]]))
    if pi_h <= 0:
        raise NoRegeneration("estimated pi(h) is zero")
    se = float(taus.std(ddof=1) / np.sqrt(taus.size))
    mean_tour = float(taus.mean())
    return KacReport(
        mean_tour=mean_tour,
        inv_pi_h=1.0 / pi_h,
        se=se,
        ok=abs(mean_tour - 1.0 / pi_h) <= 4.0 * se,
    )


def tours_to_csv(records: list[TourRecord], path_or_buf) -> None:
    """Write `i,T_i,tau_i,Y_1..Y_d` rows."""
    close = False
    if isinstance(path_or_buf, (str, bytes, os.PathLike)):
        buf = open(path_or_buf, "w")
        close = True
    else:
        buf = path_or_buf
    try:
        d = records[0].y.shape[0] if records else 1
        cols = ",".join(f"Y_{j + 1}" for j in range(d))
        buf.write(f"i,T_i,tau_i,{cols}\n")
        for i, rec in enumerate(records, start=1):
            ys = ",".join(repr(float(v)) for v in rec.y)
            buf.write(f"{i},{rec.start},{rec.length},{ys}\n")
    finally:
        if close:
            buf.close()


def matrix_minorized_kernel(P) -> MinorizedKernel:
    """Minorized kernel for a finite chain: mu = column minima of P, h = their sum.

    With mu(v) = min_u P(u, v) / s and h constant equal to
    s = sum_v min_u P(u, v), the bell ratio is min_u' P(u', v) / P(u, v),
    which lies in [0, 1] by construction. States are integers 0..m-1.
    """
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ValueError("P must be a square stochastic matrix")
    if np.any(P < 0) or not np.allclose(P.sum(axis=1), 1.0, atol=1e-12):
        raise ValueError("rows of P must be probability vectors")
    mincol = P.min(axis=0)
    s = float(mincol.sum())
    if s <= 0:
        raise ValueError("column minima sum to zero: no uniform minorization")
    cum = np.cumsum(P, axis=1)

    def step(u, rng):
        return int(np.searchsorted(cum[u], rng.random(), side="right"))

    def ratio(u, v):
        return float(mincol[v] / P[u, v])

    return MinorizedKernel(step=step, ratio=ratio, h=lambda u: s,
                           name=f"matrix-{P.shape[0]}-state")
