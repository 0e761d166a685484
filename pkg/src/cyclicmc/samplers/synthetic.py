"""Synthetic chains with closed-form asymptotic variances, used as test oracles.

The two-kernel sign-flip chain has phase-dependent autocovariances that are
plain products of u = 1 - 2a and v = 1 - 2b, so its asymptotic variance is
available exactly; the AR(1) chain is the standard homogeneous benchmark.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..chain import CyclicSampler
from ..regen import MinorizedKernel

__all__ = [
    "FlipChainSpec",
    "make_flip_chain",
    "flip_asymptotic_var",
    "make_ar1_sampler",
    "ar1_asymptotic_var",
    "ar1_stationary_var",
    "flip_block_minorized",
    "flip_block_fsum",
    "THREE_STATE_P",
    "three_state_stationary",
]


@dataclass(frozen=True)
class FlipChainSpec:
    """Sign-flip probabilities of the two alternating kernels."""

    a: float
    b: float

    def __post_init__(self):
        if not (0.0 < self.a < 1.0 and 0.0 < self.b < 1.0):
            raise ValueError(f"flip probabilities must lie in (0,1), got {self}")


def make_flip_chain(spec: FlipChainSpec) -> CyclicSampler:
    """State in {-1,+1}; phase 1 flips the sign w.p. a, phase 2 w.p. b.

    Both kernels keep the uniform distribution on {-1,+1} invariant;
    f is the identity (d = 1).
    """

    a, b = spec.a, spec.b

    def step(state, phase, rng):
        prob = a if phase == 1 else b
        return -state if rng.random() < prob else state

    return CyclicSampler(
        k=2,
        d=1,
        step=step,
        f=lambda s: s,
        init=1.0,
        name="flip",
    )


def flip_asymptotic_var(spec: FlipChainSpec) -> float:
    """Exact asymptotic variance of the mean of the flip chain.

    With u = 1-2a and v = 1-2b the lagged correlations are alternating
    products of u and v; summing the two phase-indexed geometric series
    gives 1 + (u + v + 2uv) / (1 - uv).
    """
    u = 1.0 - 2.0 * spec.a
    v = 1.0 - 2.0 * spec.b
    return 1.0 + (u + v + 2.0 * u * v) / (1.0 - u * v)


def make_ar1_sampler(phi: float, innovation_sd: float = 1.0) -> CyclicSampler:
    """Homogeneous AR(1) chain x' = phi x + innovation, as a k = 1 sampler."""
    if not -1.0 < phi < 1.0:
        raise ValueError(f"phi must lie in (-1, 1), got {phi}")
    if innovation_sd <= 0:
        raise ValueError("innovation_sd must be positive")

    def step(state, phase, rng):
        return phi * state + innovation_sd * rng.standard_normal()

    return CyclicSampler(k=1, d=1, step=step, f=lambda s: s, init=0.0, name="ar1")


def ar1_asymptotic_var(phi: float, innovation_sd: float = 1.0) -> float:
    return innovation_sd**2 / (1.0 - phi) ** 2


def ar1_stationary_var(phi: float, innovation_sd: float = 1.0) -> float:
    return innovation_sd**2 / (1.0 - phi**2)


def flip_block_minorized(spec: FlipChainSpec) -> MinorizedKernel:
    """The flip chain as its own homogeneous block, with a uniform refresh.

    Block state u = (x_even, x_odd) holds one full cycle; the transition
    applies the phase-2 flip to x_odd and then the phase-1 flip, so
    K(u, v) = P_b(u1 -> v0) P_a(v0 -> v1). A uniform measure on the four
    block states minorizes K with constant h = 4 min(a, 1-a) min(b, 1-b).
    """
    a, b = spec.a, spec.b

    def trans_prob(u, v):
        pb = b if v[0] != u[1] else 1.0 - b
        pa = a if v[1] != v[0] else 1.0 - a
        return pb * pa

    h_const = 4.0 * min(a, 1.0 - a) * min(b, 1.0 - b)

    def step(u, rng):
        x = -u[1] if rng.random() < b else u[1]
        y = -x if rng.random() < a else x
        return (x, y)

    return MinorizedKernel(
        step=step,
        ratio=lambda u, v: 0.25 * h_const / trans_prob(u, v),
        h=lambda u: h_const,
        name="flip-block",
    )


def flip_block_fsum(u, v) -> float:
    """Sum of the identity output over the two samples a block transition emits."""
    return u[1] + v[0]


# reference 3-state stochastic matrix whose column minima sum to 0.7
THREE_STATE_P = np.array([
    [0.5, 0.3, 0.2],
    [0.2, 0.6, 0.2],
    [0.3, 0.3, 0.4],
])


def three_state_stationary(P=None) -> np.ndarray:
    """Stationary distribution of a finite chain, from the unit left eigenvector."""
    P = THREE_STATE_P if P is None else np.asarray(P, dtype=float)
    w, vectors = np.linalg.eig(P.T)
    i = int(np.argmin(np.abs(w - 1.0)))
    pi = np.real(vectors[:, i])
    return pi / pi.sum()
