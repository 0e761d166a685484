"""Gibbs sampling of the uniform distribution on the area under a unimodal curve.

The y-axis step redraws the height uniformly on [0, h(x1)]; the x-axis step
redraws the abscissa uniformly on the level set {x: h(x) >= x2}, whose
endpoints are found by bisection on the two monotone branches of h. The
modified-scan sampler applies k1 cheap y-steps per cycle before each x-step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ..chain import CyclicSampler

__all__ = [
    "InvalidState",
    "RootFailure",
    "CurveRegionSpec",
    "exp_curve_spec",
    "y_step",
    "x_step",
    "level_set_interval",
    "make_curve_sampler",
]

_BISECT_MAX = 200
_BISECT_XTOL = 1e-12


class InvalidState(Exception):
    """The (x1, x2) point left the region under the curve."""


class RootFailure(Exception):
    """Level-set bracketing failed; h is probably not unimodal on the support."""


@dataclass(frozen=True)
class CurveRegionSpec:
    """Unimodal nonnegative curve h on [x_lo, x_hi] with h = 0 at both ends.

    h must increase strictly on [x_lo, mode] and decrease strictly on
    [mode, x_hi]; that is what guarantees the two-sided root brackets.
    k1 is the number of consecutive y-steps per cycle (cycle length k1 + 1).
    """

    h: Callable[[float], float]
    x_lo: float
    x_hi: float
    mode: float
    k1: int = 3

    def __post_init__(self):
        if not self.x_lo < self.mode < self.x_hi:
            raise ValueError("mode must lie strictly inside the support")
        if self.k1 < 1:
            raise ValueError(f"k1 must be >= 1, got {self.k1}")
        if abs(self.h(self.x_lo)) > 1e-9 or abs(self.h(self.x_hi)) > 1e-9:
            raise ValueError("h must vanish at the support endpoints")
        if self.h(self.mode) <= 0.0:
            raise ValueError("h must be positive at the mode")

    @property
    def k(self) -> int:
        return self.k1 + 1

    @property
    def h_max(self) -> float:
        return self.h(self.mode)


def exp_curve_spec(k1: int = 3) -> CurveRegionSpec:
    """The reference curve h(x) = 2x + 1 - exp(x) on [0, r] with exp(r) = 2r + 1."""
    lo, hi = 1.0, 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if math.exp(mid) - 2.0 * mid - 1.0 < 0.0:
            lo = mid
        else:
            hi = mid
    x_hi = 0.5 * (lo + hi)
    return CurveRegionSpec(
        h=lambda x: 2.0 * x + 1.0 - math.exp(x),
        x_lo=0.0,
        x_hi=x_hi,
        mode=math.log(2.0),
        k1=k1,
    )


def y_step(spec: CurveRegionSpec, state, rng: np.random.Generator):
    """Redraw x2 uniformly on [0, h(x1)]; x1 unchanged."""
    x1, _ = state
    top = spec.h(x1)
    if top < 0.0:
        raise InvalidState(f"h({x1}) = {top} < 0")
    return (x1, top * rng.random())


def level_set_interval(spec: CurveRegionSpec, x2: float) -> tuple[float, float]:
    """Endpoints (r_l, r_r) of {x: h(x) >= x2}, each within 1e-12 of the root.

    r_l is taken from the outer end of its final bracket (h(r_l) <= x2)
    and symmetrically for r_r, so [r_l, r_r] covers the true level set.
    """
    h = spec.h
    top = spec.h_max
    if x2 < 0.0 or x2 > top:
        raise InvalidState(f"x2 = {x2} outside [0, h(mode) = {top}]")
    if x2 == 0.0:
        return (spec.x_lo, spec.x_hi)

    # left branch: h increasing on [x_lo, mode]
    lo, hi = spec.x_lo, spec.mode
    if not h(lo) <= x2 <= h(hi):
        raise RootFailure(f"left bracket invalid at level {x2}")
    for _ in range(_BISECT_MAX):
        if hi - lo <= _BISECT_XTOL:
            break
        mid = 0.5 * (lo + hi)
        if h(mid) < x2:
            lo = mid
        else:
            hi = mid
    r_l = lo

    # right branch: h decreasing on [mode, x_hi]
    lo, hi = spec.mode, spec.x_hi
    if not h(hi) <= x2 <= h(lo):
        raise RootFailure(f"right bracket invalid at level {x2}")
    for _ in range(_BISECT_MAX):
        if hi - lo <= _BISECT_XTOL:
            break
        mid = 0.5 * (lo + hi)
        if h(mid) < x2:
            hi = mid
        else:
            lo = mid
    r_r = hi
    return (r_l, r_r)


def x_step(spec: CurveRegionSpec, state, rng: np.random.Generator):
    """Redraw x1 uniformly on the level set {x: h(x) >= x2}; x2 unchanged."""
    _, x2 = state
    r_l, r_r = level_set_interval(spec, x2)
    return (r_l + (r_r - r_l) * rng.random(), x2)


def _default_f(state) -> float:
    return state[0] * state[1]


def make_curve_sampler(spec: CurveRegionSpec,
                       f: Optional[Callable] = None,
                       d: int = 1) -> CyclicSampler:
    """Cyclic sampler with phases 1..k1 = y-steps and phase k1+1 = x-step.

    Default output f(x1, x2) = x1 * x2 (d = 1). k1 = 1 gives the plain
    two-component deterministic-scan sampler, the homogeneous counterpart.
    """
    k = spec.k1 + 1

    def step(state, phase, rng):
        if phase < k:
            return y_step(spec, state, rng)
        return x_step(spec, state, rng)

    return CyclicSampler(
        k=k,
        d=d,
        step=step,
        f=_default_f if f is None else f,
        init=(spec.mode, 0.5 * spec.h_max),
        name=f"curve-k{k}",
    )
