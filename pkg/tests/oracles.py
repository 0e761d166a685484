"""Independent oracles used to freeze expected values in the tests.

Everything here deliberately avoids the code paths it checks: quadrature
instead of sampling, a full joint-precision solve instead of the blockwise
conditional formulas, direct enumeration instead of estimator machinery.
"""

from __future__ import annotations

import numpy as np


def adaptive_simpson(f, a: float, b: float, tol: float = 1e-10) -> float:
    """Adaptive Simpson quadrature of f on [a, b]."""

    def simpson(x0, x2, f0, f1, f2):
        return (x2 - x0) / 6.0 * (f0 + 4.0 * f1 + f2)

    def recurse(x0, x2, f0, f1, f2, whole, tol, depth):
        x1 = 0.5 * (x0 + x2)
        lm, rm = 0.5 * (x0 + x1), 0.5 * (x1 + x2)
        flm, frm = f(lm), f(rm)
        left = simpson(x0, x1, f0, flm, f1)
        right = simpson(x1, x2, f1, frm, f2)
        if depth <= 0 or abs(left + right - whole) <= 15.0 * tol:
            return left + right + (left + right - whole) / 15.0
        return (recurse(x0, x1, f0, flm, f1, left, tol / 2.0, depth - 1)
                + recurse(x1, x2, f1, frm, f2, right, tol / 2.0, depth - 1))

    mid = 0.5 * (a + b)
    fa, fm, fb = f(a), f(mid), f(b)
    whole = simpson(a, b, fa, fm, fb)
    return recurse(a, b, fa, fm, fb, whole, tol, 60)


def curve_mean_xy(spec) -> float:
    """E[x1 x2] for the uniform law under the curve: int x h^2/2 / int h."""
    area = adaptive_simpson(spec.h, spec.x_lo, spec.x_hi, 1e-12)
    num = adaptive_simpson(lambda x: x * spec.h(x) ** 2 / 2.0,
                           spec.x_lo, spec.x_hi, 1e-12)
    return num / area


def curve_moment(spec, g) -> float:
    """E[g(x1, x2)] under the curve law, via nested adaptive Simpson."""
    area = adaptive_simpson(spec.h, spec.x_lo, spec.x_hi, 1e-12)

    def inner(x):
        top = spec.h(x)
        if top <= 0.0:
            return 0.0
        return adaptive_simpson(lambda y: g(x, y), 0.0, top, 1e-11)

    return adaptive_simpson(inner, spec.x_lo, spec.x_hi, 1e-9) / area


def curve_rejection_sample(spec, m: int, rng: np.random.Generator) -> np.ndarray:
    """m exact draws from the uniform law under the curve, by rejection."""
    top = spec.h_max
    out = np.empty((m, 2))
    filled = 0
    while filled < m:
        batch = max(2 * (m - filled), 1000)
        xs = spec.x_lo + (spec.x_hi - spec.x_lo) * rng.random(batch)
        ys = top * rng.random(batch)
        keep = ys <= np.array([spec.h(x) for x in xs])
        take = min(int(keep.sum()), m - filled)
        pts = np.column_stack([xs[keep][:take], ys[keep][:take]])
        out[filled:filled + take] = pts
        filled += take
    return out


def lmm_joint_precision_mean_cov(model, lambda_gamma: float,
                                 lambda_e: float) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of (beta, gamma) by solving the full joint precision."""
    X, Z, y = model.X, model.Z, model.y
    p, g = model.p, model.g
    sb_inv = np.linalg.inv(model.sigma_beta)
    le, lg = lambda_e, lambda_gamma
    prec = np.zeros((p + g, p + g))
    prec[:p, :p] = le * X.T @ X + sb_inv
    prec[:p, p:] = le * X.T @ Z
    prec[p:, :p] = le * Z.T @ X
    prec[p:, p:] = le * Z.T @ Z + lg * np.eye(g)
    shift = np.concatenate([le * X.T @ y + sb_inv @ model.mu_beta, le * Z.T @ y])
    cov = np.linalg.inv(prec)
    return cov @ shift, cov


def random_small_lmm(rng: np.random.Generator):
    """A random well-posed mixed model with p <= 3, g <= 5, n <= 20."""
    from cyclicmc.samplers import LmmModel

    n = int(rng.integers(6, 21))
    p = int(rng.integers(1, 4))
    g = int(rng.integers(1, 6))
    subj = rng.integers(0, g, size=n)
    subj[:g] = np.arange(g)
    Z = np.zeros((n, g))
    Z[np.arange(n), subj] = 1.0
    A = rng.standard_normal((p, p))
    return LmmModel(
        y=rng.standard_normal(n),
        X=rng.standard_normal((n, p)),
        Z=Z,
        mu_beta=rng.standard_normal(p),
        sigma_beta=A @ A.T + p * np.eye(p),
        a_gamma=1.0,
        b_gamma=1.0,
        a_e=1.0,
        b_e=1.0,
        k1=3,
    )


def ks_two_sample(a: np.ndarray, b: np.ndarray) -> float:
    """Two-sample Kolmogorov-Smirnov statistic."""
    a, b = np.sort(a), np.sort(b)
    grid = np.concatenate([a, b])
    ca = np.searchsorted(a, grid, side="right") / a.size
    cb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(ca - cb)))


def ks_critical(n1: int, n2: int, alpha: float = 0.01) -> float:
    """Asymptotic two-sample KS critical value (1.628 at the 1% level)."""
    coeff = {0.10: 1.224, 0.05: 1.358, 0.01: 1.628}[alpha]
    return coeff * np.sqrt((n1 + n2) / (n1 * n2))
