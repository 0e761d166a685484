"""Gibbs sampler for a Bayesian linear mixed model with a random intercept.

Model: y = X beta + Z gamma + e, with gamma_i ~ N(0, 1/lambda_gamma) i.i.d.,
e ~ N(0, I/lambda_e), a normal prior N(mu_beta, sigma_beta) on beta, and
independent Gamma priors on the two precisions. The lambda step draws both
precisions from their Gamma full conditionals; the beta-gamma step draws
(beta, gamma) jointly from its multivariate normal full conditional using
the blockwise mean/covariance formulas built from
    A = (lambda_e X'X + sigma_beta^-1)^-1,
    B = I - lambda_e X A X',
    C = (lambda_e Z'B Z + lambda_gamma I)^-1,
where Z'B Z is accumulated in its reduced form Z'Z - lambda_e Z'X A X'Z so
the n x n matrix B is never materialized.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .. import numkit
from ..chain import CyclicSampler

__all__ = [
    "ParseError",
    "SchemaError",
    "LmmModel",
    "LmmState",
    "lambda_step",
    "beta_gamma_step",
    "make_lmm_sampler",
    "load_orthodont",
    "lmm_to_json",
    "lmm_from_json",
]


class ParseError(Exception):
    """A data row could not be interpreted; carries the 1-based row number."""

    def __init__(self, row: int, message: str):
        super().__init__(f"row {row}: {message}")
        self.row = row


class SchemaError(Exception):
    """Input file is missing required columns."""

    def __init__(self, missing):
        super().__init__(f"missing columns: {', '.join(sorted(missing))}")
        self.missing = sorted(missing)


@dataclass
class LmmModel:
    """Data, design matrices and hyperparameters of the mixed model.

    Z must be a 0/1 membership matrix with exactly one 1 per row; X must
    have full column rank. k1 is the number of consecutive lambda steps
    per sampler cycle.
    """

    y: np.ndarray
    X: np.ndarray
    Z: np.ndarray
    mu_beta: np.ndarray
    sigma_beta: np.ndarray
    a_gamma: float
    b_gamma: float
    a_e: float
    b_e: float
    k1: int = 3

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float).reshape(-1)
        self.X = np.asarray(self.X, dtype=float)
        self.Z = np.asarray(self.Z, dtype=float)
        self.mu_beta = np.asarray(self.mu_beta, dtype=float).reshape(-1)
        self.sigma_beta = np.asarray(self.sigma_beta, dtype=float)
        n, p = self.X.shape
        g = self.Z.shape[1]
        if self.y.shape[0] != n or self.Z.shape[0] != n:
            raise ValueError("y, X and Z disagree on the number of observations")
        if self.mu_beta.shape[0] != p or self.sigma_beta.shape != (p, p):
            raise ValueError("prior mean/covariance shapes do not match X")
        if not np.isin(self.Z, (0.0, 1.0)).all() or not (self.Z.sum(axis=1) == 1).all():
            raise ValueError("Z must be one-hot: entries in {0,1}, one 1 per row")
        for name in ("a_gamma", "b_gamma", "a_e", "b_e"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.k1 < 1:
            raise ValueError(f"k1 must be >= 1, got {self.k1}")

        # full column rank check doubles as the Gram cache
        self._xtx = self.X.T @ self.X
        numkit.cholesky_lower(self._xtx)
        self._sb_inv = numkit.SpdMatrix(self.sigma_beta).inverse()
        self._sb_inv_mu = self._sb_inv @ self.mu_beta
        self._xty = self.X.T @ self.y
        self._zty = self.Z.T @ self.y
        self._ztx = self.Z.T @ self.X
        self._ztz = self.Z.T @ self.Z
        self._subject = np.argmax(self.Z, axis=1)

    @property
    def n_obs(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def g(self) -> int:
        return self.Z.shape[1]


@dataclass
class LmmState:
    beta: np.ndarray
    gamma: np.ndarray
    lambda_gamma: float
    lambda_e: float

    def __post_init__(self):
        for name in ("lambda_gamma", "lambda_e"):
            v = getattr(self, name)
            if not (v > 0 and np.isfinite(v)):
                raise ValueError(f"{name} must be a positive finite precision")


def initial_state(model: LmmModel) -> LmmState:
    """Default start: beta at the prior mean, gamma at 0, unit precisions."""
    return LmmState(model.mu_beta.copy(), np.zeros(model.g), 1.0, 1.0)


def lambda_step(model: LmmModel, state: LmmState,
                rng: np.random.Generator) -> LmmState:
    """Draw both precisions from their Gamma full conditionals."""
    g_rate = model.b_gamma + 0.5 * float(state.gamma @ state.gamma)
    lam_g = numkit.gamma_sample(model.a_gamma + 0.5 * model.g, g_rate, rng)
    resid = model.y - model.X @ state.beta - state.gamma[model._subject]
    e_rate = model.b_e + 0.5 * float(resid @ resid)
    lam_e = numkit.gamma_sample(model.a_e + 0.5 * model.n_obs, e_rate, rng)
    return LmmState(state.beta, state.gamma, lam_g, lam_e)


def beta_gamma_mean_cov(model: LmmModel, lambda_gamma: float,
                        lambda_e: float) -> tuple[np.ndarray, np.ndarray]:
    """Blockwise mean and covariance of (beta, gamma) given the precisions."""
    le, lg = lambda_e, lambda_gamma
    p, g = model.p, model.g
    a_spd = numkit.SpdMatrix(le * model._xtx + model._sb_inv)
    a_mat = a_spd.inverse()
    axz = a_mat @ model._ztx.T                      # A X'Z, p x g
    c_inv = le * (model._ztz - le * model._ztx @ axz) + lg * np.eye(g)
    c_mat = numkit.SpdMatrix(c_inv).inverse()

    # w = Z'(B y - X A sigma_beta^-1 mu_beta)
    w = model._zty - le * model._ztx @ (a_mat @ model._xty) \
        - model._ztx @ (a_mat @ model._sb_inv_mu)
    mean_gamma = le * c_mat @ w
    s1 = le * model._xty + model._sb_inv_mu
    mean_beta = a_mat @ s1 - le * axz @ mean_gamma

    axz_c = axz @ c_mat
    cov = np.empty((p + g, p + g))
    cov[:p, :p] = a_mat + le * le * axz_c @ axz.T
    cov[:p, p:] = -le * axz_c
    cov[p:, :p] = cov[:p, p:].T
    cov[p:, p:] = c_mat
    return np.concatenate([mean_beta, mean_gamma]), cov


def beta_gamma_step(model: LmmModel, state: LmmState,
                    rng: np.random.Generator) -> LmmState:
    """Draw (beta, gamma) jointly from its normal full conditional."""
    mean, cov = beta_gamma_mean_cov(model, state.lambda_gamma, state.lambda_e)
    draw = numkit.mvn_sample(mean, cov, rng)
    p = model.p
    return LmmState(draw[:p], draw[p:], state.lambda_gamma, state.lambda_e)


def make_lmm_sampler(model: LmmModel,
                     f: Optional[Callable] = None) -> CyclicSampler:
    """Cyclic sampler: phases 1..k1 are lambda steps, phase k1+1 is beta-gamma.

    Default output is (last beta coefficient, lambda_gamma), d = 2; for the
    Orthodont design the last X column is the Male indicator. k1 = 1 gives
    the plain two-step Gibbs sampler.
    """
    k = model.k1 + 1

    def step(state, phase, rng):
        if phase < k:
            return lambda_step(model, state, rng)
        return beta_gamma_step(model, state, rng)

    def default_f(state):
        return (state.beta[-1], state.lambda_gamma)

    return CyclicSampler(
        k=k,
        d=2,
        step=step,
        f=default_f if f is None else f,
        init=initial_state(model),
        name=f"lmm-k{k}",
    )


# ---------------------------------------------------------------------------
# Orthodont data ingestion and model (de)serialization.
# ---------------------------------------------------------------------------

_REQUIRED_COLUMNS = ("distance", "age", "Subject", "Sex")


def load_orthodont(path, k1: int = 3) -> LmmModel:
    """Build the mixed model from an Orthodont-style CSV.

    Requires columns distance, age, Subject, Sex. Features are intercept,
    age, and a Male indicator (in that order); subjects are one-hot in
    order of first appearance. Hyperparameters follow the reference setup:
    mu_beta = 0, sigma_beta = I, all Gamma hyperparameters equal to 1.
    """
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError(_REQUIRED_COLUMNS)
        missing = set(_REQUIRED_COLUMNS) - set(reader.fieldnames)
        if missing:
            raise SchemaError(missing)
        y, feats, subj_of_row = [], [], []
        subjects: dict[str, int] = {}
        for i, rec in enumerate(reader, start=2):  # row 1 is the header
            try:
                dist = float(rec["distance"])
                age = float(rec["age"])
            except (TypeError, ValueError) as exc:
                raise ParseError(i, f"bad numeric value ({exc})") from None
            sex = (rec["Sex"] or "").strip()
            if sex not in ("Male", "Female"):
                raise ParseError(i, f"unknown Sex value {rec['Sex']!r}")
            subject = (rec["Subject"] or "").strip()
            if not subject:
                raise ParseError(i, "empty Subject")
            y.append(dist)
            feats.append([1.0, age, 1.0 if sex == "Male" else 0.0])
            subj_of_row.append(subjects.setdefault(subject, len(subjects)))
    if not y:
        raise ParseError(2, "no data rows")
    n, g = len(y), len(subjects)
    Z = np.zeros((n, g))
    Z[np.arange(n), subj_of_row] = 1.0
    return LmmModel(
        y=np.array(y),
        X=np.array(feats),
        Z=Z,
        mu_beta=np.zeros(3),
        sigma_beta=np.eye(3),
        a_gamma=1.0,
        b_gamma=1.0,
        a_e=1.0,
        b_e=1.0,
        k1=k1,
    )


def lmm_to_json(model: LmmModel) -> dict:
    """JSON-ready dict with the documented field names."""
    return {
        "y": model.y.tolist(),
        "X": model.X.tolist(),
        "Z": model.Z.tolist(),
        "mu_beta": model.mu_beta.tolist(),
        "sigma_beta": model.sigma_beta.tolist(),
        "a_gamma": model.a_gamma,
        "b_gamma": model.b_gamma,
        "a_e": model.a_e,
        "b_e": model.b_e,
        "k1": model.k1,
    }


def lmm_from_json(doc: dict) -> LmmModel:
    return LmmModel(
        y=np.array(doc["y"]),
        X=np.array(doc["X"]),
        Z=np.array(doc["Z"]),
        mu_beta=np.array(doc["mu_beta"]),
        sigma_beta=np.array(doc["sigma_beta"]),
        a_gamma=float(doc["a_gamma"]),
        b_gamma=float(doc["b_gamma"]),
        a_e=float(doc["a_e"]),
        b_e=float(doc["b_e"]),
        k1=int(doc["k1"]),
    )
