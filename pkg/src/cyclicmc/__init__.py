"""Uncertainty assessment for cyclic (time in-homogeneous) MCMC samplers.

Run k rotating kernels with `chain`, estimate the asymptotic covariance of
the sample mean with `estimators` (batch means, phase-indexed
autocovariances, ESS/TESS, Hotelling regions), terminate at a target
confidence-region volume with `stopping`, and verify regeneration
identities with `regen`. Reference samplers live in `samplers`; `cli` is
the experiment harness.
"""

from . import chain, estimators, numkit, regen, samplers, stopping

__version__ = "0.1.0"

__all__ = ["chain", "estimators", "numkit", "regen", "samplers", "stopping",
           "__version__"]
