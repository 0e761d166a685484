"""Reference samplers: area-under-curve Gibbs, Bayesian LMM Gibbs, synthetic oracles."""

from importlib import resources

from .curve import (
    CurveRegionSpec,
    InvalidState,
    RootFailure,
    exp_curve_spec,
    level_set_interval,
    make_curve_sampler,
    x_step,
    y_step,
)
from .lmm import (
    LmmModel,
    LmmState,
    ParseError,
    SchemaError,
    beta_gamma_mean_cov,
    beta_gamma_step,
    lambda_step,
    lmm_from_json,
    lmm_to_json,
    load_orthodont,
    make_lmm_sampler,
)
from .synthetic import (
    THREE_STATE_P,
    FlipChainSpec,
    ar1_asymptotic_var,
    ar1_stationary_var,
    flip_asymptotic_var,
    flip_block_fsum,
    flip_block_minorized,
    make_ar1_sampler,
    make_flip_chain,
    three_state_stationary,
)

__all__ = [
    "CurveRegionSpec", "InvalidState", "RootFailure", "exp_curve_spec",
    "level_set_interval", "make_curve_sampler", "x_step", "y_step",
    "LmmModel", "LmmState", "ParseError", "SchemaError",
    "beta_gamma_mean_cov", "beta_gamma_step", "lambda_step",
    "lmm_from_json", "lmm_to_json", "load_orthodont", "make_lmm_sampler",
    "FlipChainSpec", "THREE_STATE_P", "ar1_asymptotic_var",
    "ar1_stationary_var", "flip_asymptotic_var", "flip_block_fsum",
    "flip_block_minorized", "make_ar1_sampler", "make_flip_chain",
    "three_state_stationary", "orthodont_path",
]


def orthodont_path() -> str:
    """Filesystem path of the packaged Orthodont CSV."""
    return str(resources.files(__name__).joinpath("orthodont.csv"))
