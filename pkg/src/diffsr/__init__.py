"""diffsr: split-Gibbs posterior sampling with diffusion-style priors for
block-average image super-resolution."""

from .errors import DivergenceError, NumericsError
from .forward import (
    BlockAverageOperator,
    DenseOperator,
    ImageGrid,
    LinearOperatorSVD,
    MeasurementVector,
    NoiseModel,
    block_average_adjoint,
    block_average_apply,
    block_average_v_basis,
    degrade,
    dense_operator_from_matrix,
)
from .formats import read_float_raster, read_pgm, write_float_raster, write_pgm
from .metrics import MetricReport, bicubic_upsample, metric_report, psnr, rmse, ssim
from .phantoms import PhantomSpec, generate_phantom
from .priors import (
    DiffusionSchedule,
    EdmSchedule,
    GaussianPrior,
    GmmPrior,
    MixturePosterior,
    ScoreModel,
    VeSchedule,
    VpSchedule,
    fit_gmm_prior,
    gaussian_posterior_oracle,
    gaussian_score,
    gmm_posterior_oracle,
    gmm_score,
    make_schedule,
    schedule_eval,
)
from .sampler import (
    AnnealingSchedule,
    ChainStats,
    LikelihoodStepParams,
    SamplerState,
    anneal_rho,
    likelihood_mean,
    likelihood_step,
    pnp_dm_run,
    posterior_mean_estimate,
)
from .sde import (
    ReverseSdeConfig,
    SdeTrajectory,
    dump_trajectory,
    integrate_reverse_sde,
    prior_step,
    reverse_sde_step,
    sample_prior_unconditional,
    sigma_grid,
)

__version__ = "0.1.0"

__all__ = [
    "AnnealingSchedule",
    "BlockAverageOperator",
    "ChainStats",
    "DenseOperator",
    "DiffusionSchedule",
    "DivergenceError",
    "EdmSchedule",
    "GaussianPrior",
    "GmmPrior",
    "ImageGrid",
    "LikelihoodStepParams",
    "LinearOperatorSVD",
    "MeasurementVector",
    "MetricReport",
    "MixturePosterior",
    "NoiseModel",
    "NumericsError",
    "PhantomSpec",
    "ReverseSdeConfig",
    "SamplerState",
    "ScoreModel",
    "SdeTrajectory",
    "VeSchedule",
    "VpSchedule",
    "anneal_rho",
    "bicubic_upsample",
    "block_average_adjoint",
    "block_average_apply",
    "block_average_v_basis",
    "degrade",
    "dense_operator_from_matrix",
    "dump_trajectory",
    "fit_gmm_prior",
    "gaussian_posterior_oracle",
    "gaussian_score",
    "generate_phantom",
    "gmm_posterior_oracle",
    "gmm_score",
    "integrate_reverse_sde",
    "likelihood_mean",
    "likelihood_step",
    "make_schedule",
    "metric_report",
    "pnp_dm_run",
    "posterior_mean_estimate",
    "prior_step",
    "psnr",
    "read_float_raster",
    "read_pgm",
    "reverse_sde_step",
    "rmse",
    "sample_prior_unconditional",
    "schedule_eval",
    "sigma_grid",
    "ssim",
    "write_float_raster",
    "write_pgm",
]
