"""Maximum weighted loss discrepancy: estimation, variance bounds and
variance-regularized logistic regression."""
from .core import (
    ExplicitSet,
    GroupMask,
    LargeGroup,
    LossVector,
    PowerK,
    SizePower,
    Unit,
    group_fraction,
    group_mean,
    weighted_discrepancy,
)
from .estimator import (
    ConvergenceBound,
    MwldResult,
    Side,
    brute_force_mwld,
    convergence_error_bound,
    discrepancy_by_size,
    empirical_mwld,
    group_loss_bound,
    large_group_mwld,
    max_discrepancy_at_size,
    mwld,
    mwld_over_explicit_groups,
    shifted_population_loss,
)
from .variance import (
    VarianceSandwich,
    coarse_deviation,
    coarse_loss_variance,
    coarse_mwld,
    conditional_coarse_loss_variance,
    conditional_loss_variance,
    loss_variance,
    maurer_deviation,
    sandwich,
    unbiased_variance,
    variance_upper_bound_general_L,
)
from .model import LOG_LOSS_BOUND, LinearModel, log_loss, log_loss_gradient, predict_probability, zero_one_loss
from .data import (
    DatasetSchema,
    Discretizer,
    TabularDataset,
    load_csv,
    load_schema,
    split_train_test,
    synth_discrete_loss_population,
    synth_two_group,
    write_csv,
)
from .trainer import CLV_LAMBDA_GRID, ETA_GRID, LAMBDA_GRID, Objective, TrainConfig, fit, lambda_sweep

__version__ = "0.1.0"
