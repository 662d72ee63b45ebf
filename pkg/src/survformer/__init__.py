"""Discrete-time survival analysis with competing events: an attention
encoder over tabular covariates trained with a propensity-debiased
piecewise-constant-hazard loss and auxiliary task heads, evaluated by
censoring-weighted time-dependent concordance."""

__version__ = "0.1.0"

from .autodiff import Tensor, backward, matmul, selu, softmax_rows, softplus
from .data import (
    ColumnSpec,
    CovariateSchema,
    SurvivalRecord,
    SyntheticSpec,
    TimeGrid,
    build_time_grid,
    load_csv,
    split,
    synthesize,
)
from .evaluation import (
    SurvivalCurve,
    ctd,
    km_censoring,
    quantile_horizons,
    survival_from_hazards,
)
from .losses import AnnealSchedule, LossBreakdown, ips_loss, naive_competing_loss, pch_loss
from .model import ModelConfig, SurvivalTransformer, load_checkpoint, save_checkpoint
from .optim import Adam
from .propensity import PropensityModel
from .training import TrainConfig, TrainHistory, evaluate, predict, train

__all__ = [
    "Adam",
    "AnnealSchedule",
    "ColumnSpec",
    "CovariateSchema",
    "LossBreakdown",
    "ModelConfig",
    "PropensityModel",
    "SurvivalCurve",
    "SurvivalRecord",
    "SurvivalTransformer",
    "SyntheticSpec",
    "Tensor",
    "TimeGrid",
    "TrainConfig",
    "TrainHistory",
    "backward",
    "build_time_grid",
    "ctd",
    "evaluate",
    "ips_loss",
    "km_censoring",
    "load_checkpoint",
    "load_csv",
    "matmul",
    "naive_competing_loss",
    "pch_loss",
    "predict",
    "quantile_horizons",
    "save_checkpoint",
    "selu",
    "softmax_rows",
    "softplus",
    "split",
    "survival_from_hazards",
    "synthesize",
    "train",
]
