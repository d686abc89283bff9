"""Context-aware probabilistic time-series forecasting."""

from ._core import (
    DataError,
    Model,
    generate_synthetic,
    instance_normalize,
    mae,
    mase,
    mse,
    naive2,
    owa,
    patch_count,
    patchify,
    smape,
    student_t_cdf,
    student_t_logpdf,
    student_t_quantile,
)

__all__ = [
    "DataError",
    "Model",
    "generate_synthetic",
    "instance_normalize",
    "mae",
    "mase",
    "mse",
    "naive2",
    "owa",
    "patch_count",
    "patchify",
    "smape",
    "student_t_cdf",
    "student_t_logpdf",
    "student_t_quantile",
]
