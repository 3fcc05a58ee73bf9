"""Latent-map Gaussian processes for multi-source data fusion."""

from ._lmgp import (
    KohModel,
    LmgpError,
    Model,
    Source,
    benchmark,
    evaluate,
    fit,
    koh_fit,
    problem_info,
    problems,
    sobol,
    table_rrmse,
)

load = Model.load

__all__ = [
    "KohModel",
    "LmgpError",
    "Model",
    "Source",
    "benchmark",
    "evaluate",
    "fit",
    "koh_fit",
    "load",
    "problem_info",
    "problems",
    "sobol",
    "table_rrmse",
]
