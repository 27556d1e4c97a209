"""Dual-scale motion forecasting: graph construction, decoders, metrics and training."""

from ._core import (
    DspError,
    __version__,
    brier_min_fde,
    da_graph,
    default_config,
    evaluate,
    ls_graph,
    min_ade,
    min_fde,
    miss_rate,
    nms_goals,
    normalize,
    predict,
    synth_scenario,
    train,
    weighted_kmeans,
)

__all__ = [
    "DspError",
    "__version__",
    "brier_min_fde",
    "da_graph",
    "default_config",
    "evaluate",
    "ls_graph",
    "min_ade",
    "min_fde",
    "miss_rate",
    "nms_goals",
    "normalize",
    "predict",
    "synth_scenario",
    "train",
    "weighted_kmeans",
]
