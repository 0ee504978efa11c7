"""Hierarchical TDLAS temperature imaging (C++ core)."""

from ._lastomo import (
    LastomoError,
    Model,
    Pipeline,
    add_noise,
    loss_l2,
    network_layers,
    noise_sigma,
    parse_snr_list,
    run_cli,
    spearman,
)

__all__ = [
    "LastomoError",
    "Model",
    "Pipeline",
    "add_noise",
    "loss_l2",
    "network_layers",
    "noise_sigma",
    "parse_snr_list",
    "run_cli",
    "spearman",
]
