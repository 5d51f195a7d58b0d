"""Diffusion-limit experiments for randomly forced kinetic equations."""

from ._core import (
    ConfigError,
    Experiment,
    KinlimError,
    __version__,
    diffusion_matrix,
    integrated_autocovariance,
    sobolev_distance,
)

__all__ = [
    "ConfigError",
    "Experiment",
    "KinlimError",
    "__version__",
    "diffusion_matrix",
    "integrated_autocovariance",
    "sobolev_distance",
]
