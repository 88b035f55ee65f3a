"""Covariance estimation for 3D point-to-plane ICP."""

from ._core import (
    Model,
    __version__,
    adjoint,
    censi_covariance,
    compound_covariance,
    describe_pair,
    enumerate_pairs,
    exp_map,
    generate_scene,
    icp,
    kl_divergence,
    log_map,
    mahalanobis,
    sample_covariance,
    train,
)

__all__ = [
    "Model",
    "__version__",
    "adjoint",
    "censi_covariance",
    "compound_covariance",
    "describe_pair",
    "enumerate_pairs",
    "exp_map",
    "generate_scene",
    "icp",
    "kl_divergence",
    "log_map",
    "mahalanobis",
    "sample_covariance",
    "train",
]
