"""Density-adaptive probabilistic registration of multiple 3D point sets."""

__version__ = "0.1.0"

from .geom import PointCloud, RigidTransform, apply_transform, compose, geodesic_rotation_error, translation_error
from .mixture import GmmModel, RegistrationConfig, RegistrationResult, register, relative_transform
from .weights import ObservationWeights, WeightMethod, compute_weights

__all__ = [
    "PointCloud", "RigidTransform", "apply_transform", "compose", "geodesic_rotation_error",
    "translation_error", "GmmModel", "RegistrationConfig", "RegistrationResult", "register",
    "relative_transform", "ObservationWeights", "WeightMethod", "compute_weights",
]
