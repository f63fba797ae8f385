"""Finite-strain anisotropic damage with micromorphic regularization."""

from .damage import InternalState, LocalNewtonDiverged, MaterialParams, PointResponse, point_update
from .hyperelastic import ElasticConstants, NeoHooke, NonPositiveJacobian
from .micromorphic import ModelKind
from .scenarios import ConfigError, StudyConfig, StudyResult, run_study

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "ElasticConstants", "InternalState", "LocalNewtonDiverged",
    "MaterialParams", "ModelKind", "NeoHooke", "NonPositiveJacobian", "PointResponse",
    "StudyConfig", "StudyResult", "point_update", "run_study",
]
