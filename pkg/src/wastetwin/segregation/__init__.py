"""Robotic sorting cell: classifier model, planar calibration, arm kinematics,
and the pick-place line that feeds biodegradable mass to the digestor."""

from .homography import Homography, fit_homography, pixel_to_world
from .kinematics import ArmModel, Pose, default_arm, forward_kinematics, inverse_kinematics
from .sortline import SortReport, StreamConfig, run_sortline
from .vision import (
    ClassifierModel,
    Detection,
    WasteClass,
    accuracy,
    classify,
    classify_batch,
    diagonal_model,
)

__all__ = [
    "ArmModel",
    "ClassifierModel",
    "Detection",
    "Homography",
    "Pose",
    "SortReport",
    "StreamConfig",
    "WasteClass",
    "accuracy",
    "classify",
    "classify_batch",
    "default_arm",
    "diagonal_model",
    "fit_homography",
    "forward_kinematics",
    "inverse_kinematics",
    "pixel_to_world",
    "run_sortline",
]
