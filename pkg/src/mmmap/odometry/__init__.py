"""Lidar/IMU/GNSS odometry with dynamic-point removal."""
from .dynamic import dynamic_point_mask, remove_dynamic_points
from .estimator import OdometryEstimator, OdometryParams, PoseEstimate, estimate_odometry
from .icp import RegistrationError, register_scans, rigid_align
from .ukf import (
    CovarianceError,
    MeasurementSample,
    NavState,
    UKFParams,
    fuse_measurement,
    make_state,
    predict_state,
)

__all__ = [
    "CovarianceError", "MeasurementSample", "NavState", "OdometryEstimator", "OdometryParams",
    "PoseEstimate", "RegistrationError", "UKFParams", "dynamic_point_mask", "estimate_odometry",
    "fuse_measurement", "make_state", "predict_state", "register_scans", "remove_dynamic_points",
    "rigid_align",
]
