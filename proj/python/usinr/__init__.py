"""Aorta surface reconstruction from robotic ultrasound sweeps."""

from ._usinr import (
    Config,
    ConfigError,
    DataError,
    NumericError,
    baseline,
    calibration_matrix,
    convex_hull_2d,
    estimate_normals,
    filter,
    furthest_point_sampling,
    gate,
    gate_signal,
    gate_slices,
    is_closed,
    laplacian_roughness,
    largest_connected_component,
    mesh,
    metrics,
    pipeline,
    poisson_surface,
    read_ply,
    simulate,
    train,
    write_ply,
)

__all__ = [
    "Config",
    "ConfigError",
    "DataError",
    "NumericError",
    "baseline",
    "calibration_matrix",
    "convex_hull_2d",
    "estimate_normals",
    "filter",
    "furthest_point_sampling",
    "gate",
    "gate_signal",
    "gate_slices",
    "is_closed",
    "laplacian_roughness",
    "largest_connected_component",
    "mesh",
    "metrics",
    "pipeline",
    "poisson_surface",
    "read_ply",
    "simulate",
    "train",
    "write_ply",
]
