"""Python bindings for the leapvo visual odometry core.

Trajectories are arrays of TUM rows (timestamp, tx, ty, tz, qx, qy, qz, qw).
Scenes travel as JSON text.
"""

import json

from ._core import (
    LeapvoError,
    ate_rmse,
    bce_loss,
    build_scale_matrix,
    cauchy_logpdf,
    fit_dominant_motion,
    read_tum,
    render_images,
    rpe,
    sample_keypoints,
    sampson_distance,
    scene_trajectory,
    se3_exp,
    se3_log,
    track_nll,
    write_tum,
)
from . import _core


def generate_scene(config=None, seed=0):
    """Scene JSON text for a scene config given as a dict."""
    return _core.generate_scene(json.dumps(config) if config else "", seed)


def run_sequence(scene_json, config=None):
    """Estimated trajectory for a scene, with VO config keys given as a dict."""
    return _core.run_sequence(scene_json, json.dumps(config) if config else "")


def run_images(image_dir, intrinsics, config=None):
    """Estimated trajectory for a directory of PNG frames."""
    return _core.run_images(str(image_dir), intrinsics, json.dumps(config) if config else "")


__all__ = [
    "LeapvoError",
    "ate_rmse",
    "bce_loss",
    "build_scale_matrix",
    "cauchy_logpdf",
    "fit_dominant_motion",
    "generate_scene",
    "read_tum",
    "render_images",
    "rpe",
    "run_images",
    "run_sequence",
    "sample_keypoints",
    "sampson_distance",
    "scene_trajectory",
    "se3_exp",
    "se3_log",
    "track_nll",
    "write_tum",
]
