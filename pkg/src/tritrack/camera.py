"""Weak-perspective lifting and the 90-d space-time vector.

A square crop of side ``b`` centered at ``(c_x, c_y)`` inside a ``W x H``
image, together with the per-crop camera ``(s, t_x, t_y)`` and an assumed
focal length ``f``, determines an approximate view-space translation

    T = [ t_x + (2*c_x - W)/(s*b),  t_y + (2*c_y - H)/(s*b),  2*f/(s*b) ]

The 15 person-centric 3D keypoints shifted by T, flattened joint-major and
divided by ``z_norm``, followed by a 45-d sinusoidal frame encoding, make up
the space-time vector. Translations are scale-ambiguous: only relative
positions within one video are meaningful.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embeddings import SPACETIME_DIM
from .errors import DegenerateCameraError, DimensionError

DEFAULT_FOCAL = 5000.0
DEFAULT_Z_NORM = 10.0
NUM_JOINTS = 15
KEYPOINT_DIM = NUM_JOINTS * 3
TIME_DIM = SPACETIME_DIM - KEYPOINT_DIM  # 45

# Canonical joint order used everywhere keypoints are flattened
# (joint-major, x/y/z within each joint). Producers must match it.
JOINT_NAMES = (
    "pelvis", "neck", "head",
    "l_shoulder", "l_elbow", "l_wrist",
    "r_shoulder", "r_elbow", "r_wrist",
    "l_hip", "l_knee", "l_ankle",
    "r_hip", "r_knee", "r_ankle",
)


@dataclass(frozen=True)
class CameraCrop:
    """Bounding-box crop plus weak-perspective camera parameters."""

    image_w: float
    image_h: float
    center_x: float
    center_y: float
    box_size: float
    cam_scale: float
    cam_tx: float
    cam_ty: float
    focal: float = DEFAULT_FOCAL

    def __post_init__(self):
        vals = (self.image_w, self.image_h, self.center_x, self.center_y,
                self.box_size, self.cam_scale, self.cam_tx, self.cam_ty,
                self.focal)
        if not all(np.isfinite(v) for v in vals):
            raise DimensionError("crop parameters must be finite")
        if self.image_w <= 0 or self.image_h <= 0 or self.box_size <= 0:
            raise DimensionError("image and box dimensions must be positive")
        if self.cam_scale <= 0 or self.focal <= 0:
            raise DimensionError("camera scale and focal length must be positive")

    def as_array(self) -> np.ndarray:
        """The nine parameters in wire order (W, H, cx, cy, b, s, tx, ty, f)."""
        return np.array([self.image_w, self.image_h, self.center_x,
                         self.center_y, self.box_size, self.cam_scale,
                         self.cam_tx, self.cam_ty, self.focal])

    @classmethod
    def from_array(cls, values) -> "CameraCrop":
        v = np.asarray(values, dtype=np.float64)
        if v.shape != (9,):
            raise DimensionError(f"crop array must have 9 entries, got {v.shape}")
        return cls(*v.tolist())


def local_keypoints(joints) -> np.ndarray:
    """Validate a 15 x 3 person-centric keypoint array."""
    j = np.asarray(joints, dtype=np.float64)
    if j.shape != (NUM_JOINTS, 3):
        raise DimensionError(f"keypoints must be ({NUM_JOINTS}, 3), got {j.shape}")
    if not np.all(np.isfinite(j)):
        raise DimensionError("keypoints contain non-finite values")
    return j


def lift_translation(crop: CameraCrop) -> np.ndarray:
    """View-space translation of the person described by ``crop``.

    Returns a length-3 float64 array (x, y, z). Raises
    :class:`DegenerateCameraError` when ``s*b`` vanishes instead of
    producing infinities.
    """
    sb = crop.cam_scale * crop.box_size
    if sb == 0.0 or not np.isfinite(sb):
        raise DegenerateCameraError(f"degenerate crop: s*b = {sb}")
    return np.array([
        crop.cam_tx + (2.0 * crop.center_x - crop.image_w) / sb,
        crop.cam_ty + (2.0 * crop.center_y - crop.image_h) / sb,
        2.0 * crop.focal / sb,
    ])


def place_keypoints(local, t) -> np.ndarray:
    """Shift person-centric keypoints into view space: ``out[j] = local[j] + t``."""
    local = local_keypoints(local)
    t = np.asarray(t, dtype=np.float64)
    if t.shape != (3,):
        raise DimensionError(f"translation must have shape (3,), got {t.shape}")
    if not np.all(np.isfinite(t)):
        raise DimensionError("translation contains non-finite values")
    return local + t


def temporal_encode(frame: int, dims: int = TIME_DIM) -> np.ndarray:
    """Sinusoidal encoding of a frame index.

    Index 2i holds sin(t / 10000^(2i/dims)) and index 2i+1 holds
    cos(t / 10000^(2i/dims)). With the default odd dims=45 the last index
    (44) is even and takes the sin branch.
    """
    if frame < 0:
        raise DimensionError("frame index must be >= 0")
    idx = np.arange(dims)
    angles = frame / np.power(10000.0, 2.0 * (idx // 2) / dims)
    out = np.where(idx % 2 == 0, np.sin(angles), np.cos(angles))
    return out


def build_spacetime(kps_view, frame: int,
                    z_norm: float = DEFAULT_Z_NORM) -> np.ndarray:
    """Assemble the 90-d space-time vector.

    First 45 entries: view-space keypoints flattened joint-major and divided
    by ``z_norm`` so they stay commensurate with the O(1) temporal entries.
    Last 45 entries: :func:`temporal_encode` of the frame index.
    """
    kps = np.asarray(kps_view, dtype=np.float64)
    if kps.shape != (NUM_JOINTS, 3):
        raise DimensionError(f"keypoints must be ({NUM_JOINTS}, 3), got {kps.shape}")
    if not np.all(np.isfinite(kps)):
        raise DimensionError("keypoints contain non-finite values")
    if z_norm <= 0 or not np.isfinite(z_norm):
        raise DimensionError("z_norm must be positive and finite")
    return np.concatenate([kps.reshape(-1) / z_norm, temporal_encode(frame)])
