"""Homogeneous 4x4 transforms and camera math shared by both render paths.

Conventions, used everywhere in this package:

* Matrices are row-major ``(4, 4)`` float64 arrays that act on column
  vectors: ``clip = C @ [x, y, z, 1]^T``.
* Camera space is right-handed with the camera looking down ``-z`` and
  ``y`` up.
* NDC is the unit cube with ``x, y, z`` in ``[-1, 1]``; the near plane maps
  to ``z = -1``, the far plane to ``z = +1``.
* The composed transform is built in the order projection @ view @ model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "CameraSpec",
    "compose_mvp",
    "to_clip",
    "perspective",
    "look_at",
    "identity",
    "translation",
    "scaling",
    "rotation_axis",
    "rotation_euler_xyz",
    "model_matrix",
    "normal_matrix",
]


@dataclass(frozen=True)
class CameraSpec:
    """Camera pose and intrinsics for one rendered view.

    ``eye``/``target``/``up`` are world-space 3-vectors, ``fov`` is the
    vertical field of view in radians, ``near``/``far`` are positive clip
    distances and ``width``/``height`` the image size in pixels.
    """

    eye: tuple[float, float, float]
    target: tuple[float, float, float]
    up: tuple[float, float, float]
    fov: float
    near: float
    far: float
    width: int
    height: int

    def __post_init__(self):
        if not (0.0 < self.fov < math.pi):
            raise ValueError(f"fov must lie in (0, pi), got {self.fov}")
        if not (0.0 < self.near < self.far):
            raise ValueError(f"need 0 < near < far, got near={self.near} far={self.far}")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image dimensions must be positive")
        fwd = np.asarray(self.target, float) - np.asarray(self.eye, float)
        up = np.asarray(self.up, float)
        if np.linalg.norm(np.cross(fwd, up)) < 1e-12:
            raise ValueError("up vector is parallel to the view direction")

    @property
    def aspect(self) -> float:
        return self.width / self.height

    def with_eye(self, eye) -> "CameraSpec":
        return CameraSpec(tuple(np.asarray(eye, float)), self.target, self.up,
                          self.fov, self.near, self.far, self.width, self.height)


def identity() -> np.ndarray:
    return np.eye(4)


def compose_mvp(projection: np.ndarray, view: np.ndarray, model: np.ndarray) -> np.ndarray:
    """Compose the projection, view and model matrices, in that order."""
    p = np.asarray(projection, float)
    v = np.asarray(view, float)
    m = np.asarray(model, float)
    if p.shape != (4, 4) or v.shape != (4, 4) or m.shape != (4, 4):
        raise ValueError("compose_mvp expects three 4x4 matrices")
    return p @ v @ m


def to_clip(mvp: np.ndarray, vertex: np.ndarray) -> np.ndarray:
    """Map an object-space point to clip space. No perspective division."""
    v = np.asarray(vertex, float)
    return np.asarray(mvp, float) @ np.array([v[0], v[1], v[2], 1.0])


def perspective(camera: CameraSpec) -> np.ndarray:
    """Right-handed perspective projection for the given camera.

    Maps camera-space ``z = -near`` to NDC ``z = -1`` and ``z = -far`` to
    NDC ``z = +1`` after perspective division.
    """
    f = 1.0 / math.tan(camera.fov / 2.0)
    near, far = camera.near, camera.far
    p = np.zeros((4, 4))
    p[0, 0] = f / camera.aspect
    p[1, 1] = f
    p[2, 2] = (far + near) / (near - far)
    p[2, 3] = 2.0 * far * near / (near - far)
    p[3, 2] = -1.0
    return p


def look_at(camera: CameraSpec) -> np.ndarray:
    """World-to-camera rigid transform; the camera looks down ``-z``."""
    eye = np.asarray(camera.eye, float)
    fwd = np.asarray(camera.target, float) - eye
    fwd = fwd / np.linalg.norm(fwd)
    right = np.cross(fwd, np.asarray(camera.up, float))
    norm = np.linalg.norm(right)
    if norm < 1e-12:
        raise ValueError("degenerate up vector")
    right = right / norm
    up = np.cross(right, fwd)
    view = np.eye(4)
    view[0, :3] = right
    view[1, :3] = up
    view[2, :3] = -fwd
    view[:3, 3] = -view[:3, :3] @ eye
    return view


def translation(offset) -> np.ndarray:
    t = np.eye(4)
    t[:3, 3] = np.asarray(offset, float)
    return t


def scaling(factors) -> np.ndarray:
    f = np.asarray(factors, float)
    if f.ndim == 0:
        f = np.full(3, float(f))
    s = np.eye(4)
    s[0, 0], s[1, 1], s[2, 2] = f
    return s


def rotation_axis(axis, angle: float) -> np.ndarray:
    """Rotation about an arbitrary axis (Rodrigues), as a 4x4 matrix."""
    a = np.asarray(axis, float)
    n = np.linalg.norm(a)
    if n < 1e-12:
        raise ValueError("rotation axis must be nonzero")
    x, y, z = a / n
    c, s = math.cos(angle), math.sin(angle)
    t = 1.0 - c
    r = np.eye(4)
    r[:3, :3] = [
        [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
        [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
        [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
    ]
    return r


def rotation_euler_xyz(angles) -> np.ndarray:
    """R = Rz @ Ry @ Rx for intrinsic x, y, z rotation angles in radians."""
    rx, ry, rz = (float(a) for a in angles)
    return (rotation_axis((0, 0, 1), rz)
            @ rotation_axis((0, 1, 0), ry)
            @ rotation_axis((1, 0, 0), rx))


def model_matrix(translation_xyz=(0.0, 0.0, 0.0), rotation_xyz=(0.0, 0.0, 0.0),
                 scale=1.0) -> np.ndarray:
    """Object-to-world transform: translate @ rotate @ scale."""
    return translation(translation_xyz) @ rotation_euler_xyz(rotation_xyz) @ scaling(scale)


def normal_matrix(model: np.ndarray) -> np.ndarray:
    """3x3 inverse-transpose of the model's linear part, for normals."""
    linear = np.asarray(model, float)[:3, :3]
    return np.linalg.inv(linear).T
