"""Rigid transforms, pinhole projection and projection validity constraints."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

_ORTHO_TOL = 1e-9


class ImagePoint(NamedTuple):
    u: float
    v: float
    depth: float


@dataclass(frozen=True)
class SE3Pose:
    """Rigid transform: rotation (3x3, det +1) plus translation in meters."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        t = np.asarray(self.translation, dtype=float).reshape(3)
        if not np.all(np.isfinite(r)) or not np.all(np.isfinite(t)):
            raise ValueError("non-finite pose components")
        if not np.allclose(r @ r.T, np.eye(3), atol=1e-8):
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > 1e-8:
            raise ValueError("rotation determinant is not +1")
        r.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "SE3Pose":
        return SE3Pose(np.eye(3), np.zeros(3))

    @staticmethod
    def from_rt(rotation, translation) -> "SE3Pose":
        return SE3Pose(np.asarray(rotation, float), np.asarray(translation, float))

    @staticmethod
    def rot_z(angle: float, translation=(0.0, 0.0, 0.0)) -> "SE3Pose":
        c, s = np.cos(angle), np.sin(angle)
        r = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        return SE3Pose(r, np.asarray(translation, float))

    def compose(self, other: "SE3Pose") -> "SE3Pose":
        """Result applies `other` first, then `self`."""
        return SE3Pose(self.rotation @ other.rotation,
                       self.rotation @ other.translation + self.translation)

    def inverse(self) -> "SE3Pose":
        rt = self.rotation.T
        return SE3Pose(rt, -rt @ self.translation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform points of shape (3,) or (N, 3)."""
        p = np.asarray(points, dtype=float)
        if p.ndim == 1:
            return self.rotation @ p + self.translation
        return p @ self.rotation.T + self.translation

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    @staticmethod
    def from_matrix(m) -> "SE3Pose":
        m = np.asarray(m, dtype=float).reshape(4, 4)
        return SE3Pose(m[:3, :3], m[:3, 3])

    def to_flat(self) -> list[float]:
        """16 row-major floats (serialization convention)."""
        return [float(x) for x in self.matrix().reshape(-1)]

    @staticmethod
    def from_flat(values) -> "SE3Pose":
        return SE3Pose.from_matrix(np.asarray(values, dtype=float).reshape(4, 4))


def se3_compose(a: SE3Pose, b: SE3Pose) -> SE3Pose:
    return a.compose(b)


@dataclass(frozen=True)
class CameraModel:
    """Ideal pinhole camera with a LiDAR-to-camera extrinsic.

    d_min and boundary_margin are not given by any standard; they are
    configuration (defaults 1.0 m / 2 px) and are recorded in run reports.
    """

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    extrinsic: SE3Pose = field(default_factory=SE3Pose.identity)
    d_min: float = 1.0
    boundary_margin: float = 2.0

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if self.d_min <= 0:
            raise ValueError("d_min must be positive")
        if not (0 <= self.boundary_margin < min(self.width, self.height) / 2):
            raise ValueError("boundary margin out of range")

    def to_json(self) -> dict:
        return {
            "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
            "width": self.width, "height": self.height,
            "d_min": self.d_min, "boundary_margin": self.boundary_margin,
            "extrinsic": self.extrinsic.to_flat(),
        }

    @staticmethod
    def from_json(d: dict) -> "CameraModel":
        return CameraModel(
            fx=float(d["fx"]), fy=float(d["fy"]),
            cx=float(d["cx"]), cy=float(d["cy"]),
            width=int(d["width"]), height=int(d["height"]),
            extrinsic=SE3Pose.from_flat(d["extrinsic"]),
            d_min=float(d.get("d_min", 1.0)),
            boundary_margin=float(d.get("boundary_margin", 2.0)),
        )

    def scaled(self, scale: float) -> "CameraModel":
        """Jointly scale intrinsics and resolution (image-resize analogue)."""
        return CameraModel(
            fx=self.fx * scale, fy=self.fy * scale,
            cx=self.cx * scale, cy=self.cy * scale,
            width=int(round(self.width * scale)),
            height=int(round(self.height * scale)),
            extrinsic=self.extrinsic,
            d_min=self.d_min, boundary_margin=self.boundary_margin,
        )


def project_points(points: np.ndarray, cam: CameraModel):
    """Project LiDAR-frame points; returns (uv (N,2), depth (N,)).

    Points behind the camera produce finite pixels with negative depth;
    z == 0 yields non-finite pixels. Both are rejected downstream by
    check_constraints, keeping filtering a single code path.
    """
    p = np.atleast_2d(np.asarray(points, dtype=float))
    pc = cam.extrinsic.apply(p)
    z = pc[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = cam.fx * pc[:, 0] / z + cam.cx
        v = cam.fy * pc[:, 1] / z + cam.cy
    return np.stack([u, v], axis=1), z


def project_point(point, cam: CameraModel) -> ImagePoint:
    uv, z = project_points(np.asarray(point, float).reshape(1, 3), cam)
    return ImagePoint(float(uv[0, 0]), float(uv[0, 1]), float(z[0]))


def check_constraints(uv: np.ndarray, depth: np.ndarray, cam: CameraModel) -> np.ndarray:
    """Validity mask: depth > d_min, b <= u < W-b, b <= v < H-b (right edges exclusive)."""
    uv = np.atleast_2d(np.asarray(uv, dtype=float))
    depth = np.atleast_1d(np.asarray(depth, dtype=float))
    b = cam.boundary_margin
    with np.errstate(invalid="ignore"):
        ok = (depth > cam.d_min)
        ok &= (uv[:, 0] >= b) & (uv[:, 0] < cam.width - b)
        ok &= (uv[:, 1] >= b) & (uv[:, 1] < cam.height - b)
    return ok


def check_constraint(ip: ImagePoint, cam: CameraModel) -> bool:
    return bool(check_constraints(np.array([[ip.u, ip.v]]), np.array([ip.depth]), cam)[0])


def transform_across_frames(points, g_src: SE3Pose, g_dst: SE3Pose) -> np.ndarray:
    """Re-express points given in the g_src frame in the g_dst frame."""
    return g_dst.inverse().compose(g_src).apply(points)


def save_camera_rig(cams: dict[str, CameraModel], path) -> None:
    data = {cid: cam.to_json() for cid, cam in sorted(cams.items())}
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)


def load_camera_rig(path) -> dict[str, CameraModel]:
    with open(path) as fh:
        data = json.load(fh)
    return {cid: CameraModel.from_json(d) for cid, d in data.items()}
