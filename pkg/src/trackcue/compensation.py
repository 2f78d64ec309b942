"""Ego-induced rigid trajectories, trajectory residuals and temporal voting."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import CameraModel, SE3Pose, check_constraints, project_points
from .tracking import TrackedTrajectory


@dataclass(frozen=True)
class CompensationParams:
    tau_dyn: float = 5.0   # pixels
    n_move: int = 2        # frames of dynamic evidence required
    n_point: int = 10      # minimum moving-candidate count for retention

    def __post_init__(self):
        if self.tau_dyn <= 0:
            raise ValueError("tau_dyn must be positive")
        if self.n_move < 1:
            raise ValueError("n_move must be >= 1")
        if self.n_point < 1:
            raise ValueError("n_point must be >= 1")


@dataclass
class RigidTrajectory:
    query_id: int
    camera_id: str
    clip_start: int
    positions: np.ndarray        # (M+1, 2) pixels
    rigid_visibility: np.ndarray  # (M+1,) bool

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 2)
        self.rigid_visibility = np.asarray(self.rigid_visibility, dtype=bool).reshape(-1)


@dataclass
class MotionVote:
    query_id: int
    residuals: np.ndarray        # (M+1,) pixels
    joint_visibility: np.ndarray  # (M+1,) bool
    vote_count: int


def rigid_trajectory(point, poses: list[SE3Pose], cam: CameraModel,
                     query_id: int = 0, camera_id: str = "",
                     clip_start: int = 0) -> RigidTrajectory:
    """Reproject a frame-t point through each frame assuming it is static:
    pixel_k = project(extrinsic * G_k^-1 * G_t * p)."""
    point = np.asarray(point, float).reshape(3)
    g_t = poses[0]
    positions = np.zeros((len(poses), 2))
    vis = np.zeros(len(poses), dtype=bool)
    for k, g_k in enumerate(poses):
        rel = g_k.inverse().compose(g_t)
        uv, depth = project_points(rel.apply(point)[None, :], cam)
        positions[k] = uv[0]
        vis[k] = check_constraints(uv, depth, cam)[0]
    return RigidTrajectory(query_id, camera_id, clip_start, positions, vis)


def rigid_trajectories(points: np.ndarray, poses: list[SE3Pose], cam: CameraModel,
                       query_ids, camera_id: str, clip_start: int) -> list[RigidTrajectory]:
    """Batch variant of rigid_trajectory over (N, 3) points."""
    points = np.atleast_2d(np.asarray(points, float))
    g_t = poses[0]
    n, m = points.shape[0], len(poses)
    positions = np.zeros((n, m, 2))
    vis = np.zeros((n, m), dtype=bool)
    for k, g_k in enumerate(poses):
        rel = g_k.inverse().compose(g_t)
        uv, depth = project_points(rel.apply(points), cam)
        positions[:, k] = uv
        vis[:, k] = check_constraints(uv, depth, cam)
    return [RigidTrajectory(int(q), camera_id, clip_start, positions[i], vis[i])
            for i, q in enumerate(query_ids)]


def compute_votes(tracked: TrackedTrajectory, rigid: RigidTrajectory,
                  params: CompensationParams) -> MotionVote:
    """Per-frame L2 pixel residual, gated by the joint visibility mask.

    The comparison is strict (residual > tau_dyn); frame t contributes a zero
    residual by construction and never votes.
    """
    if tracked.positions.shape[0] != rigid.positions.shape[0]:
        raise ValueError("clip length mismatch between tracked and rigid trajectories")
    residuals = np.linalg.norm(tracked.positions - rigid.positions, axis=1)
    joint = tracked.visibility & rigid.rigid_visibility
    votes = int(np.sum((residuals > params.tau_dyn) & joint))
    return MotionVote(tracked.query_id, residuals, joint, votes)


def select_moving(votes: list[MotionVote], params: CompensationParams) -> set[int]:
    """Candidate ids with enough votes; the whole group is suppressed when
    fewer than n_point candidates survive."""
    moving = {v.query_id for v in votes if v.vote_count >= params.n_move}
    if len(moving) < params.n_point:
        return set()
    return moving


def vote_records(votes: list[MotionVote]) -> list[dict]:
    """JSON-lines friendly dump for debugging and ablations."""
    return [{
        "query_id": v.query_id,
        "residuals": [float(r) for r in v.residuals],
        "joint_visibility": [bool(b) for b in v.joint_visibility],
        "V": v.vote_count,
    } for v in votes]
