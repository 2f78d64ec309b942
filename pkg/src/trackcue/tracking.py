"""Query selection and point-tracker backends.

Three interchangeable trajectory sources share one interchange format:
the simulator-backed oracle, a noise-injected oracle for robustness studies,
and JSON-lines ingestion of externally computed trajectories. The JSONL file
is the bit-exact boundary for plugging in a real tracker.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .geometry import CameraModel, check_constraints, project_points
from .simulator import SceneBundle


@dataclass(frozen=True)
class Query:
    query_id: int               # equals the source point index within its frame
    source_point_index: int
    camera_id: str
    clip_start: int
    u: float
    v: float
    depth: float


@dataclass
class TrackedTrajectory:
    query_id: int
    camera_id: str
    clip_start: int
    positions: np.ndarray       # (M+1, 2) pixels, frames clip_start..clip_start+M
    visibility: np.ndarray      # (M+1,) bool

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 2)
        self.visibility = np.asarray(self.visibility, dtype=bool).reshape(-1)
        if self.positions.shape[0] != self.visibility.shape[0]:
            raise ValueError("positions/visibility length mismatch")


def select_queries(points: np.ndarray, dynamic_mask: np.ndarray, cam: CameraModel,
                   camera_id: str, clip_start: int,
                   max_queries: int = 2048) -> list[Query]:
    """Project raycast-dynamic points, keep constraint-valid ones, and cap the
    count by deterministic stride subsampling over point-index order."""
    points = np.atleast_2d(np.asarray(points, float))
    dynamic_mask = np.asarray(dynamic_mask, dtype=bool)
    if dynamic_mask.shape[0] != points.shape[0]:
        raise ValueError("mask length does not match frame")
    uv, depth = project_points(points, cam)
    valid = dynamic_mask & check_constraints(uv, depth, cam)
    idx = np.flatnonzero(valid)
    if idx.size > max_queries:
        pick = np.round(np.linspace(0, idx.size - 1, max_queries)).astype(int)
        idx = idx[pick]
    return [Query(int(i), int(i), camera_id, clip_start,
                  float(uv[i, 0]), float(uv[i, 1]), float(depth[i]))
            for i in idx]


def oracle_track(bundle: SceneBundle, queries: list[Query], clip_frames,
                 cam: CameraModel) -> list[TrackedTrajectory]:
    """Exact reprojection of each query's 3D point carried by its true body
    motion; visibility combines the projection constraints with a z-buffer
    occlusion test against all scene surfaces."""
    clip_frames = list(clip_frames)
    if not queries:
        return []
    t0 = queries[0].clip_start
    n_pts = bundle.frames[t0].shape[0]
    idx = np.array([q.source_point_index for q in queries], dtype=int)
    if idx.size and (idx.min() < 0 or idx.max() >= n_pts):
        raise IndexError("query point index out of range")
    positions = np.zeros((idx.size, len(clip_frames), 2))
    visible = np.zeros((idx.size, len(clip_frames)), dtype=bool)
    for j, k in enumerate(clip_frames):
        pts_k = bundle.carry_points(t0, idx, k)
        uv, depth = project_points(pts_k, cam)
        ok = check_constraints(uv, depth, cam)
        cam_center = bundle.ego_poses[k].apply(cam.extrinsic.inverse().translation)
        world_k = bundle.ego_poses[k].apply(pts_k)
        occ = bundle.occluded_from(cam_center, world_k, k)
        positions[:, j] = uv
        visible[:, j] = ok & ~occ
    return [TrackedTrajectory(q.query_id, q.camera_id, q.clip_start,
                              positions[i], visible[i])
            for i, q in enumerate(queries)]


def noisy_oracle_track(bundle: SceneBundle, queries: list[Query], clip_frames,
                       cam: CameraModel, sigma_px: float, dropout_rate: float,
                       seed: int) -> list[TrackedTrajectory]:
    """Oracle trajectories with i.i.d. Gaussian pixel noise and per-frame
    visibility dropout; deterministic given the seed. The clip-start frame is
    left untouched so it still coincides with the query pixel."""
    if sigma_px < 0:
        raise ValueError("sigma_px must be >= 0")
    if not (0.0 <= dropout_rate < 1.0):
        raise ValueError("dropout_rate must be in [0, 1)")
    trajs = oracle_track(bundle, queries, clip_frames, cam)
    rng = np.random.default_rng(seed)
    for traj in trajs:
        m = traj.positions.shape[0]
        if m <= 1:
            continue
        noise = rng.normal(0.0, sigma_px, size=(m - 1, 2)) if sigma_px > 0 else 0.0
        traj.positions[1:] += noise
        if dropout_rate > 0:
            drop = rng.random(m - 1) < dropout_rate
            traj.visibility[1:] &= ~drop
    return trajs


def save_trajectories(trajs: list[TrackedTrajectory], path) -> None:
    with open(path, "w", newline="\n") as fh:
        for t in trajs:
            fh.write(json.dumps({
                "query_id": t.query_id,
                "camera_id": t.camera_id,
                "clip_start": t.clip_start,
                "positions": [[float(u), float(v)] for u, v in t.positions],
                "visibility": [bool(x) for x in t.visibility],
            }) + "\n")


def load_trajectories(path) -> list[TrackedTrajectory]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                d = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: malformed trajectory line") from exc
            if len(d["positions"]) != len(d["visibility"]):
                raise ValueError(f"{path}:{lineno}: positions/visibility length mismatch")
            out.append(TrackedTrajectory(int(d["query_id"]), str(d["camera_id"]),
                                         int(d["clip_start"]),
                                         np.asarray(d["positions"], float),
                                         np.asarray(d["visibility"], bool)))
    return out


def split_into_clips(frame_count: int, clip_length: int, stride: int | None = None):
    """Non-overlapping by default; a final partial clip is dropped."""
    if clip_length < 2:
        raise ValueError("clip_length must be >= 2")
    stride = clip_length if stride is None else stride
    if stride < 1:
        raise ValueError("stride must be >= 1")
    return [list(range(s, s + clip_length))
            for s in range(0, frame_count - clip_length + 1, stride)]
