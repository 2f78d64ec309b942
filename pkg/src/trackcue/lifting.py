"""Nearest-neighbor lifting of moving image trajectories onto LiDAR points.

Per-frame projection indices are built once per (frame, camera) and shared
across all trajectories of a clip; cue-flag writes are idempotent ORs, so
merging flags from parallel workers is order-independent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geometry import CameraModel, check_constraints, project_points
from .labels import LabelSet, PROVENANCE_LIFTED, PROVENANCE_NONE, PROVENANCE_RAYCAST
from .tracking import TrackedTrajectory


@dataclass(frozen=True)
class LiftParams:
    """Lifting radius is either a plain pixel threshold, or a metric radius
    viewed at each neighbor's depth (pixel threshold fx * tau_lift_m / depth).
    Metric mode is the default; the operational radius is 0.4 m."""

    mode: str = "metric"      # "metric" | "pixel"
    tau_lift_px: float = 10.0
    tau_lift_m: float = 0.4
    top_k: int = 4

    def __post_init__(self):
        if self.mode not in ("metric", "pixel"):
            raise ValueError("mode must be 'metric' or 'pixel'")
        if self.tau_lift_px <= 0 or self.tau_lift_m <= 0:
            raise ValueError("lifting thresholds must be positive")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")


class FrameProjectionIndex:
    """KD-tree over the constraint-valid projected pixels of one frame/camera."""

    def __init__(self, points: np.ndarray, cam: CameraModel, frame: int,
                 camera_id: str = ""):
        points = np.atleast_2d(np.asarray(points, float))
        uv, depth = project_points(points, cam)
        valid = check_constraints(uv, depth, cam)
        self.frame = frame
        self.camera_id = camera_id
        self.cam = cam
        self.point_indices = np.flatnonzero(valid)
        self.pixels = uv[valid]
        self.depths = depth[valid]
        self.n_points = points.shape[0]
        self._tree = cKDTree(self.pixels) if self.pixels.shape[0] else None

    def __len__(self) -> int:
        return self.pixels.shape[0]

    def query(self, pixel, top_k: int):
        """Top-k nearest valid projections; ties broken by lowest point index.

        Returns (distances, rows) where rows index into this index's arrays.
        """
        if self._tree is None:
            return np.empty(0), np.empty(0, dtype=int)
        k = min(top_k, len(self))
        dist, rows = self._tree.query(np.asarray(pixel, float), k=k)
        dist = np.atleast_1d(dist)
        rows = np.atleast_1d(rows)
        order = np.lexsort((self.point_indices[rows], dist))
        return dist[order], rows[order]


def build_frame_index(points: np.ndarray, cam: CameraModel, frame: int,
                      camera_id: str = "") -> FrameProjectionIndex:
    return FrameProjectionIndex(points, cam, frame, camera_id)


def lift_cues(moving_trajectories: list[TrackedTrajectory],
              indices: dict, params: LiftParams):
    """Flag LiDAR points near visible positions of moving trajectories.

    `indices` maps (frame, camera_id) -> FrameProjectionIndex covering every
    clip frame. Returns (flags: frame -> bool array, cue_log entries).
    """
    flags: dict[int, np.ndarray] = {}
    log: list[dict] = []
    for traj in moving_trajectories:
        for j, visible in enumerate(traj.visibility):
            if not visible:
                continue
            frame = traj.clip_start + j
            key = (frame, traj.camera_id)
            if key not in indices:
                raise KeyError(f"missing frame index for {key}")
            index = indices[key]
            if len(index) == 0:
                continue
            dist, rows = index.query(traj.positions[j], params.top_k)
            if params.mode == "pixel":
                thresh = np.full(dist.shape, params.tau_lift_px)
            else:
                with np.errstate(divide="ignore"):
                    thresh = index.cam.fx * params.tau_lift_m / index.depths[rows]
            hit = dist < thresh
            if not hit.any():
                continue
            if frame not in flags:
                flags[frame] = np.zeros(index.n_points, dtype=bool)
            pts = index.point_indices[rows[hit]]
            flags[frame][pts] = True
            for p, d in zip(pts, dist[hit]):
                log.append({"point_index": int(p), "frame": int(frame),
                            "trajectory_id": int(traj.query_id),
                            "distance_px": float(d)})
    return flags, log


def brute_force_lift_cues(moving_trajectories: list[TrackedTrajectory],
                          frame_points: dict, cams: dict[str, CameraModel],
                          params: LiftParams) -> dict[int, np.ndarray]:
    """O(N * |T|) all-pairs oracle for the spatial-index lifting path.

    `frame_points` maps frame -> (N, 3) LiDAR points. Independent of the
    KD-tree code: linear-scan nearest neighbors with the same tie rule.
    """
    flags: dict[int, np.ndarray] = {}
    for traj in moving_trajectories:
        cam = cams[traj.camera_id]
        for j, visible in enumerate(traj.visibility):
            if not visible:
                continue
            frame = traj.clip_start + j
            points = frame_points[frame]
            uv, depth = project_points(points, cam)
            valid = check_constraints(uv, depth, cam)
            cand = np.flatnonzero(valid)
            if cand.size == 0:
                continue
            d = np.linalg.norm(uv[cand] - np.asarray(traj.positions[j]), axis=1)
            order = np.lexsort((cand, d))[:params.top_k]
            sel = cand[order]
            if params.mode == "pixel":
                thresh = np.full(sel.shape, params.tau_lift_px)
            else:
                thresh = cam.fx * params.tau_lift_m / depth[sel]
            hit = d[order] < thresh
            if not hit.any():
                continue
            if frame not in flags:
                flags[frame] = np.zeros(points.shape[0], dtype=bool)
            flags[frame][sel[hit]] = True
    return flags


def refine_labels(frame_sizes: dict[int, int], raycast_masks: dict[int, np.ndarray],
                  cue_flags: dict[int, np.ndarray], init: str = "fresh",
                  params_hash: str | None = None) -> LabelSet:
    """Rebuild per-frame dynamic masks from lifted cues.

    With fresh initialization only lifted points end up dynamic, so raycast
    false positives with no supporting moving trajectory are suppressed and
    lifted points missing from the raycast mask are recovered. Union mode
    keeps the raycast labels and adds cues on top.
    """
    if init not in ("fresh", "union"):
        raise ValueError("init must be 'fresh' or 'union'")
    masks: dict[int, np.ndarray] = {}
    provenance: dict[int, np.ndarray] = {}
    for frame, size in sorted(frame_sizes.items()):
        mask = np.zeros(size, dtype=bool)
        prov = np.full(size, PROVENANCE_NONE, dtype=np.uint8)
        if init == "union" and frame in raycast_masks:
            mask |= raycast_masks[frame]
            prov[raycast_masks[frame]] = PROVENANCE_RAYCAST
        if frame in cue_flags:
            mask |= cue_flags[frame]
            prov[cue_flags[frame]] = PROVENANCE_LIFTED
        masks[frame] = mask
        provenance[frame] = prov
    return LabelSet(masks, "trackcue", provenance, params_hash)
