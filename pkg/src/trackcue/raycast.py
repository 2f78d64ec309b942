"""Voxel ray-casting dynamic labeler: void-map construction and classification.

Deliberately the noisy LiDAR-only baseline: a voxel traversed by any sensor
ray is marked void, and a point later observed inside a previously-void voxel
is classified dynamic. No erosion/dilation robustness machinery is applied,
so sparsity false positives are expected (and injectable on purpose).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class RaycastParams:
    voxel_size: float = 0.2
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    # Rays are shortened by this margin before traversal so grazing rays
    # (ground, walls at shallow incidence) do not void their own surface.
    endpoint_margin: float = 0.4
    # Fraction of static-surface voxels to void artificially, emulating the
    # sparsity/occlusion failures of LiDAR-only mapping. 0 disables.
    false_positive_rate: float = 0.0
    false_positive_seed: int = 0

    def __post_init__(self):
        if self.voxel_size <= 0:
            raise ValueError("voxel_size must be positive")
        if not (0.0 <= self.false_positive_rate < 1.0):
            raise ValueError("false_positive_rate must be in [0, 1)")


@dataclass
class VoxelGrid:
    """Void/occupied bookkeeping keyed by integer voxel index."""

    voxel_size: float
    origin: np.ndarray
    void_times: dict = field(default_factory=dict)      # voxel -> earliest void timestamp
    occupied_times: dict = field(default_factory=dict)  # voxel -> earliest observation timestamp

    def voxel_indices(self, points: np.ndarray) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        return np.floor((p - self.origin) / self.voxel_size).astype(np.int64)

    def voxel_index(self, point) -> tuple:
        return tuple(self.voxel_indices(np.asarray(point).reshape(1, 3))[0])


def _traversed_voxels(origins: np.ndarray, endpoints: np.ndarray,
                      voxel_size: float, grid_origin: np.ndarray) -> np.ndarray:
    """Union of DDA-traversed voxels over a batch of rays, endpoints excluded.

    Steps all rays simultaneously so the per-step work stays vectorized;
    returns an (M, 3) int array with duplicates removed.
    """
    o = (np.atleast_2d(origins) - grid_origin) / voxel_size
    e = (np.atleast_2d(endpoints) - grid_origin) / voxel_size
    d = e - o
    cur = np.floor(o).astype(np.int64)
    end = np.floor(e).astype(np.int64)
    step = np.sign(d).astype(np.int64)

    with np.errstate(divide="ignore", invalid="ignore"):
        tdelta = np.where(d != 0, 1.0 / np.abs(d), np.inf)
        bound = cur + (step > 0)
        tmax = np.where(d != 0, (bound - o) / d, np.inf)

    visited = []
    active = np.any(cur != end, axis=1)
    # every step advances exactly one voxel, so this bound is exact
    max_steps = int(np.abs(end - cur).sum(axis=1).max(initial=0)) + 3
    cur = cur[active]; end = end[active]; step = step[active]
    tmax = tmax[active]; tdelta = tdelta[active]
    for _ in range(max_steps):
        if cur.shape[0] == 0:
            break
        visited.append(cur.copy())
        axis = np.argmin(tmax, axis=1)
        rows = np.arange(cur.shape[0])
        cur[rows, axis] += step[rows, axis]
        tmax[rows, axis] += tdelta[rows, axis]
        alive = np.any(cur != end, axis=1)
        cur = cur[alive]; end = end[alive]; step = step[alive]
        tmax = tmax[alive]; tdelta = tdelta[alive]
    if not visited:
        return np.empty((0, 3), dtype=np.int64)
    return np.unique(np.concatenate(visited, axis=0), axis=0)


def traverse_ray(origin, endpoint, voxel_size: float, grid_origin=(0.0, 0.0, 0.0)):
    """Ordered voxel walk from the origin voxel up to (excluding) the endpoint voxel."""
    origin = np.asarray(origin, dtype=float)
    endpoint = np.asarray(endpoint, dtype=float)
    if np.allclose(origin, endpoint):
        raise ValueError("degenerate zero-length ray")
    grid_origin = np.asarray(grid_origin, dtype=float)
    o = (origin - grid_origin) / voxel_size
    e = (endpoint - grid_origin) / voxel_size
    d = e - o
    cur = np.floor(o).astype(np.int64)
    end = np.floor(e).astype(np.int64)
    step = np.sign(d).astype(np.int64)
    with np.errstate(divide="ignore", invalid="ignore"):
        tdelta = np.where(d != 0, 1.0 / np.abs(d), np.inf)
        tmax = np.where(d != 0, ((cur + (step > 0)) - o) / d, np.inf)
    walk = []
    for _ in range(int(np.abs(end - cur).sum()) + 3):
        if np.array_equal(cur, end):
            break
        walk.append(tuple(int(c) for c in cur))
        axis = int(np.argmin(tmax))
        cur[axis] += step[axis]
        tmax[axis] += tdelta[axis]
    return walk


def _shorten(origins: np.ndarray, endpoints: np.ndarray, margin: float):
    d = endpoints - origins
    length = np.linalg.norm(d, axis=1)
    keep = length > margin + 1e-12
    scale = np.zeros_like(length)
    scale[keep] = (length[keep] - margin) / length[keep]
    return origins + d * scale[:, None], keep


def build_void_map(frames, params: RaycastParams) -> VoxelGrid:
    """Fold frames of (world points, world sensor origin, timestamp) into a void map.

    Timestamps must be strictly increasing. A voxel's void time is its first
    traversal; voxels occupied within the same frame are not voided by that
    frame's rays.
    """
    if not frames:
        raise ValueError("empty frame list")
    grid = VoxelGrid(params.voxel_size, np.asarray(params.origin, dtype=float))
    last_t = None
    for points, sensor_origin, t in frames:
        if last_t is not None and t <= last_t:
            raise ValueError("timestamps must be strictly increasing")
        last_t = t
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.shape[0] == 0:
            continue
        occ = grid.voxel_indices(points)
        occ_set = set(map(tuple, occ))
        for v in occ_set:
            grid.occupied_times.setdefault(v, t)
        origins = np.broadcast_to(np.asarray(sensor_origin, dtype=float), points.shape)
        short_end, keep = _shorten(np.array(origins), points, params.endpoint_margin)
        traversed = _traversed_voxels(origins[keep], short_end[keep],
                                      params.voxel_size, grid.origin)
        for v in map(tuple, traversed):
            if v not in occ_set:
                grid.void_times.setdefault(v, t)
    if params.false_positive_rate > 0:
        inject_false_voids(grid, params.false_positive_rate, params.false_positive_seed)
    return grid


def inject_false_voids(grid: VoxelGrid, rate: float, seed: int) -> VoxelGrid:
    """Void a random fraction of never-vacated occupied voxels, in place.

    Injected voids are stamped before the first frame so the affected points
    read as dynamic in every frame; this emulates incomplete-ray-evidence
    failures for testing the refinement stage.
    """
    if not (0.0 <= rate < 1.0):
        raise ValueError("rate must be in [0, 1)")
    candidates = sorted(v for v in grid.occupied_times if v not in grid.void_times)
    if not candidates:
        return grid
    k = int(np.floor(rate * len(candidates)))
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(candidates), size=k, replace=False)
    t0 = min(grid.occupied_times.values())
    for i in sorted(picks):
        grid.void_times[candidates[i]] = t0 - 1.0
    return grid


def classify_dufo(points_world: np.ndarray, timestamp: float, grid: VoxelGrid) -> np.ndarray:
    """Per-point dynamic mask: voxel was void strictly before the timestamp."""
    points_world = np.atleast_2d(np.asarray(points_world, dtype=float))
    idx = grid.voxel_indices(points_world)
    void = grid.void_times
    out = np.zeros(points_world.shape[0], dtype=bool)
    for i, v in enumerate(map(tuple, idx)):
        t_void = void.get(v)
        if t_void is not None and t_void < timestamp:
            out[i] = True
    return out
