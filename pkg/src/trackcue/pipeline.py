"""End-to-end orchestration: raycast labeling, tracking, motion compensation,
cue lifting, refinement, auto-labeling and ablation sweeps.

Clip/camera work items are independent; all cross-worker state is merge-only
(label OR, count sums) and outputs are canonicalized before serialization, so
the worker count never changes bytes.
"""

from __future__ import annotations

import hashlib
import json
import time
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .autolabel import AutoLabelParams, cluster_dynamic_points, nn_dynamic_set, \
    seflow_reassign, seflowpp_reassign
from .compensation import CompensationParams, compute_votes, rigid_trajectories, \
    select_moving
from .labels import LabelSet, PROVENANCE_AUTOLABELER
from .lifting import LiftParams, build_frame_index, lift_cues, refine_labels
from .metrics import evaluate_frames, report_from_counts
from .raycast import RaycastParams, build_void_map, classify_dufo
from .simulator import SceneBundle
from .tracking import TrackedTrajectory, noisy_oracle_track, oracle_track, \
    select_queries, split_into_clips


@dataclass(frozen=True)
class TrackerSpec:
    kind: str = "oracle"        # oracle | noisy | file
    sigma_px: float = 0.0
    dropout: float = 0.0
    seed: int = 0
    path: str | None = None

    def __post_init__(self):
        if self.kind not in ("oracle", "noisy", "file"):
            raise ValueError(f"unknown tracker kind {self.kind!r}")
        if self.kind == "file" and not self.path:
            raise ValueError("file tracker requires a path")

    def to_json(self) -> dict:
        return {"kind": self.kind, "sigma_px": self.sigma_px,
                "dropout": self.dropout, "seed": self.seed, "path": self.path}


@dataclass
class PipelineConfig:
    clip_length: int = 6
    clip_stride: int | None = None      # defaults to clip_length (non-overlapping)
    max_queries: int = 2048
    init_rule: str = "fresh"            # fresh | union
    gt_threshold: float = 0.05
    compensation: CompensationParams = field(default_factory=CompensationParams)
    lift: LiftParams = field(default_factory=LiftParams)
    autolabel: AutoLabelParams = field(default_factory=AutoLabelParams)
    raycast: RaycastParams = field(default_factory=RaycastParams)
    tracker: TrackerSpec = field(default_factory=TrackerSpec)

    def __post_init__(self):
        if self.clip_length < 2:
            raise ValueError("clip_length must be >= 2")
        if self.init_rule not in ("fresh", "union"):
            raise ValueError("init_rule must be 'fresh' or 'union'")

    def to_json(self) -> dict:
        """Fully resolved configuration (all defaults expanded)."""
        return {
            "clip_length": self.clip_length,
            "clip_stride": self.clip_stride if self.clip_stride is not None
                           else self.clip_length,
            "max_queries": self.max_queries,
            "init_rule": self.init_rule,
            "gt_threshold": self.gt_threshold,
            "compensation": {"tau_dyn": self.compensation.tau_dyn,
                             "n_move": self.compensation.n_move,
                             "n_point": self.compensation.n_point},
            "lift": {"mode": self.lift.mode,
                     "tau_lift_px": self.lift.tau_lift_px,
                     "tau_lift_m": self.lift.tau_lift_m,
                     "top_k": self.lift.top_k},
            "autolabel": {"tau_d": self.autolabel.tau_d,
                          "tau_1": self.autolabel.tau_1,
                          "tau_2": self.autolabel.tau_2,
                          "min_cluster_size": self.autolabel.min_cluster_size,
                          "cluster_epsilon": self.autolabel.cluster_epsilon},
            "raycast": {"voxel_size": self.raycast.voxel_size,
                        "origin": list(self.raycast.origin),
                        "endpoint_margin": self.raycast.endpoint_margin,
                        "false_positive_rate": self.raycast.false_positive_rate,
                        "false_positive_seed": self.raycast.false_positive_seed},
            "tracker": self.tracker.to_json(),
        }

    @staticmethod
    def from_json(d: dict) -> "PipelineConfig":
        d = dict(d)
        comp = d.get("compensation", {})
        lift = d.get("lift", {})
        auto = d.get("autolabel", {})
        ray = dict(d.get("raycast", {}))
        if "origin" in ray:
            ray["origin"] = tuple(ray["origin"])
        trk = d.get("tracker", {})
        stride = d.get("clip_stride")
        return PipelineConfig(
            clip_length=int(d.get("clip_length", 6)),
            clip_stride=None if stride in (None, "") else int(stride),
            max_queries=int(d.get("max_queries", 2048)),
            init_rule=d.get("init_rule", "fresh"),
            gt_threshold=float(d.get("gt_threshold", 0.05)),
            compensation=CompensationParams(**comp),
            lift=LiftParams(**lift),
            autolabel=AutoLabelParams(**auto),
            raycast=RaycastParams(**ray),
            tracker=TrackerSpec(**trk),
        )

    def hash(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def apply_overrides(data: dict, overrides: list[str]) -> dict:
    """Apply --set key=value pairs with dotted paths onto a config dict."""
    for item in overrides:
        if "=" not in item:
            raise ValueError(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = data
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = value
    return data


def compute_raycast_masks(bundle: SceneBundle,
                          params: RaycastParams) -> dict[int, np.ndarray]:
    """Full-sequence void map; per-frame classification uses void-before-t."""
    frames = [(bundle.world_points(t), bundle.ego_poses[t].translation, float(t))
              for t in range(bundle.frame_count)]
    grid = build_void_map(frames, params)
    return {t: classify_dufo(bundle.world_points(t), float(t), grid)
            for t in range(bundle.frame_count)}


def _tracker_seed(base: int, clip_start: int, camera_id: str) -> int:
    return int(np.random.SeedSequence(
        [base, clip_start, zlib.crc32(camera_id.encode())]).generate_state(1)[0])


def _track(bundle, queries, clip, cam, spec: TrackerSpec, file_lookup):
    if spec.kind == "oracle":
        return oracle_track(bundle, queries, clip, cam)
    if spec.kind == "noisy":
        seed = _tracker_seed(spec.seed, clip[0], queries[0].camera_id if queries else "")
        return noisy_oracle_track(bundle, queries, clip, cam,
                                  spec.sigma_px, spec.dropout, seed)
    out = []
    for q in queries:
        key = (q.camera_id, q.clip_start, q.query_id)
        if key not in file_lookup:
            raise ValueError(f"trajectory file is missing query {key}")
        out.append(file_lookup[key])
    return out


def _process_clip_camera(bundle: SceneBundle, masks, clip, camera_id,
                         cfg: PipelineConfig, file_lookup):
    cam = bundle.cameras[camera_id]
    t0 = clip[0]
    queries = select_queries(bundle.frames[t0], masks[t0], cam, camera_id, t0,
                             cfg.max_queries)
    stats = {"clip_start": t0, "camera_id": camera_id,
             "n_queries": len(queries), "n_moving": 0, "max_residual_px": 0.0}
    if not queries:
        return {}, [], stats
    tracked = _track(bundle, queries, clip, cam, cfg.tracker, file_lookup)
    points = bundle.frames[t0][[q.source_point_index for q in queries]]
    poses = [bundle.ego_poses[k] for k in clip]
    rigid = rigid_trajectories(points, poses, cam,
                               [q.query_id for q in queries], camera_id, t0)
    votes = [compute_votes(tr, rg, cfg.compensation)
             for tr, rg in zip(tracked, rigid)]
    visible_residuals = [v.residuals[v.joint_visibility] for v in votes]
    if any(r.size for r in visible_residuals):
        stats["max_residual_px"] = float(max(r.max() for r in visible_residuals
                                             if r.size))
    moving_ids = select_moving(votes, cfg.compensation)
    stats["n_moving"] = len(moving_ids)
    if not moving_ids:
        return {}, [], stats
    moving = [tr for tr in tracked if tr.query_id in moving_ids]
    indices = {(k, camera_id): build_frame_index(bundle.frames[k], cam, k, camera_id)
               for k in clip}
    flags, log = lift_cues(moving, indices, cfg.lift)
    return flags, log, stats


def run_trackcue(bundle: SceneBundle, cfg: PipelineConfig, workers: int = 1,
                 raycast_masks: dict[int, np.ndarray] | None = None):
    """Execute the full refinement: clips -> queries -> tracking -> rigid
    compensation -> voting -> lifting -> label rebuild.

    Returns (LabelSet, report dict, cue log entries). Deterministic for fixed
    inputs, config and seed, independent of the worker count.
    """
    timings: dict[str, float] = {}
    t_start = time.perf_counter()
    if raycast_masks is None:
        raycast_masks = compute_raycast_masks(bundle, cfg.raycast)
    timings["raycast_s"] = time.perf_counter() - t_start

    file_lookup = None
    if cfg.tracker.kind == "file":
        from .tracking import load_trajectories
        file_lookup = {(t.camera_id, t.clip_start, t.query_id): t
                       for t in load_trajectories(cfg.tracker.path)}

    clips = split_into_clips(bundle.frame_count, cfg.clip_length, cfg.clip_stride)
    tasks = [(clip, cid) for clip in clips for cid in sorted(bundle.cameras)]

    t_track = time.perf_counter()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(
                lambda args: _process_clip_camera(bundle, raycast_masks, args[0],
                                                  args[1], cfg, file_lookup),
                tasks))
    else:
        results = [_process_clip_camera(bundle, raycast_masks, clip, cid, cfg,
                                        file_lookup) for clip, cid in tasks]
    timings["track_lift_s"] = time.perf_counter() - t_track

    flags: dict[int, np.ndarray] = {}
    cue_log: list[dict] = []
    task_stats = []
    for frame_flags, log, stats in results:
        for frame, f in frame_flags.items():
            if frame in flags:
                flags[frame] |= f
            else:
                flags[frame] = f.copy()
        cue_log.extend(log)
        task_stats.append(stats)
    cue_log.sort(key=lambda e: (e["frame"], e["point_index"],
                                e["trajectory_id"], e["distance_px"]))

    frame_sizes = {t: bundle.frames[t].shape[0] for t in range(bundle.frame_count)}
    labels = refine_labels(frame_sizes, raycast_masks, flags, cfg.init_rule,
                           cfg.hash())
    timings["total_s"] = time.perf_counter() - t_start

    report = {
        "scene": bundle.config.name,
        "config": cfg.to_json(),
        "config_hash": cfg.hash(),
        "frame_count": bundle.frame_count,
        "clips": [c[0] for c in clips],
        "tracking": {
            "n_tasks": len(task_stats),
            "n_queries": sum(s["n_queries"] for s in task_stats),
            "n_moving": sum(s["n_moving"] for s in task_stats),
            "max_residual_px": max((s["max_residual_px"] for s in task_stats),
                                   default=0.0),
        },
        "raycast_dynamic_ratio": float(
            sum(int(m.sum()) for m in raycast_masks.values()) /
            max(sum(m.size for m in raycast_masks.values()), 1)),
        "refined_dynamic_ratio": labels.dynamic_ratio(),
        "timings": timings,
    }
    gt = gt_masks(bundle, cfg.gt_threshold)
    report["metrics"] = {
        "raycast": evaluate_frames(
            [(raycast_masks[t], gt[t]) for t in sorted(gt)]).to_json(),
        "refined": evaluate_frames(
            [(labels.masks[t], gt[t]) for t in sorted(gt)]).to_json(),
    }
    return labels, report, cue_log


def gt_masks(bundle: SceneBundle, threshold: float = 0.05) -> dict[int, np.ndarray]:
    return {t: bundle.gt_dynamic(t, threshold) for t in range(bundle.frame_count)}


def run_autolabel(bundle: SceneBundle, source: LabelSet, mode: str,
                  params: AutoLabelParams) -> LabelSet:
    """SeFlow / SeFlow++ cluster-level reassignment over a source label set.

    The last frame has no successor for the nearest-neighbor dynamic set and
    keeps its source mask.
    """
    if mode not in ("seflow", "seflowpp"):
        raise ValueError("mode must be 'seflow' or 'seflowpp'")
    masks: dict[int, np.ndarray] = {}
    for t in range(bundle.frame_count):
        src = source.masks[t]
        n = src.size
        if t == bundle.frame_count - 1:
            masks[t] = src.copy()
            continue
        world_t = bundle.world_points(t)
        if mode == "seflow":
            clusters = cluster_dynamic_points(world_t, src, params)
            masks[t] = seflow_reassign(n, clusters, src)
        else:
            world_next = bundle.world_points(t + 1)
            nnd = nn_dynamic_set(world_t, world_next, params.tau_d)
            clusters = cluster_dynamic_points(world_t, src | nnd, params)
            masks[t] = seflowpp_reassign(n, clusters, src, nnd, params)
    prov = {t: np.where(m, PROVENANCE_AUTOLABELER, 0).astype(np.uint8)
            for t, m in masks.items()}
    return LabelSet(masks, mode, prov, source.params_hash)


SWEEP_AXES = ("clip_length", "tau_dyn", "resolution-scale", "tracker-noise")


def _scaled_bundle(bundle: SceneBundle, scale: float) -> SceneBundle:
    scaled = SceneBundle(bundle.config, bundle.frames, bundle.body_ids,
                         bundle.ego_poses, bundle.body_poses)
    scaled.cameras = {cid: cam.scaled(scale) for cid, cam in bundle.cameras.items()}
    return scaled


def sweep(bundles: list[SceneBundle], cfg: PipelineConfig, axis: str, values,
          workers: int = 1, raycast_cache: dict | None = None) -> list[dict]:
    """One pooled evaluate_labels row per axis value over all bundles."""
    if axis not in SWEEP_AXES:
        raise ValueError(f"axis must be one of {SWEEP_AXES}")
    if raycast_cache is None:
        raycast_cache = {}
    rows = []
    for value in values:
        run_cfg = cfg
        run_bundles = bundles
        if axis == "clip_length":
            run_cfg = replace(cfg, clip_length=int(value), clip_stride=None)
        elif axis == "tau_dyn":
            run_cfg = replace(cfg, compensation=replace(cfg.compensation,
                                                        tau_dyn=float(value)))
        elif axis == "resolution-scale":
            run_bundles = [_scaled_bundle(b, float(value)) for b in bundles]
        elif axis == "tracker-noise":
            run_cfg = replace(cfg, tracker=TrackerSpec(
                kind="noisy", sigma_px=float(value), dropout=cfg.tracker.dropout,
                seed=cfg.tracker.seed))
        tp = fp = tn = fn = 0
        for bundle in run_bundles:
            key = bundle.config.name
            if key not in raycast_cache:
                raycast_cache[key] = compute_raycast_masks(bundle, cfg.raycast)
            labels, report, _ = run_trackcue(bundle, run_cfg, workers,
                                             raycast_cache[key])
            m = report["metrics"]["refined"]
            tp += m["tp"]; fp += m["fp"]; tn += m["tn"]; fn += m["fn"]
        pooled = report_from_counts(tp, fp, tn, fn)
        rows.append({"axis": axis, "value": value, **pooled.to_json()})
    return rows
