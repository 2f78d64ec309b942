"""Deterministic synthetic driving-scene generator.

Scenes are built from oriented boxes (ground, walls, vehicles, pedestrians)
moved by per-frame rigid poses. LiDAR points are produced by exact ray-box
intersection, so every point lies on a configured surface, is unoccluded from
the sensor origin, and carries its body id. That ground truth is what makes
the tracking oracle and the per-point flow/dynamic labels exact.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .geometry import CameraModel, SE3Pose, load_camera_rig, save_camera_rig


def _fmt(x: float) -> str:
    return f"{x:.9g}"


@dataclass
class MotionSpec:
    """Constant-twist motion (start + velocity + yaw rate) or explicit waypoints."""

    start: tuple[float, float, float] = (0.0, 0.0, 0.0)
    yaw: float = 0.0
    velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)
    yaw_rate: float = 0.0
    waypoints: list | None = None  # per-frame [x, y, z, yaw], overrides the twist

    def pose(self, frame: int, dt: float) -> SE3Pose:
        if self.waypoints is not None:
            x, y, z, yaw = self.waypoints[frame]
            return SE3Pose.rot_z(yaw, (x, y, z))
        t = frame * dt
        pos = np.asarray(self.start, float) + np.asarray(self.velocity, float) * t
        return SE3Pose.rot_z(self.yaw + self.yaw_rate * t, pos)

    def to_json(self) -> dict:
        return {
            "start": list(self.start), "yaw": self.yaw,
            "velocity": list(self.velocity), "yaw_rate": self.yaw_rate,
            "waypoints": self.waypoints,
        }

    @staticmethod
    def from_json(d: dict) -> "MotionSpec":
        return MotionSpec(
            start=tuple(d.get("start", (0, 0, 0))), yaw=float(d.get("yaw", 0.0)),
            velocity=tuple(d.get("velocity", (0, 0, 0))),
            yaw_rate=float(d.get("yaw_rate", 0.0)),
            waypoints=d.get("waypoints"),
        )


@dataclass
class BodySpec:
    body_id: int
    half_extents: tuple[float, float, float]
    motion: MotionSpec
    name: str = ""

    def to_json(self) -> dict:
        return {"body_id": self.body_id, "name": self.name,
                "half_extents": list(self.half_extents), "motion": self.motion.to_json()}

    @staticmethod
    def from_json(d: dict) -> "BodySpec":
        return BodySpec(body_id=int(d["body_id"]),
                        half_extents=tuple(d["half_extents"]),
                        motion=MotionSpec.from_json(d["motion"]),
                        name=d.get("name", ""))


@dataclass
class LidarSpec:
    mode: str = "spherical"      # spherical beams or uniform surface sampling
    beams: int = 14
    azimuth_steps: int = 144
    elevation_min_deg: float = -22.0
    elevation_max_deg: float = 2.0
    max_range: float = 25.0
    density: float = 8.0         # points per m^2, uniform mode only

    def to_json(self) -> dict:
        return dict(mode=self.mode, beams=self.beams, azimuth_steps=self.azimuth_steps,
                    elevation_min_deg=self.elevation_min_deg,
                    elevation_max_deg=self.elevation_max_deg,
                    max_range=self.max_range, density=self.density)

    @staticmethod
    def from_json(d: dict) -> "LidarSpec":
        return LidarSpec(**d)


@dataclass
class SceneConfig:
    name: str
    frame_count: int
    frame_dt: float
    seed: int
    ego: MotionSpec
    bodies: list[BodySpec]
    lidar: LidarSpec = field(default_factory=LidarSpec)
    cameras: dict[str, CameraModel] = field(default_factory=dict)

    def __post_init__(self):
        if self.frame_count < 2:
            raise ValueError("frame_count must be >= 2")

    def to_json(self) -> dict:
        return {
            "name": self.name, "frame_count": self.frame_count,
            "frame_dt": self.frame_dt, "seed": self.seed,
            "ego": self.ego.to_json(),
            "bodies": [b.to_json() for b in self.bodies],
            "lidar": self.lidar.to_json(),
            "cameras": {cid: cam.to_json() for cid, cam in sorted(self.cameras.items())},
        }

    @staticmethod
    def from_json(d: dict) -> "SceneConfig":
        return SceneConfig(
            name=d["name"], frame_count=int(d["frame_count"]),
            frame_dt=float(d["frame_dt"]), seed=int(d["seed"]),
            ego=MotionSpec.from_json(d["ego"]),
            bodies=[BodySpec.from_json(b) for b in d["bodies"]],
            lidar=LidarSpec.from_json(d["lidar"]),
            cameras={cid: CameraModel.from_json(c) for cid, c in d["cameras"].items()},
        )


def _ray_box_entry(origin: np.ndarray, dirs: np.ndarray,
                   pose: SE3Pose, half: np.ndarray) -> np.ndarray:
    """Entry distance along each unit ray into an oriented box; inf on miss."""
    inv = pose.inverse()
    o = inv.apply(origin)
    d = dirs @ inv.rotation.T
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (-half - o) / d
        t2 = (half - o) / d
    lo = np.minimum(t1, t2)
    hi = np.maximum(t1, t2)
    par = d == 0
    inside = np.abs(o) <= half
    lo = np.where(par, np.where(inside, -np.inf, np.inf), lo)
    hi = np.where(par, np.where(inside, np.inf, -np.inf), hi)
    tmin = lo.max(axis=1)
    tmax = hi.min(axis=1)
    hit = (tmax >= tmin) & (tmin > 1e-9)
    return np.where(hit, tmin, np.inf)


def _nearest_hits(origin: np.ndarray, dirs: np.ndarray, states):
    """Closest hit over all bodies: (distance (N,), body_id (N,)), inf/-1 on miss."""
    n = dirs.shape[0]
    best_t = np.full(n, np.inf)
    best_b = np.full(n, -1, dtype=np.int64)
    for body_id, pose, half in states:
        t = _ray_box_entry(origin, dirs, pose, half)
        closer = t < best_t
        best_t[closer] = t[closer]
        best_b[closer] = body_id
    return best_t, best_b


class SceneBundle:
    """A generated (or re-loaded) scene with every ground-truth quantity."""

    def __init__(self, config: SceneConfig, frames, body_ids, ego_poses, body_poses):
        self.config = config
        self.frames = frames            # list of (N, 3) sensor-frame points
        self.body_ids = body_ids        # list of (N,) int arrays
        self.ego_poses = ego_poses      # list of SE3Pose, world-from-sensor
        self.body_poses = body_poses    # body_id -> list of SE3Pose per frame
        self.cameras = config.cameras
        self.frame_count = config.frame_count
        self.frame_dt = config.frame_dt
        self._half = {b.body_id: np.asarray(b.half_extents, float) for b in config.bodies}

    # -- geometry access -------------------------------------------------

    def body_states(self, frame: int):
        return [(bid, self.body_poses[bid][frame], self._half[bid])
                for bid in sorted(self.body_poses)]

    def world_points(self, frame: int) -> np.ndarray:
        return self.ego_poses[frame].apply(self.frames[frame])

    def carry_points(self, frame_t: int, indices: np.ndarray, frame_k: int) -> np.ndarray:
        """Frame-t points transported by their true body motion, expressed in
        the sensor frame of frame_k."""
        pts = self.frames[frame_t][indices]
        bids = self.body_ids[frame_t][indices]
        g_t, g_k = self.ego_poses[frame_t], self.ego_poses[frame_k]
        out = np.empty_like(pts)
        world = g_t.apply(pts)
        inv_gk = g_k.inverse()
        for bid in np.unique(bids):
            sel = bids == bid
            move = self.body_poses[bid][frame_k].compose(self.body_poses[bid][frame_t].inverse())
            out[sel] = inv_gk.apply(move.apply(world[sel]))
        return out

    def occluded_from(self, origin_world, points_world, frame: int,
                      depth_tolerance: float = 0.5) -> np.ndarray:
        """True where a scene surface blocks the segment by more than the tolerance."""
        origin_world = np.asarray(origin_world, float)
        pts = np.atleast_2d(np.asarray(points_world, float))
        seg = pts - origin_world
        dist = np.linalg.norm(seg, axis=1)
        safe = np.where(dist > 0, dist, 1.0)
        dirs = seg / safe[:, None]
        t_hit, _ = _nearest_hits(origin_world, dirs, self.body_states(frame))
        return t_hit < dist - depth_tolerance

    def camera_center_world(self, camera_id: str, frame: int) -> np.ndarray:
        cam = self.cameras[camera_id]
        center_lidar = cam.extrinsic.inverse().translation
        return self.ego_poses[frame].apply(center_lidar)

    # -- ground-truth flow and labels ------------------------------------

    def ego_flow(self, t: int) -> np.ndarray:
        if not (0 <= t < self.frame_count - 1):
            raise IndexError("frame index out of range for flow")
        rel = self.ego_poses[t + 1].inverse().compose(self.ego_poses[t])
        p = self.frames[t]
        return rel.apply(p) - p

    def gt_flow(self, t: int) -> np.ndarray:
        if not (0 <= t < self.frame_count - 1):
            raise IndexError("frame index out of range for flow")
        moved = self.carry_points(t, np.arange(self.frames[t].shape[0]), t + 1)
        return moved - self.frames[t]

    def residual_flow(self, t: int) -> np.ndarray:
        return self.gt_flow(t) - self.ego_flow(t)

    def gt_dynamic(self, t: int, threshold: float = 0.05) -> np.ndarray:
        """Residual-motion thresholding; the final frame has no next-frame
        displacement and reuses the previous interval's residual."""
        if t == self.frame_count - 1:
            moved = self.carry_points(t, np.arange(self.frames[t].shape[0]), t - 1)
            rel = self.ego_poses[t - 1].inverse().compose(self.ego_poses[t])
            resid = (moved - self.frames[t]) - (rel.apply(self.frames[t]) - self.frames[t])
            return np.linalg.norm(resid, axis=1) > threshold
        return np.linalg.norm(self.residual_flow(t), axis=1) > threshold

    def gt_dynamic_ratio(self, threshold: float = 0.05) -> float:
        counts = [self.gt_dynamic(t, threshold) for t in range(self.frame_count)]
        total = sum(c.size for c in counts)
        return float(sum(int(c.sum()) for c in counts)) / max(total, 1)


def _sample_spherical(config: SceneConfig, g: SE3Pose, states):
    lid = config.lidar
    el = np.deg2rad(np.linspace(lid.elevation_min_deg, lid.elevation_max_deg, lid.beams))
    az = np.linspace(0.0, 2.0 * math.pi, lid.azimuth_steps, endpoint=False)
    ee, aa = np.meshgrid(el, az, indexing="ij")
    dirs_sensor = np.stack([np.cos(ee) * np.cos(aa),
                            np.cos(ee) * np.sin(aa),
                            np.sin(ee)], axis=-1).reshape(-1, 3)
    dirs_world = dirs_sensor @ g.rotation.T
    origin = g.translation
    t, b = _nearest_hits(origin, dirs_world, states)
    hit = np.isfinite(t) & (t <= lid.max_range)
    pts_world = origin + dirs_world[hit] * t[hit][:, None]
    return g.inverse().apply(pts_world), b[hit]


def _sample_uniform(config: SceneConfig, g: SE3Pose, states, rng: np.random.Generator):
    lid = config.lidar
    origin = g.translation
    pts, bids = [], []
    for body_id, pose, half in states:
        sizes = 2.0 * half
        faces = [(0, 1, 2), (1, 2, 0), (0, 2, 1)]  # (u-axis, v-axis, normal-axis)
        for ua, va, na in faces:
            area = sizes[ua] * sizes[va]
            count = max(1, int(round(area * lid.density)))
            for sign in (-1.0, 1.0):
                uv = rng.uniform(-1.0, 1.0, size=(count, 2))
                local = np.zeros((count, 3))
                local[:, ua] = uv[:, 0] * half[ua]
                local[:, va] = uv[:, 1] * half[va]
                local[:, na] = sign * half[na]
                world = pose.apply(local)
                seg = world - origin
                dist = np.linalg.norm(seg, axis=1)
                ok = (dist > 1e-6) & (dist <= lid.max_range)
                if not ok.any():
                    continue
                dirs = seg[ok] / dist[ok][:, None]
                t_hit, _ = _nearest_hits(origin, dirs, states)
                vis = t_hit >= dist[ok] - 1e-6
                pts.append(world[ok][vis])
                bids.append(np.full(int(vis.sum()), body_id, dtype=np.int64))
    if pts:
        world = np.concatenate(pts, axis=0)
        return g.inverse().apply(world), np.concatenate(bids)
    return np.empty((0, 3)), np.empty(0, dtype=np.int64)


def generate_scene(config: SceneConfig, seed: int | None = None) -> SceneBundle:
    """Deterministic: identical config and seed yield identical bundles."""
    seed = config.seed if seed is None else seed
    for body in config.bodies:
        if np.any(np.asarray(body.half_extents) <= 0):
            raise ValueError(f"degenerate geometry for body {body.body_id}")
    rng = np.random.default_rng(seed)
    ego_poses = [config.ego.pose(t, config.frame_dt) for t in range(config.frame_count)]
    body_poses = {b.body_id: [b.motion.pose(t, config.frame_dt)
                              for t in range(config.frame_count)]
                  for b in config.bodies}
    frames, body_ids = [], []
    for t in range(config.frame_count):
        states = [(b.body_id, body_poses[b.body_id][t],
                   np.asarray(b.half_extents, float)) for b in config.bodies]
        if config.lidar.mode == "spherical":
            pts, bids = _sample_spherical(config, ego_poses[t], states)
        elif config.lidar.mode == "uniform":
            pts, bids = _sample_uniform(config, ego_poses[t], states, rng)
        else:
            raise ValueError(f"unknown lidar mode {config.lidar.mode!r}")
        frames.append(pts)
        body_ids.append(bids)
    return SceneBundle(config, frames, body_ids, ego_poses, body_poses)


# -- serialization -------------------------------------------------------


def save_bundle(bundle: SceneBundle, out_dir) -> None:
    os.makedirs(out_dir, exist_ok=True)
    hashes = {}

    def write(name: str, text: str):
        path = os.path.join(out_dir, name)
        with open(path, "w", newline="\n") as fh:
            fh.write(text)
        hashes[name] = hashlib.sha256(text.encode()).hexdigest()

    for t in range(bundle.frame_count):
        lines = [" ".join([_fmt(x), _fmt(y), _fmt(z), str(int(b))])
                 for (x, y, z), b in zip(bundle.frames[t], bundle.body_ids[t])]
        write(f"frame_{t:04d}.pts", "\n".join(lines) + ("\n" if lines else ""))
        mask = bundle.gt_dynamic(t)
        write(f"gt_mask_{t:04d}.txt", "".join("1\n" if m else "0\n" for m in mask))
        if t < bundle.frame_count - 1:
            flow = bundle.gt_flow(t)
            write(f"gt_flow_{t:04d}.txt",
                  "".join(" ".join(_fmt(v) for v in row) + "\n" for row in flow))

    poses = [p.to_flat() for p in bundle.ego_poses]
    write("poses.json", json.dumps(poses, indent=2) + "\n")
    save_camera_rig(bundle.cameras, os.path.join(out_dir, "cameras.json"))
    with open(os.path.join(out_dir, "cameras.json")) as fh:
        hashes["cameras.json"] = hashlib.sha256(fh.read().encode()).hexdigest()

    meta = {
        "config": bundle.config.to_json(),
        "seed": bundle.config.seed,
        "gt_dynamic_ratio": bundle.gt_dynamic_ratio(),
        "hashes": dict(sorted(hashes.items())),
    }
    with open(os.path.join(out_dir, "meta.json"), "w", newline="\n") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_bundle(in_dir) -> SceneBundle:
    with open(os.path.join(in_dir, "meta.json")) as fh:
        meta = json.load(fh)
    config = SceneConfig.from_json(meta["config"])
    config.cameras = load_camera_rig(os.path.join(in_dir, "cameras.json"))
    with open(os.path.join(in_dir, "poses.json")) as fh:
        ego_poses = [SE3Pose.from_flat(p) for p in json.load(fh)]
    frames, body_ids = [], []
    for t in range(config.frame_count):
        path = os.path.join(in_dir, f"frame_{t:04d}.pts")
        rows = np.loadtxt(path, dtype=float, ndmin=2)
        if rows.size == 0:
            rows = rows.reshape(0, 4)
        frames.append(rows[:, :3])
        body_ids.append(rows[:, 3].astype(np.int64))
    body_poses = {b.body_id: [b.motion.pose(t, config.frame_dt)
                              for t in range(config.frame_count)]
                  for b in config.bodies}
    return SceneBundle(config, frames, body_ids, ego_poses, body_poses)


# -- the standard synthetic suite ----------------------------------------


def _ring_cameras(num: int = 6, fx: float = 450.0, width: int = 640,
                  height: int = 480) -> dict[str, CameraModel]:
    cams = {}
    for i in range(num):
        yaw = 2.0 * math.pi * i / num
        c, s = math.cos(yaw), math.sin(yaw)
        # camera axes in lidar coords: z forward, x right, y down
        rot = np.array([[s, -c, 0.0], [0.0, 0.0, -1.0], [c, s, 0.0]])
        cams[f"cam{i}"] = CameraModel(
            fx=fx, fy=fx, cx=width / 2.0, cy=height / 2.0,
            width=width, height=height,
            extrinsic=SE3Pose(rot, np.zeros(3)),
        )
    return cams


def _static_bodies() -> list[BodySpec]:
    return [
        BodySpec(0, (40.0, 25.0, 0.1), MotionSpec(start=(15.0, 0.0, -0.1)), "ground"),
        BodySpec(1, (40.0, 0.2, 2.5), MotionSpec(start=(15.0, 10.0, 2.5)), "wall_left"),
        BodySpec(2, (40.0, 0.2, 2.5), MotionSpec(start=(15.0, -10.0, 2.5)), "wall_right"),
        BodySpec(3, (0.2, 25.0, 2.5), MotionSpec(start=(30.0, 0.0, 2.5)), "wall_front"),
    ]


def _suite_base(name: str, seed: int, bodies: list[BodySpec],
                frame_count: int = 18) -> SceneConfig:
    return SceneConfig(
        name=name, frame_count=frame_count, frame_dt=0.1, seed=seed,
        ego=MotionSpec(start=(0.0, 0.0, 2.0), velocity=(3.0, 0.0, 0.0)),
        bodies=_static_bodies() + bodies,
        lidar=LidarSpec(),
        cameras=_ring_cameras(),
    )


def standard_suite() -> list[SceneConfig]:
    """Fixed desk-scale benchmark scenes with recorded seeds."""
    scenes = []

    statics = [
        BodySpec(10, (2.25, 0.9, 0.75), MotionSpec(start=(12.0, 3.5, 0.75)), "parked_car"),
        BodySpec(11, (2.25, 0.9, 0.75), MotionSpec(start=(9.0, -4.5, 0.75)), "parked_car_2"),
    ]
    scenes.append(_suite_base("all_static", 101, statics))

    car = BodySpec(20, (2.25, 0.9, 0.75),
                   MotionSpec(start=(20.0, 3.0, 0.75), velocity=(-6.0, 0.0, 0.0)),
                   "fast_car")
    scenes.append(_suite_base("single_fast_car", 102, [car]))

    ped = BodySpec(21, (0.4, 0.4, 0.9),
                   MotionSpec(start=(10.5, -2.5, 0.9), velocity=(0.0, 1.5, 0.0)),
                   "pedestrian")
    scenes.append(_suite_base("crossing_pedestrian", 103, [ped]))

    truck = BodySpec(22, (6.0, 1.25, 1.5),
                     MotionSpec(start=(15.0, 4.5, 1.5), velocity=(-0.8, 0.0, 0.0)),
                     "slow_truck")
    scenes.append(_suite_base("large_truck", 104, [truck]))

    # moves for six frames, then stops; the vacated-space mechanism keeps
    # flagging its points as raycast-dynamic after it has stopped
    stop_x = [14.0 - 0.4 * min(t, 6) for t in range(18)]
    stopped = BodySpec(23, (2.25, 0.9, 0.75),
                       MotionSpec(waypoints=[[x, -3.0, 0.75, 0.0] for x in stop_x]),
                       "stopped_vehicle")
    scenes.append(_suite_base("stopped_vehicle", 105, [stopped]))

    multi = [
        BodySpec(30, (2.25, 0.9, 0.75),
                 MotionSpec(start=(19.0, 2.5, 0.75), velocity=(-5.0, 0.0, 0.0)), "car_a"),
        BodySpec(31, (2.25, 0.9, 0.75),
                 MotionSpec(start=(8.0, -6.0, 0.75), velocity=(2.5, 0.0, 0.0)), "car_b"),
        BodySpec(32, (0.4, 0.4, 0.9),
                 MotionSpec(start=(10.0, 4.0, 0.9), velocity=(0.0, -1.5, 0.0)), "ped_b"),
    ]
    scenes.append(_suite_base("dense_multi_object", 106, multi))

    return scenes
