import numpy as np
import pytest

from trackcue.geometry import CameraModel, SE3Pose
from trackcue.simulator import (BodySpec, LidarSpec, MotionSpec, SceneConfig,
                                SceneBundle, _ring_cameras, _static_bodies,
                                generate_scene)


def make_camera(**kw) -> CameraModel:
    base = dict(fx=100.0, fy=100.0, cx=320.0, cy=240.0, width=640, height=480)
    base.update(kw)
    return CameraModel(**base)


def mini_config(name="mini", seed=7, frame_count=8, bodies=None,
                beams=8, azimuth_steps=72) -> SceneConfig:
    """Small, fast scene: forward ego, one crossing car, a single camera."""
    if bodies is None:
        bodies = [BodySpec(20, (2.25, 0.9, 0.75),
                           MotionSpec(start=(14.0, 2.0, 0.75),
                                      velocity=(-4.0, 0.0, 0.0)), "car")]
    cams = {"cam0": _ring_cameras(1)["cam0"]}
    return SceneConfig(
        name=name, frame_count=frame_count, frame_dt=0.1, seed=seed,
        ego=MotionSpec(start=(0.0, 0.0, 2.0), velocity=(2.5, 0.0, 0.0)),
        bodies=_static_bodies() + bodies,
        lidar=LidarSpec(beams=beams, azimuth_steps=azimuth_steps, max_range=22.0),
        cameras=cams,
    )


@pytest.fixture(scope="session")
def mini_bundle() -> SceneBundle:
    return generate_scene(mini_config())


@pytest.fixture(scope="session")
def static_mini_bundle() -> SceneBundle:
    cfg = mini_config(name="mini_static", seed=8, bodies=[])
    return generate_scene(cfg)


def random_pose(rng: np.random.Generator) -> SE3Pose:
    from scipy.spatial.transform import Rotation
    r = Rotation.random(random_state=int(rng.integers(2**31))).as_matrix()
    t = rng.uniform(-5.0, 5.0, size=3)
    return SE3Pose(r, t)
