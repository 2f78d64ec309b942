"""trackcue: LiDAR static/dynamic pseudo-label refinement driven by
image-space point trajectories, with a synthetic-scene oracle simulator."""

from .autolabel import AutoLabelParams
from .compensation import CompensationParams
from .geometry import CameraModel, SE3Pose
from .labels import LabelSet, load_labels, save_labels
from .lifting import LiftParams
from .metrics import LabelQualityReport, evaluate_frames, evaluate_labels
from .pipeline import PipelineConfig, TrackerSpec, run_autolabel, run_trackcue, sweep
from .raycast import RaycastParams
from .simulator import SceneConfig, generate_scene, load_bundle, save_bundle, \
    standard_suite

__version__ = "0.1.0"

__all__ = [
    "AutoLabelParams", "CameraModel", "CompensationParams", "LabelQualityReport",
    "LabelSet", "LiftParams", "PipelineConfig", "RaycastParams", "SceneConfig",
    "SE3Pose", "TrackerSpec", "evaluate_frames", "evaluate_labels",
    "generate_scene", "load_bundle", "load_labels", "run_autolabel",
    "run_trackcue", "save_bundle", "save_labels", "standard_suite", "sweep",
]
