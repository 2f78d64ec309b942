import numpy as np
import pytest

from conftest import make_camera
from trackcue.labels import (PROVENANCE_LIFTED, PROVENANCE_NONE,
                             PROVENANCE_RAYCAST)
from trackcue.lifting import (FrameProjectionIndex, LiftParams,
                              brute_force_lift_cues, build_frame_index,
                              lift_cues, refine_labels)
from trackcue.tracking import TrackedTrajectory


def traj(positions, visibility, qid=0, cam="cam0", start=0):
    return TrackedTrajectory(qid, cam, start, np.asarray(positions, float),
                             np.asarray(visibility, bool))


def line_of_points(n=20, depth=10.0):
    xs = np.linspace(-1.0, 1.0, n)
    return np.array([[x, 0.0, depth] for x in xs])


def test_index_excludes_invalid_projections():
    cam = make_camera()
    pts = np.vstack([line_of_points(), [[0.0, 0.0, 0.2]], [[0.0, 0.0, -4.0]]])
    index = build_frame_index(pts, cam, 0, "cam0")
    assert len(index) == 20
    assert set(index.point_indices) == set(range(20))


def test_query_tie_break_prefers_lower_point_index():
    cam = make_camera()
    pts = np.array([[0.0, 0.0, 10.0], [0.0, 0.0, 10.0], [0.5, 0.0, 10.0]])
    index = build_frame_index(pts, cam, 0)
    dist, rows = index.query((320.0, 240.0), top_k=3)
    assert index.point_indices[rows[0]] == 0
    assert index.point_indices[rows[1]] == 1
    assert dist[0] == dist[1] == 0.0


def test_metric_threshold_uses_neighbor_depth():
    cam = make_camera(fx=100.0)
    # at depth 10 with tau_lift_m=0.4 the pixel radius is 100*0.4/10 = 4 px
    pts = np.array([[0.0, 0.0, 10.0]])
    index = build_frame_index(pts, cam, 0, "cam0")
    params = LiftParams(mode="metric", tau_lift_m=0.4, top_k=1)
    near = traj([[323.9, 240.0]], [True])
    far = traj([[324.1, 240.0]], [True])
    flags, log = lift_cues([near], {(0, "cam0"): index}, params)
    assert flags[0].tolist() == [True]
    assert log[0]["point_index"] == 0
    flags, _ = lift_cues([far], {(0, "cam0"): index}, params)
    assert flags == {}


def test_pixel_mode_threshold_is_strict():
    cam = make_camera()
    pts = np.array([[0.0, 0.0, 10.0]])
    index = build_frame_index(pts, cam, 0, "cam0")
    params = LiftParams(mode="pixel", tau_lift_px=5.0, top_k=1)
    at = traj([[325.0, 240.0]], [True])       # exactly 5 px away
    flags, _ = lift_cues([at], {(0, "cam0"): index}, params)
    assert flags == {}


def test_invisible_frames_contribute_nothing():
    cam = make_camera()
    index = build_frame_index(line_of_points(), cam, 0, "cam0")
    t = traj([[320.0, 240.0]], [False])
    flags, log = lift_cues([t], {(0, "cam0"): index}, LiftParams())
    assert flags == {} and log == []


def test_missing_frame_index_raises():
    t = traj([[320.0, 240.0]], [True], start=3)
    with pytest.raises(KeyError):
        lift_cues([t], {}, LiftParams())


def test_cue_set_grows_with_top_k_and_radius():
    cam = make_camera()
    pts = line_of_points(40)
    index = build_frame_index(pts, cam, 0, "cam0")
    t = traj([[320.0, 240.0]], [True])
    counts = []
    for k in (1, 2, 4, 8):
        flags, _ = lift_cues([t], {(0, "cam0"): index},
                             LiftParams(mode="pixel", tau_lift_px=50.0, top_k=k))
        counts.append(int(flags[0].sum()) if flags else 0)
    assert counts == sorted(counts)
    sets = []
    for radius in (2.0, 10.0, 60.0):
        flags, _ = lift_cues([t], {(0, "cam0"): index},
                             LiftParams(mode="pixel", tau_lift_px=radius, top_k=8))
        sets.append(set(np.flatnonzero(flags[0])) if flags else set())
    assert sets[0] <= sets[1] <= sets[2]


def test_index_matches_brute_force_on_scene(mini_bundle):
    from trackcue.compensation import CompensationParams, compute_votes, \
        rigid_trajectories, select_moving
    from trackcue.pipeline import compute_raycast_masks
    from trackcue.raycast import RaycastParams
    from trackcue.tracking import oracle_track, select_queries

    b = mini_bundle
    cam = b.cameras["cam0"]
    masks = compute_raycast_masks(b, RaycastParams())
    clip = [4, 5, 6, 7]
    qs = select_queries(b.frames[4], masks[4], cam, "cam0", 4)
    assert qs, "expected raycast-dynamic queries on the mini scene"
    tracked = oracle_track(b, qs, clip, cam)
    pts = b.frames[4][[q.source_point_index for q in qs]]
    rigid = rigid_trajectories(pts, [b.ego_poses[k] for k in clip], cam,
                               [q.query_id for q in qs], "cam0", 4)
    cp = CompensationParams(n_point=1)
    votes = [compute_votes(t, r, cp) for t, r in zip(tracked, rigid)]
    moving_ids = select_moving(votes, cp)
    moving = [t for t in tracked if t.query_id in moving_ids]
    assert moving, "expected moving trajectories on the mini scene"

    for params in (LiftParams(), LiftParams(mode="pixel", tau_lift_px=10.0)):
        indices = {(k, "cam0"): build_frame_index(b.frames[k], cam, k, "cam0")
                   for k in clip}
        fast, _ = lift_cues(moving, indices, params)
        slow = brute_force_lift_cues(moving,
                                     {k: b.frames[k] for k in clip},
                                     {"cam0": cam}, params)
        assert set(fast) == set(slow)
        for frame in fast:
            assert np.array_equal(fast[frame], slow[frame])


def test_refine_fresh_drops_unsupported_raycast_labels():
    ray = {0: np.array([True, True, False, False])}
    cues = {0: np.array([False, True, True, False])}
    labels = refine_labels({0: 4}, ray, cues, init="fresh", params_hash="h")
    assert labels.masks[0].tolist() == [False, True, True, False]
    assert labels.provenance[0].tolist() == [PROVENANCE_NONE, PROVENANCE_LIFTED,
                                             PROVENANCE_LIFTED, PROVENANCE_NONE]
    assert labels.source == "trackcue" and labels.params_hash == "h"


def test_refine_union_keeps_raycast_labels():
    ray = {0: np.array([True, True, False, False])}
    cues = {0: np.array([False, False, True, False])}
    labels = refine_labels({0: 4}, ray, cues, init="union")
    assert labels.masks[0].tolist() == [True, True, True, False]
    assert labels.provenance[0][0] == PROVENANCE_RAYCAST
    assert labels.provenance[0][2] == PROVENANCE_LIFTED


def test_refine_frames_without_cues_are_static():
    labels = refine_labels({0: 3, 1: 3}, {0: np.ones(3, dtype=bool)}, {},
                           init="fresh")
    assert not labels.masks[0].any() and not labels.masks[1].any()
    assert labels.dynamic_ratio() == 0.0


def test_invalid_lift_params_rejected():
    for kw in ({"mode": "nope"}, {"tau_lift_px": 0.0},
               {"tau_lift_m": -1.0}, {"top_k": 0}):
        with pytest.raises(ValueError):
            LiftParams(**kw)
    with pytest.raises(ValueError):
        refine_labels({0: 1}, {}, {}, init="bogus")
