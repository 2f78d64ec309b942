"""Acceptance criteria for the full pipeline, one test per criterion.

Each test prints a single PASS/FAIL line with the measured values so the
suite output doubles as a release checklist. Shared fixtures generate the
standard scene suite and the clean (noise-free, oracle-tracked) runs once
per session.
"""

import filecmp
import json
import os
import time
from dataclasses import replace

import numpy as np
import pytest

from trackcue.autolabel import nn_dynamic_set
from trackcue.cli import main as cli_main
from trackcue.compensation import CompensationParams, MotionVote, compute_votes, \
    rigid_trajectories, select_moving
from trackcue.lifting import LiftParams, brute_force_lift_cues, \
    build_frame_index, lift_cues
from trackcue.metrics import report_from_counts
from trackcue.pipeline import PipelineConfig, TrackerSpec, \
    compute_raycast_masks, run_trackcue, sweep
from trackcue.raycast import RaycastParams, build_void_map, traverse_ray
from trackcue.simulator import generate_scene, save_bundle, standard_suite
from trackcue.tracking import TrackedTrajectory, oracle_track, select_queries
from test_compensation import dense_matrix_rigid_pixel
from test_autolabel import brute_force_nnd
from test_raycast import crossing_midpoint_voxels, dense_sample_voxels


def report(criterion: str, ok: bool, detail: str) -> None:
    print(f"\nACCEPTANCE {criterion}: {'PASS' if ok else 'FAIL'} ({detail})",
          flush=True)
    assert ok, f"{criterion}: {detail}"


@pytest.fixture(scope="session")
def suite_bundles():
    return {cfg.name: generate_scene(cfg, seed=cfg.seed)
            for cfg in standard_suite()}


@pytest.fixture(scope="session")
def base_cfg():
    return PipelineConfig()


@pytest.fixture(scope="session")
def raycast_cache(suite_bundles, base_cfg):
    return {name: compute_raycast_masks(b, base_cfg.raycast)
            for name, b in suite_bundles.items()}


@pytest.fixture(scope="session")
def clean_runs(suite_bundles, base_cfg, raycast_cache):
    return {name: run_trackcue(b, base_cfg, workers=4,
                               raycast_masks=raycast_cache[name])
            for name, b in suite_bundles.items()}


def pooled(runs, key):
    tp = fp = tn = fn = 0
    for _, rep, _ in runs:
        m = rep["metrics"][key]
        tp += m["tp"]; fp += m["fp"]; tn += m["tn"]; fn += m["fn"]
    return report_from_counts(tp, fp, tn, fn)


def counts_from_pr(precision, recall, tp=100000):
    fp = round(tp / precision) - tp
    fn = round(tp / recall) - tp
    return tp, fp, 0, fn


def test_criterion_01_metric_fidelity():
    t0 = time.perf_counter()
    r1 = report_from_counts(*counts_from_pr(0.2462, 0.7235))
    r2 = report_from_counts(*counts_from_pr(0.3138, 0.6522))
    elapsed = time.perf_counter() - t0
    ok = (abs(100 * r1.f1 - 36.74) <= 0.01 and
          abs(100 * r2.f1 - 42.37) <= 0.01 and elapsed < 1.0)
    report("criterion 1 (metric fidelity)", ok,
           f"F1 {100*r1.f1:.4f} vs 36.74, {100*r2.f1:.4f} vs 42.37, "
           f"{elapsed:.3f}s")


def test_criterion_02_oracle_equivalence(suite_bundles, base_cfg, raycast_cache):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    clip = list(range(6, 12))
    failures = []
    for name, b in suite_bundles.items():
        masks = raycast_cache[name]
        if max(f.shape[0] for f in b.frames) > 2000:
            failures.append(f"{name}: >2000 points/frame")

        # (a) spatial-index lifting == brute-force all-pairs lifting
        moving = []
        for cid in sorted(b.cameras):
            cam = b.cameras[cid]
            qs = select_queries(b.frames[6], masks[6], cam, cid, 6, 256)
            tracked = oracle_track(b, qs, clip, cam)
            pts = b.frames[6][[q.source_point_index for q in qs]]
            rigid = rigid_trajectories(pts, [b.ego_poses[k] for k in clip],
                                       cam, [q.query_id for q in qs], cid, 6)
            cp = CompensationParams(n_point=1)
            votes = [compute_votes(t, r, cp) for t, r in zip(tracked, rigid)]
            ids = select_moving(votes, cp)
            moving.extend((cid, t) for t in tracked if t.query_id in ids)
        for params in (LiftParams(), LiftParams(mode="pixel")):
            for cid in sorted({c for c, _ in moving}):
                trajs = [t for c, t in moving if c == cid]
                if not trajs:
                    continue
                cam = b.cameras[cid]
                indices = {(k, cid): build_frame_index(b.frames[k], cam, k, cid)
                           for k in clip}
                fast, _ = lift_cues(trajs, indices, params)
                slow = brute_force_lift_cues(
                    trajs, {k: b.frames[k] for k in clip}, {cid: cam}, params)
                if set(fast) != set(slow) or any(
                        not np.array_equal(fast[f], slow[f]) for f in fast):
                    failures.append(f"{name}/{cid}: lifting mismatch")

        # (b) ray traversal vs sampling oracles
        origin = b.ego_poses[6].translation
        pts_w = b.world_points(6)
        pick = rng.choice(pts_w.shape[0], size=min(120, pts_w.shape[0]),
                          replace=False)
        for p in pts_w[pick]:
            if np.linalg.norm(p - origin) < 1e-3:
                continue
            # nudge off exact voxel-boundary alignments (the scene's flat
            # surfaces sit on them); at boundaries the stepped walk keeps
            # zero-length transient voxels that no sampling oracle defines
            o_j = origin + rng.uniform(1e-5, 2e-5, size=3)
            p_j = p + rng.uniform(1e-5, 2e-5, size=3)
            walk = set(traverse_ray(o_j, p_j, 0.2))
            if walk != crossing_midpoint_voxels(o_j, p_j, 0.2):
                failures.append(f"{name}: traversal mismatch")
                break
            if not dense_sample_voxels(o_j, p_j, 0.2) <= walk:
                failures.append(f"{name}: dense sample not a subset")
                break

        # (c) rigid trajectories vs dense 4x4 matrix oracle
        poses = [b.ego_poses[k] for k in clip]
        sub = rng.choice(b.frames[6].shape[0], size=60, replace=False)
        for cid in sorted(b.cameras):
            cam = b.cameras[cid]
            rigid = rigid_trajectories(b.frames[6][sub], poses, cam,
                                       range(len(sub)), cid, 6)
            for i, p in enumerate(b.frames[6][sub]):
                for k, g_k in enumerate(poses):
                    expected, depth = dense_matrix_rigid_pixel(p, poses[0],
                                                               g_k, cam)
                    if abs(depth) > 1e-6 and not np.allclose(
                            rigid[i].positions[k], expected, atol=1e-9):
                        failures.append(f"{name}/{cid}: rigid oracle mismatch")

        # (d) nn_dynamic_set vs O(N^2) scan
        a, c = b.world_points(5), b.world_points(6)
        if not np.array_equal(nn_dynamic_set(a, c, 0.14),
                              brute_force_nnd(a, c, 0.14)):
            failures.append(f"{name}: nn_dynamic_set mismatch")

    elapsed = time.perf_counter() - t0
    ok = not failures and elapsed < 120.0
    report("criterion 2 (oracle equivalence)", ok,
           f"{len(suite_bundles)} scenes, failures={failures or 'none'}, "
           f"{elapsed:.1f}s")


def test_criterion_03_static_scene_soundness(suite_bundles, base_cfg,
                                             raycast_cache):
    t0 = time.perf_counter()
    b = suite_bundles["all_static"]
    labels, rep, _ = run_trackcue(b, base_cfg, workers=4,
                                  raycast_masks=raycast_cache["all_static"])
    elapsed = time.perf_counter() - t0
    ratio = labels.dynamic_ratio()
    max_res = rep["tracking"]["max_residual_px"]
    ok = ratio == 0.0 and max_res < 1e-6 and elapsed < 10.0
    report("criterion 3 (static-scene soundness)", ok,
           f"refined ratio {ratio}, max residual {max_res:.2e} px, "
           f"{elapsed:.1f}s")


def test_criterion_04_refinement_direction(suite_bundles, base_cfg):
    t0 = time.perf_counter()
    cfg = replace(base_cfg, raycast=replace(base_cfg.raycast,
                                            false_positive_rate=0.15,
                                            false_positive_seed=1))
    runs = [run_trackcue(b, cfg, workers=4) for b in suite_bundles.values()]
    ray = pooled(runs, "raycast")
    ref = pooled(runs, "refined")
    elapsed = time.perf_counter() - t0
    d_f1 = 100 * (ref.f1 - ray.f1)
    d_recall = 100 * (ray.recall - ref.recall)
    ok = (d_f1 >= 5.0 and ref.precision > ray.precision and
          d_recall <= 15.0 and elapsed < 60.0)
    report("criterion 4 (refinement direction)", ok,
           f"F1 {100*ray.f1:.2f}->{100*ref.f1:.2f} (+{d_f1:.2f}), "
           f"P {100*ray.precision:.2f}->{100*ref.precision:.2f}, "
           f"recall drop {d_recall:.2f} pts, {elapsed:.1f}s")


def test_criterion_05_stopped_vehicle(suite_bundles, raycast_cache, clean_runs):
    b = suite_bundles["stopped_vehicle"]
    labels, _, _ = clean_runs["stopped_vehicle"]
    masks = raycast_cache["stopped_vehicle"]
    body_id = 23
    ray_fp = 0
    total = 0
    static_pred = 0
    for t in range(6, b.frame_count):  # stopped period
        on_body = b.body_ids[t] == body_id
        total += int(on_body.sum())
        ray_fp += int(masks[t][on_body].sum())
        static_pred += int((~labels.masks[t][on_body]).sum())
    frac_static = static_pred / max(total, 1)
    ok = total > 0 and ray_fp > 0 and frac_static >= 0.95
    report("criterion 5 (stopped vehicle)", ok,
           f"{total} stopped-body points, raycast FP {ray_fp}, "
           f"trackcue static {100*frac_static:.2f}%")


def test_criterion_06_monotonicity():
    rng = np.random.default_rng(6)
    checked = 0
    counterexamples = []
    cam_pts = np.array([[x, y, 10.0] for x in np.linspace(-1, 1, 8)
                        for y in np.linspace(-1, 1, 6)])
    from conftest import make_camera
    cam = make_camera()
    index = build_frame_index(cam_pts, cam, 0, "cam0")

    for trial in range(200):
        # voting: moving set shrinks as tau_dyn or n_move grows
        residuals = rng.uniform(0, 20, size=(12, 6))
        joint = rng.random((12, 6)) < 0.8
        tau_lo, tau_hi = sorted(rng.uniform(0.5, 15.0, size=2))
        nm_lo, nm_hi = sorted(rng.integers(1, 6, size=2))
        def moving_set(tau, nm):
            votes = [MotionVote(i, residuals[i], joint[i],
                                int(np.sum((residuals[i] > tau) & joint[i])))
                     for i in range(12)]
            return select_moving(votes, CompensationParams(tau, max(nm, 1), 1))
        if not moving_set(tau_hi, nm_lo) <= moving_set(tau_lo, nm_lo):
            counterexamples.append((trial, "tau_dyn"))
        if not moving_set(tau_lo, nm_hi) <= moving_set(tau_lo, nm_lo):
            counterexamples.append((trial, "n_move"))

        # lifting: cue set grows with tau_lift and top_k
        traj = TrackedTrajectory(0, "cam0", 0,
                                 rng.uniform(100, 540, size=(1, 2)),
                                 np.array([True]))
        r_lo, r_hi = sorted(rng.uniform(1.0, 200.0, size=2))
        k_lo, k_hi = sorted(rng.integers(1, 10, size=2))
        def cue_set(r, k):
            flags, _ = lift_cues([traj], {(0, "cam0"): index},
                                 LiftParams(mode="pixel", tau_lift_px=r,
                                            top_k=max(int(k), 1)))
            return set(np.flatnonzero(flags[0])) if flags else set()
        if not cue_set(r_lo, k_lo) <= cue_set(r_hi, k_lo):
            counterexamples.append((trial, "tau_lift"))
        if not cue_set(r_lo, k_lo) <= cue_set(r_lo, k_hi):
            counterexamples.append((trial, "top_k"))

        # raycast: void set grows with frames
        frames = [(rng.uniform(1, 8, size=(6, 3)), np.zeros(3), float(t))
                  for t in range(3)]
        params = RaycastParams(voxel_size=0.25, endpoint_margin=0.0)
        prev = set()
        for k in range(1, 4):
            cur = set(build_void_map(frames[:k], params).void_times)
            if not prev <= cur:
                counterexamples.append((trial, "void_set"))
            prev = cur

        # nn dynamic set shrinks with tau_d
        a = rng.uniform(-3, 3, size=(20, 3))
        c = rng.uniform(-3, 3, size=(20, 3))
        td_lo, td_hi = sorted(rng.uniform(0.05, 1.5, size=2))
        if np.any(nn_dynamic_set(a, c, td_hi) & ~nn_dynamic_set(a, c, td_lo)):
            counterexamples.append((trial, "tau_d"))
        checked += 1

    ok = checked >= 200 and not counterexamples
    report("criterion 6 (monotonicity)", ok,
           f"{checked} random configurations, "
           f"counterexamples={counterexamples or 'none'}")


def test_criterion_07_flow_decomposition():
    from trackcue.simulator import BodySpec, MotionSpec
    from conftest import mini_config
    rng = np.random.default_rng(7)
    worst = 0.0
    for trial in range(50):
        bodies = [BodySpec(20 + i, tuple(rng.uniform(0.3, 2.0, 3)),
                           MotionSpec(start=(rng.uniform(5, 16),
                                             rng.uniform(-6, 6),
                                             rng.uniform(0.5, 2.0)),
                                      velocity=tuple(rng.uniform(-4, 4, 3)),
                                      yaw_rate=rng.uniform(-1, 1)))
                  for i in range(rng.integers(1, 3))]
        cfg = mini_config(name=f"flow{trial}", seed=700 + trial, bodies=bodies,
                          frame_count=3, beams=5, azimuth_steps=48)
        b = generate_scene(cfg)
        for t in range(cfg.frame_count - 1):
            err = np.abs(b.gt_flow(t) - (b.ego_flow(t) + b.residual_flow(t)))
            if err.size:
                worst = max(worst, float(err.max()))
    ok = worst <= 1e-12
    report("criterion 7 (flow decomposition)", ok,
           f"50 scenes, max per-component error {worst:.2e}")


def test_criterion_08_determinism(suite_bundles, tmp_path_factory):
    root = tmp_path_factory.mktemp("determinism")
    scene_dir = root / "scene"
    save_bundle(suite_bundles["crossing_pedestrian"], scene_dir)
    mismatches = []
    for workers in (1, 8):
        outs = []
        for run in range(2):
            out = root / f"w{workers}_r{run}"
            rc = cli_main(["pipeline", "--scene", str(scene_dir),
                           "--out", str(out), "--workers", str(workers),
                           "--seed", "0"])
            assert rc == 0
            outs.append(out)
        for sub in ("raycast", "trackcue", "seflowpp"):
            for name in sorted(os.listdir(outs[0] / sub)):
                if not filecmp.cmp(outs[0] / sub / name, outs[1] / sub / name,
                                   shallow=False):
                    mismatches.append(f"w{workers}/{sub}/{name}")
        if not filecmp.cmp(outs[0] / "cue_log.jsonl", outs[1] / "cue_log.jsonl",
                           shallow=False):
            mismatches.append(f"w{workers}/cue_log")
        hashes = [json.loads((o / "report.json").read_text())["report_hash"]
                  for o in outs]
        if hashes[0] != hashes[1]:
            mismatches.append(f"w{workers}/report_hash")
    # worker counts must also agree with each other
    a = json.loads((root / "w1_r0" / "report.json").read_text())["report_hash"]
    b = json.loads((root / "w8_r0" / "report.json").read_text())["report_hash"]
    if a != b:
        mismatches.append("w1-vs-w8/report_hash")
    for sub in ("raycast", "trackcue", "seflowpp"):
        for name in sorted(os.listdir(root / "w1_r0" / sub)):
            if not filecmp.cmp(root / "w1_r0" / sub / name,
                               root / "w8_r0" / sub / name, shallow=False):
                mismatches.append(f"w1-vs-w8/{sub}/{name}")
    ok = not mismatches
    report("criterion 8 (determinism)", ok,
           f"mismatches={mismatches or 'none'}")


def test_criterion_09_clip_length_sweep(suite_bundles, base_cfg, raycast_cache):
    rows = sweep(list(suite_bundles.values()), base_cfg, "clip_length",
                 [3, 6, 9, 12], workers=4, raycast_cache=dict(raycast_cache))
    recall = {int(r["value"]): 100 * r["recall"] for r in rows}
    ok = len(rows) == 4 and recall[6] > recall[3]
    report("criterion 9 (clip-length sweep)", ok,
           "recall " + ", ".join(f"{k}:{recall[k]:.2f}" for k in (3, 6, 9, 12)))


def test_criterion_10_noise_robustness(suite_bundles, base_cfg, raycast_cache,
                                       clean_runs):
    noisy_cfg = replace(base_cfg, tracker=TrackerSpec(
        kind="noisy", sigma_px=1.0, dropout=0.1, seed=0))
    noisy_runs = [run_trackcue(b, noisy_cfg, workers=4,
                               raycast_masks=raycast_cache[name])
                  for name, b in suite_bundles.items()]
    clean = pooled(list(clean_runs.values()), "refined")
    noisy = pooled(noisy_runs, "refined")
    drop = 100 * (clean.f1 - noisy.f1)
    ok = drop < 10.0
    report("criterion 10 (noise robustness)", ok,
           f"F1 {100*clean.f1:.2f} -> {100*noisy.f1:.2f}, drop {drop:.2f} pts")
