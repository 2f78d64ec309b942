"""Command-line interface.

Subcommands map 1:1 onto pipeline stages; each reads and writes the documented
file formats so stages compose through the filesystem and external trackers
plug in at the trajectory-file boundary.

Exit codes: 0 success, 2 configuration error, 3 input-format error,
4 internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .autolabel import AutoLabelParams
from .labels import LabelSet, PROVENANCE_RAYCAST, load_labels, save_cue_log, \
    save_labels
from .metrics import CSV_COLUMNS, evaluate_frames
from .pipeline import PipelineConfig, SWEEP_AXES, TrackerSpec, apply_overrides, \
    compute_raycast_masks, gt_masks, run_autolabel, run_trackcue, sweep
from .report import plot_sweep, render_run_outputs, write_report, write_sweep_csv
from .simulator import SceneConfig, generate_scene, load_bundle, save_bundle, \
    standard_suite


class ConfigError(Exception):
    pass


class InputFormatError(Exception):
    pass


def _load_scene(path):
    try:
        return load_bundle(path)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        raise InputFormatError(f"cannot load scene {path}: {exc}") from exc


def _parse_tracker(spec: str, seed: int, sigma: float, dropout: float) -> dict:
    if spec == "oracle":
        return {"kind": "oracle"}
    if spec == "noisy":
        return {"kind": "noisy", "sigma_px": sigma, "dropout": dropout,
                "seed": seed}
    if spec.startswith("file:"):
        path = spec[len("file:"):]
        if not path:
            raise ConfigError("file tracker needs file:PATH")
        return {"kind": "file", "path": path}
    raise ConfigError(f"unknown tracker {spec!r} (oracle, noisy, or file:PATH)")


def _build_config(args) -> PipelineConfig:
    data: dict = {}
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise InputFormatError(f"{args.config}: malformed JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise InputFormatError(f"{args.config}: config must be a JSON object")
    if getattr(args, "tracker", None):
        data["tracker"] = _parse_tracker(args.tracker, args.seed,
                                         args.noise_sigma, args.noise_dropout)
    elif args.seed is not None and data.get("tracker", {}).get("kind") == "noisy":
        data["tracker"]["seed"] = args.seed
    if getattr(args, "clip_stride", None) is not None:
        data["clip_stride"] = args.clip_stride
    try:
        apply_overrides(data, args.set or [])
        return PipelineConfig.from_json(data)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def _add_common(p, scene_required=True, scene_multi=False):
    if scene_multi:
        p.add_argument("--scene", action="append", required=scene_required,
                       metavar="DIR", help="scene bundle directory (repeatable)")
    else:
        p.add_argument("--scene", required=scene_required, metavar="DIR",
                       help="scene bundle directory")
    p.add_argument("--config", metavar="FILE", help="pipeline config JSON")
    p.add_argument("--out", required=True, metavar="DIR", help="output directory")
    p.add_argument("--tracker", metavar="SPEC",
                   help="oracle | noisy | file:PATH")
    p.add_argument("--seed", type=int, default=0, help="tracker noise seed")
    p.add_argument("--noise-sigma", type=float, default=1.0,
                   help="pixel noise sigma for the noisy tracker")
    p.add_argument("--noise-dropout", type=float, default=0.1,
                   help="visibility dropout rate for the noisy tracker")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--clip-stride", type=int, default=None)
    p.add_argument("--set", action="append", metavar="K=V",
                   help="dotted config override, e.g. compensation.tau_dyn=4")


def _cmd_simulate(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    if args.suite:
        configs = standard_suite()
    else:
        if not args.config:
            raise ConfigError("simulate needs --config SCENE.json or --suite")
        try:
            with open(args.config) as fh:
                configs = [SceneConfig.from_json(json.load(fh))]
        except OSError as exc:
            raise ConfigError(str(exc)) from exc
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            raise InputFormatError(f"{args.config}: {exc}") from exc
    for sc in configs:
        seed = args.seed if args.seed is not None else sc.seed
        bundle = generate_scene(sc, seed=seed)
        dest = os.path.join(args.out, sc.name) if args.suite else args.out
        save_bundle(bundle, dest)
        print(f"{sc.name}: {bundle.frame_count} frames -> {dest}")
    return 0


def _cmd_raycast(args) -> int:
    cfg = _build_config(args)
    bundle = _load_scene(args.scene)
    masks = compute_raycast_masks(bundle, cfg.raycast)
    prov = {t: np.where(m, PROVENANCE_RAYCAST, 0).astype(np.uint8)
            for t, m in masks.items()}
    labels = LabelSet(masks, "raycast", prov, cfg.hash())
    os.makedirs(args.out, exist_ok=True)
    save_labels(labels, os.path.join(args.out, "labels"))
    gt = gt_masks(bundle, cfg.gt_threshold)
    report = {
        "scene": bundle.config.name,
        "config": cfg.to_json(),
        "config_hash": cfg.hash(),
        "dynamic_ratio": labels.dynamic_ratio(),
        "metrics": {"raycast": evaluate_frames(
            [(masks[t], gt[t]) for t in sorted(gt)]).to_json()},
    }
    render_run_outputs(args.out, report, masks, gt)
    print(f"raycast: dynamic ratio {labels.dynamic_ratio():.4f} -> {args.out}")
    return 0


def _cmd_trackcue(args) -> int:
    cfg = _build_config(args)
    bundle = _load_scene(args.scene)
    try:
        labels, report, cue_log = run_trackcue(bundle, cfg, args.workers)
    except (OSError, ValueError) as exc:
        raise InputFormatError(str(exc)) from exc
    os.makedirs(args.out, exist_ok=True)
    save_labels(labels, os.path.join(args.out, "labels"))
    save_cue_log(cue_log, os.path.join(args.out, "cue_log.jsonl"))
    render_run_outputs(args.out, report, labels.masks,
                       gt_masks(bundle, cfg.gt_threshold))
    m = report["metrics"]["refined"]
    print(f"trackcue: F1 {m['f1']:.4f} precision {m['precision']:.4f} "
          f"recall {m['recall']:.4f} -> {args.out}")
    return 0


def _cmd_autolabel(args) -> int:
    cfg = _build_config(args)
    bundle = _load_scene(args.scene)
    try:
        source = load_labels(args.labels)
    except (OSError, ValueError) as exc:
        raise InputFormatError(str(exc)) from exc
    labels = run_autolabel(bundle, source, args.mode, cfg.autolabel)
    os.makedirs(args.out, exist_ok=True)
    save_labels(labels, os.path.join(args.out, "labels"))
    gt = gt_masks(bundle, cfg.gt_threshold)
    report = {
        "scene": bundle.config.name,
        "config": cfg.to_json(),
        "mode": args.mode,
        "dynamic_ratio": labels.dynamic_ratio(),
        "metrics": {args.mode: evaluate_frames(
            [(labels.masks[t], gt[t]) for t in sorted(gt)]).to_json()},
    }
    render_run_outputs(args.out, report, labels.masks, gt)
    print(f"autolabel[{args.mode}]: dynamic ratio "
          f"{labels.dynamic_ratio():.4f} -> {args.out}")
    return 0


def _cmd_evaluate(args) -> int:
    cfg = _build_config(args)
    bundle = _load_scene(args.scene)
    try:
        labels = load_labels(args.labels)
    except (OSError, ValueError) as exc:
        raise InputFormatError(str(exc)) from exc
    gt = gt_masks(bundle, cfg.gt_threshold)
    missing = sorted(set(gt) - set(labels.masks))
    if missing:
        raise InputFormatError(f"labels missing frames {missing}")
    rep = evaluate_frames([(labels.masks[t], gt[t]) for t in sorted(gt)])
    report = {
        "scene": bundle.config.name,
        "labels_source": labels.source,
        "gt_threshold": cfg.gt_threshold,
        "metrics": {labels.source: rep.to_json()},
    }
    os.makedirs(args.out, exist_ok=True)
    render_run_outputs(args.out, report, labels.masks, gt)
    print("evaluate: " + " ".join(f"{c}={rep.to_json()[c]:.4f}"
                                  for c in CSV_COLUMNS))
    return 0


def _cmd_sweep(args) -> int:
    cfg = _build_config(args)
    if args.axis not in SWEEP_AXES:
        raise ConfigError(f"axis must be one of {SWEEP_AXES}")
    try:
        values = [json.loads(v) for v in args.values.split(",") if v.strip()]
    except json.JSONDecodeError as exc:
        raise ConfigError(f"bad --values: {exc}") from exc
    if not values:
        raise ConfigError("--values is empty")
    bundles = [_load_scene(d) for d in args.scene]
    rows = sweep(bundles, cfg, args.axis, values, args.workers)
    os.makedirs(args.out, exist_ok=True)
    write_sweep_csv(rows, os.path.join(args.out, "sweep.csv"))
    plot_sweep(rows, os.path.join(args.out, "sweep.png"))
    write_report({"axis": args.axis, "values": values, "config": cfg.to_json(),
                  "config_hash": cfg.hash(), "rows": rows},
                 os.path.join(args.out, "report.json"))
    for r in rows:
        print(f"{args.axis}={r['value']}: f1={r['f1']:.4f} "
              f"precision={r['precision']:.4f} recall={r['recall']:.4f}")
    return 0


def _cmd_pipeline(args) -> int:
    cfg = _build_config(args)
    bundle = _load_scene(args.scene)
    os.makedirs(args.out, exist_ok=True)

    masks = compute_raycast_masks(bundle, cfg.raycast)
    prov = {t: np.where(m, PROVENANCE_RAYCAST, 0).astype(np.uint8)
            for t, m in masks.items()}
    raycast_labels = LabelSet(masks, "raycast", prov, cfg.hash())
    save_labels(raycast_labels, os.path.join(args.out, "raycast"))

    try:
        refined, report, cue_log = run_trackcue(bundle, cfg, args.workers, masks)
    except (OSError, ValueError) as exc:
        raise InputFormatError(str(exc)) from exc
    save_labels(refined, os.path.join(args.out, "trackcue"))
    save_cue_log(cue_log, os.path.join(args.out, "cue_log.jsonl"))

    auto = run_autolabel(bundle, refined, args.mode, cfg.autolabel)
    save_labels(auto, os.path.join(args.out, args.mode))

    gt = gt_masks(bundle, cfg.gt_threshold)
    report["metrics"][args.mode] = evaluate_frames(
        [(auto.masks[t], gt[t]) for t in sorted(gt)]).to_json()
    render_run_outputs(args.out, report, refined.masks, gt)
    for name in sorted(report["metrics"]):
        m = report["metrics"][name]
        print(f"{name:10s} f1={m['f1']:.4f} precision={m['precision']:.4f} "
              f"recall={m['recall']:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="trackcue",
                                description="LiDAR pseudo-label refinement from "
                                            "image-space point trajectories")
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate synthetic scene bundles")
    sim.add_argument("--config", metavar="FILE", help="scene config JSON")
    sim.add_argument("--suite", action="store_true",
                     help="generate the standard suite instead")
    sim.add_argument("--out", required=True, metavar="DIR")
    sim.add_argument("--seed", type=int, default=None)
    sim.set_defaults(func=_cmd_simulate)

    ray = sub.add_parser("raycast", help="voxel void-map dynamic labels")
    _add_common(ray)
    ray.set_defaults(func=_cmd_raycast)

    tc = sub.add_parser("trackcue", help="trajectory-based label refinement")
    _add_common(tc)
    tc.set_defaults(func=_cmd_trackcue)

    al = sub.add_parser("autolabel", help="cluster-level label reassignment")
    _add_common(al)
    al.add_argument("--labels", required=True, metavar="DIR",
                    help="source label directory")
    al.add_argument("--mode", choices=["seflow", "seflowpp"], default="seflowpp")
    al.set_defaults(func=_cmd_autolabel)

    ev = sub.add_parser("evaluate", help="score labels against ground truth")
    _add_common(ev)
    ev.add_argument("--labels", required=True, metavar="DIR")
    ev.set_defaults(func=_cmd_evaluate)

    sw = sub.add_parser("sweep", help="ablation sweep along one axis")
    _add_common(sw, scene_multi=True)
    sw.add_argument("--axis", required=True,
                    help="clip_length | tau_dyn | resolution-scale | tracker-noise")
    sw.add_argument("--values", required=True,
                    help="comma-separated values, e.g. 3,6,9,12")
    sw.set_defaults(func=_cmd_sweep)

    pl = sub.add_parser("pipeline", help="raycast + trackcue + autolabel + report")
    _add_common(pl)
    pl.add_argument("--mode", choices=["seflow", "seflowpp"], default="seflowpp")
    pl.set_defaults(func=_cmd_pipeline)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except InputFormatError as exc:
        print(f"input format error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # internal invariant violation
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
