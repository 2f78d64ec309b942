"""Per-frame static/dynamic label sets with provenance, and their file format.

One file per frame: a JSON header line {frame, count, source, ...} followed by
newline-delimited 0/1 values.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

PROVENANCE_NONE = 0
PROVENANCE_RAYCAST = 1
PROVENANCE_LIFTED = 2
PROVENANCE_AUTOLABELER = 3
PROVENANCE_GT = 4


@dataclass
class LabelSet:
    masks: dict[int, np.ndarray]                 # frame -> (N,) bool
    source: str                                  # raycast | trackcue | seflow | seflowpp | gt
    provenance: dict[int, np.ndarray] = field(default_factory=dict)
    params_hash: str | None = None

    def frames(self) -> list[int]:
        return sorted(self.masks)

    def dynamic_ratio(self) -> float:
        total = sum(m.size for m in self.masks.values())
        if total == 0:
            return 0.0
        return float(sum(int(m.sum()) for m in self.masks.values())) / total


def save_labels(labels: LabelSet, out_dir) -> None:
    os.makedirs(out_dir, exist_ok=True)
    for frame in labels.frames():
        mask = labels.masks[frame]
        header = {"frame": frame, "count": int(mask.size), "source": labels.source}
        if labels.params_hash is not None:
            header["params_hash"] = labels.params_hash
        path = os.path.join(out_dir, f"labels_{frame:04d}.txt")
        with open(path, "w", newline="\n") as fh:
            fh.write(json.dumps(header, sort_keys=True) + "\n")
            fh.write("".join("1\n" if m else "0\n" for m in mask))


def load_labels(in_dir) -> LabelSet:
    masks: dict[int, np.ndarray] = {}
    source = None
    params_hash = None
    names = sorted(n for n in os.listdir(in_dir)
                   if n.startswith("labels_") and n.endswith(".txt"))
    if not names:
        raise ValueError(f"no label files found in {in_dir}")
    for name in names:
        with open(os.path.join(in_dir, name)) as fh:
            try:
                header = json.loads(fh.readline())
            except json.JSONDecodeError as exc:
                raise ValueError(f"{name}: malformed label header") from exc
            values = [line.strip() for line in fh if line.strip()]
        if len(values) != header["count"]:
            raise ValueError(f"{name}: count mismatch")
        masks[int(header["frame"])] = np.array([v == "1" for v in values], dtype=bool)
        source = header.get("source", source)
        params_hash = header.get("params_hash", params_hash)
    return LabelSet(masks, source or "unknown", params_hash=params_hash)


def save_cue_log(entries: list[dict], path) -> None:
    """Sidecar JSON-lines log: {point_index, frame, trajectory_id, distance_px}."""
    with open(path, "w", newline="\n") as fh:
        for e in entries:
            fh.write(json.dumps(e, sort_keys=True) + "\n")
