"""Auto-labeling strategies: nearest-neighbor dynamic sets, density clustering
of dynamic candidates, and cluster-level label reassignment.

Clustering is single-linkage Euclidean connected components at a fixed merge
radius. It stands in for HDBSCAN-with-epsilon and is tested for its partition
properties, not for HDBSCAN equivalence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree


@dataclass(frozen=True)
class AutoLabelParams:
    tau_d: float = 0.14            # nearest-neighbor distance threshold, meters
    tau_1: float = 0.05            # min ratio gate
    tau_2: float = 0.30            # max ratio gate
    min_cluster_size: int = 20
    cluster_epsilon: float = 0.7   # single-linkage merge radius, meters

    def __post_init__(self):
        if not (0.0 <= self.tau_1 <= self.tau_2 <= 1.0):
            raise ValueError("need 0 <= tau_1 <= tau_2 <= 1")
        if self.tau_d <= 0 or self.cluster_epsilon <= 0:
            raise ValueError("distance thresholds must be positive")
        if self.min_cluster_size < 1:
            raise ValueError("min_cluster_size must be >= 1")


@dataclass
class Cluster:
    cluster_id: int
    members: np.ndarray  # point indices within the frame


def nn_dynamic_set(points_t: np.ndarray, points_next: np.ndarray,
                   tau_d: float) -> np.ndarray:
    """Mask of frame-t points whose nearest neighbor in the next frame is
    farther than tau_d. Both frames must share a coordinate frame."""
    points_t = np.atleast_2d(np.asarray(points_t, float))
    points_next = np.atleast_2d(np.asarray(points_next, float))
    if points_next.shape[0] == 0:
        raise ValueError("empty next frame")
    if points_t.shape[0] == 0:
        return np.zeros(0, dtype=bool)
    dist, _ = cKDTree(points_next).query(points_t, k=1)
    return dist > tau_d


def cluster_dynamic_points(points: np.ndarray, dynamic_mask: np.ndarray,
                           params: AutoLabelParams) -> list[Cluster]:
    """Connected components of the epsilon-ball graph over dynamic points;
    components below min_cluster_size are discarded."""
    points = np.atleast_2d(np.asarray(points, float))
    idx = np.flatnonzero(np.asarray(dynamic_mask, bool))
    if idx.size == 0:
        return []
    sub = points[idx]
    pairs = cKDTree(sub).query_pairs(params.cluster_epsilon, output_type="ndarray")
    n = idx.size
    if pairs.size:
        data = np.ones(pairs.shape[0])
        graph = coo_matrix((data, (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    else:
        graph = coo_matrix((n, n))
    _, comp = connected_components(graph, directed=False)
    clusters = []
    for label in np.unique(comp):
        members = idx[comp == label]
        if members.size >= params.min_cluster_size:
            clusters.append(members)
    clusters.sort(key=lambda m: int(m[0]))
    return [Cluster(i, m) for i, m in enumerate(clusters)]


def seflow_reassign(n_points: int, clusters: list[Cluster],
                    source_mask: np.ndarray) -> np.ndarray:
    """A clustered point stays dynamic only if the source mask agrees;
    everything outside a retained cluster becomes static."""
    source_mask = np.asarray(source_mask, bool)
    out = np.zeros(n_points, dtype=bool)
    for c in clusters:
        out[c.members] = source_mask[c.members]
    return out


def seflowpp_reassign(n_points: int, clusters: list[Cluster],
                      source_mask: np.ndarray, nnd_mask: np.ndarray,
                      params: AutoLabelParams) -> np.ndarray:
    """Whole-cluster decision from the two dynamic-evidence ratios:
    dynamic iff min(r1, r2) >= tau_1 and max(r1, r2) >= tau_2."""
    source_mask = np.asarray(source_mask, bool)
    nnd_mask = np.asarray(nnd_mask, bool)
    out = np.zeros(n_points, dtype=bool)
    for c in clusters:
        size = c.members.size
        r1 = float(source_mask[c.members].sum()) / size
        r2 = float(nnd_mask[c.members].sum()) / size
        if min(r1, r2) >= params.tau_1 and max(r1, r2) >= params.tau_2:
            out[c.members] = True
    return out
