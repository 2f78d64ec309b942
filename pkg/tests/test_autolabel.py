import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trackcue.autolabel import (AutoLabelParams, Cluster, cluster_dynamic_points,
                                nn_dynamic_set, seflow_reassign,
                                seflowpp_reassign)


def brute_force_nnd(points_t, points_next, tau_d):
    """O(N^2) linear-scan oracle for the KD-tree nearest-neighbor path."""
    out = np.zeros(len(points_t), dtype=bool)
    for i, p in enumerate(points_t):
        d = np.linalg.norm(points_next - p, axis=1).min()
        out[i] = d > tau_d
    return out


def test_nn_dynamic_matches_brute_force():
    rng = np.random.default_rng(50)
    for _ in range(20):
        a = rng.uniform(-5, 5, size=(rng.integers(5, 80), 3))
        b = rng.uniform(-5, 5, size=(rng.integers(5, 80), 3))
        tau = float(rng.uniform(0.05, 2.0))
        assert np.array_equal(nn_dynamic_set(a, b, tau),
                              brute_force_nnd(a, b, tau))


def test_nn_dynamic_empty_inputs():
    with pytest.raises(ValueError):
        nn_dynamic_set(np.zeros((3, 3)), np.zeros((0, 3)), 0.1)
    assert nn_dynamic_set(np.zeros((0, 3)), np.zeros((4, 3)), 0.1).size == 0


@settings(max_examples=100, deadline=None)
@given(st.integers(min_value=0, max_value=2**31 - 1),
       st.floats(min_value=0.05, max_value=1.0),
       st.floats(min_value=0.0, max_value=1.0))
def test_nn_dynamic_shrinks_with_tau(seed, tau, delta):
    rng = np.random.default_rng(seed)
    a = rng.uniform(-3, 3, size=(30, 3))
    b = rng.uniform(-3, 3, size=(30, 3))
    small = nn_dynamic_set(a, b, tau)
    large = nn_dynamic_set(a, b, tau + delta)
    assert not np.any(large & ~small)


def _params(**kw):
    base = dict(min_cluster_size=3, cluster_epsilon=0.7)
    base.update(kw)
    return AutoLabelParams(**base)


def blob(center, n, rng, spread=0.2):
    return np.asarray(center) + rng.uniform(-spread, spread, size=(n, 3))


def test_clusters_form_a_valid_partition():
    rng = np.random.default_rng(51)
    pts = np.vstack([blob((0, 0, 0), 10, rng), blob((5, 0, 0), 8, rng),
                     blob((0, 5, 0), 2, rng)])  # last blob below min size
    mask = np.ones(len(pts), dtype=bool)
    params = _params()
    clusters = cluster_dynamic_points(pts, mask, params)
    assert len(clusters) == 2
    members = [set(c.members) for c in clusters]
    assert members[0].isdisjoint(members[1])
    for c in clusters:
        assert c.members.size >= params.min_cluster_size
        # within-cluster: connected at epsilon (every member has a close peer)
        sub = pts[c.members]
        if len(sub) > 1:
            d = np.linalg.norm(sub[:, None] - sub[None, :], axis=2)
            np.fill_diagonal(d, np.inf)
            assert np.all(d.min(axis=1) <= params.cluster_epsilon + 1e-12)
    # across clusters: no pair within epsilon
    a, b = pts[clusters[0].members], pts[clusters[1].members]
    cross = np.linalg.norm(a[:, None] - b[None, :], axis=2)
    assert cross.min() > params.cluster_epsilon


def test_cluster_ids_are_deterministic():
    rng = np.random.default_rng(52)
    pts = np.vstack([blob((0, 0, 0), 5, rng), blob((4, 0, 0), 5, rng)])
    mask = np.ones(len(pts), dtype=bool)
    a = cluster_dynamic_points(pts, mask, _params())
    b = cluster_dynamic_points(pts, mask, _params())
    assert [c.members.tolist() for c in a] == [c.members.tolist() for c in b]
    # ordered by smallest member index
    firsts = [int(c.members[0]) for c in a]
    assert firsts == sorted(firsts)


def test_cluster_respects_mask():
    rng = np.random.default_rng(53)
    pts = blob((0, 0, 0), 10, rng)
    mask = np.zeros(10, dtype=bool)
    assert cluster_dynamic_points(pts, mask, _params()) == []


def test_seflow_keeps_only_source_agreeing_points():
    clusters = [Cluster(0, np.array([0, 1, 2]))]
    source = np.array([True, False, True, True, False])
    out = seflow_reassign(5, clusters, source)
    assert out.tolist() == [True, False, True, False, False]


def test_seflowpp_ratio_gates():
    params = _params(tau_1=0.05, tau_2=0.30)
    cluster = [Cluster(0, np.arange(10))]

    def run(n_src, n_nnd):
        src = np.zeros(10, dtype=bool); src[:n_src] = True
        nnd = np.zeros(10, dtype=bool); nnd[:n_nnd] = True
        return seflowpp_reassign(10, cluster, src, nnd, params).all()

    assert run(1, 3)          # min 0.1 >= 0.05, max 0.3 >= 0.30
    assert not run(0, 9)      # min ratio 0 < tau_1
    assert not run(2, 2)      # max ratio 0.2 < tau_2
    assert run(9, 9)


def test_seflowpp_decides_whole_clusters():
    params = _params(tau_1=0.05, tau_2=0.30)
    clusters = [Cluster(0, np.array([0, 1, 2, 3])),
                Cluster(1, np.array([4, 5, 6, 7]))]
    src = np.array([True, True, False, False, False, False, False, False])
    nnd = src.copy()
    out = seflowpp_reassign(8, clusters, src, nnd, params)
    assert out[:4].all() and not out[4:].any()


def test_invalid_params_rejected():
    for kw in ({"tau_1": 0.5, "tau_2": 0.3}, {"tau_d": 0.0},
               {"cluster_epsilon": -1.0}, {"min_cluster_size": 0},
               {"tau_2": 1.5}):
        with pytest.raises(ValueError):
            AutoLabelParams(**kw)
