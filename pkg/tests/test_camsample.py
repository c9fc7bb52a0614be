import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from artifact import camsample as cs
from artifact import geometry as geo
from artifact.geometry import CameraPose

from .conftest import random_poses


def at(x, y=0.0, z=0.0):
    return CameraPose(np.eye(3), np.array([x, y, z], float), 10, 10, 4, 3, 8, 6)


def dist_for(poses):
    return geo.make_distance(poses)


def brute_pair(poses, d):
    pairs = list(itertools.combinations(range(len(poses)), 2))
    vals = [d(poses[i], poses[j]) for i, j in pairs]
    best = max(vals)
    return min(p for p, v in zip(pairs, vals) if v == best)


def test_farthest_pair_trivial():
    poses = [at(0), at(1)]
    assert cs.farthest_pair(poses, dist_for(poses)) == (0, 1)
    poses = [at(0), at(1), at(5)]
    assert cs.farthest_pair(poses, dist_for(poses)) == (0, 2)


def test_farthest_pair_rejects_single():
    with pytest.raises(cs.CurationError):
        cs.farthest_pair([at(0)], geo.frobenius_distance)


def test_farthest_pair_matches_exhaustive(poses10):
    d = dist_for(poses10)
    assert cs.farthest_pair(poses10, d) == brute_pair(poses10, d)


def test_bipartition_tie_goes_to_group1():
    poses = [at(-1), at(1), at(0)]
    g1, g2 = cs.bipartition(poses, 0, 1, geo.frobenius_distance)
    assert g1 == [0, 2] and g2 == [1]


def test_bipartition_matches_per_camera_check():
    poses = random_poses(21, 12)
    d = dist_for(poses)
    i, j = cs.farthest_pair(poses, d)
    g1, g2 = cs.bipartition(poses, i, j, d)
    assert i in g1 and j in g2
    assert sorted(g1 + g2) == list(range(12))
    for k in range(12):
        assert (k in g1) == (d(poses[k], poses[i]) <= d(poses[k], poses[j]))


def test_fps_trivial():
    poses = [at(0), at(3)]
    d = geo.frobenius_distance
    assert cs.fps_select(poses, [0, 1], 1, 1, d) == [1]
    assert cs.fps_select(poses, [0, 1], 1, 2, d) == [1, 0]
    with pytest.raises(cs.CurationError):
        cs.fps_select(poses, [0], 1, 2, d)


def assert_greedy_maxmin(poses, sel, group, d):
    for step in range(1, len(sel)):
        chosen = sel[:step]
        rest = [g for g in group if g not in chosen]
        scores = {g: min(d(poses[g], poses[s]) for s in chosen) for g in rest}
        best = max(scores.values())
        assert scores[sel[step]] == best
        assert sel[step] == min(g for g in rest if scores[g] == best)


def test_fps_greedy_property_exhaustive():
    poses = random_poses(22, 8)
    d = dist_for(poses)
    sel = cs.fps_select(poses, list(range(8)), 3, 4, d)
    assert len(sel) == 4 and sel[0] == 3
    assert_greedy_maxmin(poses, sel, list(range(8)), d)


def monolithic_camera_sampling(poses, K):
    # straight-line reimplementation over a precomputed matrix
    n = len(poses)
    rbar = np.mean([np.sqrt(p.t @ p.t) for p in poses])
    D = np.zeros((n, n))
    for a in range(n):
        for b in range(n):
            M = poses[a].R.T @ poses[b].R
            s = np.linalg.norm([M[2, 1] - M[1, 2], M[0, 2] - M[2, 0], M[1, 0] - M[0, 1]])
            D[a, b] = np.arctan2(s, np.trace(M) - 1) / np.pi + np.linalg.norm(poses[a].t - poses[b].t) / rbar
    iu = np.triu_indices(n, 1)
    flat = np.argmax(D[iu])
    p1, p2 = int(iu[0][flat]), int(iu[1][flat])
    G1 = [k for k in range(n) if D[k, p1] <= D[k, p2]]
    G2 = [k for k in range(n) if k not in G1]
    out = []
    for G, seed in ((G1, p1), (G2, p2)):
        S = [seed]
        while len(S) < K and len(S) < len(G):
            cand = [g for g in G if g not in S]
            score = [min(D[g, s] for s in S) for g in cand]
            S.append(cand[int(np.argmax(score))])
        out.append(S)
    return G1, G2, out[0], out[1], (p1, p2)


def test_curate_matches_monolithic():
    poses = random_poses(23, 10)
    r = cs.curate(poses, 4)
    assert (r.group1, r.group2, r.selected1, r.selected2, r.seeds) == monolithic_camera_sampling(poses, 4)


def test_curate_two_clusters():
    poses = [at(0), at(0.1), at(10), at(10.1)]
    r = cs.curate(poses, 2)
    assert sorted(r.group1) == sorted(r.selected1)
    assert {frozenset(r.group1), frozenset(r.group2)} == {frozenset({0, 1}), frozenset({2, 3})}


def test_curate_k_larger_than_group():
    poses = [at(0), at(0.1), at(10)]
    r = cs.curate(poses, 12)
    assert sorted(r.selected1) == sorted(r.group1)
    assert sorted(r.selected2) == sorted(r.group2)


def test_curate_k_range_enforced():
    with pytest.raises(cs.CurationError):
        cs.curate([at(0), at(1)], 1)
    with pytest.raises(cs.CurationError):
        cs.curate([at(0), at(1)], 13)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 11))
def test_curate_invariants(seed, K):
    poses = random_poses(seed, 10)
    r = cs.curate(poses, K)
    assert set(r.group1).isdisjoint(r.group2)
    assert sorted(r.group1 + r.group2) == list(range(10))
    assert r.seeds[0] in r.group1 and r.seeds[1] in r.group2
    assert set(r.selected1) <= set(r.group1) and set(r.selected2) <= set(r.group2)
    assert len(r.selected1) == min(K, len(r.group1))
    assert len(r.selected2) == min(K, len(r.group2))
    nxt = cs.curate(poses, K + 1)
    assert nxt.selected1[:K] == r.selected1
    assert nxt.selected2[:K] == r.selected2
    assert cs.curate(poses, K) == r


def test_curate_permutation_relabels():
    poses = random_poses(24, 10)
    perm = np.random.default_rng(0).permutation(10)
    shuffled = [poses[k] for k in perm]
    a = cs.curate(poses, 4)
    b = cs.curate(shuffled, 4)
    relabel = lambda idx: {int(perm[k]) for k in idx}
    assert {frozenset(a.selected1), frozenset(a.selected2)} == {
        frozenset(relabel(b.selected1)),
        frozenset(relabel(b.selected2)),
    }


def test_curation_result_json():
    r = cs.curate([at(0), at(1), at(5)], 2)
    d = r.to_dict()
    assert set(d) == {"group1", "group2", "selected1", "selected2", "seeds"}


def test_sample_k_range():
    rng = np.random.default_rng(0)
    ks = {cs.sample_k(rng) for _ in range(500)}
    assert ks == set(range(2, 13))
