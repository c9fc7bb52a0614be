"""Camera curation: farthest-pair seeding, two-group assignment, greedy
farthest-point selection inside each group.

All argmax ties resolve to the smallest original index so results are
deterministic.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .geometry import make_distance

K_MIN, K_MAX = 2, 12


class CurationError(ValueError):
    pass


@dataclass(frozen=True)
class CurationResult:
    group1: list
    group2: list
    selected1: list
    selected2: list
    seeds: tuple

    def to_dict(self):
        d = asdict(self)
        d["seeds"] = list(self.seeds)
        return d


def distance_matrix(poses, distance_fn):
    n = len(poses)
    D = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            D[i, j] = D[j, i] = distance_fn(poses[i], poses[j])
    return D


def farthest_pair(poses, distance_fn):
    if len(poses) < 2:
        raise CurationError(f"farthest_pair needs at least 2 poses, got {len(poses)}")
    best, pair = -np.inf, None
    n = len(poses)
    for i in range(n):
        for j in range(i + 1, n):
            d = distance_fn(poses[i], poses[j])
            if d > best:
                best, pair = d, (i, j)
    return pair


def bipartition(poses, i, j, distance_fn):
    """Cameras no farther from seed ``i`` than from seed ``j`` go to group 1."""
    if i == j:
        raise CurationError("seed indices must differ")
    g1, g2 = [], []
    for k, p in enumerate(poses):
        (g1 if distance_fn(p, poses[i]) <= distance_fn(p, poses[j]) else g2).append(k)
    return g1, g2


def fps_select(poses, group, seed_index, K, distance_fn):
    if seed_index not in group:
        raise CurationError(f"seed {seed_index} is not in the group")
    if K < 1:
        raise CurationError(f"K must be >= 1, got {K}")
    selected = [seed_index]
    mind = {g: distance_fn(poses[g], poses[seed_index]) for g in group if g != seed_index}
    while len(selected) < min(K, len(group)):
        nxt = max(sorted(mind), key=lambda g: mind[g])  # max keeps the first of equal keys
        selected.append(nxt)
        del mind[nxt]
        for g in mind:
            mind[g] = min(mind[g], distance_fn(poses[g], poses[nxt]))
    return selected


def curate(poses, K, distance_fn=None, k_range=(K_MIN, K_MAX), frobenius=False):
    if not k_range[0] <= K <= k_range[1]:
        raise CurationError(f"K={K} outside the allowed range {k_range}")
    if distance_fn is None:
        distance_fn = make_distance(poses, frobenius=frobenius)
    i, j = farthest_pair(poses, distance_fn)
    g1, g2 = bipartition(poses, i, j, distance_fn)
    return CurationResult(
        group1=g1,
        group2=g2,
        selected1=fps_select(poses, g1, i, K, distance_fn),
        selected2=fps_select(poses, g2, j, K, distance_fn),
        seeds=(i, j),
    )


def sample_k(rng, k_range=(K_MIN, K_MAX)):
    """Training-time sparsity level, uniform over the inclusive range."""
    return int(rng.integers(k_range[0], k_range[1] + 1))
