"""Shared fixtures and brute-force reference helpers."""

from __future__ import annotations

import numpy as np
import pytest

from anomgraph.feature_io import FeatureSet, GroundTruth


def make_feature_set(rng: np.random.Generator, n: int = 4, layers: int = 2,
                     side: int = 4, channels: int = 6) -> FeatureSet:
    tokens = rng.normal(0.0, 1.0, (n, layers, side, side, channels))
    cls = rng.normal(0.0, 1.0, (n, channels))
    ids = tuple(f"img_{i:03d}" for i in range(n))
    return FeatureSet(tokens, cls, ids).validate()


def make_ground_truth(rng: np.random.Generator, n: int, side: int) -> GroundTruth:
    labels = (rng.random((n, side, side)) < 0.2).astype(np.uint8)
    labels[0] = 0          # keep at least one fully normal image
    labels[1, 0, 0] = 1    # and at least one anomalous one
    image = labels.reshape(n, -1).any(axis=1).astype(np.uint8)
    return GroundTruth(labels, image).validate()


def brute_window_mean(grid: np.ndarray, r: int) -> np.ndarray:
    """Direct per-cell loop over the valid r x r window."""
    s = grid.shape[0]
    h = r // 2
    out = np.empty_like(grid, dtype=np.float64)
    for a in range(s):
        for b in range(s):
            rows = slice(max(a - h, 0), min(a + h + 1, s))
            cols = slice(max(b - h, 0), min(b + h + 1, s))
            out[a, b] = grid[rows, cols].mean(axis=(0, 1))
    return out


def brute_msr(tokens: np.ndarray):
    """Sorted min-distance tables from quadratic loops.

    tokens [N, M, C] -> (dist [N, M, N-1], order [N, M, N-1]).
    Ties keep ascending candidate-image order.
    """
    n, m, _ = tokens.shape
    dist = np.empty((n, m, n - 1))
    order = np.empty((n, m, n - 1), dtype=np.int64)
    for i in range(n):
        cands = [j for j in range(n) if j != i]
        for x in range(m):
            d = []
            for j in cands:
                best = min(float(np.sum((tokens[j, y] - tokens[i, x]) ** 2))
                           for y in range(m))
                d.append(best)
            rank = sorted(range(len(cands)), key=lambda t: (d[t], cands[t]))
            dist[i, x] = [d[t] for t in rank]
            order[i, x] = [cands[t] for t in rank]
    return dist, order


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
