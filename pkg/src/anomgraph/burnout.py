"""Neighbor-exhaustion statistics and coverage-based link selection.

A patch whose close matches recur in only a handful of images shows an
abrupt distance spike once those images are used up.  The ratio of an early
ranked distance to a reference ranked distance (the endurance ratio) is
therefore exceptionally small for such patches; links with the smallest
weighted ratios are admitted in batches until the induced image graph covers
enough nodes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ZeroDistance, ZeroReference
from .scoring import AggregatedIndex

EPS_DISTANCE = 1e-12


def growth_rate(sorted_distances: np.ndarray, i: int, clamp: bool = True) -> float:
    """Log-ratio of consecutive ranked distances, 1-based index i."""
    d = np.asarray(sorted_distances, dtype=np.float64)
    lo, hi = d[i - 1], d[i]
    if clamp:
        lo, hi = max(lo, EPS_DISTANCE), max(hi, EPS_DISTANCE)
    elif lo <= 0.0:
        raise ZeroDistance(f"d_({i}) is zero")
    return float(np.log(hi / lo))


def growth_rates(sorted_distances: np.ndarray) -> np.ndarray:
    """All consecutive log-ratios along the last axis, with clamping."""
    d = np.maximum(np.asarray(sorted_distances, dtype=np.float64), EPS_DISTANCE)
    return np.log(d[..., 1:] / d[..., :-1])


def endurance_ratio(sorted_distances: np.ndarray, i: int, omega: int,
                    clamp: bool = True) -> float:
    """d_(i) / d_(omega), both 1-based ranks, i <= omega."""
    d = np.asarray(sorted_distances, dtype=np.float64)
    num, ref = d[i - 1], d[omega - 1]
    if clamp:
        num, ref = max(num, EPS_DISTANCE), max(ref, EPS_DISTANCE)
    elif ref <= 0.0:
        raise ZeroReference(f"d_({omega}) is zero")
    return float(num / ref)


def weighted_endurance_ratio(sorted_distances: np.ndarray, i: int, omega: int,
                             alpha: float, clamp: bool = True) -> float:
    """d_(i)^(1-alpha) / d_(omega); alpha in [0, 1), alpha=0 is the raw ratio."""
    d = np.asarray(sorted_distances, dtype=np.float64)
    num, ref = d[i - 1], d[omega - 1]
    if clamp:
        num, ref = max(num, EPS_DISTANCE), max(ref, EPS_DISTANCE)
    elif ref <= 0.0:
        raise ZeroReference(f"d_({omega}) is zero")
    return float(num ** (1.0 - alpha) / ref)


@dataclass
class LinkPool:
    """Flat candidate-link arrays, one entry per (patch, target rank).

    Sorted ascending by ``weighted_ratio``.  ``n_layers`` records how many
    per-layer links each admitted pair contributes to the graph.
    """

    source_image: np.ndarray
    source_patch: np.ndarray
    target_rank: np.ndarray      # 1-based rank in the aggregated order
    target_image: np.ndarray
    distance: np.ndarray
    raw_ratio: np.ndarray
    weighted_ratio: np.ndarray
    n_layers: int = 1

    def __len__(self) -> int:
        return self.source_image.size


@dataclass
class SuspiciousLinkSet:
    """Prefix of the sorted link pool admitted by coverage-based selection."""

    pool: LinkPool
    n_selected: int
    lambda_effective: float
    coverage_achieved: float
    n_batches: int

    def selected(self) -> LinkPool:
        s = slice(0, self.n_selected)
        return LinkPool(self.pool.source_image[s], self.pool.source_patch[s],
                        self.pool.target_rank[s], self.pool.target_image[s],
                        self.pool.distance[s], self.pool.raw_ratio[s],
                        self.pool.weighted_ratio[s], self.pool.n_layers)

    def to_records(self) -> list[dict]:
        sel = self.selected()
        return [
            {"source_image": int(sel.source_image[j]),
             "source_patch": int(sel.source_patch[j]),
             "target_image": int(sel.target_image[j]),
             "target_rank": int(sel.target_rank[j]),
             "distance": float(sel.distance[j]),
             "raw_ratio": float(sel.raw_ratio[j]),
             "weighted_ratio": float(sel.weighted_ratio[j])}
            for j in range(len(sel))
        ]


def build_link_pool(index: AggregatedIndex, omega: int, alpha: float) -> LinkPool:
    """All candidate links at ranks 1..omega-1, sorted by weighted ratio.

    Distances below EPS_DISTANCE are clamped first, so exact-duplicate
    patches get ratios near zero and are admitted earliest.
    """
    n, m, p = index.sorted_distances.shape
    if not 1 < omega <= p:
        raise ValueError(f"omega must be in (1, {p}], got {omega}")
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must be in [0, 1), got {alpha}")
    d = np.maximum(index.sorted_distances, EPS_DISTANCE)
    ref = d[:, :, omega - 1]                      # [N, M]
    early = d[:, :, :omega - 1]                   # [N, M, omega-1]
    raw = early / ref[:, :, None]
    weighted = early ** (1.0 - alpha) / ref[:, :, None]
    src_img = np.broadcast_to(np.arange(n, dtype=np.int32)[:, None, None], early.shape)
    src_patch = np.broadcast_to(np.arange(m, dtype=np.int32)[None, :, None], early.shape)
    ranks = np.broadcast_to(np.arange(1, omega, dtype=np.int32)[None, None, :], early.shape)
    tgt = index.image_order[:, :, :omega - 1]
    flat_w = weighted.reshape(-1)
    order = np.argsort(flat_w, kind="stable")
    return LinkPool(
        source_image=src_img.reshape(-1)[order],
        source_patch=src_patch.reshape(-1)[order],
        target_rank=ranks.reshape(-1)[order],
        target_image=tgt.reshape(-1)[order].astype(np.int32),
        distance=early.reshape(-1)[order],
        raw_ratio=raw.reshape(-1)[order],
        weighted_ratio=flat_w[order],
        n_layers=index.n_layers,
    )


def _coverage_curve(pool: LinkPool, n: int) -> np.ndarray:
    """First admission position (0-based) at which each node gains degree >= 1."""
    first = np.full(n, len(pool), dtype=np.int64)
    pos = np.arange(len(pool))
    for nodes in (pool.source_image, pool.target_image):
        # reversed so earlier positions win the assignment
        first_seen = np.full(n, len(pool), dtype=np.int64)
        first_seen[nodes[::-1]] = pos[::-1]
        np.minimum(first, first_seen, out=first)
    return np.sort(first)


def coverage_at(pool: LinkPool, n: int, n_links: int) -> float:
    """Fraction of the N nodes with degree >= 1 after the first n_links links."""
    first = _coverage_curve(pool, n)
    return float(np.searchsorted(first, n_links, side="left") / n)


def coverage_based_selection(pool: LinkPool, tau_cov: float, n: int) -> SuspiciousLinkSet:
    """Admit sorted links in batches of N(N-1)/2 until coverage >= tau_cov.

    Exhausting the pool before reaching the target is a valid terminal state.
    """
    if not 0.0 < tau_cov <= 1.0:
        raise ValueError(f"tau_cov must be in (0, 1], got {tau_cov}")
    batch = n * (n - 1) // 2
    first = _coverage_curve(pool, n)
    total = len(pool)
    k = batch
    batches = 1
    while True:
        n_sel = min(k, total)
        coverage = np.searchsorted(first, n_sel, side="left") / n
        if coverage >= tau_cov or n_sel == total:
            break
        k += batch
        batches += 1
    lam = float(pool.weighted_ratio[n_sel - 1]) if n_sel else 0.0
    return SuspiciousLinkSet(pool, int(n_sel), lam, float(coverage), batches)


def fixed_budget_selection(pool: LinkPool, budget: int, n: int) -> SuspiciousLinkSet:
    """Admit exactly the first ``budget`` links (diagnostic baseline)."""
    n_sel = min(budget, len(pool))
    coverage = coverage_at(pool, n, n_sel)
    lam = float(pool.weighted_ratio[n_sel - 1]) if n_sel else 0.0
    return SuspiciousLinkSet(pool, n_sel, lam, coverage, 1)
