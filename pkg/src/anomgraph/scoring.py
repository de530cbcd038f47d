"""Mutual similarity ranking and interval-average anomaly scoring.

Every patch is compared against all other images of the test set: its
distance to an image is the squared Euclidean distance to the closest patch
of that image.  Per patch the distances to all candidate images are sorted
ascending (stable, ties broken by ascending image index); anomaly scores are
means of the K smallest entries, averaged over layers and receptive fields.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, EmptyRow, InvalidEta
from .feature_io import VERSION, _read_exact, _read_header
from .pooling import AggregatedFeatures

MAGIC_INDEX = b"CDGX"


@dataclass
class DistanceIndex:
    """Sorted patch-to-image distances for one (layer, receptive field).

    Arrays are [N, M, P] with P the number of candidate images per row
    (N-1, or the screening-list length).  ``image_order`` holds the candidate
    image index of each sorted entry, ``matched_patch`` the argmin patch
    inside that image, ``exclusion_mask`` marks entries invalidated by
    filtering.
    """

    r: int
    layer: int
    sorted_distances: np.ndarray
    image_order: np.ndarray
    matched_patch: np.ndarray
    exclusion_mask: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.exclusion_mask is None:
            self.exclusion_mask = np.zeros(self.sorted_distances.shape, dtype=bool)


@dataclass
class AggregatedIndex:
    """Layer-averaged r=1 distance table, re-ranked by the layer mean.

    ``per_layer_distances``/``per_layer_matched`` are [L, N, M, P], aligned
    with ``image_order``, and preserve which patch of the candidate image
    carried each per-layer link.
    """

    sorted_distances: np.ndarray
    image_order: np.ndarray
    per_layer_distances: np.ndarray
    per_layer_matched: np.ndarray

    @property
    def n_layers(self) -> int:
        return self.per_layer_distances.shape[0]


@dataclass(frozen=True)
class ScreeningPlan:
    """Per image, the most class-token-similar other images."""

    eta: float
    neighbor_lists: np.ndarray  # [N, n_keep] int32, descending cosine


def _flat(agg: AggregatedFeatures, layer: int, normalize: bool) -> np.ndarray:
    """Tokens of one layer as [N, M, C]."""
    n, _, s, _, c = agg.tokens.shape
    t = agg.tokens[:, layer].reshape(n, s * s, c)
    if normalize:
        norms = np.linalg.norm(t, axis=-1, keepdims=True)
        t = t / np.maximum(norms, 1e-30)
    return t


def patch_to_image_distance(x: np.ndarray, image_tokens: np.ndarray) -> tuple[float, int]:
    """Min squared Euclidean distance from one token to an image's tokens."""
    if x.shape[-1] != image_tokens.shape[-1]:
        raise DimensionMismatch(
            f"channel mismatch: {x.shape[-1]} vs {image_tokens.shape[-1]}")
    d = np.sum((image_tokens - x) ** 2, axis=-1)
    idx = int(np.argmin(d))
    return float(d[idx]), idx


def _min_dist_block(queries: np.ndarray, base: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per query token, min distance and argmin patch inside every base image.

    queries [Mq, C], base [Nb, M, C] -> ([Mq, Nb], [Mq, Nb]).
    """
    nb, m, c = base.shape
    flat = base.reshape(nb * m, c)
    d2 = (np.sum(queries**2, axis=1)[:, None] + np.sum(flat**2, axis=1)[None, :]
          - 2.0 * queries @ flat.T)
    np.maximum(d2, 0.0, out=d2)
    d2 = d2.reshape(queries.shape[0], nb, m)
    mp = np.argmin(d2, axis=2)
    dist = np.take_along_axis(d2, mp[:, :, None], axis=2)[:, :, 0]
    return dist, mp


def candidate_lists(n: int, screening: ScreeningPlan | None) -> list[np.ndarray]:
    """Candidate image indices per query image, ascending, self excluded."""
    if screening is None:
        return [np.delete(np.arange(n), i) for i in range(n)]
    return [np.sort(screening.neighbor_lists[i]) for i in range(n)]


def build_msr(agg: AggregatedFeatures, layer: int,
              screening: ScreeningPlan | None = None,
              normalize: bool = False, chunks: int = 1) -> DistanceIndex:
    """Build the sorted distance table for one (layer, r)."""
    tokens = _flat(agg, layer, normalize)
    n, m, _ = tokens.shape
    cands = candidate_lists(n, screening)
    p = len(cands[0])
    dist = np.empty((n, m, p))
    order = np.empty((n, m, p), dtype=np.int32)
    matched = np.empty((n, m, p), dtype=np.int32)
    block = max(1, math.ceil(n / max(1, chunks)))
    for start in range(0, n, block):
        for i in range(start, min(start + block, n)):
            cl = cands[i]
            d, mp = _min_dist_block(tokens[i], tokens[cl])
            rank = np.argsort(d, axis=1, kind="stable")
            dist[i] = np.take_along_axis(d, rank, axis=1)
            order[i] = cl[rank]
            matched[i] = np.take_along_axis(mp, rank, axis=1)
    return DistanceIndex(agg.r, layer, dist, order, matched)


def build_aggregated_index(agg_r1: AggregatedFeatures,
                           screening: ScreeningPlan | None = None,
                           normalize: bool = False, chunks: int = 1) -> AggregatedIndex:
    """Average per-image r=1 distances over layers, then re-rank by the mean."""
    n, n_layers = agg_r1.tokens.shape[0], agg_r1.tokens.shape[1]
    m = agg_r1.tokens.shape[2] * agg_r1.tokens.shape[3]
    cands = candidate_lists(n, screening)
    p = len(cands[0])
    per_layer = np.empty((n_layers, n, m, p))
    per_matched = np.empty((n_layers, n, m, p), dtype=np.int32)
    for l in range(n_layers):
        tokens = _flat(agg_r1, l, normalize)
        for i in range(n):
            d, mp = _min_dist_block(tokens[i], tokens[cands[i]])
            per_layer[l, i] = d
            per_matched[l, i] = mp
    mean_d = per_layer.mean(axis=0)
    dist = np.empty((n, m, p))
    order = np.empty((n, m, p), dtype=np.int32)
    pl = np.empty_like(per_layer)
    pm = np.empty_like(per_matched)
    for i in range(n):
        rank = np.argsort(mean_d[i], axis=1, kind="stable")
        dist[i] = np.take_along_axis(mean_d[i], rank, axis=1)
        order[i] = cands[i][rank]
        for l in range(n_layers):
            pl[l, i] = np.take_along_axis(per_layer[l, i], rank, axis=1)
            pm[l, i] = np.take_along_axis(per_matched[l, i], rank, axis=1)
    return AggregatedIndex(dist, order, pl, pm)


def build_screening_plan(class_tokens: np.ndarray, eta: float) -> ScreeningPlan:
    """Keep the ceil(eta * (N-1)) most cosine-similar other images per image."""
    if not 0.0 < eta <= 1.0:
        raise InvalidEta(f"eta must be in (0, 1], got {eta}")
    n = class_tokens.shape[0]
    norms = np.linalg.norm(class_tokens, axis=1, keepdims=True)
    unit = class_tokens / np.maximum(norms, 1e-30)
    cos = unit @ unit.T
    n_keep = math.ceil(eta * (n - 1))
    lists = np.empty((n, n_keep), dtype=np.int32)
    for i in range(n):
        others = np.delete(np.arange(n), i)
        # stable sort on descending similarity, ties by ascending index
        rank = np.argsort(-cos[i, others], kind="stable")
        lists[i] = others[rank][:n_keep]
    return ScreeningPlan(eta, lists)


def interval_average_score(sorted_row: np.ndarray, k: int) -> float:
    """Mean of the K smallest valid distances of one pre-sorted row."""
    if sorted_row.size == 0:
        raise EmptyRow("no valid distances remain in this row")
    k = min(k, sorted_row.size)
    return float(np.mean(sorted_row[:k]))


def masked_interval_scores(index: DistanceIndex, k: int,
                           drop_images: np.ndarray | None = None) -> np.ndarray:
    """Interval averages [N, M] honoring the exclusion mask.

    ``drop_images`` additionally invalidates all entries pointing at the
    given image indices (used for community-removal rescoring).  Rows with
    fewer than K valid entries average what remains; fully empty rows raise.
    """
    valid = ~index.exclusion_mask
    if drop_images is not None and drop_images.size:
        valid = valid & ~np.isin(index.image_order, drop_images)
    ranks = np.cumsum(valid, axis=-1)
    take = valid & (ranks <= k)
    counts = take.sum(axis=-1)
    if (counts == 0).any():
        raise EmptyRow("a patch row has no valid distances left")
    sums = np.sum(index.sorted_distances, axis=-1, where=take)
    return sums / counts


def final_patch_scores(indices: list[DistanceIndex], k: int) -> np.ndarray:
    """Unweighted mean over all (layer, r) tables of the interval averages."""
    acc = None
    for idx in indices:
        s = masked_interval_scores(idx, k)
        acc = s if acc is None else acc + s
    return acc / len(indices)


def default_k(n_candidates: int, percent: float = 0.10) -> int:
    """K = ceil(percent * row length), at least 1."""
    return max(1, math.ceil(percent * n_candidates))


def save_index(index: DistanceIndex, path) -> None:
    """Cache one distance table (framed like the feature files)."""
    n, m, p = index.sorted_distances.shape
    with open(path, "wb") as fh:
        fh.write(MAGIC_INDEX)
        fh.write(struct.pack("<6I", VERSION, index.r, index.layer, n, m, p))
        fh.write(np.ascontiguousarray(index.sorted_distances, "<f8").tobytes())
        fh.write(np.ascontiguousarray(index.image_order, "<i4").tobytes())
        fh.write(np.ascontiguousarray(index.matched_patch, "<i4").tobytes())


def load_index(path) -> DistanceIndex:
    with open(path, "rb") as fh:
        r, layer, n, m, p = _read_header(fh, MAGIC_INDEX, 5)
        shape = (n, m, p)
        count = n * m * p
        dist = np.frombuffer(_read_exact(fh, 8 * count), "<f8").reshape(shape)
        order = np.frombuffer(_read_exact(fh, 4 * count), "<i4").reshape(shape)
        matched = np.frombuffer(_read_exact(fh, 4 * count), "<i4").reshape(shape)
    return DistanceIndex(r, layer, dist.copy(), order.copy(), matched.copy())
