"""Classification and segmentation metrics plus filtering diagnostics.

All metrics are computed from first principles (rank statistics and exact
threshold sweeps) so they are invariant under strictly monotone transforms
of the scores and agree with brute-force references.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np
from scipy import ndimage

from .errors import NoAnomalousRegion, NoPositives, SingleClass


def _check_binary(labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels).astype(bool)
    if labels.all() or not labels.any():
        raise SingleClass("need both positive and negative samples")
    return labels


def auroc(scores, labels) -> float:
    """Mann-Whitney formulation; tied pairs contribute one half."""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = _check_binary(np.asarray(labels).reshape(-1))
    order = np.argsort(scores, kind="stable")
    ranks = np.empty_like(scores)
    sorted_scores = scores[order]
    # midranks for ties
    i = 0
    n = scores.size
    pos_rank = np.empty(n)
    while i < n:
        j = i
        while j + 1 < n and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        pos_rank[i:j + 1] = 0.5 * (i + j) + 1.0
        i = j + 1
    ranks[order] = pos_rank
    n_pos = int(labels.sum())
    n_neg = n - n_pos
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def f1_max(scores, labels) -> float:
    """Max F1 over thresholds at the distinct score values (score >= t)."""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = _check_binary(np.asarray(labels).reshape(-1))
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    y = labels[order].astype(np.int64)
    tp = np.cumsum(y)
    fp = np.cumsum(1 - y)
    n_pos = tp[-1]
    # threshold group ends: last occurrence of each distinct score
    ends = np.flatnonzero(np.diff(s) != 0.0)
    ends = np.append(ends, s.size - 1)
    precision = tp[ends] / (tp[ends] + fp[ends])
    recall = tp[ends] / n_pos
    denom = precision + recall
    f1 = np.where(denom > 0, 2 * precision * recall / np.maximum(denom, 1e-300), 0.0)
    return float(f1.max())


def average_precision(scores, labels) -> float:
    """Sum of (delta recall) * precision over the descending-score sweep."""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1).astype(bool)
    if not labels.any():
        raise NoPositives("no positive samples")
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    y = labels[order].astype(np.int64)
    tp = np.cumsum(y)
    fp = np.cumsum(1 - y)
    n_pos = tp[-1]
    ends = np.flatnonzero(np.diff(s) != 0.0)
    ends = np.append(ends, s.size - 1)
    precision = tp[ends] / (tp[ends] + fp[ends])
    recall = tp[ends] / n_pos
    prev = np.concatenate([[0.0], recall[:-1]])
    return float(np.sum((recall - prev) * precision))


def aupro(score_maps: np.ndarray, label_maps: np.ndarray,
          fpr_limit: float = 0.3) -> float:
    """Area under mean per-region overlap vs FPR, capped and normalized.

    Connected anomalous regions use 8-connectivity.  The exact threshold
    sweep visits every distinct score value.
    """
    scores = np.asarray(score_maps, dtype=np.float64)
    labels = np.asarray(label_maps).astype(bool)
    structure = np.ones((3, 3), dtype=int)
    regions: list[np.ndarray] = []   # sorted scores of each region's pixels
    for sc, lb in zip(scores, labels):
        lab, n_regions = ndimage.label(lb, structure=structure)
        for rid in range(1, n_regions + 1):
            regions.append(np.sort(sc[lab == rid]))
    if not regions:
        raise NoAnomalousRegion("ground truth contains no anomalous region")
    neg = np.sort(scores[~labels])
    if neg.size == 0:
        raise NoAnomalousRegion("no negative pixels to sweep FPR over")
    thresholds = np.unique(scores)[::-1]   # descending
    # count of pixels >= t via searchsorted on ascending arrays
    fpr = (neg.size - np.searchsorted(neg, thresholds, side="left")) / neg.size
    pro = np.zeros_like(thresholds)
    for reg in regions:
        overlap = (reg.size - np.searchsorted(reg, thresholds, side="left")) / reg.size
        pro += overlap
    pro /= len(regions)
    # curve starts at (0, 0); fpr is non-decreasing over descending thresholds
    fpr = np.concatenate([[0.0], fpr])
    pro = np.concatenate([[0.0], pro])
    if fpr[-1] < fpr_limit:
        # flat extension: beyond the last threshold everything is predicted
        fpr = np.append(fpr, fpr_limit)
        pro = np.append(pro, pro[-1])
    cut = np.searchsorted(fpr, fpr_limit, side="left")
    if fpr[cut] > fpr_limit:
        # interpolate the curve at the cap
        f0, f1 = fpr[cut - 1], fpr[cut]
        p0, p1 = pro[cut - 1], pro[cut]
        frac = (fpr_limit - f0) / (f1 - f0)
        fpr = np.concatenate([fpr[:cut], [fpr_limit]])
        pro = np.concatenate([pro[:cut], [p0 + frac * (p1 - p0)]])
    else:
        fpr = fpr[:cut + 1]
        pro = pro[:cut + 1]
    return float(np.trapezoid(pro, fpr) / fpr_limit)


@dataclass
class EvalReport:
    auroc_cls: float
    f1_cls: float
    ap_cls: float
    auroc_seg: float
    f1_seg: float
    ap_seg: float
    pro_seg: float
    capture_rate: float | None = None
    excluded_rate: float | None = None
    excluded_split: dict | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def capture_and_exclusion(p_ex, patch_labels: np.ndarray,
                          baseline_scores: np.ndarray,
                          consistent_percentile: float = 80.0) -> dict:
    """Exclusion diagnostics against ground truth.

    Anomalous patches scoring below the given percentile of normal-patch
    baseline scores count as deceptively-matched ("consistent"); the capture
    rate is the share of those the exclusion set removed.
    """
    scores = np.asarray(baseline_scores, dtype=np.float64)
    scores = scores.reshape(scores.shape[0], -1)
    labels = np.asarray(patch_labels).reshape(scores.shape).astype(bool)
    thresh = np.percentile(scores[~labels], consistent_percentile)
    consistent = labels & (scores < thresh)
    inconsistent = labels & ~consistent
    mask = np.zeros(labels.shape, dtype=bool)
    for img, patch in p_ex:
        mask[img, patch] = True
    n_total = labels.size
    n_consistent = int(consistent.sum())
    captured = int((mask & consistent).sum())
    return {
        "capture_rate": captured / n_consistent if n_consistent else 0.0,
        "excluded_rate": float(mask.sum()) / n_total,
        "n_consistent": n_consistent,
        "n_excluded": int(mask.sum()),
        "excluded_split": {
            "normal": int((mask & ~labels).sum()),
            "consistent": captured,
            "inconsistent": int((mask & inconsistent).sum()),
        },
        "normal_excluded_rate": float((mask & ~labels).sum()) / max(int((~labels).sum()), 1),
    }


def evaluate(patch_scores: np.ndarray, image_scores: np.ndarray,
             patch_labels: np.ndarray, image_labels: np.ndarray,
             fpr_limit: float = 0.3) -> EvalReport:
    """Full report at the patch grid resolution."""
    return EvalReport(
        auroc_cls=auroc(image_scores, image_labels),
        f1_cls=f1_max(image_scores, image_labels),
        ap_cls=average_precision(image_scores, image_labels),
        auroc_seg=auroc(patch_scores.reshape(-1), patch_labels.reshape(-1)),
        f1_seg=f1_max(patch_scores.reshape(-1), patch_labels.reshape(-1)),
        ap_seg=average_precision(patch_scores.reshape(-1), patch_labels.reshape(-1)),
        pro_seg=aupro(patch_scores, patch_labels, fpr_limit),
    )
