"""Targeted patch filtering and rescoring over the reduced base.

For each flagged community the score of every patch is recomputed with that
community's images removed from the base; patches inside the community whose
score ratio exceeds the 99th percentile of outside-patch ratios depend too
strongly on intra-community matches and are excluded.  Final scores rerank
each distance row after dropping excluded patches of the target images.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyBase, EmptyRow
from .scoring import DistanceIndex, final_patch_scores, masked_interval_scores


@dataclass
class ExclusionSet:
    """(image, patch) pairs removed from the scoring base."""

    members: set[tuple[int, int]] = field(default_factory=set)
    provenance: list[dict] = field(default_factory=list)  # one entry per community
    skipped: list[dict] = field(default_factory=list)     # communities left unfiltered

    def per_image(self, n_images: int) -> list[np.ndarray]:
        out: list[list[int]] = [[] for _ in range(n_images)]
        for img, patch in self.members:
            out[img].append(patch)
        return [np.array(sorted(p), dtype=np.int64) for p in out]

    def to_dict(self) -> dict:
        return {
            "members": sorted([list(m) for m in self.members]),
            "provenance": self.provenance,
            "skipped": self.skipped,
        }


@dataclass
class AnomalyScoreMap:
    patch_scores: np.ndarray   # [N, S, S]
    image_scores: np.ndarray   # [N]


def targeted_filtering(flagged_communities, indices: list[DistanceIndex], k: int,
                       theta_percentile: float = 99.0) -> ExclusionSet:
    """Collect high-dependency patches of every flagged community."""
    result = ExclusionSet()
    if not flagged_communities:
        return result
    n, m, p = indices[0].sorted_distances.shape
    base = final_patch_scores(indices, k)
    eps = 1e-30
    for members in flagged_communities:
        community = np.asarray(sorted(members), dtype=np.int64)
        if p - community.size < k:
            msg = (f"removing community of size {community.size} leaves fewer than "
                   f"K={k} candidates; community left unfiltered")
            warnings.warn(msg)
            result.skipped.append({"community": community.tolist(), "reason": msg})
            continue
        reduced = None
        for idx in indices:
            s = masked_interval_scores(idx, k, drop_images=community)
            reduced = s if reduced is None else reduced + s
        reduced = reduced / len(indices)
        ratio = reduced / np.maximum(base, eps)
        inside = np.isin(np.arange(n), community)
        theta = float(np.percentile(ratio[~inside].reshape(-1), theta_percentile))
        picked = []
        for img in community:
            for patch in np.flatnonzero(ratio[img] > theta):
                result.members.add((int(img), int(patch)))
                picked.append([int(img), int(patch), float(ratio[img, patch])])
        result.provenance.append({
            "community": community.tolist(),
            "theta": theta,
            "excluded": picked,
        })
    return result


def _apply_exclusions(indices: list[DistanceIndex], p_ex: ExclusionSet,
                      tokens_for: dict) -> list[DistanceIndex]:
    """Rebuild the affected entries of each table for the reduced base.

    ``tokens_for[(layer, r)]`` must yield the pooled tokens [N, M, C] that
    produced the corresponding table.  Only rows whose matched patch was
    excluded are recomputed: the replacement is the min distance over the
    target image's surviving patches.
    """
    n, m, p = indices[0].sorted_distances.shape
    excluded = p_ex.per_image(n)
    out = []
    for idx in indices:
        tokens = tokens_for[(idx.layer, idx.r)]
        dist = idx.sorted_distances.copy()
        order = idx.image_order
        matched = idx.matched_patch.copy()
        mask = idx.exclusion_mask.copy()
        changed_rows = np.zeros((n, m), dtype=bool)
        for j in range(n):
            ex = excluded[j]
            if ex.size == 0:
                continue
            hit = (order == j) & np.isin(matched, ex)
            if not hit.any():
                continue
            keep = np.setdiff1d(np.arange(m), ex)
            if keep.size == 0:
                mask |= (order == j)
                changed_rows |= hit.any(axis=-1)
                continue
            sub = tokens[j, keep]                       # [m_keep, C]
            queries = tokens.reshape(n * m, -1)
            d2 = (np.sum(queries**2, axis=1)[:, None] + np.sum(sub**2, axis=1)[None, :]
                  - 2.0 * queries @ sub.T)
            np.maximum(d2, 0.0, out=d2)
            arg = np.argmin(d2, axis=1)
            repl_d = d2[np.arange(n * m), arg].reshape(n, m)
            repl_p = keep[arg].reshape(n, m)
            rows, cols, slots = np.nonzero(hit)
            flat = rows * m + cols
            dist[rows, cols, slots] = repl_d.reshape(-1)[flat]
            matched[rows, cols, slots] = repl_p.reshape(-1)[flat]
            changed_rows[rows, cols] = True
        new_order = order.copy()
        if changed_rows.any():
            rows, cols = np.nonzero(changed_rows)
            for i, c in zip(rows, cols):
                perm = np.lexsort((new_order[i, c], dist[i, c]))
                dist[i, c] = dist[i, c][perm]
                new_order[i, c] = new_order[i, c][perm]
                matched[i, c] = matched[i, c][perm]
                mask[i, c] = mask[i, c][perm]
        out.append(DistanceIndex(idx.r, idx.layer, dist, new_order, matched, mask))
    return out


def rescore_with_exclusions(indices: list[DistanceIndex], p_ex: ExclusionSet,
                            k: int, tokens_for: dict,
                            grid_side: int) -> AnomalyScoreMap:
    """Final per-patch scores over the reduced base; image score is the max.

    With an empty exclusion set the input tables are reused untouched, so the
    output is bitwise identical to plain mutual scoring.
    """
    if p_ex.members:
        indices = _apply_exclusions(indices, p_ex, tokens_for)
    try:
        patch = final_patch_scores(indices, k)
    except EmptyRow as exc:
        raise EmptyBase("exclusions removed every candidate of some patch") from exc
    n = patch.shape[0]
    image_scores = patch.max(axis=1)
    return AnomalyScoreMap(patch.reshape(n, grid_side, grid_side), image_scores)
