"""Neighborhood mean-pooling of patch tokens at odd receptive fields.

Each token is replaced by the mean of tokens in the r x r window centered on
it, count-normalized over the cells that fall inside the grid, so border
tokens are not darkened.  r=1 is the identity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidReceptiveField
from .feature_io import FeatureSet


@dataclass(frozen=True)
class AggregatedFeatures:
    """Pooled tokens [N, L, S, S, C] at receptive field r."""

    base: FeatureSet
    r: int
    tokens: np.ndarray


def _window_mean(grid: np.ndarray, r: int) -> np.ndarray:
    """Mean over valid cells of the r x r window, for a [S, S, C] grid."""
    s = grid.shape[0]
    h = r // 2
    # summed-area table with a zero border row/column
    sat = np.zeros((s + 1, s + 1, grid.shape[2]), dtype=np.float64)
    np.cumsum(grid, axis=0, out=sat[1:, 1:])
    np.cumsum(sat[1:, 1:], axis=1, out=sat[1:, 1:])
    u = np.arange(s)
    lo_r = np.clip(u - h, 0, s)
    hi_r = np.clip(u + h + 1, 0, s)
    sums = (sat[hi_r[:, None], hi_r[None, :]] - sat[lo_r[:, None], hi_r[None, :]]
            - sat[hi_r[:, None], lo_r[None, :]] + sat[lo_r[:, None], lo_r[None, :]])
    counts = (hi_r - lo_r)[:, None] * (hi_r - lo_r)[None, :]
    return sums / counts[:, :, None]


def aggregate(fs: FeatureSet, r: int) -> AggregatedFeatures:
    """Pool every [S, S, C] token grid at receptive field r."""
    s = fs.grid_side
    if r < 1 or r % 2 == 0 or r > s:
        raise InvalidReceptiveField(f"r must be odd, positive and <= {s}, got {r}")
    src = fs.patch_tokens.astype(np.float64)
    if r == 1:
        return AggregatedFeatures(fs, 1, src)
    out = np.empty_like(src)
    for i in range(fs.n_images):
        for l in range(fs.n_layers):
            out[i, l] = _window_mean(src[i, l], r)
    return AggregatedFeatures(fs, r, out)
