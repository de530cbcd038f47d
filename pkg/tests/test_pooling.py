"""Window pooling against a direct per-cell reference."""

import numpy as np
import pytest

from anomgraph import pooling
from anomgraph.errors import InvalidReceptiveField
from conftest import brute_window_mean, make_feature_set


@pytest.mark.parametrize("r", [3, 5])
def test_window_mean_matches_reference(rng, r):
    fs = make_feature_set(rng, n=3, layers=2, side=7, channels=5)
    agg = pooling.aggregate(fs, r)
    for i in range(fs.n_images):
        for l in range(fs.n_layers):
            ref = brute_window_mean(fs.patch_tokens[i, l].astype(np.float64), r)
            np.testing.assert_allclose(agg.tokens[i, l], ref, rtol=1e-9, atol=1e-12)


def test_r1_is_identity(rng):
    fs = make_feature_set(rng)
    agg = pooling.aggregate(fs, 1)
    np.testing.assert_array_equal(agg.tokens, fs.patch_tokens.astype(np.float64))


def test_constant_grid_unchanged(rng):
    fs = make_feature_set(rng, n=2, layers=1, side=5, channels=3)
    const = np.full_like(fs.patch_tokens, 2.5)
    fs2 = pooling.FeatureSet(const, fs.class_tokens, fs.image_ids)
    agg = pooling.aggregate(fs2, 3)
    np.testing.assert_allclose(agg.tokens, 2.5)


def test_full_grid_window_is_global_mean(rng):
    fs = make_feature_set(rng, n=2, layers=1, side=5, channels=3)
    agg = pooling.aggregate(fs, 5)
    # center cell's 5x5 window covers the whole grid
    for i in range(2):
        np.testing.assert_allclose(
            agg.tokens[i, 0, 2, 2],
            fs.patch_tokens[i, 0].mean(axis=(0, 1)), rtol=1e-12)


@pytest.mark.parametrize("r", [0, 2, 4, -1, 9])
def test_invalid_receptive_fields(rng, r):
    fs = make_feature_set(rng, side=7)
    with pytest.raises(InvalidReceptiveField):
        pooling.aggregate(fs, r)
