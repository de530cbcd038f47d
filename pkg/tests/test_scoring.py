"""Mutual scoring tables against quadratic brute-force references."""

import numpy as np
import pytest

from anomgraph import pooling, scoring
from anomgraph.errors import EmptyRow, InvalidEta
from conftest import brute_msr, make_feature_set


def test_patch_to_image_distance(rng):
    x = rng.normal(size=5)
    img = rng.normal(size=(7, 5))
    d, idx = scoring.patch_to_image_distance(x, img)
    ref = np.sum((img - x) ** 2, axis=1)
    assert d == pytest.approx(ref.min())
    assert idx == int(np.argmin(ref))


def test_msr_matches_brute_force(rng):
    fs = make_feature_set(rng, n=5, layers=2, side=3, channels=4)
    agg = pooling.aggregate(fs, 1)
    for layer in range(2):
        idx = scoring.build_msr(agg, layer)
        tokens = fs.patch_tokens[:, layer].reshape(5, 9, 4).astype(np.float64)
        dist, order = brute_msr(tokens)
        np.testing.assert_allclose(idx.sorted_distances, dist, rtol=1e-9, atol=1e-12)
        np.testing.assert_array_equal(idx.image_order, order)


def test_msr_chunking_is_invisible(rng):
    fs = make_feature_set(rng, n=6, layers=1, side=3, channels=4)
    agg = pooling.aggregate(fs, 1)
    a = scoring.build_msr(agg, 0, chunks=1)
    b = scoring.build_msr(agg, 0, chunks=4)
    np.testing.assert_array_equal(a.sorted_distances, b.sorted_distances)
    np.testing.assert_array_equal(a.image_order, b.image_order)


def test_aggregated_index_is_layer_mean_reranked(rng):
    fs = make_feature_set(rng, n=5, layers=2, side=3, channels=4)
    agg = pooling.aggregate(fs, 1)
    res = scoring.build_aggregated_index(agg)
    t0 = fs.patch_tokens[:, 0].reshape(5, 9, 4).astype(np.float64)
    t1 = fs.patch_tokens[:, 1].reshape(5, 9, 4).astype(np.float64)
    for i in range(5):
        cands = [j for j in range(5) if j != i]
        for x in range(9):
            pairs = []
            for j in cands:
                d0 = min(np.sum((t0[j, y] - t0[i, x]) ** 2) for y in range(9))
                d1 = min(np.sum((t1[j, y] - t1[i, x]) ** 2) for y in range(9))
                pairs.append(((d0 + d1) / 2.0, j))
            pairs.sort()
            np.testing.assert_allclose(res.sorted_distances[i, x],
                                       [p[0] for p in pairs], rtol=1e-9)
            np.testing.assert_array_equal(res.image_order[i, x],
                                          [p[1] for p in pairs])
    assert res.n_layers == 2


def test_interval_average(rng):
    row = np.array([1.0, 2.0, 3.0, 10.0])
    assert scoring.interval_average_score(row, 2) == pytest.approx(1.5)
    assert scoring.interval_average_score(row, 10) == pytest.approx(4.0)
    with pytest.raises(EmptyRow):
        scoring.interval_average_score(np.array([]), 3)


def test_default_k():
    assert scoring.default_k(49) == 5          # ceil(0.1 * 49)
    assert scoring.default_k(50) == 5
    assert scoring.default_k(51) == 6
    assert scoring.default_k(1) == 1
    assert scoring.default_k(3, percent=0.01) == 1


def test_masked_scores_skip_excluded_entries(rng):
    fs = make_feature_set(rng, n=4, layers=1, side=2, channels=3)
    idx = scoring.build_msr(pooling.aggregate(fs, 1), 0)
    k = 2
    plain = scoring.masked_interval_scores(idx, k)
    np.testing.assert_allclose(plain, idx.sorted_distances[:, :, :k].mean(axis=-1))
    # masking the first entry shifts the window right by one
    idx.exclusion_mask[:, :, 0] = True
    shifted = scoring.masked_interval_scores(idx, k)
    np.testing.assert_allclose(shifted, idx.sorted_distances[:, :, 1:k + 1].mean(axis=-1))


def test_masked_scores_drop_images(rng):
    fs = make_feature_set(rng, n=5, layers=1, side=2, channels=3)
    idx = scoring.build_msr(pooling.aggregate(fs, 1), 0)
    dropped = scoring.masked_interval_scores(idx, 2, drop_images=np.array([3]))
    n, m, p = idx.sorted_distances.shape
    for i in range(n):
        for x in range(m):
            keep = idx.image_order[i, x] != 3
            ref = idx.sorted_distances[i, x][keep][:2].mean()
            assert dropped[i, x] == pytest.approx(ref)


def test_short_rows_average_what_remains(rng):
    fs = make_feature_set(rng, n=3, layers=1, side=2, channels=3)
    idx = scoring.build_msr(pooling.aggregate(fs, 1), 0)
    # k exceeds the row length: falls back to the full-row mean
    scores = scoring.masked_interval_scores(idx, 10)
    np.testing.assert_allclose(scores, idx.sorted_distances.mean(axis=-1))
    with pytest.raises(EmptyRow):
        scoring.masked_interval_scores(idx, 2, drop_images=np.array([0, 1, 2]))


def test_final_scores_average_tables(rng):
    fs = make_feature_set(rng, n=4, layers=2, side=3, channels=4)
    indices = [scoring.build_msr(pooling.aggregate(fs, r), l)
               for l in range(2) for r in (1, 3)]
    k = 1
    final = scoring.final_patch_scores(indices, k)
    ref = np.mean([idx.sorted_distances[:, :, 0] for idx in indices], axis=0)
    np.testing.assert_allclose(final, ref, rtol=1e-12)


def test_screening_plan(rng):
    cls = rng.normal(size=(6, 8))
    plan = scoring.build_screening_plan(cls, 0.5)
    assert plan.neighbor_lists.shape == (6, 3)   # ceil(0.5 * 5)
    unit = cls / np.linalg.norm(cls, axis=1, keepdims=True)
    cos = unit @ unit.T
    for i in range(6):
        others = [j for j in range(6) if j != i]
        ref = sorted(others, key=lambda j: (-cos[i, j], j))[:3]
        assert list(plan.neighbor_lists[i]) == ref
    with pytest.raises(InvalidEta):
        scoring.build_screening_plan(cls, 0.0)
    with pytest.raises(InvalidEta):
        scoring.build_screening_plan(cls, 1.5)


def test_screened_msr_restricts_candidates(rng):
    fs = make_feature_set(rng, n=6, layers=1, side=2, channels=4)
    plan = scoring.build_screening_plan(fs.class_tokens, 0.5)
    idx = scoring.build_msr(pooling.aggregate(fs, 1), 0, screening=plan)
    assert idx.sorted_distances.shape[-1] == 3
    for i in range(6):
        assert set(idx.image_order[i].ravel()) <= set(plan.neighbor_lists[i])


def test_index_cache_round_trip(tmp_path, rng):
    fs = make_feature_set(rng, n=4, layers=1, side=3, channels=4)
    idx = scoring.build_msr(pooling.aggregate(fs, 3), 0)
    path = tmp_path / "t.cdgx"
    scoring.save_index(idx, path)
    back = scoring.load_index(path)
    np.testing.assert_array_equal(back.sorted_distances, idx.sorted_distances)
    np.testing.assert_array_equal(back.image_order, idx.image_order)
    np.testing.assert_array_equal(back.matched_patch, idx.matched_patch)
    assert (back.r, back.layer) == (idx.r, idx.layer)
