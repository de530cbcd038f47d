"""Round-trips and corruption handling for the binary file formats."""

import numpy as np
import pytest

from anomgraph import feature_io
from anomgraph.errors import (BadMagic, DimensionError, NonFiniteValue,
                              VersionMismatch)
from conftest import make_feature_set, make_ground_truth


def test_feature_round_trip(tmp_path, rng):
    fs = make_feature_set(rng)
    path = tmp_path / "f.cdgf"
    feature_io.write_feature_set(fs, path)
    back = feature_io.load_feature_set(path)
    np.testing.assert_allclose(back.patch_tokens,
                               fs.patch_tokens.astype(np.float32), rtol=0)
    np.testing.assert_allclose(back.class_tokens,
                               fs.class_tokens.astype(np.float32), rtol=0)
    assert back.image_ids == fs.image_ids


def test_ground_truth_round_trip(tmp_path, rng):
    gt = make_ground_truth(rng, 5, 4)
    path = tmp_path / "g.cdgt"
    feature_io.write_ground_truth(gt, path)
    back = feature_io.load_ground_truth(path)
    assert np.array_equal(back.patch_labels, gt.patch_labels)
    assert np.array_equal(back.image_labels, gt.image_labels)


def test_score_map_round_trip(tmp_path, rng):
    scores = rng.random((3, 4, 4)).astype(np.float32)
    ids = ("a", "b", "c")
    path = tmp_path / "s.cdgs"
    feature_io.write_score_maps(scores, ids, path)
    back, back_ids = feature_io.load_score_maps(path)
    np.testing.assert_array_equal(back, scores)
    assert back_ids == ids


def test_bad_magic(tmp_path, rng):
    fs = make_feature_set(rng)
    path = tmp_path / "f.cdgf"
    feature_io.write_feature_set(fs, path)
    raw = bytearray(path.read_bytes())
    raw[:4] = b"XXXX"
    path.write_bytes(bytes(raw))
    with pytest.raises(BadMagic):
        feature_io.load_feature_set(path)


def test_version_mismatch(tmp_path, rng):
    fs = make_feature_set(rng)
    path = tmp_path / "f.cdgf"
    feature_io.write_feature_set(fs, path)
    raw = bytearray(path.read_bytes())
    raw[4] = 99
    path.write_bytes(bytes(raw))
    with pytest.raises(VersionMismatch):
        feature_io.load_feature_set(path)


def test_truncated_payload(tmp_path, rng):
    fs = make_feature_set(rng)
    path = tmp_path / "f.cdgf"
    feature_io.write_feature_set(fs, path)
    raw = path.read_bytes()
    path.write_bytes(raw[:len(raw) // 2])
    with pytest.raises(feature_io.DimensionError):
        feature_io.load_feature_set(path)


def test_non_finite_rejected(rng):
    fs = make_feature_set(rng)
    bad = fs.patch_tokens.copy()
    bad[0, 0, 0, 0, 0] = np.nan
    with pytest.raises(NonFiniteValue):
        feature_io.FeatureSet(bad, fs.class_tokens, fs.image_ids).validate()


def test_shape_validation(rng):
    fs = make_feature_set(rng)
    with pytest.raises(DimensionError):
        feature_io.FeatureSet(fs.patch_tokens[:1], fs.class_tokens[:1],
                              fs.image_ids[:1]).validate()
    with pytest.raises(DimensionError):
        feature_io.FeatureSet(fs.patch_tokens, fs.class_tokens,
                              ("dup",) * fs.n_images).validate()


def test_image_label_consistency(rng):
    gt = make_ground_truth(rng, 4, 4)
    bad_image = gt.image_labels.copy()
    bad_image[0] = 1 - bad_image[0]
    with pytest.raises(DimensionError):
        feature_io.GroundTruth(gt.patch_labels, bad_image).validate()
