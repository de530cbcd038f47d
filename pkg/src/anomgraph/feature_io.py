"""Binary feature-file I/O.

The engine is decoupled from any feature extractor through a small family of
little-endian binary formats sharing one framing style:

  CDGF  patch/class token sets (float32)
  CDGT  ground-truth label sidecar (uint8)
  CDGS  per-patch score maps (float32)

Each file starts with a 4-byte magic, a u32 version, u32 shape fields, the
payload, and (for CDGF/CDGS) length-prefixed UTF-8 image identifiers.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import BadMagic, DimensionError, NonFiniteValue, VersionMismatch

MAGIC_FEATURES = b"CDGF"
MAGIC_LABELS = b"CDGT"
MAGIC_SCORES = b"CDGS"
VERSION = 1


@dataclass(frozen=True)
class FeatureSet:
    """All patch tokens of a test set plus per-image class tokens.

    patch_tokens has shape [N, L, S, S, C] with S the patch-grid side;
    class_tokens has shape [N, C_cls].
    """

    patch_tokens: np.ndarray
    class_tokens: np.ndarray
    image_ids: tuple[str, ...]

    @property
    def n_images(self) -> int:
        return self.patch_tokens.shape[0]

    @property
    def n_layers(self) -> int:
        return self.patch_tokens.shape[1]

    @property
    def grid_side(self) -> int:
        return self.patch_tokens.shape[2]

    @property
    def n_channels(self) -> int:
        return self.patch_tokens.shape[4]

    @property
    def n_patches(self) -> int:
        return self.grid_side * self.grid_side

    def validate(self) -> "FeatureSet":
        pt = self.patch_tokens
        ct = self.class_tokens
        if pt.ndim != 5 or pt.shape[2] != pt.shape[3]:
            raise DimensionError(f"patch_tokens must be [N, L, S, S, C], got {pt.shape}")
        if ct.ndim != 2 or ct.shape[0] != pt.shape[0]:
            raise DimensionError(f"class_tokens must be [N, C_cls], got {ct.shape}")
        if pt.shape[0] < 2:
            raise DimensionError("need at least 2 images for mutual scoring")
        if min(pt.shape) < 1 or ct.shape[1] < 1:
            raise DimensionError("all tensor dimensions must be positive")
        if len(self.image_ids) != pt.shape[0]:
            raise DimensionError("image_ids length must equal N")
        if len(set(self.image_ids)) != len(self.image_ids):
            raise DimensionError("image_ids must be unique")
        if not np.isfinite(pt).all() or not np.isfinite(ct).all():
            raise NonFiniteValue("feature tensors contain NaN or Inf")
        return self


@dataclass(frozen=True)
class GroundTruth:
    """Binary patch labels [N, S, S] and image labels [N]."""

    patch_labels: np.ndarray
    image_labels: np.ndarray

    def validate(self) -> "GroundTruth":
        pl = self.patch_labels
        il = self.image_labels
        if pl.ndim != 3 or pl.shape[1] != pl.shape[2]:
            raise DimensionError(f"patch_labels must be [N, S, S], got {pl.shape}")
        if il.shape != (pl.shape[0],):
            raise DimensionError("image_labels must have shape [N]")
        derived = pl.reshape(pl.shape[0], -1).any(axis=1).astype(np.uint8)
        if not np.array_equal(derived, il.astype(np.uint8)):
            raise DimensionError("image label must be 1 iff any patch label is 1")
        return self


def _read_exact(fh, n: int) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise DimensionError(f"truncated file: wanted {n} bytes, got {len(buf)}")
    return buf


def _read_header(fh, magic: bytes, n_fields: int) -> tuple[int, ...]:
    got = _read_exact(fh, 4)
    if got != magic:
        raise BadMagic(f"expected magic {magic!r}, found {got!r}")
    version = struct.unpack("<I", _read_exact(fh, 4))[0]
    if version != VERSION:
        raise VersionMismatch(f"unsupported version {version}")
    return struct.unpack(f"<{n_fields}I", _read_exact(fh, 4 * n_fields))


def _read_ids(fh, n: int) -> tuple[str, ...]:
    ids = []
    for _ in range(n):
        (length,) = struct.unpack("<I", _read_exact(fh, 4))
        ids.append(_read_exact(fh, length).decode("utf-8"))
    return tuple(ids)


def _write_ids(fh, ids) -> None:
    for s in ids:
        raw = s.encode("utf-8")
        fh.write(struct.pack("<I", len(raw)))
        fh.write(raw)


def write_feature_set(fs: FeatureSet, path) -> None:
    fs.validate()
    pt = np.ascontiguousarray(fs.patch_tokens, dtype="<f4")
    ct = np.ascontiguousarray(fs.class_tokens, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(MAGIC_FEATURES)
        fh.write(struct.pack("<6I", VERSION, fs.n_images, fs.n_layers,
                             fs.grid_side, fs.n_channels, ct.shape[1]))
        fh.write(pt.tobytes())
        fh.write(ct.tobytes())
        _write_ids(fh, fs.image_ids)


def load_feature_set(path) -> FeatureSet:
    with open(path, "rb") as fh:
        n, l, s, c, c_cls = _read_header(fh, MAGIC_FEATURES, 5)
        n_patch_floats = n * l * s * s * c
        payload = _read_exact(fh, 4 * n_patch_floats)
        pt = np.frombuffer(payload, dtype="<f4").reshape(n, l, s, s, c)
        ct = np.frombuffer(_read_exact(fh, 4 * n * c_cls), dtype="<f4").reshape(n, c_cls)
        ids = _read_ids(fh, n)
        trailing = fh.read(1)
    if trailing:
        raise DimensionError("trailing bytes after image ids")
    return FeatureSet(pt, ct, ids).validate()


def write_ground_truth(gt: GroundTruth, path) -> None:
    gt.validate()
    pl = np.ascontiguousarray(gt.patch_labels, dtype=np.uint8)
    il = np.ascontiguousarray(gt.image_labels, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(MAGIC_LABELS)
        fh.write(struct.pack("<3I", VERSION, pl.shape[0], pl.shape[1]))
        fh.write(pl.tobytes())
        fh.write(il.tobytes())


def load_ground_truth(path) -> GroundTruth:
    with open(path, "rb") as fh:
        n, s = _read_header(fh, MAGIC_LABELS, 2)
        pl = np.frombuffer(_read_exact(fh, n * s * s), dtype=np.uint8).reshape(n, s, s)
        il = np.frombuffer(_read_exact(fh, n), dtype=np.uint8)
        trailing = fh.read(1)
    if trailing:
        raise DimensionError("trailing bytes after labels")
    return GroundTruth(pl, il).validate()


def write_score_maps(scores: np.ndarray, image_ids, path) -> None:
    """Score maps [N, S, S] in the same framing as the feature format."""
    if scores.ndim != 3 or scores.shape[1] != scores.shape[2]:
        raise DimensionError(f"score maps must be [N, S, S], got {scores.shape}")
    arr = np.ascontiguousarray(scores, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(MAGIC_SCORES)
        fh.write(struct.pack("<3I", VERSION, arr.shape[0], arr.shape[1]))
        fh.write(arr.tobytes())
        _write_ids(fh, image_ids)


def load_score_maps(path) -> tuple[np.ndarray, tuple[str, ...]]:
    with open(path, "rb") as fh:
        n, s = _read_header(fh, MAGIC_SCORES, 2)
        arr = np.frombuffer(_read_exact(fh, 4 * n * s * s), dtype="<f4").reshape(n, s, s)
        ids = _read_ids(fh, n)
    return arr.astype(np.float64), ids
