"""Writer (and minimal reader) for the CDGF patch-feature container.

The layout is little endian throughout: a 4 byte magic ``CDGF``, a u32
format version, five u32 shape fields (images, layers, grid side, patch
channels, class channels), the patch tokens as float32 in [N, L, S, S, C]
order, the class tokens as float32 in [N, C_cls] order, and finally one
length-prefixed UTF-8 image id per image.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import JobError

MAGIC = b"CDGF"
VERSION = 1


def write_features(path, patch_tokens: np.ndarray, class_tokens: np.ndarray,
                   image_ids) -> None:
    """Serialize one feature set to ``path``.

    ``patch_tokens`` must be [N, L, S, S, C] with a square grid and
    ``class_tokens`` [N, C_cls]; both are stored as little-endian float32.
    """
    pt = np.ascontiguousarray(patch_tokens, dtype="<f4")
    ct = np.ascontiguousarray(class_tokens, dtype="<f4")
    ids = tuple(str(s) for s in image_ids)
    if pt.ndim != 5 or pt.shape[2] != pt.shape[3]:
        raise JobError(f"patch tokens must be [N, L, S, S, C], got {pt.shape}")
    if ct.ndim != 2 or ct.shape[0] != pt.shape[0]:
        raise JobError(f"class tokens must be [N, C_cls], got {ct.shape}")
    if len(ids) != pt.shape[0]:
        raise JobError("one image id required per image")
    if not np.isfinite(pt).all() or not np.isfinite(ct).all():
        raise JobError("exported tokens contain non-finite values")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<6I", VERSION, pt.shape[0], pt.shape[1],
                             pt.shape[2], pt.shape[4], ct.shape[1]))
        fh.write(pt.tobytes())
        fh.write(ct.tobytes())
        for s in ids:
            raw = s.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)


def read_features(path):
    """Load a feature file back as (patch_tokens, class_tokens, image_ids)."""
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise JobError(f"{path} is not a CDGF feature file")
        version, n, l, s, c, c_cls = struct.unpack("<6I", fh.read(24))
        if version != VERSION:
            raise JobError(f"unsupported CDGF version {version}")
        pt = np.frombuffer(fh.read(4 * n * l * s * s * c),
                           dtype="<f4").reshape(n, l, s, s, c)
        ct = np.frombuffer(fh.read(4 * n * c_cls), dtype="<f4").reshape(n, c_cls)
        ids = []
        for _ in range(n):
            (length,) = struct.unpack("<I", fh.read(4))
            ids.append(fh.read(length).decode("utf-8"))
    return pt, ct, tuple(ids)
