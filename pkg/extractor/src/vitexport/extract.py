"""Patch-token extraction from transformer backbones into CDGF files."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError
from torchvision.transforms import functional as TF

from . import cdgf
from .backbones import Backbone, load_backbone
from .errors import ImageDecodeError, JobError

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")


@dataclass
class ExtractionJob:
    """One export request: which images, which backbone, which layers.

    ``layers`` are one-based transformer block indices; the stage-end
    defaults suit a 24 block model and are validated against the actual
    backbone depth when the job runs.
    """

    dataset: Path
    class_name: str
    backbone: str
    output: Path
    resize: int = 518
    layers: tuple = (6, 12, 18, 24)
    split: str = "test"
    seed: int = 0

    def __post_init__(self):
        self.dataset = Path(self.dataset)
        self.output = Path(self.output)
        self.layers = tuple(int(i) for i in self.layers)
        if self.resize <= 0:
            raise JobError(f"resize must be positive, got {self.resize}")
        if not self.layers:
            raise JobError("at least one layer index is required")
        if len(set(self.layers)) != len(self.layers):
            raise JobError(f"duplicate layer indices in {self.layers}")

    def image_root(self) -> Path:
        return self.dataset / self.class_name / self.split


def list_images(root: Path) -> list[Path]:
    """All image files under ``root``, sorted by relative path."""
    root = Path(root)
    if not root.is_dir():
        raise JobError(f"image folder {root} does not exist")
    paths = [p for p in sorted(root.rglob("*"))
             if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES]
    if not paths:
        raise JobError(f"no images found under {root}")
    return paths


def load_image(path: Path) -> Image.Image:
    try:
        with Image.open(path) as img:
            return img.convert("RGB")
    except (UnidentifiedImageError, OSError) as exc:
        raise ImageDecodeError(f"cannot decode {path}: {exc}") from exc


def _preprocess(img: Image.Image, resize: int, bb: Backbone) -> torch.Tensor:
    img = TF.resize(img, [resize, resize],
                    interpolation=TF.InterpolationMode.BILINEAR)
    x = TF.to_tensor(img)
    x = TF.normalize(x, list(bb.mean), list(bb.std))
    return x.unsqueeze(0)


def _validate_layers(job: ExtractionJob, bb: Backbone) -> None:
    bad = [i for i in job.layers if not 1 <= i <= bb.depth]
    if bad:
        raise JobError(
            f"layer indices {bad} out of range for a {bb.depth} block backbone")


def _forward_tokens(bb: Backbone, x: torch.Tensor,
                    layers: tuple) -> tuple[np.ndarray, np.ndarray]:
    """Run one image and collect per-layer patch grids plus the class token."""
    side = x.shape[-1] // bb.patch_size
    captured = {}
    handles = []

    def make_hook(idx):
        def hook(module, args, output):
            captured[idx] = output.detach()
        return hook

    tapped = set(layers) | {bb.depth}
    for i in tapped:
        handles.append(bb.blocks[i - 1].register_forward_hook(make_hook(i)))
    try:
        with torch.no_grad():
            bb.model(x)
    finally:
        for h in handles:
            h.remove()

    grids = []
    for i in layers:
        tokens = captured[i][0]
        patch = tokens[-side * side:].reshape(side, side, -1)
        grids.append(patch.numpy().astype(np.float32))
    cls = captured[bb.depth][0, 0].numpy().astype(np.float32)
    return np.stack(grids), cls


def extract(job: ExtractionJob) -> Path:
    """Export the job's images to a CDGF file and return its path.

    Images are processed one at a time to bound memory; the byte output
    is deterministic for a fixed job and seed.
    """
    torch.manual_seed(job.seed)
    bb = load_backbone(job.backbone, job.resize, seed=job.seed)
    _validate_layers(job, bb)

    root = job.image_root()
    paths = list_images(root)
    patch_tokens, class_tokens, ids = [], [], []
    for path in paths:
        x = _preprocess(load_image(path), job.resize, bb)
        grids, cls = _forward_tokens(bb, x, job.layers)
        patch_tokens.append(grids)
        class_tokens.append(cls)
        ids.append(path.relative_to(root).as_posix())

    job.output.parent.mkdir(parents=True, exist_ok=True)
    cdgf.write_features(job.output, np.stack(patch_tokens),
                        np.stack(class_tokens), ids)
    return job.output
