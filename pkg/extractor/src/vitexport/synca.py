"""Synthetic consistent-anomaly augmentation for MVTec-style datasets.

Duplicates one chosen anomalous image (with its ground-truth mask) a
number of times proportional to the class size. Each duplicate gets a
small random rotation and translation over reflection padding, mild
brightness, contrast and saturation jitter, and additive Gaussian pixel
noise; the mask receives exactly the same geometric transform and none
of the photometric ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from torchvision.transforms import functional as TF

from .errors import JobError, MissingMask
from .extract import IMAGE_SUFFIXES, list_images, load_image


@dataclass
class SyncaConfig:
    """Transform magnitudes; all defaults match the augmentation recipe."""

    rotation_deg: float = 15.0
    translate_frac: float = 0.025
    jitter_frac: float = 0.10
    noise_sigma: float = 7.5
    fraction: float = 0.15
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.fraction <= 1.0:
            raise JobError(f"fraction must lie in [0, 1], got {self.fraction}")
        if min(self.rotation_deg, self.translate_frac, self.jitter_frac,
               self.noise_sigma) < 0:
            raise JobError("transform magnitudes must be non-negative")


@dataclass
class SyncaParams:
    """One sampled draw of the per-duplicate transform parameters."""

    angle: float
    shift: tuple
    brightness: float
    contrast: float
    saturation: float
    noise_seed: int


def _sample_params(rng: np.random.Generator, cfg: SyncaConfig,
                   size: tuple) -> SyncaParams:
    w, h = size
    return SyncaParams(
        angle=float(rng.uniform(-cfg.rotation_deg, cfg.rotation_deg)),
        shift=(int(round(rng.uniform(-cfg.translate_frac, cfg.translate_frac) * w)),
               int(round(rng.uniform(-cfg.translate_frac, cfg.translate_frac) * h))),
        brightness=float(rng.uniform(1 - cfg.jitter_frac, 1 + cfg.jitter_frac)),
        contrast=float(rng.uniform(1 - cfg.jitter_frac, 1 + cfg.jitter_frac)),
        saturation=float(rng.uniform(1 - cfg.jitter_frac, 1 + cfg.jitter_frac)),
        noise_seed=int(rng.integers(0, 2**31 - 1)),
    )


def _geometric(img: Image.Image, angle: float, shift: tuple,
               interpolation) -> Image.Image:
    """Rotate and translate over reflection padding, then crop back."""
    if angle == 0.0 and shift == (0, 0):
        return img
    w, h = img.size
    pad = int(math.ceil(0.25 * max(w, h)))
    x = TF.to_tensor(img)
    x = TF.pad(x, [pad, pad, pad, pad], padding_mode="reflect")
    x = TF.affine(x, angle=angle, translate=list(shift), scale=1.0, shear=[0.0],
                  interpolation=interpolation)
    x = TF.center_crop(x, [h, w])
    return TF.to_pil_image(x)


def _photometric(img: Image.Image, params: SyncaParams,
                 cfg: SyncaConfig) -> Image.Image:
    if cfg.jitter_frac > 0:
        img = TF.adjust_brightness(img, params.brightness)
        img = TF.adjust_contrast(img, params.contrast)
        img = TF.adjust_saturation(img, params.saturation)
    if cfg.noise_sigma > 0:
        arr = np.asarray(img, dtype=np.float64)
        noise_rng = np.random.default_rng(params.noise_seed)
        arr = arr + noise_rng.normal(0.0, cfg.noise_sigma, size=arr.shape)
        img = Image.fromarray(np.clip(np.round(arr), 0, 255).astype(np.uint8))
    return img


def apply_transform(img: Image.Image, mask: Image.Image, params: SyncaParams,
                    cfg: SyncaConfig) -> tuple[Image.Image, Image.Image]:
    """Produce one duplicate: paired geometry, image-only photometry."""
    out = _geometric(img, params.angle, params.shift,
                     TF.InterpolationMode.BILINEAR)
    out = _photometric(out, params, cfg)
    out_mask = _geometric(mask, params.angle, params.shift,
                          TF.InterpolationMode.NEAREST)
    return out, out_mask


def _mask_path(dataset: Path, class_name: str, source: Path) -> Path:
    rel = source.relative_to(dataset / class_name / "test")
    stem = rel.with_suffix("")
    return (dataset / class_name / "ground_truth" / stem.parent /
            f"{stem.name}_mask.png")


def make_synca(dataset, class_name: str, source, cfg: SyncaConfig | None = None,
               defect_name: str = "synca") -> list[Path]:
    """Write the augmented duplicates into the class folder.

    ``source`` is a test-split image path; its mask must exist in the
    standard ``ground_truth`` mirror layout. Returns the written image
    paths; masks land next to the other ground-truth masks.
    """
    cfg = cfg or SyncaConfig()
    dataset = Path(dataset)
    source = Path(source)
    mask_path = _mask_path(dataset, class_name, source)
    if not mask_path.is_file():
        raise MissingMask(f"no ground-truth mask at {mask_path}")

    total = len(list_images(dataset / class_name / "test"))
    n_new = int(round(cfg.fraction * total))
    img = load_image(source)
    mask = Image.open(mask_path).convert("L")
    if mask.size != img.size:
        raise JobError(f"mask size {mask.size} does not match image {img.size}")

    out_img_dir = dataset / class_name / "test" / defect_name
    out_mask_dir = dataset / class_name / "ground_truth" / defect_name
    out_img_dir.mkdir(parents=True, exist_ok=True)
    out_mask_dir.mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(cfg.seed)
    written = []
    for i in range(n_new):
        params = _sample_params(rng, cfg, img.size)
        dup, dup_mask = apply_transform(img, mask, params, cfg)
        img_path = out_img_dir / f"{i:03d}.png"
        dup.save(img_path)
        dup_mask.save(out_mask_dir / f"{i:03d}_mask.png")
        written.append(img_path)
    return written
