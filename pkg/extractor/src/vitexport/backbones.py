"""Backbone registry and adapters for transformer feature taps.

Each entry knows how to build the model, which modules are the
transformer blocks (so forward hooks can tap stage outputs), the patch
stride, and the preprocessing statistics of the published checkpoint.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .errors import JobError, ModelLoadError

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


@dataclass
class Backbone:
    """A loaded model plus the metadata needed to read tokens out of it."""

    model: nn.Module
    blocks: list
    patch_size: int
    n_prefix_tokens: int
    mean: tuple
    std: tuple

    @property
    def depth(self) -> int:
        return len(self.blocks)


def _tiny_random(resize: int, seed: int) -> Backbone:
    from torchvision.models.vision_transformer import VisionTransformer

    torch.manual_seed(seed)
    model = VisionTransformer(image_size=resize, patch_size=8, num_layers=4,
                              num_heads=4, hidden_dim=32, mlp_dim=64)
    blocks = list(model.encoder.layers)
    return Backbone(model, blocks, 8, 1, (0.5, 0.5, 0.5), (0.5, 0.5, 0.5))


def _torchvision_pretrained(ctor_name: str, patch_size: int) -> Backbone:
    import torchvision.models as tvm

    try:
        ctor = getattr(tvm, ctor_name)
        model = ctor(weights="DEFAULT")
    except Exception as exc:
        raise ModelLoadError(f"could not load {ctor_name}: {exc}") from exc
    blocks = list(model.encoder.layers)
    return Backbone(model, blocks, patch_size, 1, IMAGENET_MEAN, IMAGENET_STD)


def _dinov2(variant: str, patch_size: int) -> Backbone:
    try:
        model = torch.hub.load("facebookresearch/dinov2", variant)
    except Exception as exc:
        raise ModelLoadError(f"could not load {variant}: {exc}") from exc
    return Backbone(model, list(model.blocks), patch_size, 1,
                    IMAGENET_MEAN, IMAGENET_STD)


_REGISTRY = {
    "random-tiny-8": (8, lambda resize, seed: _tiny_random(resize, seed)),
    "vit-b-16": (16, lambda resize, seed: _torchvision_pretrained("vit_b_16", 16)),
    "vit-l-16": (16, lambda resize, seed: _torchvision_pretrained("vit_l_16", 16)),
    "dinov2-vit-l-14": (14, lambda resize, seed: _dinov2("dinov2_vitl14", 14)),
    "dinov2-vit-g-14": (14, lambda resize, seed: _dinov2("dinov2_vitg14", 14)),
}


def available_backbones() -> tuple[str, ...]:
    return tuple(sorted(_REGISTRY))


def load_backbone(name: str, resize: int, seed: int = 0) -> Backbone:
    """Build the named backbone in eval mode on the CPU."""
    if name not in _REGISTRY:
        raise ModelLoadError(
            f"unknown backbone {name!r}; available: {', '.join(available_backbones())}")
    patch_size, builder = _REGISTRY[name]
    if resize % patch_size != 0:
        raise JobError(
            f"resize {resize} is not divisible by patch stride {patch_size}")
    bb = builder(resize, seed)
    bb.model.eval()
    return bb
