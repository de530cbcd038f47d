"""Feature-level synthetic test sets with planted recurring anomalies.

Normal patches cluster around per-position prototypes with low-dimensional
Gaussian noise, which makes the patch-to-patch similarity tail a power law
of index equal to the noise dimension.  A chosen group of images shares
near-identical "planted" patches drawn tightly around prototypes placed far
from every normal prototype, reproducing the deceptive-match geometry;
other images carry unique far patches that stay easy to detect.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import ConfigInfeasible
from .feature_io import FeatureSet, GroundTruth

PROTO_SCALE = 30.0
ANOMALY_SCALE = 60.0
INCONSISTENT_OFFSET = 10.0
NOISE_SCALE = 1.0


@dataclass(frozen=True)
class SynthConfig:
    n_images: int = 50
    n_layers: int = 2
    grid_side: int = 14
    n_channels: int = 64
    n_consistent_images: int = 10
    plant_patch_count: int = 10
    plant_cluster_spread: float = 0.02
    normal_tail_alpha: float = 3.0
    n_inconsistent_images: int = 3
    texture_group_size: int = 4
    texture_positions_min: int = 1
    texture_positions_max: int = 3
    texture_spread: float = 0.02
    texture_offset: float = 5.0
    label_halo: int = 2
    seed: int = 0

    def validate(self) -> "SynthConfig":
        if self.n_images < 2:
            raise ConfigInfeasible("need at least 2 images")
        if not 0 <= self.n_consistent_images < self.n_images:
            raise ConfigInfeasible("planted image count must be < N")
        if self.n_consistent_images + self.n_inconsistent_images > self.n_images:
            raise ConfigInfeasible("planted + inconsistent images exceed N")
        if self.plant_patch_count >= self.grid_side**2:
            raise ConfigInfeasible("plant patch count must be < M")
        if self.plant_patch_count < 1 or self.grid_side < 2 or self.n_channels < 4:
            raise ConfigInfeasible("degenerate geometry")
        if self.plant_cluster_spread < 0 or self.texture_spread < 0:
            raise ConfigInfeasible("negative spread")
        if self.texture_group_size == 1 or self.texture_group_size < 0:
            raise ConfigInfeasible("texture groups need >= 2 members (0 disables)")
        if self.texture_group_size and not (1 <= self.texture_positions_min
                                            <= self.texture_positions_max):
            raise ConfigInfeasible("texture position range is invalid")
        if self.label_halo < 0:
            raise ConfigInfeasible("label halo must be >= 0")
        k = int(round(self.normal_tail_alpha))
        if not 1 <= k <= self.n_channels:
            raise ConfigInfeasible("tail index must round to [1, C]")
        return self


@dataclass
class PlantManifest:
    consistent_images: list[int]
    inconsistent_images: list[int]
    plant_cells: dict[int, list[int]]      # image -> flat patch indices
    burnout_horizon: int                   # number of deceptive neighbors
    texture_groups: list = field(default_factory=list)
    noise_scale: float = NOISE_SCALE
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "consistent_images": self.consistent_images,
            "inconsistent_images": self.inconsistent_images,
            "plant_cells": {str(k): v for k, v in self.plant_cells.items()},
            "burnout_horizon": self.burnout_horizon,
            "texture_groups": self.texture_groups,
            "noise_scale": self.noise_scale,
            "config": self.config,
        }


def _block_cells(grid: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """A compact rectangular block of ``count`` flat cell indices."""
    side = math.ceil(math.sqrt(count))
    side = min(side, grid)
    rows = math.ceil(count / side)
    r0 = int(rng.integers(0, grid - rows + 1))
    c0 = int(rng.integers(0, grid - side + 1))
    cells = []
    for r in range(rows):
        for c in range(side):
            if len(cells) < count:
                cells.append((r0 + r) * grid + (c0 + c))
    return np.array(cells, dtype=np.int64)


def _halo_cells(grid: int, cells: np.ndarray, halo: int) -> np.ndarray:
    """Flat indices of cells within Chebyshev distance ``halo`` of ``cells``."""
    mask = np.zeros((grid, grid), dtype=bool)
    mask[cells // grid, cells % grid] = True
    if halo > 0:
        size = 2 * halo + 1
        mask = ndimage.binary_dilation(mask, structure=np.ones((size, size), bool))
    return np.flatnonzero(mask.ravel())


def _far_prototypes(count: int, c: int, normal_protos: np.ndarray,
                    rng: np.random.Generator) -> np.ndarray:
    """Prototypes at distance >= 10 noise scales from every normal prototype."""
    out = np.empty((count, c))
    for i in range(count):
        for _ in range(100):
            cand = rng.normal(0.0, 1.0, c)
            cand *= ANOMALY_SCALE / np.linalg.norm(cand)
            if np.min(np.linalg.norm(normal_protos - cand, axis=-1)) >= 10 * NOISE_SCALE:
                out[i] = cand
                break
        else:
            raise ConfigInfeasible("could not place far anomaly prototypes")
    return out


def generate(cfg: SynthConfig) -> tuple[FeatureSet, GroundTruth, PlantManifest]:
    cfg.validate()
    rng = np.random.Generator(np.random.Philox(key=cfg.seed))
    n, layers, s, c = cfg.n_images, cfg.n_layers, cfg.grid_side, cfg.n_channels
    m = s * s
    k_eff = int(round(cfg.normal_tail_alpha))

    # per (layer, position) prototype and low-dimensional noise basis
    protos = rng.normal(0.0, 1.0, (layers, m, c))
    protos *= PROTO_SCALE / np.linalg.norm(protos, axis=-1, keepdims=True)
    bases = np.empty((layers, m, c, k_eff))
    for l in range(layers):
        for pos in range(m):
            q, _ = np.linalg.qr(rng.normal(0.0, 1.0, (c, k_eff)))
            bases[l, pos] = q

    coeffs = rng.normal(0.0, NOISE_SCALE, (n, layers, m, k_eff))
    tokens = protos[None] + np.einsum("lpck,nlpk->nlpc", bases, coeffs)

    roles = rng.permutation(n)
    consistent = sorted(int(v) for v in roles[:cfg.n_consistent_images])
    inconsistent = sorted(int(v) for v in
                          roles[cfg.n_consistent_images:
                                cfg.n_consistent_images + cfg.n_inconsistent_images])

    labels = np.zeros((n, m), dtype=np.uint8)
    plant_cells: dict[int, list[int]] = {}

    # shared texture motifs among non-planted images: groups of images carry
    # an offset prototype at a few positions, so the background graph gets
    # communities with a spread of densities instead of one degenerate value
    texture_groups: list[dict] = []
    if cfg.texture_group_size:
        eligible = np.array([i for i in range(n) if i not in set(consistent)])
        eligible = rng.permutation(eligible)
        n_groups = eligible.size // cfg.texture_group_size
        for g in range(n_groups):
            members = eligible[g * cfg.texture_group_size:
                               (g + 1) * cfg.texture_group_size]
            span = cfg.texture_positions_max - cfg.texture_positions_min + 1
            n_pos = cfg.texture_positions_min + g % span
            positions = rng.choice(m, size=n_pos, replace=False)
            for l in range(layers):
                for pos in positions:
                    direction = rng.normal(0.0, 1.0, c)
                    direction *= cfg.texture_offset / np.linalg.norm(direction)
                    motif = protos[l, pos] + direction
                    jitter = rng.normal(0.0, 1.0, (members.size, c))
                    tokens[members, l, pos, :] = motif + cfg.texture_spread * jitter
            texture_groups.append({"members": [int(v) for v in members],
                                   "positions": [int(v) for v in positions]})

    if consistent:
        cells = _block_cells(s, cfg.plant_patch_count, rng)
        # patch tokens mix neighboring content when pooled, so every cell
        # whose largest window overlaps the planted block carries anomaly
        # signal; the ground truth labels that halo too
        halo = _halo_cells(s, cells, cfg.label_halo)
        anom_protos = _far_prototypes(cfg.plant_patch_count * layers, c,
                                      protos.reshape(-1, c), rng)
        anom_protos = anom_protos.reshape(layers, cfg.plant_patch_count, c)
        for img in consistent:
            jitter = rng.normal(0.0, 1.0, (layers, cfg.plant_patch_count, c))
            tokens[img][:, cells, :] = anom_protos + cfg.plant_cluster_spread * jitter
            labels[img, halo] = 1
            plant_cells[img] = [int(v) for v in cells]

    # inconsistent anomalies sit at a moderate per-image offset from each
    # position's prototype: clearly anomalous in score, but their distance
    # curves stay flat at a scale whose endurance ratios never rank among
    # the suspicious links
    for img in inconsistent:
        cells = _block_cells(s, cfg.plant_patch_count, rng)
        offsets = rng.normal(0.0, 1.0, (layers, cfg.plant_patch_count, c))
        offsets *= INCONSISTENT_OFFSET / np.linalg.norm(offsets, axis=-1,
                                                        keepdims=True)
        jitter = rng.normal(0.0, 1.0, (layers, cfg.plant_patch_count, c))
        tokens[img][:, cells, :] = (protos[:, cells, :] + offsets
                                    + cfg.plant_cluster_spread * jitter)
        # moderate offsets leak only weak signal into neighboring windows,
        # so only the planted cells themselves are labeled here
        labels[img, cells] = 1
        plant_cells[img] = [int(v) for v in cells]

    class_tokens = tokens[:, 0].mean(axis=1) + 0.01 * rng.normal(0.0, 1.0, (n, c))

    fs = FeatureSet(
        patch_tokens=tokens.reshape(n, layers, s, s, c).astype(np.float32),
        class_tokens=class_tokens.astype(np.float32),
        image_ids=tuple(f"synth_{i:04d}" for i in range(n)),
    ).validate()
    gt = GroundTruth(
        patch_labels=labels.reshape(n, s, s),
        image_labels=labels.any(axis=1).astype(np.uint8),
    ).validate()
    manifest = PlantManifest(
        consistent_images=consistent,
        inconsistent_images=inconsistent,
        plant_cells=plant_cells,
        burnout_horizon=max(cfg.n_consistent_images - 1, 0),
        texture_groups=texture_groups,
        config=cfg.__dict__.copy(),
    )
    return fs, gt, manifest


def degenerate_duplicate_config(n_images: int = 20, n_duplicates: int = 5,
                                seed: int = 0) -> SynthConfig:
    """Duplicated anomalous images sharing one large identical plant block.

    The near-zero-ratio links then saturate any fixed link budget inside the
    duplicate clique, which is the failure case coverage-based selection
    exists to handle.  The block size is chosen so the clique plus the
    texture-group links fill whole admission batches with almost no
    incidental links.
    """
    return SynthConfig(
        n_images=n_images,
        n_layers=2,
        grid_side=14,
        n_channels=64,
        n_consistent_images=n_duplicates,
        plant_patch_count=42,
        plant_cluster_spread=0.0,
        n_inconsistent_images=0,
        texture_group_size=3,
        seed=seed,
    )
