import numpy as np
import pytest
from PIL import Image


def _save_random_png(path, size, seed):
    rng = np.random.default_rng(seed)
    arr = rng.integers(0, 256, size=(size, size, 3), dtype=np.uint8)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(arr).save(path)


@pytest.fixture
def toy_dataset(tmp_path):
    """MVTec-style layout: one class, a good and a defect folder, one mask."""
    root = tmp_path / "data"
    cls = root / "widget"
    _save_random_png(cls / "test" / "good" / "000.png", 32, 0)
    _save_random_png(cls / "test" / "good" / "001.png", 32, 1)
    _save_random_png(cls / "test" / "scratch" / "000.png", 32, 2)

    mask = np.zeros((32, 32), dtype=np.uint8)
    mask[8:20, 10:22] = 255
    mask_path = cls / "ground_truth" / "scratch" / "000_mask.png"
    mask_path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(mask).save(mask_path)
    return root
