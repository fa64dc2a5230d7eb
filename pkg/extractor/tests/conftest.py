from pathlib import Path

import numpy as np
import pytest
from PIL import Image

TINY = "random:tiny:7"


def write_corpus(tmp_path: Path, count: int, num_classes: int = 4,
                 side: int = 8, seed: int = 0, name: str = "corpus") -> Path:
    """Tiny labeled PNG corpus plus its TSV manifest."""
    rng = np.random.default_rng(seed)
    root = tmp_path / name
    root.mkdir(parents=True, exist_ok=True)
    lines = []
    for i in range(count):
        label = i % num_classes
        # class-dependent mean color so training has signal
        base = np.full((side, side, 3), 40 + 50 * label, dtype=np.float64)
        pixels = np.clip(base + rng.normal(0, 20, size=(side, side, 3)), 0, 255)
        path = root / f"img_{i:05d}.png"
        Image.fromarray(pixels.astype(np.uint8)).save(path)
        lines.append(f"{path.name}\t{label}")
    manifest = root / "manifest.tsv"
    manifest.write_text("\n".join(lines) + "\n")
    return manifest


@pytest.fixture
def small_manifest(tmp_path):
    return write_corpus(tmp_path, count=12, num_classes=3)
