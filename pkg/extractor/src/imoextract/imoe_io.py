"""IMOE v1 writer and manifest emission.

This package talks to the evaluation side purely through the published
IMOE byte layout, so the writer is implemented here against that contract
rather than imported:

    "IMOE" | u32 version=1 | u32 rows | u32 dim | u8 flags | 3 zero bytes |
    rows*dim f32 row-major | rows u32 labels | u32 C | C x (u32 len, utf-8)

All integers and floats little-endian; flags bit0 marks L2-normalized rows.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"IMOE"
VERSION = 1


def write_imoe(path: str | Path, vectors: np.ndarray, labels: np.ndarray,
               class_names: list[str], normalized: bool = True) -> None:
    vectors = np.ascontiguousarray(vectors, dtype="<f4")
    labels = np.ascontiguousarray(labels, dtype="<u4")
    rows, dim = vectors.shape
    if labels.shape != (rows,):
        raise ValueError("labels must have one entry per row")
    if len(class_names) == 0 or labels.max(initial=0) >= len(class_names):
        raise ValueError("labels must index into class_names")
    if normalized:
        norms = np.linalg.norm(vectors.astype(np.float64), axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-5):
            raise ValueError("normalized flag set but rows are not unit norm")
    parts = [
        struct.pack("<4sIIIB3s", MAGIC, VERSION, rows, dim,
                    1 if normalized else 0, b"\x00\x00\x00"),
        vectors.tobytes(),
        labels.tobytes(),
        struct.pack("<I", len(class_names)),
    ]
    for name in class_names:
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)) + raw)
    Path(path).write_bytes(b"".join(parts))


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_sidecar_manifest(path: str | Path, source: str, encoder: str,
                           extra: dict | None = None) -> Path:
    """Sidecar JSON next to an IMOE file; extra keys record extraction detail."""
    if encoder not in ("original", "adapted"):
        raise ValueError('encoder must be "original" or "adapted"')
    record = {
        "path": Path(path).name,
        "sha256": sha256_file(path),
        "source": source,
        "encoder": encoder,
    }
    if extra:
        record.update(extra)
    out = Path(str(path) + ".manifest.json")
    out.write_text(json.dumps(record, sort_keys=True, indent=2) + "\n",
                   encoding="utf-8")
    return out


def read_image_manifest(path: str | Path) -> list[tuple[Path, int]]:
    """Parse a TSV manifest of (image path, label) lines.

    Paths resolve relative to the manifest file; labels must form a
    contiguous 0-based range.
    """
    manifest_path = Path(path)
    base = manifest_path.parent
    entries: list[tuple[Path, int]] = []
    for lineno, line in enumerate(manifest_path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected 'path<TAB>label'")
        image_path = Path(parts[0])
        if not image_path.is_absolute():
            image_path = base / image_path
        entries.append((image_path, int(parts[1])))
    if not entries:
        raise ValueError(f"{path}: empty manifest")
    labels = sorted({label for _, label in entries})
    if labels[0] != 0 or labels[-1] != len(labels) - 1:
        raise ValueError(f"{path}: labels must form a contiguous 0-based range")
    return entries
