"""Embedding data model and the IMOE on-disk format.

IMOE binary format v1 (little-endian throughout):

    bytes 0..3    ASCII magic "IMOE"
    bytes 4..7    u32 version, must be 1
    bytes 8..11   u32 row count
    bytes 12..15  u32 dimension
    byte  16      u8 flags, bit0 = rows are L2-normalized, other bits reserved (zero)
    bytes 17..19  zero padding
    then          rows*dim float32, row-major
    then          rows u32 labels
    then          u32 class count C
    then          C records of (u32 byte length, UTF-8 name bytes)

Writing is byte-deterministic for identical input. The reader re-validates
every invariant, including that the normalization flag matches the data, and
rejects files with trailing bytes.

A sidecar JSON manifest (``<file>.manifest.json``) records the file name, its
SHA-256, a free-form source description and the encoder identity
("original" or "adapted") so producers and consumers never need an
out-of-band label map.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"IMOE"
VERSION = 1
NORM_TOLERANCE = 1e-5

_HEADER = struct.Struct("<4sIIIB3s")  # 20 bytes


class IMOEFormatError(ValueError):
    """Raised when a file does not parse as valid IMOE v1."""


def l2_normalize(matrix: np.ndarray) -> np.ndarray:
    """Row-wise L2 normalization in float64, returned as float32."""
    m = np.asarray(matrix, dtype=np.float64)
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    if np.any(norms < 1e-12):
        raise ValueError("cannot normalize a zero row")
    return (m / norms).astype(np.float32)


def _rows_are_unit(vectors: np.ndarray, tol: float = NORM_TOLERANCE) -> bool:
    norms = np.linalg.norm(vectors.astype(np.float64), axis=1)
    return bool(np.all(np.abs(norms - 1.0) <= tol))


@dataclass(frozen=True)
class EmbeddingSet:
    """A labeled matrix of d-dimensional float32 vectors.

    Immutable after construction; the arrays are marked read-only so the
    set is safe to share across threads.
    """

    vectors: np.ndarray          # (rows, dim) float32
    labels: np.ndarray           # (rows,) int64
    class_names: tuple[str, ...]
    normalized: bool

    def __post_init__(self):
        vectors = np.ascontiguousarray(self.vectors, dtype=np.float32)
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if vectors.ndim != 2 or vectors.shape[0] < 1 or vectors.shape[1] < 1:
            raise ValueError("vectors must be a non-empty 2-D matrix")
        if labels.shape != (vectors.shape[0],):
            raise ValueError("labels must have one entry per row")
        names = tuple(self.class_names)
        if len(names) == 0:
            raise ValueError("at least one class name required")
        if len(set(names)) != len(names) or any(not n for n in names):
            raise ValueError("class names must be unique and non-empty")
        if labels.min() < 0 or labels.max() >= len(names):
            raise ValueError("labels must be 0-based class indices below the class count")
        if self.normalized != _rows_are_unit(vectors):
            raise ValueError(
                "normalization flag does not match the data "
                f"(flag={self.normalized})"
            )
        vectors.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "class_names", names)

    @property
    def rows(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def class_rows(self, class_index: int) -> np.ndarray:
        """Row indices of one class, ascending."""
        return np.flatnonzero(self.labels == class_index)


@dataclass(frozen=True)
class CacheModel:
    """Few-shot key-value store: normalized keys and one-hot label values."""

    keys: np.ndarray      # (N*K, d) float32, unit rows
    values: np.ndarray    # (N*K, N) float32 one-hot
    num_classes: int
    shots: int

    def __post_init__(self):
        keys = np.ascontiguousarray(self.keys, dtype=np.float32)
        values = np.ascontiguousarray(self.values, dtype=np.float32)
        n, k = self.num_classes, self.shots
        if keys.shape[0] != n * k or values.shape != (n * k, n):
            raise ValueError("cache shapes must be (N*K, d) keys and (N*K, N) values")
        if not _rows_are_unit(keys):
            raise ValueError("cache keys must be L2-normalized")
        if not np.all((values == 0.0) | (values == 1.0)):
            raise ValueError("values must be one-hot")
        if not np.all(values.sum(axis=1) == 1.0):
            raise ValueError("each values row must contain exactly one 1")
        if not np.all(values.sum(axis=0) == float(k)):
            raise ValueError("each class must hold exactly K cache entries")
        keys.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "keys", keys)
        object.__setattr__(self, "values", values)

    @property
    def labels(self) -> np.ndarray:
        return np.argmax(self.values, axis=1)

    @property
    def dim(self) -> int:
        return self.keys.shape[1]


@dataclass(frozen=True)
class TextClassifier:
    """Per-class prompt-embedding weight matrix, rows aligned with label indices."""

    weights: np.ndarray   # (N, d) float32, unit rows
    class_names: tuple[str, ...]

    def __post_init__(self):
        weights = np.ascontiguousarray(self.weights, dtype=np.float32)
        names = tuple(self.class_names)
        if weights.ndim != 2 or weights.shape[0] != len(names):
            raise ValueError("weights must have one row per class name")
        if len(set(names)) != len(names) or any(not n for n in names):
            raise ValueError("class names must be unique and non-empty")
        if not _rows_are_unit(weights):
            raise ValueError("classifier rows must be L2-normalized")
        weights.setflags(write=False)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "class_names", names)

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    @property
    def dim(self) -> int:
        return self.weights.shape[1]


def text_classifier_from_set(es: EmbeddingSet) -> TextClassifier:
    """Interpret an embedding set with labels 0..N-1 as a classifier matrix."""
    if es.rows != es.num_classes or not np.array_equal(es.labels, np.arange(es.rows)):
        raise ValueError("classifier file must hold exactly one row per class, in order")
    if not es.normalized:
        raise ValueError("classifier rows must be normalized")
    return TextClassifier(weights=es.vectors, class_names=es.class_names)


def build_cache(train: EmbeddingSet, shot_indices: np.ndarray) -> CacheModel:
    """Assemble a cache from selected training rows.

    The indices must pick the same number of rows for every class; keys are
    laid out class-major, preserving the given within-class order.
    """
    if not train.normalized:
        raise ValueError("cache construction requires normalized training embeddings")
    idx = np.asarray(shot_indices, dtype=np.int64)
    if idx.ndim != 1 or idx.size == 0:
        raise ValueError("shot_indices must be a non-empty 1-D index array")
    if idx.min() < 0 or idx.max() >= train.rows:
        raise ValueError("shot index out of range")
    if len(np.unique(idx)) != idx.size:
        raise ValueError("duplicate shot index")

    n = train.num_classes
    per_class: list[list[int]] = [[] for _ in range(n)]
    for i in idx:
        per_class[int(train.labels[i])].append(int(i))
    counts = {len(rows) for rows in per_class}
    if len(counts) != 1:
        raise ValueError(f"unequal shots per class: {sorted(len(r) for r in per_class)}")
    k = counts.pop()
    if k == 0:
        raise ValueError("every class needs at least one shot")

    order = [i for c in range(n) for i in per_class[c]]
    keys = train.vectors[order]
    values = np.zeros((n * k, n), dtype=np.float32)
    values[np.arange(n * k), train.labels[order]] = 1.0
    return CacheModel(keys=keys, values=values, num_classes=n, shots=k)


# ── IMOE file I/O ────────────────────────────────────────────────────────


def write_embedding_set(es: EmbeddingSet, path: str | Path) -> None:
    """Serialize a validated set to IMOE v1 bytes."""
    flags = 1 if es.normalized else 0
    parts = [
        _HEADER.pack(MAGIC, VERSION, es.rows, es.dim, flags, b"\x00\x00\x00"),
        np.ascontiguousarray(es.vectors, dtype="<f4").tobytes(),
        es.labels.astype("<u4").tobytes(),
        struct.pack("<I", es.num_classes),
    ]
    for name in es.class_names:
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)) + raw)
    Path(path).write_bytes(b"".join(parts))


def read_embedding_set(path: str | Path) -> EmbeddingSet:
    """Parse and fully re-validate an IMOE v1 file."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise IMOEFormatError("file shorter than the fixed header")
    magic, version, rows, dim, flags, padding = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise IMOEFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise IMOEFormatError(f"unsupported version {version}")
    if rows < 1 or dim < 1:
        raise IMOEFormatError("rows and dim must be positive")
    if flags & ~0x01:
        raise IMOEFormatError(f"reserved flag bits set: 0x{flags:02x}")
    if padding != b"\x00\x00\x00":
        raise IMOEFormatError("nonzero header padding")

    offset = _HEADER.size
    need = rows * dim * 4
    if len(data) < offset + need:
        raise IMOEFormatError("truncated vector payload")
    vectors = np.frombuffer(data, dtype="<f4", count=rows * dim, offset=offset)
    vectors = vectors.reshape(rows, dim)
    offset += need

    need = rows * 4
    if len(data) < offset + need:
        raise IMOEFormatError("truncated label section")
    labels = np.frombuffer(data, dtype="<u4", count=rows, offset=offset).astype(np.int64)
    offset += need

    if len(data) < offset + 4:
        raise IMOEFormatError("missing class count")
    (num_classes,) = struct.unpack_from("<I", data, offset)
    offset += 4
    if num_classes < 1:
        raise IMOEFormatError("class count must be positive")

    names = []
    for _ in range(num_classes):
        if len(data) < offset + 4:
            raise IMOEFormatError("truncated class-name table")
        (length,) = struct.unpack_from("<I", data, offset)
        offset += 4
        if len(data) < offset + length:
            raise IMOEFormatError("truncated class-name record")
        try:
            names.append(data[offset:offset + length].decode("utf-8"))
        except UnicodeDecodeError as exc:
            raise IMOEFormatError(f"class name is not valid UTF-8: {exc}") from exc
        offset += length
    if offset != len(data):
        raise IMOEFormatError(f"{len(data) - offset} trailing bytes after class-name table")

    claimed = bool(flags & 0x01)
    if claimed != _rows_are_unit(vectors):
        raise IMOEFormatError(
            "normalization flag does not match row norms "
            f"(flag={claimed})"
        )
    try:
        return EmbeddingSet(
            vectors=vectors.copy(), labels=labels, class_names=tuple(names),
            normalized=claimed,
        )
    except ValueError as exc:
        raise IMOEFormatError(str(exc)) from exc


def sha256_of_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def manifest_path(path: str | Path) -> Path:
    return Path(str(path) + ".manifest.json")


def write_manifest(path: str | Path, source: str, encoder: str) -> Path:
    """Write the sidecar manifest for an already-written IMOE file."""
    if encoder not in ("original", "adapted"):
        raise ValueError('encoder must be "original" or "adapted"')
    record = {
        "path": Path(path).name,
        "sha256": sha256_of_file(path),
        "source": source,
        "encoder": encoder,
    }
    out = manifest_path(path)
    out.write_text(json.dumps(record, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return out


def read_manifest(path: str | Path) -> dict:
    record = json.loads(manifest_path(path).read_text(encoding="utf-8"))
    for key in ("path", "sha256", "source", "encoder"):
        if key not in record:
            raise IMOEFormatError(f"manifest missing key {key!r}")
    return record
