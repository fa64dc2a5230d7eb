"""Image and prompt extraction into IMOE files.

Images go through the standard contrastive-model preprocessing (bicubic
resize of the shorter side, center crop, per-channel normalization) and the
vision tower; prompts go through the byte tokenizer and the text tower.
Rows are L2-normalized float32. Extraction runs in eval mode with no
augmentation, so re-running a job reproduces the same file hash.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .adapters import AdapterConfig, install_adapters, load_adapter_state
from .imoe_io import read_image_manifest, sha256_file, write_imoe, write_sidecar_manifest
from .model import DualEncoder, build_backbone
from .tokenizer import ByteTokenizer

# standard contrastive-pretraining channel statistics
IMAGE_MEAN = (0.48145466, 0.4578275, 0.40821073)
IMAGE_STD = (0.26862954, 0.26130258, 0.27577711)

ADAPTER_CHECKPOINT_FORMAT = "imoextract-adapter-v1"


@dataclass
class ExtractJob:
    manifest: str
    encoder: str                      # backbone spec: random:<preset>:<seed> or path
    out: str
    class_names: list[str] = field(default_factory=list)
    adapter_checkpoint: str | None = None
    batch_size: int = 32
    source: str = "image extraction"

    @property
    def mode(self) -> str:
        return "adapted" if self.adapter_checkpoint else "original"


def preprocess_image(image: Image.Image, size: int) -> torch.Tensor:
    """Bicubic shorter-side resize, center crop, normalize; (3, size, size)."""
    image = image.convert("RGB")
    w, h = image.size
    scale = size / min(w, h)
    image = image.resize((max(size, round(w * scale)), max(size, round(h * scale))),
                         Image.BICUBIC)
    w, h = image.size
    left, top = (w - size) // 2, (h - size) // 2
    image = image.crop((left, top, left + size, top + size))
    array = np.asarray(image, dtype=np.float32) / 255.0
    tensor = torch.from_numpy(array).permute(2, 0, 1)
    mean = torch.tensor(IMAGE_MEAN).view(3, 1, 1)
    std = torch.tensor(IMAGE_STD).view(3, 1, 1)
    return (tensor - mean) / std


def load_adapter_checkpoint(path: str | Path) -> dict:
    payload = torch.load(path, map_location="cpu", weights_only=True)
    if payload.get("format") != ADAPTER_CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not an adapter checkpoint of this package")
    return payload


def prepare_encoder(job_encoder: str, adapter_checkpoint: str | None
                    ) -> tuple[DualEncoder, dict]:
    """Backbone plus optional adapters, in eval mode, with provenance."""
    model, provenance = build_backbone(job_encoder)
    if adapter_checkpoint is not None:
        payload = load_adapter_checkpoint(adapter_checkpoint)
        if payload["backbone_config"] != model.config.to_dict() \
                or payload["backbone_identity"] != provenance["identity"]:
            raise ValueError("adapter checkpoint was trained for a different backbone")
        adapters = install_adapters(model, AdapterConfig(**payload["adapter_config"]))
        load_adapter_state(adapters, payload["adapter_state"])
        for param in adapters.parameters():
            param.requires_grad_(False)
        provenance = dict(provenance)
        provenance["adapter_checkpoint"] = str(adapter_checkpoint)
        provenance["adapter_sha256"] = sha256_file(adapter_checkpoint)
    model.eval()
    return model, provenance


def _l2_normalize(array: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(array.astype(np.float64), axis=1, keepdims=True)
    return (array / np.maximum(norms, 1e-12)).astype(np.float32)


def extract_images(job: ExtractJob) -> Path:
    """Encode every readable manifest image; write IMOE + sidecar manifest.

    Unreadable images are skipped with a warning and listed in the sidecar
    so downstream row counts are auditable.
    """
    entries = read_image_manifest(job.manifest)
    model, provenance = prepare_encoder(job.encoder, job.adapter_checkpoint)
    size = model.config.image_size

    kept_labels: list[int] = []
    skipped: list[str] = []
    batches: list[np.ndarray] = []
    pending: list[torch.Tensor] = []

    def flush():
        if not pending:
            return
        with torch.no_grad():
            out = model.encode_image(torch.stack(pending))
        batches.append(out.numpy())
        pending.clear()

    for path, label in entries:
        try:
            with Image.open(path) as image:
                tensor = preprocess_image(image, size)
        except Exception as exc:  # unreadable/corrupt file: skip, record
            warnings.warn(f"skipping unreadable image {path}: {exc}")
            skipped.append(str(path))
            continue
        pending.append(tensor)
        kept_labels.append(label)
        if len(pending) == job.batch_size:
            flush()
    flush()

    if not kept_labels:
        raise ValueError("no readable images in the manifest")
    vectors = _l2_normalize(np.concatenate(batches, axis=0))
    labels = np.asarray(kept_labels, dtype=np.int64)

    num_classes = int(labels.max()) + 1
    names = list(job.class_names) if job.class_names \
        else [f"class_{c:03d}" for c in range(num_classes)]
    if len(names) < num_classes:
        raise ValueError("class_names shorter than the label range")

    out = Path(job.out)
    write_imoe(out, vectors, labels, names, normalized=True)
    write_sidecar_manifest(
        out, source=job.source, encoder=job.mode,
        extra={
            "provenance": provenance,
            "skipped_images": skipped,
            "preprocessing": f"bicubic-resize/center-crop {size}px, "
                             "channel-normalized",
        })
    return out


def extract_text(class_names: list[str], template: str, encoder: str,
                 out: str | Path, source: str = "prompt extraction") -> Path:
    """One normalized row per class, in class order, usable as a classifier."""
    if not class_names:
        raise ValueError("class list is empty")
    if any(not name for name in class_names):
        raise ValueError("empty class name")
    if len(set(class_names)) != len(class_names):
        raise ValueError("class names must be unique")
    model, provenance = prepare_encoder(encoder, None)
    tokenizer = ByteTokenizer(model.config.context_length, model.config.vocab_size)
    prompts = [template.format(**{"class": name}) for name in class_names]
    tokens, eot = tokenizer.encode_batch(prompts)
    with torch.no_grad():
        embeddings = model.encode_text(tokens, eot).numpy()
    vectors = _l2_normalize(embeddings)
    out = Path(out)
    write_imoe(out, vectors, np.arange(len(class_names)), list(class_names),
               normalized=True)
    write_sidecar_manifest(
        out, source=source, encoder="original",
        extra={"provenance": provenance, "template": template,
               "tokenizer": tokenizer.name})
    return out
