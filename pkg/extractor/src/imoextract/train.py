"""Supervised bottleneck-adapter fine-tuning on a labeled image corpus.

The backbone stays frozen; only the vision-tower adapters and a throwaway
linear classification head receive gradients. Because the adapters'
up-projections start at zero, a dry run (zero training steps) yields an
encoder whose outputs match the unadapted backbone exactly.

Schedule defaults: 1 epoch at lr 5e-3 with 10 augmented passes per sample.
Unstated details (optimizer, batch size, augmentation family) default to
AdamW, batch 32, random-resized-crop + horizontal flip, and are recorded in
the checkpoint manifest for auditability.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image
from torch import nn

from .adapters import AdapterConfig, adapter_state_dict, install_adapters
from .extract import ADAPTER_CHECKPOINT_FORMAT, IMAGE_MEAN, IMAGE_STD
from .imoe_io import read_image_manifest
from .model import build_backbone, count_parameters


@dataclass
class AdapterTrainConfig:
    manifest: str
    encoder: str
    out: str
    bottleneck: int = 64
    learning_rate: float = 5e-3
    epochs: int = 1
    augmentations: int = 10
    batch_size: int = 32
    weight_decay: float = 0.01
    adapter_scale: float = 0.1
    seed: int = 0
    dry_run: bool = False
    min_images: int = 1000

    def __post_init__(self):
        if self.bottleneck < 1:
            raise ValueError("bottleneck must be at least 1")
        for name in ("learning_rate", "epochs", "augmentations", "batch_size"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


def _augment(image: Image.Image, size: int, gen: torch.Generator) -> torch.Tensor:
    """Seeded random-resized-crop + horizontal flip + normalization."""
    image = image.convert("RGB")
    w, h = image.size
    area = w * h
    for _ in range(10):
        scale = 0.6 + 0.4 * torch.rand((), generator=gen).item()
        ratio = math.exp(math.log(3 / 4)
                         + torch.rand((), generator=gen).item() * math.log(16 / 9))
        target = area * scale
        cw = int(round(math.sqrt(target * ratio)))
        ch = int(round(math.sqrt(target / ratio)))
        if 0 < cw <= w and 0 < ch <= h:
            left = int(torch.randint(0, w - cw + 1, (), generator=gen))
            top = int(torch.randint(0, h - ch + 1, (), generator=gen))
            image = image.crop((left, top, left + cw, top + ch))
            break
    image = image.resize((size, size), Image.BICUBIC)
    array = np.asarray(image, dtype=np.float32) / 255.0
    tensor = torch.from_numpy(array).permute(2, 0, 1)
    if torch.rand((), generator=gen).item() < 0.5:
        tensor = torch.flip(tensor, dims=(2,))
    mean = torch.tensor(IMAGE_MEAN).view(3, 1, 1)
    std = torch.tensor(IMAGE_STD).view(3, 1, 1)
    return (tensor - mean) / std


def train_bottleneck_adapter(config: AdapterTrainConfig) -> Path:
    """Fine-tune adapters on the corpus; write checkpoint + manifest JSON."""
    entries = read_image_manifest(config.manifest)
    if len(entries) < config.min_images:
        warnings.warn(f"corpus of {len(entries)} images is below the "
                      f"{config.min_images}-image minimum; refusing to train")
        raise ValueError(f"corpus too small: {len(entries)} < {config.min_images}")

    model, provenance = build_backbone(config.encoder)
    adapter_config = AdapterConfig(bottleneck=config.bottleneck,
                                   scale=config.adapter_scale)
    adapters = install_adapters(model, adapter_config, seed=config.seed)

    backbone_params = count_parameters(model) - count_parameters(adapters)
    adapter_params = count_parameters(adapters)
    ratio = adapter_params / backbone_params

    num_classes = max(label for _, label in entries) + 1
    size = model.config.image_size
    gen = torch.Generator().manual_seed(config.seed)
    final_loss = None

    if not config.dry_run:
        head = nn.Linear(model.config.embed_dim, num_classes)
        with torch.no_grad():
            head.weight.copy_(torch.randn(head.weight.shape, generator=gen) * 0.01)
            head.bias.zero_()
        optimizer = torch.optim.AdamW(
            list(adapters.parameters()) + list(head.parameters()),
            lr=config.learning_rate, weight_decay=config.weight_decay)
        loss_fn = nn.CrossEntropyLoss()
        model.train()

        for _ in range(config.epochs):
            for _ in range(config.augmentations):
                order = torch.randperm(len(entries), generator=gen).tolist()
                for start in range(0, len(order), config.batch_size):
                    batch = order[start:start + config.batch_size]
                    images, labels = [], []
                    for i in batch:
                        path, label = entries[i]
                        with Image.open(path) as img:
                            images.append(_augment(img, size, gen))
                        labels.append(label)
                    logits = head(model.encode_image(torch.stack(images)))
                    loss = loss_fn(logits, torch.tensor(labels))
                    optimizer.zero_grad()
                    loss.backward()
                    optimizer.step()
                    final_loss = float(loss.detach())
        model.eval()

    out = Path(config.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    torch.save({
        "format": ADAPTER_CHECKPOINT_FORMAT,
        "backbone_config": model.config.to_dict(),
        "backbone_identity": provenance["identity"],
        "adapter_config": adapter_config.to_dict(),
        "adapter_state": adapter_state_dict(adapters),
        "param_counts": {"adapter": adapter_params, "backbone": backbone_params,
                         "ratio": ratio},
    }, out)

    manifest = {
        "checkpoint": out.name,
        "backbone": provenance,
        "corpus": {"manifest": str(config.manifest), "images": len(entries),
                   "classes": num_classes},
        "schedule": {k: v for k, v in asdict(config).items()
                     if k not in ("manifest", "encoder", "out")},
        "optimizer": "AdamW",
        "augmentation": "random-resized-crop(0.6-1.0) + horizontal-flip",
        "param_counts": {"adapter": adapter_params, "backbone": backbone_params,
                         "ratio": ratio},
        "final_loss": final_loss,
    }
    Path(str(out) + ".manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return out
