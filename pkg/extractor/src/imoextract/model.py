"""Dual-encoder backbone: a vision transformer and a causal text transformer
projecting into one shared embedding space.

The architecture follows the standard contrastive dual-encoder layout
(pre-LN transformer blocks, QuickGELU activations, learned projections), so
the "vit-b-16" preset reproduces the usual ViT-B/16 parameter budget. The
loader accepts either a checkpoint file produced by this package or a
"random:<preset>:<seed>" spec for seeded, weight-free instantiation (used
by tests and dry runs).
"""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass
from pathlib import Path

import torch
from torch import nn

CHECKPOINT_FORMAT = "imoextract-checkpoint-v1"


@dataclass(frozen=True)
class BackboneConfig:
    embed_dim: int
    image_size: int
    patch_size: int
    vision_width: int
    vision_layers: int
    vision_heads: int
    text_width: int
    text_layers: int
    text_heads: int
    vocab_size: int
    context_length: int

    def to_dict(self) -> dict:
        return asdict(self)


PRESETS: dict[str, BackboneConfig] = {
    "vit-b-16": BackboneConfig(
        embed_dim=512, image_size=224, patch_size=16,
        vision_width=768, vision_layers=12, vision_heads=12,
        text_width=512, text_layers=12, text_heads=8,
        vocab_size=49408, context_length=77,
    ),
    "tiny": BackboneConfig(
        embed_dim=32, image_size=32, patch_size=8,
        vision_width=64, vision_layers=2, vision_heads=2,
        text_width=64, text_layers=2, text_heads=2,
        vocab_size=512, context_length=32,
    ),
}


class QuickGELU(nn.Module):
    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x * torch.sigmoid(1.702 * x)


class TransformerBlock(nn.Module):
    """Pre-LN attention + MLP block with an optional parallel adapter branch.

    The adapter (when installed) shares the MLP's normalized input and adds
    its scaled output to the same residual stream.
    """

    def __init__(self, width: int, heads: int):
        super().__init__()
        self.ln_1 = nn.LayerNorm(width)
        self.attn = nn.MultiheadAttention(width, heads, batch_first=True)
        self.ln_2 = nn.LayerNorm(width)
        self.mlp = nn.Sequential(
            nn.Linear(width, width * 4), QuickGELU(), nn.Linear(width * 4, width))
        self.adapter: nn.Module | None = None

    def forward(self, x: torch.Tensor,
                attn_mask: torch.Tensor | None = None) -> torch.Tensor:
        h = self.ln_1(x)
        attn_out, _ = self.attn(h, h, h, need_weights=False, attn_mask=attn_mask)
        x = x + attn_out
        h = self.ln_2(x)
        out = x + self.mlp(h)
        if self.adapter is not None:
            out = out + self.adapter(h)
        return out


class VisionEncoder(nn.Module):
    def __init__(self, config: BackboneConfig):
        super().__init__()
        width = config.vision_width
        self.config = config
        self.conv1 = nn.Conv2d(3, width, kernel_size=config.patch_size,
                               stride=config.patch_size, bias=False)
        grid = config.image_size // config.patch_size
        self.class_embedding = nn.Parameter(torch.zeros(width))
        self.positional_embedding = nn.Parameter(torch.zeros(grid * grid + 1, width))
        self.ln_pre = nn.LayerNorm(width)
        self.blocks = nn.ModuleList(
            TransformerBlock(width, config.vision_heads)
            for _ in range(config.vision_layers))
        self.ln_post = nn.LayerNorm(width)
        self.proj = nn.Parameter(torch.zeros(width, config.embed_dim))

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        x = self.conv1(images)                          # (b, w, g, g)
        x = x.flatten(2).transpose(1, 2)                # (b, g*g, w)
        cls = self.class_embedding.expand(x.shape[0], 1, -1)
        x = torch.cat([cls, x], dim=1) + self.positional_embedding
        x = self.ln_pre(x)
        for block in self.blocks:
            x = block(x)
        return self.ln_post(x[:, 0, :]) @ self.proj


class TextEncoder(nn.Module):
    def __init__(self, config: BackboneConfig):
        super().__init__()
        width = config.text_width
        self.config = config
        self.token_embedding = nn.Embedding(config.vocab_size, width)
        self.positional_embedding = nn.Parameter(torch.zeros(config.context_length, width))
        self.blocks = nn.ModuleList(
            TransformerBlock(width, config.text_heads)
            for _ in range(config.text_layers))
        self.ln_final = nn.LayerNorm(width)
        self.text_projection = nn.Parameter(torch.zeros(width, config.embed_dim))
        mask = torch.full((config.context_length, config.context_length), float("-inf"))
        self.register_buffer("causal_mask", torch.triu(mask, diagonal=1),
                             persistent=False)

    def forward(self, tokens: torch.Tensor, eot_positions: torch.Tensor) -> torch.Tensor:
        x = self.token_embedding(tokens) + self.positional_embedding
        for block in self.blocks:
            x = block(x, attn_mask=self.causal_mask)
        x = self.ln_final(x)
        pooled = x[torch.arange(x.shape[0]), eot_positions]
        return pooled @ self.text_projection


class DualEncoder(nn.Module):
    """Image and text towers with a shared output space."""

    def __init__(self, config: BackboneConfig):
        super().__init__()
        self.config = config
        self.visual = VisionEncoder(config)
        self.text = TextEncoder(config)
        self.logit_scale = nn.Parameter(torch.zeros(()))

    def encode_image(self, images: torch.Tensor) -> torch.Tensor:
        return self.visual(images)

    def encode_text(self, tokens: torch.Tensor, eot_positions: torch.Tensor
                    ) -> torch.Tensor:
        return self.text(tokens, eot_positions)


def _init_weights(model: DualEncoder, seed: int) -> None:
    gen = torch.Generator().manual_seed(seed)

    def fill(param: torch.Tensor, std: float) -> None:
        with torch.no_grad():
            param.copy_(torch.randn(param.shape, generator=gen) * std)

    for name, param in model.named_parameters():
        if param.dim() >= 2:
            fill(param, std=0.02)
        elif "bias" in name or "logit_scale" in name:
            with torch.no_grad():
                param.zero_()
        elif "weight" in name:   # LayerNorm gains
            with torch.no_grad():
                param.fill_(1.0)
        else:                    # class/positional embeddings
            fill(param, std=0.02)


def build_backbone(spec: str) -> tuple[DualEncoder, dict]:
    """Instantiate a backbone from an encoder spec.

    Spec forms:
      "random:<preset>:<seed>"  seeded random weights (tests, dry runs)
      path to a checkpoint      file saved by save_backbone_checkpoint
    Returns the eval-mode model and a provenance dict for manifests.
    """
    if spec.startswith("random:"):
        try:
            _, preset, seed_text = spec.split(":")
            seed = int(seed_text)
        except ValueError as exc:
            raise ValueError(f"bad random backbone spec {spec!r}; "
                             "expected random:<preset>:<seed>") from exc
        if preset not in PRESETS:
            raise ValueError(f"unknown preset {preset!r}; have {sorted(PRESETS)}")
        config = PRESETS[preset]
        model = DualEncoder(config)
        _init_weights(model, seed)
        provenance = {"backbone": spec, "config": config.to_dict(),
                      "identity": spec}
    else:
        path = Path(spec)
        if not path.exists():
            raise FileNotFoundError(f"backbone checkpoint not found: {spec}")
        payload = torch.load(path, map_location="cpu", weights_only=True)
        if payload.get("format") != CHECKPOINT_FORMAT or "model_state" not in payload:
            raise ValueError(f"{spec} is not a backbone checkpoint of this package")
        config = BackboneConfig(**payload["config"])
        model = DualEncoder(config)
        model.load_state_dict(payload["model_state"])
        digest = sha256_file(path)
        provenance = {"backbone": str(path), "config": config.to_dict(),
                      "backbone_sha256": digest, "identity": f"sha256:{digest}"}
    model.eval()
    for param in model.parameters():
        param.requires_grad_(False)
    return model, provenance


def save_backbone_checkpoint(model: DualEncoder, path: str | Path) -> None:
    torch.save({
        "format": CHECKPOINT_FORMAT,
        "config": model.config.to_dict(),
        "model_state": model.state_dict(),
    }, path)


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()
