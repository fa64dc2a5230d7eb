"""Embedding extraction into the IMOE format, with adapter fine-tuning."""

from .adapters import AdapterConfig, BottleneckAdapter, install_adapters, remove_adapters
from .extract import ExtractJob, extract_images, extract_text, prepare_encoder
from .imoe_io import read_image_manifest, write_imoe, write_sidecar_manifest
from .model import (
    PRESETS,
    BackboneConfig,
    DualEncoder,
    build_backbone,
    count_parameters,
    save_backbone_checkpoint,
)
from .tokenizer import ByteTokenizer
from .train import AdapterTrainConfig, train_bottleneck_adapter

__version__ = "0.1.0"

__all__ = [
    "AdapterConfig", "AdapterTrainConfig", "BackboneConfig", "BottleneckAdapter",
    "ByteTokenizer", "DualEncoder", "ExtractJob", "PRESETS", "build_backbone",
    "count_parameters", "extract_images", "extract_text", "install_adapters",
    "prepare_encoder", "read_image_manifest", "remove_adapters",
    "save_backbone_checkpoint", "train_bottleneck_adapter", "write_imoe",
    "write_sidecar_manifest",
]
