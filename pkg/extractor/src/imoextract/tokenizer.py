"""Byte-level prompt tokenizer.

Deterministic and vocabulary-free: UTF-8 bytes map to token ids above a
small reserved range. Checkpoints trained elsewhere would normally ship
their own subword tokenizer; this one keeps text encoding reproducible for
seeded backbones, and its identity is recorded in output manifests.
"""

from __future__ import annotations

import torch

PAD, SOT, EOT = 0, 1, 2
_BYTE_OFFSET = 3


class ByteTokenizer:
    name = "byte-v1"

    def __init__(self, context_length: int, vocab_size: int):
        if vocab_size < _BYTE_OFFSET + 256:
            raise ValueError("vocab too small for byte tokens")
        self.context_length = context_length
        self.vocab_size = vocab_size

    def encode(self, text: str) -> tuple[list[int], int]:
        """Token ids padded to the context length, plus the EOT position."""
        body = [_BYTE_OFFSET + b for b in text.encode("utf-8")]
        body = body[: self.context_length - 2]
        ids = [SOT] + body + [EOT]
        eot_position = len(ids) - 1
        ids += [PAD] * (self.context_length - len(ids))
        return ids, eot_position

    def encode_batch(self, texts: list[str]) -> tuple[torch.Tensor, torch.Tensor]:
        encoded = [self.encode(t) for t in texts]
        tokens = torch.tensor([ids for ids, _ in encoded], dtype=torch.long)
        eot = torch.tensor([pos for _, pos in encoded], dtype=torch.long)
        return tokens, eot
