"""Small transformer encoder with mean-pooled utterance representations."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import torch
import torch.nn as nn

from .corpus import EncodedExample, Vocab


class EncoderError(ValueError):
    pass


@dataclass
class EncoderConfig:
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 128
    max_len: int = 128
    dropout: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise EncoderError("d_model must be divisible by n_heads")
        if not 0.0 <= self.dropout < 1.0:
            raise EncoderError("dropout must be in [0, 1)")


@dataclass
class EncoderOutput:
    H: torch.Tensor  # (L, d_model)
    c: list[torch.Tensor]
    u: torch.Tensor
    r: Optional[torch.Tensor] = None
    attention: Optional[list[torch.Tensor]] = None


class SelfAttention(nn.Module):
    def __init__(self, d_model: int, n_heads: int, dropout: float):
        super().__init__()
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.qkv = nn.Linear(d_model, 3 * d_model)
        self.out = nn.Linear(d_model, d_model)
        self.drop = nn.Dropout(dropout)

    def forward(self, x, pad_mask):
        B, L, D = x.shape
        q, k, v = self.qkv(x).view(B, L, 3, self.n_heads, self.d_head).permute(2, 0, 3, 1, 4)
        scores = q @ k.transpose(-1, -2) / math.sqrt(self.d_head)
        scores = scores.masked_fill(pad_mask[:, None, None, :], float("-inf"))
        attn = scores.softmax(-1)
        y = (self.drop(attn) @ v).transpose(1, 2).reshape(B, L, D)
        return self.out(y), attn


class EncoderLayer(nn.Module):
    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.attn = SelfAttention(cfg.d_model, cfg.n_heads, cfg.dropout)
        self.ff = nn.Sequential(nn.Linear(cfg.d_model, cfg.d_ff), nn.GELU(),
                                nn.Linear(cfg.d_ff, cfg.d_model))
        self.norm1 = nn.LayerNorm(cfg.d_model)
        self.norm2 = nn.LayerNorm(cfg.d_model)
        self.drop = nn.Dropout(cfg.dropout)

    def forward(self, x, pad_mask):
        y, attn = self.attn(self.norm1(x), pad_mask)
        x = x + self.drop(y)
        x = x + self.drop(self.ff(self.norm2(x)))
        return x, attn


class TransformerEncoder(nn.Module):
    """Token + learned position embeddings followed by pre-norm layers."""

    def __init__(self, vocab_size: int, cfg: EncoderConfig):
        super().__init__()
        self.cfg = cfg
        self.tok = nn.Embedding(vocab_size, cfg.d_model, padding_idx=Vocab.pad_id)
        self.pos = nn.Embedding(cfg.max_len, cfg.d_model)
        self.layers = nn.ModuleList(EncoderLayer(cfg) for _ in range(cfg.n_layers))
        self.norm = nn.LayerNorm(cfg.d_model)

    def forward(self, ids: torch.Tensor, pad_mask: torch.Tensor, return_attention: bool = False):
        """``ids`` (B, L) -> states (B, L, d). ``pad_mask`` is True at padding."""
        L = ids.shape[1]
        if L > self.cfg.max_len:
            raise EncoderError(f"sequence of length {L} exceeds max_len={self.cfg.max_len}")
        x = self.tok(ids) + self.pos(torch.arange(L, device=ids.device))[None]
        attns = []
        for layer in self.layers:
            x, a = layer(x, pad_mask)
            attns.append(a)
        x = self.norm(x).masked_fill(pad_mask[..., None], 0.0)
        return (x, attns) if return_attention else x


def pool_utterances(H: torch.Tensor, segment_spans: Sequence[tuple[int, int]]):
    """Mean-pool each span of ``H``; the last span is the incomplete utterance."""
    pooled = []
    for s, e in segment_spans:
        if e <= s:
            raise EncoderError(f"empty span ({s}, {e})")
        if s < 0 or e > H.shape[0]:
            raise EncoderError(f"span ({s}, {e}) outside a sequence of length {H.shape[0]}")
        pooled.append(H[s:e].mean(0))
    return pooled[:-1], pooled[-1]


def pooling_matrix(spans_batch: Sequence[Sequence[tuple[int, int]]], n_rows: int, L: int,
                   dtype=torch.float32) -> torch.Tensor:
    """(B, n_rows, L) averaging weights, so ``W @ H`` mean-pools every span."""
    W = torch.zeros(len(spans_batch), n_rows, L, dtype=dtype)
    for b, spans in enumerate(spans_batch):
        for k, (s, e) in enumerate(spans):
            W[b, k, s:e] = 1.0 / (e - s)
    return W


def encode(x: EncodedExample, encoder: TransformerEncoder) -> EncoderOutput:
    """Encode one example and pool its utterances (eval-time helper)."""
    ids = torch.tensor([x.token_ids])
    H, attn = encoder(ids, torch.zeros_like(ids, dtype=torch.bool), return_attention=True)
    H = H[0]
    c, u = pool_utterances(H, x.segment_spans)
    return EncoderOutput(H=H, c=c, u=u, attention=[a[0] for a in attn])


def encode_rewrite(tokens: Optional[Sequence[str]], vocab: Vocab, encoder: TransformerEncoder) -> torch.Tensor:
    """Encode the gold rewrite as a standalone sequence and mean-pool it."""
    if tokens is None or len(tokens) == 0:
        raise EncoderError("no rewrite to encode")
    ids = torch.tensor([vocab.lookup(tokens)])
    H = encoder(ids, torch.zeros_like(ids, dtype=torch.bool))[0]
    return H.mean(0)


def masked_mean_pool(H: torch.Tensor, pad_mask: torch.Tensor) -> torch.Tensor:
    keep = (~pad_mask).to(H.dtype)[..., None]
    return (H * keep).sum(1) / keep.sum(1).clamp_min(1.0)


__all__ = [
    "EncoderConfig", "EncoderError", "EncoderOutput", "TransformerEncoder",
    "encode", "encode_rewrite", "pool_utterances", "pooling_matrix", "masked_mean_pool",
]
