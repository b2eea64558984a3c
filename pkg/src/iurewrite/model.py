"""The multi-task rewriting network and batch assembly."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import torch
import torch.nn as nn

from .config import RunConfig
from .corpus import Dialogue, EncodedExample, Vocab, encode_example
from .encoder import EncoderError, TransformerEncoder, masked_mean_pool, pooling_matrix
from .heads import (EditGridHead, IntentionHead, MatchHead, MergeMode, SelectionHead,
                    merge_relevance, pool_selected)
from .objective import combine, loss_edit, loss_int, loss_mat, loss_sel
from .supervision import GoldEditGrid, Status, build_gold_edit_grid, relevance_labels


@dataclass
class Prepared:
    """A dialogue with its encoding and, when a rewrite exists, its supervision."""

    dialogue: Dialogue
    encoded: EncodedExample
    gold: Optional[GoldEditGrid] = None
    R: Optional[tuple[int, ...]] = None
    rewrite_ids: Optional[list[int]] = None

    @property
    def aligned(self) -> bool:
        return self.gold is not None and self.gold.status == Status.ALIGNED


def prepare(d: Dialogue, vocab: Vocab, with_labels: bool = True) -> Prepared:
    enc = encode_example(d, vocab)
    if not with_labels or d.rewrite is None:
        return Prepared(d, enc)
    return Prepared(d, enc, build_gold_edit_grid(d), relevance_labels(d).R,
                    vocab.lookup(d.rewrite.tokens))


@dataclass
class Batch:
    ids: torch.Tensor  # (B, L)
    pad: torch.Tensor  # (B, L) True at padding
    ctx_pool: torch.Tensor  # (B, n_max, L)
    utt_pool: torch.Tensor  # (B, L)
    n_valid: torch.Tensor  # (B, n_max)
    ctx_pos: torch.Tensor  # (B, NC)
    ctx_valid: torch.Tensor
    utt_pos: torch.Tensor  # (B, NU)
    utt_valid: torch.Tensor
    row_owner: torch.Tensor  # (B, NC)
    n_context: list[int]
    example_ids: list[str]
    items: list[Prepared]
    gold: Optional[torch.Tensor] = None  # (B, NC, NU)
    edit_ok: Optional[torch.Tensor] = None  # (B,)
    R: Optional[torch.Tensor] = None  # (B, n_max)
    rw_ids: Optional[torch.Tensor] = None
    rw_pad: Optional[torch.Tensor] = None

    def __len__(self) -> int:
        return len(self.items)


def collate(items: Sequence[Prepared], dtype=torch.float32) -> Batch:
    B = len(items)
    L = max(len(p.encoded) for p in items)
    n_max = max(p.dialogue.n_context for p in items)
    NC = max(p.encoded.n_ctx_tokens for p in items)
    NU = max(p.encoded.n_utt_tokens for p in items)
    ids = torch.full((B, L), Vocab.pad_id, dtype=torch.long)
    pad = torch.ones(B, L, dtype=torch.bool)
    ctx_pos = torch.zeros(B, NC, dtype=torch.long)
    ctx_valid = torch.zeros(B, NC, dtype=torch.bool)
    utt_pos = torch.zeros(B, NU, dtype=torch.long)
    utt_valid = torch.zeros(B, NU, dtype=torch.bool)
    row_owner = torch.zeros(B, NC, dtype=torch.long)
    n_valid = torch.zeros(B, n_max, dtype=torch.bool)
    for b, p in enumerate(items):
        x = p.encoded
        ids[b, :len(x)] = torch.tensor(x.token_ids)
        pad[b, :len(x)] = False
        cp, up = x.context_positions, x.incomplete_positions
        ctx_pos[b, :len(cp)] = torch.tensor(cp)
        ctx_valid[b, :len(cp)] = True
        utt_pos[b, :len(up)] = torch.tensor(up)
        utt_valid[b, :len(up)] = True
        row_owner[b, :len(cp)] = torch.tensor(p.dialogue.row_owner)
        n_valid[b, :p.dialogue.n_context] = True
    spans = [p.encoded.segment_spans for p in items]
    ctx_pool = pooling_matrix([s[:-1] for s in spans], n_max, L, dtype)
    utt_pool = pooling_matrix([s[-1:] for s in spans], 1, L, dtype)[:, 0]
    batch = Batch(ids, pad, ctx_pool, utt_pool, n_valid, ctx_pos, ctx_valid, utt_pos, utt_valid,
                  row_owner, [p.dialogue.n_context for p in items],
                  [p.dialogue.id for p in items], list(items))
    if all(p.gold is not None for p in items):
        gold = torch.zeros(B, NC, NU, dtype=torch.long)
        R = torch.zeros(B, n_max, dtype=dtype)
        for b, p in enumerate(items):
            e = p.gold.entries
            gold[b, :e.shape[0], :e.shape[1]] = torch.from_numpy(e.astype(np.int64))
            R[b, :len(p.R)] = torch.tensor(p.R, dtype=dtype)
        Lr = max(len(p.rewrite_ids) for p in items)
        rw_ids = torch.full((B, Lr), Vocab.pad_id, dtype=torch.long)
        rw_pad = torch.ones(B, Lr, dtype=torch.bool)
        for b, p in enumerate(items):
            rw_ids[b, :len(p.rewrite_ids)] = torch.tensor(p.rewrite_ids)
            rw_pad[b, :len(p.rewrite_ids)] = False
        batch.gold = gold
        batch.edit_ok = torch.tensor([p.aligned for p in items])
        batch.R = R
        batch.rw_ids, batch.rw_pad = rw_ids, rw_pad
    return batch


@dataclass
class ModelOutput:
    H: torch.Tensor
    c: torch.Tensor  # (B, n_max, d)
    u: torch.Tensor  # (B, d)
    relevance: Optional[torch.Tensor]  # (B, n_max), None when selection is off
    P: torch.Tensor  # (B, NC, NU, 3) before merging
    P_merged: torch.Tensor
    r: Optional[torch.Tensor] = None  # (B, d) rewrite representation


def _gather_rows(H: torch.Tensor, pos: torch.Tensor) -> torch.Tensor:
    return H.gather(1, pos[..., None].expand(-1, -1, H.shape[-1]))


class RewriterModel(nn.Module):
    def __init__(self, vocab_size: int, cfg: RunConfig):
        super().__init__()
        self.cfg = cfg
        d = cfg.d_model
        self.encoder = TransformerEncoder(vocab_size, cfg.encoder_config())
        self.select = SelectionHead(d, cfg.d_hidden)
        self.match = MatchHead(d, cfg.d_hidden)
        self.edit = EditGridHead(d, cfg.unet_channels)
        self.intention = IntentionHead(d, cfg.d_int, cfg.d_hidden)

    @property
    def dtype(self) -> torch.dtype:
        return self.encoder.tok.weight.dtype

    def encode_rewrites(self, batch: Batch) -> torch.Tensor:
        H = self.encoder(batch.rw_ids, batch.rw_pad)
        return masked_mean_pool(H, batch.rw_pad)

    def forward(self, batch: Batch, with_rewrite: bool = False,
                merge_mode: Optional[MergeMode] = None) -> ModelOutput:
        cfg = self.cfg
        mode = cfg.merge_mode if merge_mode is None else MergeMode(merge_mode)
        H = self.encoder(batch.ids, batch.pad)
        c = batch.ctx_pool.to(H.dtype) @ H
        u = (batch.utt_pool.to(H.dtype)[:, None, :] @ H)[:, 0]
        P = self.edit(_gather_rows(H, batch.ctx_pos), _gather_rows(H, batch.utt_pos),
                      batch.ctx_valid, batch.utt_valid)
        relevance = None
        P_merged = P
        if cfg.cs:
            relevance = self.select(c, u)
            if mode != MergeMode.OFF:
                r_rows = relevance.gather(1, batch.row_owner)
                P_merged = merge_relevance(P, r_rows, cfg.merge_alpha, mode, cfg.tau)
        r = self.encode_rewrites(batch) if with_rewrite and batch.rw_ids is not None else None
        return ModelOutput(H, c, u, relevance, P, P_merged, r)

    def losses(self, batch: Batch, step: int = 0, merge_mode: Optional[MergeMode] = None) -> dict:
        """Every enabled loss as a differentiable tensor, with contributing counts.

        UNALIGNABLE examples only feed the selection loss.
        """
        cfg = self.cfg
        if batch.gold is None:
            raise ValueError("training batch lacks gold rewrites")
        need_r = cfg.cs and (cfg.cm or cfg.ic)
        out = self.forward(batch, with_rewrite=need_r, merge_mode=merge_mode)
        zero = out.P.sum() * 0.0
        cell_mask = (batch.ctx_valid[:, :, None] & batch.utt_valid[:, None, :]
                     & batch.edit_ok[:, None, None])
        parts = {}
        parts["L_edit"] = loss_edit(out.P_merged, batch.gold, cfg.class_weights, cell_mask)
        parts["L_sel"] = loss_sel(out.relevance, batch.R, batch.n_valid) if cfg.cs else (zero, 0)
        if cfg.cs and cfg.cm:
            parts["L_mat"] = loss_mat(self.match, out.c, out.u, out.r, batch.R, batch.n_context,
                                      batch.example_ids, cfg.n_negatives, cfg.seed, step,
                                      active=batch.edit_ok.tolist())
        else:
            parts["L_mat"] = (zero, 0)
        if cfg.cs and cfg.ic:
            has_pos = (batch.R > 0).any(1) & batch.edit_ok
            C = pool_selected(out.c, batch.R > 0)
            p_ctx, p_rw = self.intention(C, out.u, out.r)
            parts["L_int"] = loss_int(p_ctx, p_rw, has_pos)
        else:
            parts["L_int"] = (zero, 0)
        return parts

    def objective(self, batch: Batch, step: int = 0, merge_mode: Optional[MergeMode] = None):
        parts = self.losses(batch, step, merge_mode)
        names = ("L_edit", "L_sel", "L_mat", "L_int")
        return combine(*(parts[k][0] for k in names), self.cfg.alpha1, self.cfg.alpha2,
                       self.cfg.alpha3, counts=[parts[k][1] for k in names])


def check_lengths(items: Sequence[Prepared], max_len: int) -> None:
    for p in items:
        n = max(len(p.encoded), len(p.rewrite_ids or ()))
        if n > max_len:
            raise EncoderError(f"dialogue {p.dialogue.id!r} encodes to {n} tokens > max_len={max_len}")
