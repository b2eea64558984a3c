"""Task heads on top of the encoder: selection, matching, edit grid, intention."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

PROB_FLOOR = 1e-8


class MergeMode(str, enum.Enum):
    SOFT = "SOFT"
    HARD = "HARD"
    OFF = "OFF"


class HeadError(ValueError):
    pass


def _mlp(d_in: int, d_hidden: int, d_out: int) -> nn.Sequential:
    return nn.Sequential(nn.Linear(d_in, d_hidden), nn.GELU(), nn.Linear(d_hidden, d_out))


class SelectionHead(nn.Module):
    """Binary relevance of each context utterance given the incomplete one."""

    def __init__(self, d_model: int, d_hidden: int = 64):
        super().__init__()
        self.mlp = _mlp(2 * d_model, d_hidden, 2)

    def forward(self, c: torch.Tensor, u: torch.Tensor) -> torch.Tensor:
        """``c`` (..., n, d), ``u`` (..., d) -> relevance probabilities (..., n)."""
        u = u.unsqueeze(-2).expand_as(c)
        return self.mlp(torch.cat([c, u], -1)).softmax(-1)[..., 1]


class MatchHead(nn.Module):
    """Compatibility of a context utterance with the rewrite, fed ``[c + u; r]``."""

    def __init__(self, d_model: int, d_hidden: int = 64):
        super().__init__()
        self.d_model = d_model
        self.mlp = _mlp(2 * d_model, d_hidden, 2)

    def forward(self, c: torch.Tensor, u: torch.Tensor, r: torch.Tensor) -> torch.Tensor:
        if not (c.shape[-1] == u.shape[-1] == r.shape[-1] == self.d_model):
            raise HeadError(
                f"expected width {self.d_model}, got c={c.shape[-1]} u={u.shape[-1]} r={r.shape[-1]}")
        c, u, r = torch.broadcast_tensors(c, u, r)
        return self.mlp(torch.cat([c + u, r], -1)).softmax(-1)[..., 1]


def pair_features(wc: torch.Tensor, wu: torch.Tensor) -> torch.Tensor:
    """(B, N_C, d) x (B, N_U, d) -> (B, N_C, N_U, 2d + 1) similarity features."""
    a = wc[:, :, None, :]
    b = wu[:, None, :, :]
    cos = F.cosine_similarity(a, b, dim=-1, eps=1e-8)[..., None]
    prod = a * b
    return torch.cat([prod, (a - b).abs(), cos], -1)


class _Block(nn.Module):
    def __init__(self, c_in: int, c_out: int):
        super().__init__()
        self.conv1 = nn.Conv2d(c_in, c_out, 3, padding=1)
        self.conv2 = nn.Conv2d(c_out, c_out, 3, padding=1)

    def forward(self, x, mask):
        x = F.gelu(self.conv1(x)) * mask
        return F.gelu(self.conv2(x)) * mask


class UNet(nn.Module):
    """Two-level U-Net over an edit grid.

    Cells outside the valid region are re-zeroed after every block, which keeps
    predictions independent of how much padding surrounds the grid.
    """

    factor = 4

    def __init__(self, channels: int = 32, n_out: int = 3):
        super().__init__()
        c = channels
        self.enc1 = _Block(c, c)
        self.enc2 = _Block(c, 2 * c)
        self.mid = _Block(2 * c, 4 * c)
        self.dec2 = _Block(4 * c + 2 * c, 2 * c)
        self.dec1 = _Block(2 * c + c, c)
        self.out = nn.Conv2d(c, n_out, 1)

    def forward(self, x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        """``x`` (B, C, H, W) with H, W multiples of 4; ``mask`` (B, 1, H, W)."""
        m1 = mask
        m2 = F.max_pool2d(m1, 2)
        m3 = F.max_pool2d(m2, 2)
        e1 = self.enc1(x * m1, m1)
        e2 = self.enc2(F.avg_pool2d(e1, 2), m2)
        mid = self.mid(F.avg_pool2d(e2, 2), m3)
        d2 = self.dec2(torch.cat([F.interpolate(mid, scale_factor=2.0, mode="nearest"), e2], 1), m2)
        d1 = self.dec1(torch.cat([F.interpolate(d2, scale_factor=2.0, mode="nearest"), e1], 1), m1)
        return self.out(d1)


def _round_up(n: int, k: int) -> int:
    return -(-n // k) * k


class EditGridHead(nn.Module):
    """Token-pair features -> U-Net -> per-cell distribution over (NONE, INSERT, REPLACE)."""

    def __init__(self, d_model: int, channels: int = 32):
        super().__init__()
        self.proj = nn.Linear(2 * d_model + 1, channels)
        self.unet = UNet(channels, 3)

    def forward(self, wc: torch.Tensor, wu: torch.Tensor,
                ctx_valid: Optional[torch.Tensor] = None,
                utt_valid: Optional[torch.Tensor] = None) -> torch.Tensor:
        B, NC, _ = wc.shape
        NU = wu.shape[1]
        if NC < 1 or NU < 1:
            raise HeadError("edit grid needs at least one context and one utterance token")
        if ctx_valid is None:
            ctx_valid = torch.ones(B, NC, dtype=torch.bool)
        if utt_valid is None:
            utt_valid = torch.ones(B, NU, dtype=torch.bool)
        mask = (ctx_valid[:, :, None] & utt_valid[:, None, :]).to(wc.dtype)
        feats = self.proj(pair_features(wc, wu)).permute(0, 3, 1, 2)
        hp, wp = _round_up(NC, UNet.factor), _round_up(NU, UNet.factor)
        feats = F.pad(feats, (0, wp - NU, 0, hp - NC))
        mask = F.pad(mask, (0, wp - NU, 0, hp - NC))[:, None]
        logits = self.unet(feats, mask)[:, :, :NC, :NU]
        return logits.permute(0, 2, 3, 1).softmax(-1)


class IntentionHead(nn.Module):
    """Projects ``[C; u]`` and the rewrite vector into a shared intention space."""

    def __init__(self, d_model: int, d_int: int = 16, d_hidden: int = 64):
        super().__init__()
        self.ctx = _mlp(2 * d_model, d_hidden, d_int)
        self.rw = _mlp(d_model, d_hidden, d_int)

    def forward(self, C: torch.Tensor, u: torch.Tensor, r: torch.Tensor):
        p_ctx = _floor(self.ctx(torch.cat([C, u], -1)).softmax(-1))
        p_rw = _floor(self.rw(r).softmax(-1))
        return p_ctx, p_rw


def _floor(p: torch.Tensor, eps: float = PROB_FLOOR) -> torch.Tensor:
    p = p.clamp_min(eps)
    return p / p.sum(-1, keepdim=True)


def pool_selected(c: torch.Tensor, selected: torch.Tensor) -> torch.Tensor:
    """Mean of context vectors over the selected utterances, ``c`` (..., n, d)."""
    w = selected.to(c.dtype)
    return (w[..., None] * c).sum(-2) / w.sum(-1, keepdim=True).clamp_min(1.0)


@dataclass
class IntentionPair:
    p_ctx: torch.Tensor
    p_rw: torch.Tensor


def intention_distributions(head: IntentionHead, c: Sequence[torch.Tensor] | torch.Tensor,
                            u: torch.Tensor, r: torch.Tensor,
                            C_P: Sequence[int]) -> Optional[IntentionPair]:
    """Single-example intention projection. Returns None when C_P is empty."""
    if len(C_P) == 0:
        return None
    c = torch.stack(list(c)) if not torch.is_tensor(c) else c
    C = c[list(C_P)].mean(0)
    p_ctx, p_rw = head(C, u, r)
    return IntentionPair(p_ctx, p_rw)


def merge_relevance(P, r_rows, alpha: float = 0.5, mode: MergeMode | str = MergeMode.SOFT,
                    tau: float = 0.5):
    """Fold per-row relevance into the INSERT/REPLACE mass of an edit grid.

    ``P`` has shape (..., N_C, N_U, 3) and ``r_rows`` (..., N_C) holds the
    relevance of the utterance owning each row. Accepts numpy or torch input
    and returns the same kind.
    """
    if not 0.0 <= alpha <= 1.0:
        raise HeadError(f"merge alpha must lie in [0, 1], got {alpha}")
    mode = MergeMode(mode)
    as_numpy = isinstance(P, np.ndarray)
    P = torch.as_tensor(P)
    r = torch.as_tensor(r_rows, dtype=P.dtype)[..., None]
    if mode == MergeMode.OFF:
        out = P
    elif mode == MergeMode.SOFT:
        zero = torch.zeros_like(r)
        add = torch.stack([zero, alpha * r, (1.0 - alpha) * r], -1)
        out = P + add
        out = out / out.sum(-1, keepdim=True)
    else:
        keep = (r >= tau)[..., None]
        none = torch.zeros_like(P)
        none[..., 0] = 1.0
        out = torch.where(keep, P, none)
    return out.numpy() if as_numpy else out


@dataclass
class PredictedEditGrid:
    P: np.ndarray  # (N_C, N_U, 3)
    row_owner: list[int]
    merged: bool = False

    def merge(self, r: Sequence[float], alpha: float = 0.5, mode: MergeMode | str = MergeMode.SOFT,
              tau: float = 0.5) -> "PredictedEditGrid":
        r_rows = np.asarray(r, dtype=self.P.dtype)[self.row_owner]
        P = merge_relevance(self.P, r_rows, alpha, mode, tau)
        return PredictedEditGrid(P, self.row_owner, merged=MergeMode(mode) != MergeMode.OFF)
