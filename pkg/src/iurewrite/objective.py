"""Training losses and their weighted combination."""
from __future__ import annotations

import zlib
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np
import torch

from .heads import PROB_FLOOR

DEFAULT_CLASS_WEIGHTS = (1.0, 5.0, 5.0)


class ObjectiveError(ValueError):
    pass


def _as_tensor(x, dtype=None):
    return x if torch.is_tensor(x) else torch.as_tensor(np.asarray(x), dtype=dtype)


def loss_edit(P: torch.Tensor, E, class_weights: Optional[Sequence[float]] = None,
              mask: Optional[torch.Tensor] = None) -> tuple[torch.Tensor, int]:
    """Weighted mean over cells of -log P[gold]. Returns (loss, contributing cells).

    With class weights the mean is normalised by the summed weights, so a
    uniform prediction scores ln 3 whatever the weights or grid size.
    """
    P = _as_tensor(P, torch.float64)
    E = _as_tensor(E).long()
    if P.shape[:-1] != E.shape or P.shape[-1] != 3:
        raise ObjectiveError(f"grid shape mismatch: predictions {tuple(P.shape)} vs gold {tuple(E.shape)}")
    nll = -P.gather(-1, E[..., None]).squeeze(-1).clamp_min(PROB_FLOOR).log()
    w = torch.ones_like(nll) if class_weights is None else _as_tensor(class_weights, P.dtype).to(P.dtype)[E]
    if mask is not None:
        w = w * mask.to(P.dtype)
    count = int((w > 0).sum())
    if count == 0:
        return P.sum() * 0.0, 0
    return (w * nll).sum() / w.sum(), count


def _bce(p: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    return -(y * p.clamp_min(PROB_FLOOR).log() + (1 - y) * (1 - p).clamp_min(PROB_FLOOR).log())


def loss_sel(r: torch.Tensor, R, mask: Optional[torch.Tensor] = None) -> tuple[torch.Tensor, int]:
    """Mean binary cross-entropy of utterance relevance."""
    r = _as_tensor(r, torch.float64)
    R = _as_tensor(R).to(r.dtype)
    if r.shape != R.shape:
        raise ObjectiveError(f"relevance length mismatch: {tuple(r.shape)} vs {tuple(R.shape)}")
    b = _bce(r, R)
    if mask is not None:
        b = b[mask]
    if b.numel() == 0:
        return r.sum() * 0.0, 0
    return b.mean(), b.numel()


def _stable_seed(seed: int, example_id: str, step: int) -> list[int]:
    return [seed & 0xFFFFFFFF, zlib.crc32(example_id.encode("utf-8")), step & 0xFFFFFFFF]


def sample_negatives(ids: Sequence[str], n_context: Sequence[int], k: int = 3,
                     seed: int = 0, step: int = 0) -> list[list[tuple[int, int]]]:
    """For each example, draw ``k`` (example, utterance) pairs from other examples.

    Draws depend on the example id, not its batch position, so shuffling the
    batch permutes the result without changing it.
    """
    order = sorted(range(len(ids)), key=lambda b: ids[b])
    pool = [(b, j) for b in order for j in range(n_context[b])]
    out = []
    for b, eid in enumerate(ids):
        cands = [p for p in pool if ids[p[0]] != eid]
        if not cands:
            out.append([])
            continue
        rng = np.random.default_rng(_stable_seed(seed, eid, step))
        pick = rng.choice(len(cands), size=min(k, len(cands)), replace=False)
        out.append([cands[i] for i in pick])
    return out


def loss_mat(match_head, c: torch.Tensor, u: torch.Tensor, r: torch.Tensor, R: torch.Tensor,
             n_context: Sequence[int], ids: Sequence[str], k: int = 3, seed: int = 0,
             step: int = 0, active: Optional[Sequence[bool]] = None) -> tuple[torch.Tensor, int]:
    """Binary cross-entropy of matching positives (C_P) against sampled negatives.

    ``c`` is (B, n_max, d); ``u`` and ``r`` are (B, d); ``R`` (B, n_max) gold
    relevance. Negatives are context utterances of other examples in the batch.
    Examples with ``active`` false supply negatives but are not scored.
    """
    B = c.shape[0]
    if B < 2:
        return c.sum() * 0.0, 0
    negs = sample_negatives(ids, n_context, k, seed, step)
    rows, vecs, labels = [], [], []
    for b in range(B):
        if active is not None and not active[b]:
            continue
        for j in range(n_context[b]):
            if R[b, j] > 0:
                rows.append(b)
                vecs.append(c[b, j])
                labels.append(1.0)
        for ob, oj in negs[b]:
            rows.append(b)
            vecs.append(c[ob, oj])
            labels.append(0.0)
    if not rows:
        return c.sum() * 0.0, 0
    idx = torch.tensor(rows)
    m = match_head(torch.stack(vecs), u[idx], r[idx])
    y = torch.tensor(labels, dtype=m.dtype)
    return _bce(m, y).mean(), len(rows)


def kl_divergence(p: torch.Tensor, q: torch.Tensor) -> torch.Tensor:
    return (p * (p.log() - q.log())).sum(-1)


def loss_int(p_ctx: torch.Tensor, p_rw: torch.Tensor,
             mask: Optional[torch.Tensor] = None) -> tuple[torch.Tensor, int]:
    """KL(p_ctx || p_rw), averaged over examples with a non-empty C_P."""
    p_ctx = _as_tensor(p_ctx, torch.float64)
    p_rw = _as_tensor(p_rw, torch.float64)
    kl = kl_divergence(p_ctx, p_rw)
    if kl.ndim == 0:
        kl = kl[None]
    if mask is not None:
        kl = kl[mask]
    if kl.numel() == 0:
        return p_ctx.sum() * 0.0, 0
    return kl.mean(), kl.numel()


@dataclass
class LossBreakdown:
    L_edit: float
    L_sel: float
    L_mat: float
    L_int: float
    L_final: float
    n_edit: int = 0
    n_sel: int = 0
    n_mat: int = 0
    n_int: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def combine(L_edit, L_sel, L_mat, L_int, alpha1: float = 0.5, alpha2: float = 0.5,
            alpha3: float = 0.5, counts: Sequence[int] = (0, 0, 0, 0)):
    """``L_edit + a1*L_sel + a2*L_mat + a3*L_int``.

    Returns the differentiable total (or a float for float inputs) and a
    detached breakdown for logging.
    """
    if min(alpha1, alpha2, alpha3) < 0:
        raise ObjectiveError("loss weights must be non-negative")
    total = L_edit + alpha1 * L_sel + alpha2 * L_mat + alpha3 * L_int
    e, s, m, i = (float(x.detach()) if torch.is_tensor(x) else float(x)
                  for x in (L_edit, L_sel, L_mat, L_int))
    br = LossBreakdown(e, s, m, i, e + alpha1 * s + alpha2 * m + alpha3 * i, *counts)
    return total, br
