"""Turning edit grids into rewritten utterances."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .supervision import EditType


@dataclass(frozen=True)
class EditSpan:
    type: EditType
    start: int  # first context row, inclusive
    stop: int  # last context row, exclusive
    column: int  # INSERT goes before this token; column == N_U appends
    utterance: int = 0

    def __post_init__(self):
        if self.type == EditType.NONE:
            raise ValueError("an EditSpan cannot have type NONE")
        if self.stop <= self.start:
            raise ValueError("empty context range")

    def __len__(self) -> int:
        return self.stop - self.start

    def to_json(self) -> dict:
        return {"type": self.type.name, "start": self.start, "stop": self.stop,
                "column": self.column, "utterance": self.utterance}


def _labels(grid) -> np.ndarray:
    grid = np.asarray(grid)
    if grid.ndim == 3:
        return grid.argmax(-1)
    return grid


def decode_grid(grid, row_owner: Sequence[int]) -> list[EditSpan]:
    """Group argmax edit labels into maximal same-type row runs per column.

    ``grid`` is either an (N_C, N_U) label matrix or an (N_C, N_U, 3)
    probability tensor. Runs never cross a context utterance boundary.
    """
    labels = _labels(grid)
    n_c, n_u = labels.shape
    spans = []
    for j in range(n_u):
        i = 0
        while i < n_c:
            kind = int(labels[i, j])
            if kind == EditType.NONE:
                i += 1
                continue
            start = i
            while i + 1 < n_c and labels[i + 1, j] == kind and row_owner[i + 1] == row_owner[start]:
                i += 1
            spans.append(EditSpan(EditType(kind), start, i + 1, j, row_owner[start]))
            i += 1
    spans.sort(key=lambda s: (s.column, s.start))
    return spans


def grid_from_spans(spans: Sequence[EditSpan], n_c: int, n_u: int) -> np.ndarray:
    grid = np.zeros((n_c, n_u), dtype=np.int8)
    for s in spans:
        grid[s.start:s.stop, s.column] = s.type
    return grid


def apply_edits(incomplete: Sequence[str], spans: Sequence[EditSpan],
                context_tokens: Sequence[str]) -> tuple[list[str], int]:
    """Apply spans column by column. Returns (tokens, replace conflicts)."""
    n_u = len(incomplete)
    inserts: dict[int, list[EditSpan]] = {}
    replaces: dict[int, list[EditSpan]] = {}
    for s in spans:
        if not 0 <= s.column <= n_u or (s.type == EditType.REPLACE and s.column == n_u):
            raise ValueError(f"span column {s.column} out of range for {n_u} tokens")
        (inserts if s.type == EditType.INSERT else replaces).setdefault(s.column, []).append(s)

    out: list[str] = []
    conflicts = 0
    for j in range(n_u + 1):
        for s in sorted(inserts.get(j, ()), key=lambda s: s.start):
            out.extend(context_tokens[s.start:s.stop])
        if j == n_u:
            break
        cands = replaces.get(j)
        if cands:
            # most recent utterance wins, then the earliest start
            keep = min(cands, key=lambda s: (-s.utterance, s.start))
            conflicts += len(cands) - 1
            out.extend(context_tokens[keep.start:keep.stop])
        else:
            out.append(incomplete[j])
    return out, conflicts


@dataclass
class RewriteResult:
    id: str
    tokens: list[str]
    spans: list[EditSpan]
    relevance: Optional[list[float]]
    conflicts: int

    @property
    def text(self) -> str:
        return " ".join(self.tokens)

    def to_json(self) -> dict:
        return {"id": self.id, "rewrite": self.text, "spans": [s.to_json() for s in self.spans],
                "relevance": self.relevance, "conflicts": self.conflicts}


def rewrite_from_grid(d, grid) -> RewriteResult:
    """Decode a label or probability grid for one dialogue and apply it."""
    spans = decode_grid(grid, d.row_owner)
    tokens, conflicts = apply_edits(d.incomplete.tokens, spans, d.context_tokens)
    return RewriteResult(d.id, tokens, spans, None, conflicts)


def rewrite(dialogues, model, vocab, merge_mode=None, batch_size: int = 32,
            return_grids: bool = False):
    """Run encode -> heads -> merge -> decode -> apply over dialogues.

    Returns one RewriteResult per dialogue (and the merged probability grids
    when ``return_grids`` is set).
    """
    import torch

    from .model import collate, prepare

    was_training = model.training
    model.eval()
    results, grids = [], []
    try:
        with torch.no_grad():
            for k in range(0, len(dialogues), batch_size):
                chunk = [prepare(d, vocab, with_labels=False) for d in dialogues[k:k + batch_size]]
                batch = collate(chunk, model.dtype)
                out = model(batch, merge_mode=merge_mode)
                for b, p in enumerate(chunk):
                    d = p.dialogue
                    P = out.P_merged[b, :p.encoded.n_ctx_tokens, :p.encoded.n_utt_tokens].numpy()
                    res = rewrite_from_grid(d, P)
                    if out.relevance is not None:
                        res.relevance = out.relevance[b, :d.n_context].tolist()
                    results.append(res)
                    if return_grids:
                        grids.append(P)
    finally:
        model.train(was_training)
    return (results, grids) if return_grids else results
