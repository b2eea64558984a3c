"""Distant supervision: relevance labels and gold edit grids from rewrite triples."""
from __future__ import annotations

import enum
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .corpus import Dialogue


class EditType(enum.IntEnum):
    NONE = 0
    INSERT = 1
    REPLACE = 2


class Status(str, enum.Enum):
    ALIGNED = "ALIGNED"
    UNALIGNABLE = "UNALIGNABLE"


# Function words ignored when deciding whether a context utterance is relevant.
STOPWORDS = frozenset("""
a an the and or but if of to in on at by for with from as than then there here
is are was were be been being am do does did have has had will would can could
should may might must shall i you he she it we they me him her us them my your
his its our their this that these those what which who whom whose when where why
how not no yes other some any all so too very just
""".split())


_PUNCT_RE = re.compile(r"[^\w\s]+")


class SupervisionError(ValueError):
    pass


def _is_punct(tok: str) -> bool:
    return _PUNCT_RE.fullmatch(tok) is not None


def restored_words(incomplete: Sequence[str], rewrite: Sequence[str]) -> Counter:
    """Multiset of rewrite tokens not accounted for by the incomplete utterance.

    Tokens are case-folded; pure punctuation is not counted as a word.
    """
    diff = Counter(t.casefold() for t in rewrite) - Counter(t.casefold() for t in incomplete)
    return Counter({t: c for t, c in diff.items() if not _is_punct(t)})


@dataclass
class RelevanceLabels:
    R: tuple[int, ...]
    C_N: list = field(default_factory=list)

    @property
    def C_P(self) -> tuple[int, ...]:
        return tuple(i for i, v in enumerate(self.R) if v)


def relevance_labels(d: Dialogue, stopwords: frozenset[str] = STOPWORDS) -> RelevanceLabels:
    """Mark context utterances that contain at least one restored content word."""
    if d.rewrite is None:
        raise SupervisionError(f"dialogue {d.id!r} has no gold rewrite")
    content = {w for w in restored_words(d.incomplete.tokens, d.rewrite.tokens) if w not in stopwords}
    R = tuple(int(any(t.casefold() in content for t in utt.tokens)) for utt in d.context)
    return RelevanceLabels(R)


@dataclass
class GoldEditGrid:
    entries: np.ndarray  # (N_C, N_U) int8 of EditType values
    status: Status = Status.ALIGNED

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape

    def edits(self) -> list[tuple[int, int, str]]:
        rows, cols = np.nonzero(self.entries)
        return [(int(i), int(j), EditType(int(self.entries[i, j])).name) for i, j in zip(rows, cols)]


def _lcs_pairs(a: Sequence[str], b: Sequence[str]) -> list[tuple[int, int]]:
    n, m = len(a), len(b)
    dp = np.zeros((n + 1, m + 1), dtype=np.int32)
    for i in range(n - 1, -1, -1):
        for j in range(m - 1, -1, -1):
            dp[i, j] = dp[i + 1, j + 1] + 1 if a[i] == b[j] else max(dp[i + 1, j], dp[i, j + 1])
    pairs = []
    i = j = 0
    while i < n and j < m:
        if a[i] == b[j]:
            pairs.append((i, j))
            i += 1
            j += 1
        elif dp[i + 1, j] >= dp[i, j + 1]:
            i += 1
        else:
            j += 1
    return pairs


def _match_span(span: Sequence[str], d: Dialogue) -> Optional[list[tuple[int, int]]]:
    """Cover ``span`` greedily with longest exact context matches.

    Returns global context-row intervals ``(start, stop)`` in span order, or
    None when some token occurs nowhere in the context. Ties between equally
    long matches go to the latest utterance, then the leftmost position.
    """
    offsets = np.cumsum([0] + [len(u) for u in d.context])
    pieces = []
    pos = 0
    while pos < len(span):
        best = None  # (length, start)
        for k in range(d.n_context - 1, -1, -1):
            toks = d.context[k].tokens
            for s in range(len(toks)):
                length = 0
                while (s + length < len(toks) and pos + length < len(span)
                       and toks[s + length] == span[pos + length]):
                    length += 1
                if length and (best is None or length > best[0]):
                    best = (length, int(offsets[k]) + s)
        if best is None:
            return None
        pieces.append((best[1], best[1] + best[0]))
        pos += best[0]
    return pieces


def build_gold_edit_grid(d: Dialogue) -> GoldEditGrid:
    """Align incomplete and rewrite by LCS and anchor restored spans in context."""
    from .rewriter import apply_edits, decode_grid

    if d.rewrite is None:
        raise SupervisionError(f"dialogue {d.id!r} has no gold rewrite")
    u, rw = d.incomplete.tokens, d.rewrite.tokens
    n_c, n_u = sum(len(c) for c in d.context), len(u)
    grid = np.zeros((n_c, n_u), dtype=np.int8)

    def fail() -> GoldEditGrid:
        return GoldEditGrid(np.zeros((n_c, n_u), dtype=np.int8), Status.UNALIGNABLE)

    pairs = _lcs_pairs(u, rw) + [(n_u, len(rw))]
    prev_u = prev_r = -1
    for next_u, next_r in pairs:
        u_gap = range(prev_u + 1, next_u)
        r_gap = rw[prev_r + 1: next_r]
        prev_u, prev_r = next_u, next_r
        if not r_gap:
            if u_gap:
                return fail()  # pure deletion is not expressible
            continue
        if len(u_gap) > 1:
            return fail()
        column = u_gap[0] if u_gap else next_u
        if column >= n_u:
            return fail()  # appending after the last token has no grid cell
        pieces = _match_span(r_gap, d)
        if pieces is None:
            return fail()
        kinds = [EditType.INSERT] * len(pieces)
        if u_gap:
            kinds[-1] = EditType.REPLACE
        for (start, stop), kind in zip(pieces, kinds):
            if grid[start:stop, column].any():
                return fail()
            grid[start:stop, column] = kind

    spans = decode_grid(grid, d.row_owner)
    out, _ = apply_edits(u, spans, d.context_tokens)
    if list(out) != list(rw):
        return fail()
    return GoldEditGrid(grid, Status.ALIGNED)
