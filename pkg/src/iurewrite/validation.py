"""Input validation for estimator entry points."""
from __future__ import annotations

from typing import Iterable, Optional, Sequence

from .corpus import CorpusError, Dialogue, Utterance, _parse_record


def check_dialogues(X: Iterable, y: Optional[Sequence[str]] = None,
                    require_rewrite: bool = False) -> list[Dialogue]:
    """Coerce records or Dialogues into a list of Dialogues.

    ``y`` optionally supplies gold rewrite strings, overriding any already
    attached. Raises CorpusError listing the ids that lack a rewrite when one
    is required.
    """
    out = []
    for k, item in enumerate(X):
        if isinstance(item, dict):
            item = _parse_record(item, k + 1)
        elif not isinstance(item, Dialogue):
            raise TypeError(f"expected Dialogue or dict records, got {type(item).__name__}")
        out.append(item)
    if y is not None:
        y = list(y)
        if len(y) != len(out):
            raise CorpusError(f"got {len(out)} dialogues but {len(y)} rewrites")
        out = [Dialogue(d.context, d.incomplete, Utterance.from_text(t), d.id) for d, t in zip(out, y)]
    if not out:
        raise CorpusError("no dialogues given")
    if require_rewrite:
        missing = [d.id for d in out if d.rewrite is None]
        if missing:
            shown = ", ".join(missing[:10]) + (" ..." if len(missing) > 10 else "")
            raise CorpusError(f"{len(missing)} dialogues lack a gold rewrite: {shown}")
    return out
