"""BLEU, ROUGE and restoration F-scores over token sequences."""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

from .supervision import restored_words

Tokens = Sequence[str]

SMOOTHING = "add-one on orders >= 2 with zero clipped matches"


def ngrams(tokens: Tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _clipped(pred: Counter, ref: Counter) -> int:
    return sum(min(c, ref[g]) for g, c in pred.items())


def _bleu_from_stats(matches, totals, pred_len, ref_len, n, smooth=True) -> float:
    if pred_len == 0:
        return 0.0
    log_p = 0.0
    for k in range(n):
        m, t = matches[k], totals[k]
        if m == 0:
            if k == 0 or not smooth:
                return 0.0
            m, t = 1, t + 1
        log_p += math.log(m / t)
    bp = 1.0 if pred_len > ref_len else math.exp(1.0 - ref_len / pred_len)
    return bp * math.exp(log_p / n)


def _bleu_stats(pred: Tokens, ref: Tokens, n: int):
    matches, totals = [], []
    for k in range(1, n + 1):
        p = ngrams(pred, k)
        matches.append(_clipped(p, ngrams(ref, k)))
        totals.append(sum(p.values()))
    return matches, totals


def bleu_n(preds: Sequence[Tokens], refs: Sequence[Tokens], n: int, smooth: bool = True,
           sentence_level: bool = False) -> float:
    """BLEU with uniform weights over orders 1..n and a brevity penalty.

    Corpus level by default: clipped counts and lengths are summed over all
    pairs before combining. ``sentence_level`` averages per-pair scores.
    """
    if n not in (1, 2, 3, 4):
        raise ValueError("n must be between 1 and 4")
    if len(refs) == 0:
        raise ValueError("empty reference set")
    if len(preds) != len(refs):
        raise ValueError("predictions and references differ in length")
    if sentence_level:
        scores = []
        for p, r in zip(preds, refs):
            m, t = _bleu_stats(p, r, n)
            scores.append(_bleu_from_stats(m, t, len(p), len(r), n, smooth))
        return sum(scores) / len(scores)
    M, T = [0] * n, [0] * n
    for p, r in zip(preds, refs):
        m, t = _bleu_stats(p, r, n)
        M = [a + b for a, b in zip(M, m)]
        T = [a + b for a, b in zip(T, t)]
    return _bleu_from_stats(M, T, sum(map(len, preds)), sum(map(len, refs)), n, smooth)


def _f1(overlap: float, n_pred: int, n_ref: int) -> float:
    if overlap == 0 or n_pred == 0 or n_ref == 0:
        return 0.0
    p, r = overlap / n_pred, overlap / n_ref
    return 2 * p * r / (p + r)


def rouge_n(pred: Tokens, ref: Tokens, n: int) -> float:
    """F1 of clipped n-gram overlap for one pair."""
    if len(pred) == 0:
        return 0.0
    P, R = ngrams(pred, n), ngrams(ref, n)
    if not R:
        return 1.0 if not P else 0.0
    return _f1(_clipped(P, R), sum(P.values()), sum(R.values()))


def lcs_length(a: Tokens, b: Tokens) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l(pred: Tokens, ref: Tokens) -> float:
    if len(pred) == 0:
        return 0.0
    return _f1(lcs_length(pred, ref), len(pred), len(ref))


def _restored_ngrams(tokens: Tokens, incomplete: Tokens, n: int) -> Counter:
    restored = set(restored_words(incomplete, tokens))
    return Counter(g for g in ngrams(tokens, n).elements()
                   if any(t.casefold() in restored for t in g))


def restoration_fscore(pred: Tokens, incomplete: Tokens, ref: Tokens, n: int) -> Optional[float]:
    """F-score over n-grams that carry at least one restored word.

    Restored words of a sequence are its tokens missing from the incomplete
    utterance (multiset difference). Returns None when the reference
    restores nothing at this order, which excludes the pair from averages.
    """
    if n not in (1, 2, 3):
        raise ValueError("n must be 1, 2 or 3")
    R = _restored_ngrams(ref, incomplete, n)
    if not R:
        return None
    P = _restored_ngrams(pred, incomplete, n)
    return _f1(_clipped(P, R), sum(P.values()), sum(R.values()))


@dataclass
class MetricsReport:
    bleu1: float
    bleu2: float
    rouge1: float
    rouge2: float
    rougeL: float
    f1: float
    f2: float
    f3: float
    n_examples: int
    n_fscore: tuple = (0, 0, 0)
    exact_match: float = 0.0
    bleu_level: str = "corpus"
    smoothing: str = SMOOTHING

    def to_dict(self) -> dict:
        d = asdict(self)
        d["n_fscore"] = list(self.n_fscore)
        return d


def per_example(pred: Tokens, incomplete: Tokens, ref: Tokens) -> dict:
    return {
        "rouge1": rouge_n(pred, ref, 1), "rouge2": rouge_n(pred, ref, 2), "rougeL": rouge_l(pred, ref),
        "f1": restoration_fscore(pred, incomplete, ref, 1),
        "f2": restoration_fscore(pred, incomplete, ref, 2),
        "f3": restoration_fscore(pred, incomplete, ref, 3),
        "exact": float(list(pred) == list(ref)),
    }


def evaluate(preds: Sequence[Tokens], incompletes: Sequence[Tokens], refs: Sequence[Tokens],
             sentence_bleu: bool = False) -> MetricsReport:
    if not refs:
        raise ValueError("cannot evaluate an empty prediction set")
    if not len(preds) == len(incompletes) == len(refs):
        raise ValueError("predictions, incomplete utterances and references differ in length")
    rows = [per_example(p, i, r) for p, i, r in zip(preds, incompletes, refs)]

    def mean(key):
        vals = [row[key] for row in rows if row[key] is not None]
        return (sum(vals) / len(vals) if vals else 0.0), len(vals)

    (r1, _), (r2, _), (rl, _) = mean("rouge1"), mean("rouge2"), mean("rougeL")
    (f1, n1), (f2, n2), (f3, n3) = mean("f1"), mean("f2"), mean("f3")
    return MetricsReport(
        bleu1=bleu_n(preds, refs, 1, sentence_level=sentence_bleu),
        bleu2=bleu_n(preds, refs, 2, sentence_level=sentence_bleu),
        rouge1=r1, rouge2=r2, rougeL=rl, f1=f1, f2=f2, f3=f3,
        n_examples=len(rows), n_fscore=(n1, n2, n3), exact_match=mean("exact")[0],
        bleu_level="sentence" if sentence_bleu else "corpus",
    )
