"""Module-switch ablation over the synthetic corpus."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .config import RunConfig
from .corpus import Dialogue, make_synthetic_corpus
from .estimator import EditMatrixRewriter
from .metrics import MetricsReport, evaluate

logger = logging.getLogger(__name__)

OFF = dict(cs=False, cm=False, sm=False, hm=False, ic=False)

ABLATION_ROWS: dict[str, dict] = {
    "backbone": dict(OFF),
    "+cs": dict(OFF, cs=True),
    "+cs/hm": dict(OFF, cs=True, hm=True),
    "+cs/sm": dict(OFF, cs=True, sm=True),
    "+cs/sm/ic": dict(OFF, cs=True, sm=True, ic=True),
    "+cs/sm/ic/cm": dict(OFF, cs=True, sm=True, ic=True, cm=True),
}

COLUMNS = [("B1", "bleu1"), ("B2", "bleu2"), ("R1", "rouge1"), ("R2", "rouge2"),
           ("F1", "f1"), ("F2", "f2"), ("F3", "f3")]


@dataclass
class AblationRow:
    name: str
    report: MetricsReport
    exact_match: float
    seconds: float
    steps: int

    def to_dict(self) -> dict:
        return {"name": self.name, "exact_match": self.exact_match, "seconds": self.seconds,
                "steps": self.steps, **self.report.to_dict()}


@dataclass
class AblationTable:
    rows: list[AblationRow] = field(default_factory=list)
    seed: int = 0
    sizes: tuple = (0, 0, 0)

    def row(self, name: str) -> AblationRow:
        return next(r for r in self.rows if r.name == name)

    def to_dict(self) -> dict:
        return {"seed": self.seed, "train/dev/test": list(self.sizes),
                "rows": [r.to_dict() for r in self.rows]}

    def format(self) -> str:
        head = ["Model"] + [c for c, _ in COLUMNS] + ["EM"]
        lines = [" | ".join(head), " | ".join("---" for _ in head)]
        for r in self.rows:
            vals = [f"{100 * getattr(r.report, k):.1f}" for _, k in COLUMNS]
            lines.append(" | ".join([r.name] + vals + [f"{100 * r.exact_match:.1f}"]))
        return "\n".join(lines)


def split_corpus(data: Sequence[Dialogue], dev_frac: float = 0.1, test_frac: float = 0.1):
    n = len(data)
    n_test = max(1, int(round(n * test_frac)))
    n_dev = max(1, int(round(n * dev_frac)))
    return list(data[: n - n_dev - n_test]), list(data[n - n_dev - n_test: n - n_test]), list(data[n - n_test:])


def run_row(name: str, base: RunConfig, train, dev, test) -> AblationRow:
    cfg = base.replace(**ABLATION_ROWS[name])
    t0 = time.time()
    est = EditMatrixRewriter.from_config(cfg).fit(train, dev=dev)
    preds = [r.tokens for r in est.predict_detailed(test)]
    report = evaluate(preds, [d.incomplete.tokens for d in test], [d.rewrite.tokens for d in test])
    secs = time.time() - t0
    logger.info("%s: EM %.4f in %.0fs", name, report.exact_match, secs)
    return AblationRow(name, report, report.exact_match, secs, est.n_steps_)


def cmd_ablate(base: RunConfig, size: int = 2000, rows: Optional[Sequence[str]] = None,
               data: Optional[Sequence[Dialogue]] = None) -> AblationTable:
    """Train and evaluate every switch configuration on one shared split."""
    corpus = list(data) if data is not None else make_synthetic_corpus(base.seed, size)
    train, dev, test = split_corpus(corpus)
    table = AblationTable(seed=base.seed, sizes=(len(train), len(dev), len(test)))
    for name in rows or ABLATION_ROWS:
        table.rows.append(run_row(name, base, train, dev, test))
    return table
