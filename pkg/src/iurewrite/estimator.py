"""Scikit-learn style estimators wrapping supervision and the rewriting model."""
from __future__ import annotations

import copy
import json
import logging
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch
from sklearn.base import BaseEstimator, TransformerMixin
from torch.optim.swa_utils import AveragedModel, get_ema_multi_avg_fn
from sklearn.utils.validation import check_is_fitted

from .config import RunConfig
from .corpus import Dialogue, Vocab
from .heads import MergeMode
from .model import RewriterModel, check_lengths, collate, prepare
from .rewriter import RewriteResult, rewrite
from .supervision import STOPWORDS, build_gold_edit_grid, relevance_labels
from .validation import check_dialogues

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


class EditLabeler(TransformerMixin, BaseEstimator):
    """Stateless transformer from dialogues to their distant-supervision labels."""

    def __init__(self, stopwords=None):
        self.stopwords = stopwords

    def fit(self, X, y=None):
        check_dialogues(X, y, require_rewrite=True)
        return self

    def transform(self, X, y=None) -> list[dict]:
        X = check_dialogues(X, y, require_rewrite=True)
        stop = STOPWORDS if self.stopwords is None else frozenset(self.stopwords)
        out = []
        for d in X:
            grid = build_gold_edit_grid(d)
            out.append({"id": d.id, "R": list(relevance_labels(d, stop).R),
                        "edits": [list(e) for e in grid.edits()], "status": grid.status.value})
        return out


class EditMatrixRewriter(BaseEstimator):
    """Multi-task edit-matrix rewriter for incomplete utterances.

    ``fit`` takes dialogues with gold rewrites (or rewrites passed as ``y``),
    ``predict`` returns rewritten utterances as space-joined token strings and
    ``score`` reports exact-match accuracy.
    """

    def __init__(self, d_model=64, n_layers=2, n_heads=4, d_ff=128, max_len=128, dropout=0.0,
                 d_hidden=64, d_int=16, unet_channels=32, merge_alpha=0.5, tau=0.5,
                 alpha1=0.5, alpha2=0.5, alpha3=0.5, class_weights=(1.0, 5.0, 5.0),
                 n_negatives=3, lr=1e-3, steps=2000, batch_size=16, warmup=100,
                 merge_warmup=300, ema_decay=0.99, eval_every=200, seed=0, dtype="float32", cs=True, cm=True, sm=True,
                 hm=False, ic=True):
        self.d_model = d_model
        self.n_layers = n_layers
        self.n_heads = n_heads
        self.d_ff = d_ff
        self.max_len = max_len
        self.dropout = dropout
        self.d_hidden = d_hidden
        self.d_int = d_int
        self.unet_channels = unet_channels
        self.merge_alpha = merge_alpha
        self.tau = tau
        self.alpha1 = alpha1
        self.alpha2 = alpha2
        self.alpha3 = alpha3
        self.class_weights = class_weights
        self.n_negatives = n_negatives
        self.lr = lr
        self.steps = steps
        self.batch_size = batch_size
        self.warmup = warmup
        self.merge_warmup = merge_warmup
        self.ema_decay = ema_decay
        self.eval_every = eval_every
        self.seed = seed
        self.dtype = dtype
        self.cs = cs
        self.cm = cm
        self.sm = sm
        self.hm = hm
        self.ic = ic

    @classmethod
    def from_config(cls, cfg: RunConfig) -> "EditMatrixRewriter":
        names = cls._get_param_names()
        return cls(**{k: getattr(cfg, k) for k in names})

    def get_config(self) -> RunConfig:
        return RunConfig(**self.get_params())

    # -- training ----------------------------------------------------------

    def _init_model(self, cfg: RunConfig, vocab_size: int) -> RewriterModel:
        torch.manual_seed(cfg.seed)
        model = RewriterModel(vocab_size, cfg)
        return model.to(getattr(torch, cfg.dtype))

    def fit(self, X, y=None, dev: Optional[Sequence[Dialogue]] = None,
            log_path: Optional[str | Path] = None):
        """Train on ``X``. With ``dev``, the best dev exact-match state is kept.

        With ``ema_decay`` > 0, dev scoring and the returned weights use an
        exponential moving average of the parameters.
        """
        cfg = self.get_config()
        X = check_dialogues(X, y, require_rewrite=True)
        dev = check_dialogues(dev, require_rewrite=True) if dev is not None else None
        torch.set_num_threads(1)
        self.vocab_ = Vocab.build(X)
        items = [prepare(d, self.vocab_) for d in X]
        check_lengths(items, cfg.max_len)
        self.n_unalignable_ = sum(not p.aligned for p in items)
        self.model_ = model = self._init_model(cfg, len(self.vocab_))
        model.train()

        opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
        warm = max(cfg.warmup, 1)
        sched = torch.optim.lr_scheduler.LambdaLR(opt, lambda s: min(1.0, (s + 1) / warm))
        # evaluation (and the returned model) can use an exponential moving average of the weights
        ema = (AveragedModel(model, multi_avg_fn=get_ema_multi_avg_fn(cfg.ema_decay))
               if cfg.ema_decay > 0 else None)
        rng = np.random.default_rng(cfg.seed)
        order: list[int] = []
        self.log_ = []
        self.dev_history_ = []
        best_score, best_state = -1.0, None
        log_fh = open(log_path, "w", encoding="utf-8") if log_path else None
        try:
            for step in range(1, cfg.steps + 1):
                if len(order) < cfg.batch_size:
                    order.extend(rng.permutation(len(items)).tolist())
                idx, order = order[:cfg.batch_size], order[cfg.batch_size:]
                batch = collate([items[i] for i in idx], model.dtype)
                lr = opt.param_groups[0]["lr"]
                # relevance merging starts once the edit head has left the uniform regime
                merge = MergeMode.OFF if step <= cfg.merge_warmup else None
                total, br = model.objective(batch, step, merge)
                opt.zero_grad()
                total.backward()
                opt.step()
                sched.step()
                if ema is not None:
                    ema.update_parameters(model)
                rec = {"step": step, "L_edit": br.L_edit, "L_sel": br.L_sel, "L_mat": br.L_mat,
                       "L_int": br.L_int, "L_final": br.L_final, "lr": lr}
                self.log_.append(rec)
                if log_fh:
                    log_fh.write(json.dumps(rec) + "\n")
                if dev is not None and step > cfg.merge_warmup and (
                        step % cfg.eval_every == 0 or step == cfg.steps):
                    self.model_ = ema.module if ema is not None else model
                    score = self.score(dev)
                    self.dev_history_.append((step, score))
                    logger.info("step %d dev exact-match %.4f", step, score)
                    if score > best_score:
                        best_score, best_state = score, copy.deepcopy(self.model_.state_dict())
                        self.best_step_ = step
                        if score >= 1.0:
                            break
        finally:
            self.model_ = model
            if log_fh:
                log_fh.close()
        if best_state is not None:
            model.load_state_dict(best_state)
        elif ema is not None:
            model.load_state_dict(ema.module.state_dict())
            self.best_step_ = cfg.steps
        else:
            self.best_step_ = cfg.steps
        self.n_steps_ = step if cfg.steps else 0
        model.eval()
        return self

    # -- inference ---------------------------------------------------------

    def predict_detailed(self, X, merge_mode=None, return_grids: bool = False):
        check_is_fitted(self, "model_")
        X = check_dialogues(X)
        return rewrite(X, self.model_, self.vocab_, merge_mode, return_grids=return_grids)

    def predict(self, X) -> list[str]:
        return [r.text for r in self.predict_detailed(X)]

    def score(self, X, y=None) -> float:
        """Exact-match accuracy against the gold rewrites."""
        X = check_dialogues(X, y, require_rewrite=True)
        res: list[RewriteResult] = self.predict_detailed(X)
        return float(np.mean([list(r.tokens) == list(d.rewrite.tokens) for r, d in zip(res, X)]))

    # -- persistence -------------------------------------------------------

    def save(self, path: str | Path) -> None:
        check_is_fitted(self, "model_")
        torch.save({
            "format_version": CHECKPOINT_VERSION,
            "config": self.get_config().to_dict(),
            "vocab": self.vocab_.to_list(),
            "state_dict": self.model_.state_dict(),
            "step": int(getattr(self, "n_steps_", 0)),
            "best_step": int(getattr(self, "best_step_", 0)),
            "rng_state": torch.get_rng_state(),
        }, path)

    @classmethod
    def load(cls, path: str | Path) -> "EditMatrixRewriter":
        ck = torch.load(path, weights_only=True)
        if ck.get("format_version") != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {ck.get('format_version')}")
        cfg = RunConfig.from_dict(ck["config"])
        est = cls.from_config(cfg)
        est.vocab_ = Vocab.from_list(ck["vocab"])
        model = RewriterModel(len(est.vocab_), est.get_config()).to(getattr(torch, cfg.dtype))
        model.load_state_dict(ck["state_dict"])
        model.eval()
        est.model_ = model
        est.n_steps_ = ck["step"]
        est.best_step_ = ck["best_step"]
        return est
