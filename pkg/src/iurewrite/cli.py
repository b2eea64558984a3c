"""Command line entry points: train, eval, rewrite, labels, ablate, synth."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, RunConfig, load_config
from .corpus import CorpusError, dump_jsonl, load_jsonl, make_synthetic_corpus
from .supervision import Status, build_gold_edit_grid

logger = logging.getLogger("iurewrite")


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if getattr(args, "steps", None) is not None:
        changes["steps"] = args.steps
    return cfg.replace(**changes) if changes else cfg


def _dialogues(args, cfg: RunConfig | None = None, key: str = "train_path"):
    path = args.data or (getattr(cfg, key, None) if cfg else None)
    if path:
        return load_jsonl(path)
    if getattr(args, "synthetic", None):
        return make_synthetic_corpus(args.seed or 0, args.synthetic)
    raise CorpusError("no data given: pass --data PATH or --synthetic N")


def _write_jsonl(rows, path):
    fh = open(path, "w", encoding="utf-8") if path else sys.stdout
    try:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
    finally:
        if path:
            fh.close()


def _write_json(obj, path):
    text = json.dumps(obj, indent=2, ensure_ascii=False)
    if path:
        Path(path).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def cmd_train(args) -> int:
    from .estimator import EditMatrixRewriter

    cfg = _config(args)
    data = _dialogues(args, cfg)
    dev = load_jsonl(args.dev or cfg.dev_path) if (args.dev or cfg.dev_path) else None
    if args.checkpoint is None:
        raise ConfigError("train needs --checkpoint PATH to write the model")
    est = EditMatrixRewriter.from_config(cfg).fit(data, dev=dev, log_path=args.out)
    est.save(args.checkpoint)
    logger.info("trained %d steps (best step %d), saved %s", est.n_steps_, est.best_step_, args.checkpoint)
    return 0


def cmd_eval(args) -> int:
    from .metrics import evaluate, per_example
    from .rewriter import rewrite_from_grid
    from .validation import check_dialogues

    data = check_dialogues(_dialogues(args), require_rewrite=True)
    if args.oracle:
        preds = [rewrite_from_grid(d, build_gold_edit_grid(d).entries).tokens for d in data]
    else:
        from .estimator import EditMatrixRewriter
        if not args.checkpoint:
            raise ConfigError("eval needs --checkpoint PATH (or --oracle)")
        est = EditMatrixRewriter.load(args.checkpoint)
        preds = [r.tokens for r in est.predict_detailed(data)]
    incs = [d.incomplete.tokens for d in data]
    refs = [d.rewrite.tokens for d in data]
    report = evaluate(preds, incs, refs, sentence_bleu=args.sentence_bleu)
    _write_json(report.to_dict(), args.out)
    if args.csv:
        with open(args.csv, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["id", "prediction", "reference", "exact", "rouge1", "rouge2", "rougeL", "f1", "f2", "f3"])
            for d, p in zip(data, preds):
                row = per_example(p, d.incomplete.tokens, d.rewrite.tokens)
                w.writerow([d.id, " ".join(p), d.rewrite.text, row["exact"], row["rouge1"],
                            row["rouge2"], row["rougeL"], row["f1"], row["f2"], row["f3"]])
    return 0


def cmd_rewrite(args) -> int:
    from .estimator import EditMatrixRewriter

    if not args.checkpoint:
        raise ConfigError("rewrite needs --checkpoint PATH")
    est = EditMatrixRewriter.load(args.checkpoint)
    data = _dialogues(args)
    results, grids = est.predict_detailed(data, merge_mode=args.merge_mode, return_grids=True)
    _write_jsonl((r.to_json() for r in results), args.out)
    if args.dump_grid:
        _write_jsonl(({"id": r.id, "shape": list(P.shape), "probs": P.reshape(-1).tolist()}
                      for r, P in zip(results, grids)), args.dump_grid)
    return 0


def cmd_labels(args) -> int:
    from .estimator import EditLabeler
    from .rewriter import rewrite_from_grid

    data = _dialogues(args)
    rows = EditLabeler().fit_transform(data)
    _write_jsonl(rows, args.out)
    if args.verify:
        bad = []
        for d in data:
            g = build_gold_edit_grid(d)
            if g.status == Status.ALIGNED and rewrite_from_grid(d, g.entries).tokens != list(d.rewrite.tokens):
                bad.append(d.id)
        n_al = sum(r["status"] == Status.ALIGNED.value for r in rows)
        print(f"aligned {n_al}/{len(rows)}; round-trip failures {len(bad)}", file=sys.stderr)
        if bad:
            return 1
    return 0


def cmd_ablate(args) -> int:
    from .ablation import cmd_ablate as run

    cfg = _config(args)
    data = load_jsonl(args.data) if args.data else None
    table = run(cfg, size=args.size, data=data)
    print(table.format())
    if args.out:
        _write_json(table.to_dict(), args.out)
    return 0


def cmd_synth(args) -> int:
    data = make_synthetic_corpus(args.seed or 0, args.size)
    if args.out:
        dump_jsonl(data, args.out)
    else:
        _write_jsonl((d.to_record() for d in data), None)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="iurewrite", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, synthetic=True):
        sp.add_argument("--config", help="flat 'key: value' run configuration")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--data", help="JSON Lines dialogues")
        sp.add_argument("--checkpoint")
        sp.add_argument("--out")
        if synthetic:
            sp.add_argument("--synthetic", type=int, metavar="N",
                            help="use N synthetic dialogues instead of --data")

    sp = sub.add_parser("train", help="train a model and save a checkpoint")
    common(sp)
    sp.add_argument("--dev", help="dev set for best-checkpoint selection")
    sp.add_argument("--steps", type=int)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="score rewrites against gold")
    common(sp)
    sp.add_argument("--oracle", action="store_true", help="decode gold grids instead of a model")
    sp.add_argument("--csv", help="per-example CSV output")
    sp.add_argument("--sentence-bleu", action="store_true")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("rewrite", help="rewrite incomplete utterances")
    common(sp)
    sp.add_argument("--merge-mode", choices=["SOFT", "HARD", "OFF"])
    sp.add_argument("--dump-grid", metavar="PATH", help="write merged cell probabilities (row-major)")
    sp.set_defaults(func=cmd_rewrite)

    sp = sub.add_parser("labels", help="derive relevance labels and gold edit grids")
    common(sp)
    sp.add_argument("--verify", action="store_true", help="fail if any aligned grid does not round-trip")
    sp.set_defaults(func=cmd_labels)

    sp = sub.add_parser("ablate", help="train and score every module-switch configuration")
    common(sp, synthetic=False)
    sp.add_argument("--size", type=int, default=2000)
    sp.add_argument("--steps", type=int)
    sp.set_defaults(func=cmd_ablate)

    sp = sub.add_parser("synth", help="write a synthetic corpus")
    common(sp, synthetic=False)
    sp.add_argument("--size", type=int, default=1000)
    sp.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, CorpusError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
