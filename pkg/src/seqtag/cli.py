"""Command-line entry point: ``seqtag <command> [flags]``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 runtime/numeric error.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import corpus as corpus_mod
from .corpus import BUILTIN_TAGSETS, CorpusError, TaggedSentence, Tagset, parse_conll, read_tagset_file
from .evaluator import ShapeMismatch, TokenMismatch, evaluate_conll, render_report, report_from_metrics
from .tokenizer import VocabTooSmall, WordTooLong, align, load_merge_table, save_merge_table, train_bpe
from .trainer import (
    CheckpointError,
    NonFiniteLoss,
    TrainConfig,
    cross_validate,
    load,
    parse_kv,
    predict,
    save,
    train,
)

log = logging.getLogger("seqtag")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _read(path) -> str:
    try:
        return Path(path).read_bytes().decode("utf-8")
    except FileNotFoundError:
        raise DataError(f"{path}: no such file") from None
    except UnicodeDecodeError as e:
        raise DataError(f"{path}: not UTF-8 ({e.reason} at byte {e.start})") from None
    except OSError as e:
        raise DataError(f"{path}: {e.strerror}") from None


def _write(path, text: str) -> None:
    try:
        Path(path).write_bytes(text.encode("utf-8"))
    except OSError as e:
        raise DataError(f"{path}: {e.strerror}") from None


def _tagset(args) -> Tagset:
    if getattr(args, "tagset_file", None):
        return read_tagset_file(_read(args.tagset_file), Path(args.tagset_file).stem)
    return BUILTIN_TAGSETS[args.tagset]


def _corpus(path, args):
    return parse_conll(_read(path), _tagset(args), str(path), repair=args.repair)


def _add_tagset(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--tagset", choices=sorted(BUILTIN_TAGSETS), default="peyma")
    g.add_argument("--tagset-file", help="one class per line, optional display name after it")
    p.add_argument("--repair", action="store_true", help="rewrite orphan I-c tags to B-c when reading")


_CONFIG_FIELDS = [f for f in dataclasses.fields(TrainConfig)]


def _add_config(p):
    p.add_argument("--config", help="key=value file; flags override it")
    for f in _CONFIG_FIELDS:
        flag = "--" + f.name.replace("_", "-")
        if f.type in ("bool", bool):
            p.add_argument(flag, dest=f.name, action="store_true", default=None)
        else:
            conv = {"int": int, "float": float}.get(f.type, f.type)
            p.add_argument(flag, dest=f.name, type=conv, default=None)


def _config(args) -> TrainConfig:
    values = {}
    env_seed = os.environ.get("SEQTAG_SEED")
    if env_seed is not None:
        values["seed"] = env_seed
    if args.config:
        values.update(parse_kv(_read(args.config)))
    for f in _CONFIG_FIELDS:
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    try:
        cfg = TrainConfig.from_dict(values)
        cfg.validate()
    except (TypeError, ValueError) as e:
        raise DataError(f"config: {e}") from None
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="seqtag", description="BPE + self-attention + CRF sequence tagger")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("bpe-train", help="learn a BPE merge table from a corpus")
    _add_tagset(p)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--vocab-size", type=int, default=1000)
    p.add_argument("--out-vocab", required=True)
    p.add_argument("--out-merges", required=True)

    p = sub.add_parser("split", help="write k fold files")
    _add_tagset(p)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("stats", help="sentence, token and phrase counts")
    _add_tagset(p)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--table", help="write the per-class TSV here")

    p = sub.add_parser("train", help="train a tagger")
    _add_tagset(p)
    _add_config(p)
    p.add_argument("--train", required=True)
    p.add_argument("--dev", help="dev corpus; default: a seeded slice of --train")
    p.add_argument("--vocab", help="vocabulary file from bpe-train")
    p.add_argument("--merges", help="merges file from bpe-train")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--history", help="write the per-epoch metric history (TSV)")

    p = sub.add_parser("cv", help="k-fold cross-validation")
    _add_tagset(p)
    _add_config(p)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--style", choices=["per-tag", "per-class", "summary"], default="per-tag")
    p.add_argument("--metrics", help="write pooled metrics (TSV) here")

    p = sub.add_parser("predict", help="tag a tokenized file")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("eval", help="score predictions against gold")
    _add_tagset(p)
    p.add_argument("--gold", nargs="+", required=True)
    p.add_argument("--pred", nargs="+", required=True)
    p.add_argument("--style", choices=["per-tag", "per-class", "summary"], default="per-tag")
    p.add_argument("--metrics", help="write metrics (TSV) here")

    p = sub.add_parser("report", help="render a saved metrics file")
    _add_tagset(p)
    p.add_argument("--metrics", required=True)
    p.add_argument("--style", choices=["per-tag", "per-class", "summary"], default="per-tag")
    return parser


def cmd_bpe_train(args, out):
    c = _corpus(args.input, args)
    table = train_bpe((w for s in c for w in s.tokens), args.vocab_size)
    save_merge_table(table, args.out_vocab, args.out_merges)
    out.write(f"vocabulary\t{len(table)}\nmerges\t{len(table.merges)}\n")


def cmd_split(args, out):
    c = _corpus(args.input, args)
    seed = args.seed
    if seed is None:
        seed = int(os.environ.get("SEQTAG_SEED", 0))
    split = corpus_mod.split_kfold(c, args.k, seed)
    outdir = Path(args.out_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    for i, idx in enumerate(split.folds()):
        path = outdir / f"fold_{i}.conll"
        _write(path, corpus_mod.to_conll(c.subset(idx)))
        out.write(f"{path}\t{len(idx)}\n")


def cmd_stats(args, out):
    c = _corpus(args.input, args)
    stats = corpus_mod.class_distribution(c)
    kv, table = corpus_mod.render_stats(stats, c.tagset)
    violations = sum(len(corpus_mod.validate_bio(s, c.tagset)) for s in c)
    out.write(kv + f"bio_violations\t{violations}\n")
    if args.table:
        _write(args.table, table)
    else:
        out.write("\n" + table)


def cmd_train(args, out):
    cfg = _config(args)
    train_c = _corpus(args.train, args)
    if args.dev:
        dev_c = _corpus(args.dev, args)
    else:
        n = len(train_c)
        if n < 2:
            raise DataError(f"{args.train}: need at least 2 sentences to carve a dev slice")
        n_dev = min(max(1, round(cfg.dev_fraction * n)), n - 1)
        perm = np.random.default_rng([cfg.seed, 4]).permutation(n)
        dev_idx = sorted(perm[:n_dev].tolist())
        keep = sorted(perm[n_dev:].tolist())
        dev_c, train_c = train_c.subset(dev_idx), train_c.subset(keep)
    merges = None
    if args.vocab or args.merges:
        if not (args.vocab and args.merges):
            raise UsageError("--vocab and --merges go together")
        try:
            merges = load_merge_table(args.vocab, args.merges)
        except OSError as e:
            raise DataError(f"{e.filename}: {e.strerror}") from None
    ckpt = train(train_c, dev_c, cfg, merges=merges)
    save(ckpt, args.out)
    best = ckpt.history[ckpt.best_epoch - 1] if ckpt.best_epoch else None
    out.write(f"epochs_run\t{len(ckpt.history)}\nbest_epoch\t{ckpt.best_epoch}\n")
    if best:
        out.write(f"dev_phrase_f1\t{best['dev_phrase_f1']!r}\ndev_word_f1\t{best['dev_word_f1']!r}\n")
    if args.history:
        keys = ["epoch", "train_loss", "dev_loss", "dev_phrase_f1", "dev_word_f1"]
        rows = ["\t".join(keys)] + ["\t".join(repr(h[k]) for k in keys) for h in ckpt.history]
        _write(args.history, "\n".join(rows) + "\n")


def cmd_cv(args, out):
    cfg = _config(args)
    c = _corpus(args.input, args)
    result = cross_validate(c, args.k, cfg)
    for plan, rep in zip(result.plans, result.folds):
        out.write(
            f"fold {plan.fold}: train {len(plan.train)} (fit {len(plan.fit)}, dev {len(plan.dev)}), "
            f"test {len(plan.test)}, phrase F1 {rep.phrase_total.f1:.4f}, word F1 {rep.word_total.f1:.4f}\n"
        )
    text, tsv = render_report(result.pooled, args.style)
    out.write("\n" + text)
    if args.metrics:
        _write(args.metrics, tsv)


def read_tokens(text: str) -> List[List[str]]:
    """Sentences of first-column tokens; extra columns are ignored."""
    sentences, cur = [], []
    for line in text.split("\n"):
        line = line[:-1] if line.endswith("\r") else line
        if not line.strip():
            if cur:
                sentences.append(cur)
                cur = []
            continue
        cur.append(line.split("\t")[0] if "\t" in line else line.split(" ")[0])
    if cur:
        sentences.append(cur)
    return sentences


def cmd_predict(args, out):
    ckpt = load(args.model)
    model = ckpt.model
    sents = read_tokens(_read(args.input))
    ok, skipped = [], []
    for i, toks in enumerate(sents):
        s = TaggedSentence(tuple(toks), (0,) * len(toks))
        try:
            align(s, model.merges, model.tagset, model.config.max_len)
            ok.append((i, s))
        except WordTooLong as e:
            log.warning("sentence %d skipped: %s", i, e)
            skipped.append(i)
    tags = {i: [0] * len(t) for i, t in enumerate(sents)}
    results = predict(model, [s for _, s in ok], threads=max(1, args.threads))
    coerced = truncated = 0
    for (i, _), wt in zip(ok, results):
        tags[i] = wt.tags
        coerced += wt.coerced
        truncated += wt.truncated
    lines = []
    for i, toks in enumerate(sents):
        for tok, tag in zip(toks, tags[i]):
            lines.append(f"{tok}\t{model.tagset.label(tag)}\n")
        lines.append("\n")
    _write(args.out, "".join(lines))
    if coerced or truncated or skipped:
        log.warning("X coerced to O: %d; words past max_len: %d; skipped sentences: %s",
                    coerced, truncated, skipped)
    out.write(f"sentences\t{len(sents)}\n")


def cmd_eval(args, out):
    if len(args.gold) != len(args.pred):
        raise UsageError("--gold and --pred need the same number of files")
    tagset = _tagset(args)
    tsv_all = []
    for n, (g, p) in enumerate(zip(args.gold, args.pred)):
        try:
            report = evaluate_conll(_read(g), _read(p), tagset, name=Path(p).stem, repair=args.repair)
        except TokenMismatch as e:
            raise DataError(f"{p}: {e}") from None
        text, tsv = render_report(report, args.style)
        if len(args.gold) > 1:
            out.write(f"== {p} ==\n")
            tsv = "".join(f"{Path(p).stem}.{line}\n" for line in tsv.splitlines())
        out.write(text)
        tsv_all.append(tsv)
    if args.metrics:
        _write(args.metrics, "".join(tsv_all))


def cmd_report(args, out):
    tagset = _tagset(args)
    try:
        report = report_from_metrics(_read(args.metrics), tagset, Path(args.metrics).stem)
    except ValueError as e:
        raise DataError(f"{args.metrics}: {e}") from None
    out.write(render_report(report, args.style)[0])


COMMANDS = {
    "bpe-train": cmd_bpe_train,
    "split": cmd_split,
    "stats": cmd_stats,
    "train": cmd_train,
    "cv": cmd_cv,
    "predict": cmd_predict,
    "eval": cmd_eval,
    "report": cmd_report,
}


def run(argv: Optional[Sequence[str]] = None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    handler = logging.StreamHandler(err)
    handler.setFormatter(logging.Formatter("%(levelname)s: %(message)s"))
    log.addHandler(handler)
    try:
        try:
            args = build_parser().parse_args(argv)
        except UsageError as e:
            err.write(f"{e}\n")
            return EXIT_USAGE
        if args.command is None:
            err.write("seqtag: a command is required (see --help)\n")
            return EXIT_USAGE
        log.setLevel(logging.INFO if args.verbose else logging.WARNING)
        try:
            COMMANDS[args.command](args, out)
        except UsageError as e:
            err.write(f"seqtag {args.command}: {e}\n")
            return EXIT_USAGE
        except (DataError, CorpusError, CheckpointError, TokenMismatch, ShapeMismatch,
                WordTooLong, VocabTooSmall) as e:
            err.write(f"seqtag {args.command}: {e}\n")
            return EXIT_DATA
        except (NonFiniteLoss, ArithmeticError, RuntimeError) as e:
            err.write(f"seqtag {args.command}: {e}\n")
            return EXIT_RUNTIME
        return EXIT_OK
    finally:
        log.removeHandler(handler)


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
