"""Batch command-line front end.

Exit codes: 0 success, 1 data/validation error, 2 missing resource,
3 numerical abort.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import Checkpoint, CheckpointError, file_digest
from .config import ConfigError, build_configs, load_config, parse_config, render_config
from .dataset import DataError, Example, read_dataset, read_text_lines, write_dataset
from .evaluation import VocabularyMismatch, decide, ensemble_predict, evaluate
from .labels import LABELS
from .model import ModelConfig
from .preprocess import EmojiTable, default_emoji_table, preprocess_pipeline
from .resources import ResourceError, build_vocab, load_embeddings, load_emolex, load_label_map, task_flags
from .tensor_core import NonFiniteError
from .training import TrainConfig, TrainingDiverged, fine_tune, pseudo_label, train

log = logging.getLogger("emoattn")

EXIT_DATA, EXIT_RESOURCE, EXIT_NUMERIC = 1, 2, 3


class MissingResource(Exception):
    pass


def _need(path, what):
    if path is None:
        return None
    p = Path(path)
    if not p.is_file():
        raise MissingResource(f"{what} not found: {path}")
    return p


def _emoji_table(args) -> EmojiTable:
    path = _need(getattr(args, "emoji_table", None), "emoji table")
    return EmojiTable.from_file(path) if path else default_emoji_table()


def _tokenize(examples, table):
    empty = 0
    for ex in examples:
        ex.tokens = preprocess_pipeline(ex.text, table)
        empty += not ex.tokens
    return empty


def _load_labeled(path, table, role):
    examples = read_dataset(_need(path, f"{role} file"))
    empty = _tokenize(examples, table)
    if empty:
        log.warning("%s: %d tweets are empty after preprocessing", path, empty)
    return examples


def _detect_dim(path) -> int:
    with open(path, encoding="utf-8", errors="replace") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if lineno == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
                return int(parts[1])
            return len(parts) - 1
    raise ResourceError(f"{path}: empty embedding file")


def _load_checkpoints(paths, ensemble: bool):
    if not paths:
        raise ConfigError("at least one --checkpoint is required")
    if len(paths) > 1 and not ensemble:
        raise ConfigError("several --checkpoint values need --ensemble")
    return [Checkpoint.load(_need(p, "checkpoint")) for p in paths]


def _apply_eval_flags(ckpts, args):
    lex = None
    if getattr(args, "lexicon", None):
        lex = task_flags(load_emolex(_need(args.lexicon, "lexicon")), load_label_map(args.label_map))
    for ck in ckpts:
        if lex is not None:
            ck.lexicon = lex
        if args.nrc2 is not None:
            ck.config.use_nrc2 = args.nrc2
        if args.threshold is not None:
            ck.config.threshold = args.threshold
        if (ck.config.use_nrc1 or ck.config.use_nrc2) and ck.lexicon is None:
            raise MissingResource("this model uses lexicon features; pass --lexicon")


# -- commands --------------------------------------------------------------

def cmd_preprocess(args):
    table = _emoji_table(args)
    examples = read_dataset(_need(args.input, "input file"), require_labels=False)
    rows, empty = [], 0
    for ex in examples:
        toks = preprocess_pipeline(ex.text, table)
        if not toks:
            empty += 1
            log.warning("%s: tweet %s is empty after preprocessing", args.input, ex.id)
        rows.append((ex.id, " ".join(toks), ex.labels))
    write_dataset(args.out, rows)
    print(f"rows={len(rows)} empty={empty} out={args.out}")
    return 0


def _resolve_configs(args):
    if args.config:
        model_cfg, train_cfg = load_config(_need(args.config, "config file"))
    else:
        model_cfg, train_cfg = ModelConfig(), TrainConfig()
    if args.no_attention:
        model_cfg.use_attention = False
    if args.nrc1:
        model_cfg.use_nrc1 = True
    if args.nrc2:
        model_cfg.use_nrc2 = True
    if args.threshold is not None:
        model_cfg.threshold = args.threshold
    return model_cfg, train_cfg


def _manifest_inputs(args):
    out = {}
    for role in ("config", "train", "dev", "embeddings", "lexicon", "label_map", "emoji_table"):
        path = getattr(args, role, None)
        if path:
            out[role] = {"path": str(path), "sha256": file_digest(path)}
    return out


def _from_manifest(args):
    with open(_need(args.manifest, "manifest")) as fh:
        man = json.load(fh)
    for role, rec in man["inputs"].items():
        if role == "config":
            continue
        path = _need(rec["path"], role)
        if file_digest(path) != rec["sha256"]:
            raise DataError(f"{role} file {path} changed since the manifest was written")
        setattr(args, role, rec["path"])
    args.seed = man["seed"]
    args.config = None
    args.no_attention = args.nrc1 = args.nrc2 = False
    args.threshold = None
    args.embed_dim = man.get("embed_dim")
    return build_configs({**man["config"], **man["train_config"]})


def cmd_train(args):
    if args.manifest:
        model_cfg, train_cfg = _from_manifest(args)
    else:
        model_cfg, train_cfg = _resolve_configs(args)
    for key in ("train", "dev", "embeddings"):
        if not getattr(args, key):
            raise ConfigError(f"--{key} is required")
    emb_path = _need(args.embeddings, "embedding file")
    lex_path = _need(args.lexicon, "lexicon")
    if (model_cfg.use_nrc1 or model_cfg.use_nrc2) and lex_path is None:
        raise MissingResource("--nrc1/--nrc2 need --lexicon")
    print(render_config(model_cfg, train_cfg), end="")

    table = _emoji_table(args)
    train_set = _load_labeled(args.train, table, "train")
    dev_set = _load_labeled(args.dev, table, "dev")
    dim = args.embed_dim or _detect_dim(emb_path)
    corpus = [ex.tokens for ex in train_set + dev_set]
    emb = load_embeddings(emb_path, dim, restrict_to={t for s in corpus for t in s})
    vocab, matrix = build_vocab(corpus, emb, args.seed)
    label_map = load_label_map(args.label_map)
    lex = task_flags(load_emolex(lex_path), label_map) if lex_path else None
    log.info("vocab=%d (oov=%d) dim=%d", len(vocab), len(vocab.oov_ids), dim)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "train_log.csv", "w") as fh:
        ckpt, report = train(model_cfg, train_set, dev_set, vocab, matrix, args.seed, train_cfg,
                             lexicon=lex, label_map=label_map, log_file=fh)
    digest = ckpt.save(out / "model.ckpt")
    if not args.no_figures:
        from .report import training_curve
        training_curve(report, out / "training_curve.png")
    manifest = {
        "tool_version": __version__,
        "command": "train",
        "seed": args.seed,
        "embed_dim": dim,
        "config": model_cfg.to_dict(),
        "train_config": train_cfg.to_dict(),
        "inputs": _manifest_inputs(args),
        "artifacts": {"checkpoint": "model.ckpt", "log": "train_log.csv"},
        "checkpoint_sha256": digest,
        "best_epoch": report.best_epoch,
        "best_val_acc": report.best_val_acc,
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    print(f"best_epoch={report.best_epoch} val_acc={report.best_val_acc:.6f} checkpoint_sha256={digest}")
    return 0


def cmd_finetune(args):
    (ckpt,) = _load_checkpoints(args.checkpoint, False)
    table = _emoji_table(args)
    synth = _load_labeled(args.train, table, "synthetic")
    dev = _load_labeled(args.dev, table, "dev") if args.dev else None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "finetune_log.csv", "w") as fh:
        tuned, report = fine_tune(ckpt, synth, dev_set=dev, epochs=args.epochs, log_file=fh)
    digest = tuned.save(out / "model.ckpt")
    print(f"best_epoch={report.best_epoch} val_acc={report.best_val_acc:.6f} checkpoint_sha256={digest}")
    return 0


def cmd_evaluate(args):
    ckpts = _load_checkpoints(args.checkpoint, args.ensemble)
    _apply_eval_flags(ckpts, args)
    examples = _load_labeled(args.test, _emoji_table(args), "test")
    result, probs, decisions = evaluate(ckpts, examples)
    print(result.summary())
    for m in result.per_emotion:
        print(f"{m.label:<13} P={m.precision:.4f} R={m.recall:.4f} F1={m.f1:.4f}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        result.write_csv(out / "metrics.csv")
        (out / "summary.txt").write_text(result.summary() + "\n")
        write_dataset(out / "predictions.tsv", [(ex.id, ex.text, d) for ex, d in zip(examples, decisions)])
        if not args.no_figures:
            from .report import per_emotion_bars
            per_emotion_bars(result, out / "per_emotion.png")
    return 0


def cmd_predict(args):
    ckpts = _load_checkpoints(args.checkpoint, args.ensemble)
    _apply_eval_flags(ckpts, args)
    examples = read_text_lines(_need(args.input, "input file"))
    _tokenize(examples, _emoji_table(args))
    rows = []
    if examples:
        decisions = decide(ensemble_predict(ckpts, examples), ckpts[0].config.threshold)
        rows = [(ex.id, ex.text, d) for ex, d in zip(examples, decisions)]
    write_dataset(args.out, rows)
    print(f"rows={len(rows)} out={args.out}")
    return 0


def cmd_pseudolabel(args):
    (ckpt,) = _load_checkpoints(args.checkpoint, False)
    _apply_eval_flags([ckpt], args)
    examples = read_text_lines(_need(args.input, "input file"))
    _tokenize(examples, _emoji_table(args))
    kept = pseudo_label(ckpt, [ex.tokens for ex in examples], args.threshold)
    by_index = {int(ex.id.rsplit("-", 1)[1]): ex for ex in kept}
    rows = [(src.id, src.text, by_index[i].labels) for i, src in enumerate(examples) if i in by_index]
    write_dataset(args.out, rows)
    dropped = len(examples) - len(rows)
    if not rows:
        log.warning("no sentence received a label; output has only the header")
    print(f"input={len(examples)} kept={len(rows)} dropped={dropped} out={args.out}")
    return 0


def cmd_show_config(args):
    model_cfg, train_cfg = load_config(_need(args.config, "config file")) if args.config \
        else (ModelConfig(), TrainConfig())
    print(render_config(model_cfg, train_cfg), end="")
    return 0


# -- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="emoattn", description="Self-attention + CNN multi-label emotion classifier")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--emoji-table", help="emoji TSV (default: bundled CLDR names)")

    def eval_flags(sp):
        sp.add_argument("--checkpoint", action="append", default=[], required=True)
        sp.add_argument("--ensemble", action="store_true", help="average several checkpoints")
        sp.add_argument("--nrc2", dest="nrc2", action="store_true", default=None)
        sp.add_argument("--no-nrc2", dest="nrc2", action="store_false")
        sp.add_argument("--lexicon", help="NRC EmoLex word-level TSV (overrides the stored copy)")
        sp.add_argument("--label-map")
        sp.add_argument("--threshold", type=float)
        common(sp)

    sp = sub.add_parser("preprocess", help="tokenize a task TSV")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--out", required=True)
    common(sp)
    sp.set_defaults(func=cmd_preprocess)

    sp = sub.add_parser("train", help="train one model")
    sp.add_argument("--config")
    sp.add_argument("--manifest", help="rerun exactly from a previous manifest.json")
    sp.add_argument("--train")
    sp.add_argument("--dev")
    sp.add_argument("--embeddings")
    sp.add_argument("--embed-dim", type=int)
    sp.add_argument("--lexicon")
    sp.add_argument("--label-map")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--nrc1", action="store_true")
    sp.add_argument("--nrc2", action="store_true")
    sp.add_argument("--no-attention", action="store_true")
    sp.add_argument("--threshold", type=float)
    sp.add_argument("--out", required=True)
    sp.add_argument("--no-figures", action="store_true")
    common(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("finetune", help="continue training on pseudo-labelled data")
    sp.add_argument("--checkpoint", action="append", default=[], required=True)
    sp.add_argument("--train", required=True, help="synthetic task TSV")
    sp.add_argument("--dev")
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--out", required=True)
    common(sp)
    sp.set_defaults(func=cmd_finetune)

    sp = sub.add_parser("evaluate", help="score checkpoint(s) on a labelled file")
    eval_flags(sp)
    sp.add_argument("--test", required=True)
    sp.add_argument("--out")
    sp.add_argument("--no-figures", action="store_true")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("predict", help="label unlabeled tweets")
    eval_flags(sp)
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("pseudolabel", help="build a synthetic training set")
    eval_flags(sp)
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_pseudolabel)

    sp = sub.add_parser("show-config", help="print the resolved configuration")
    sp.add_argument("--config")
    sp.set_defaults(func=cmd_show_config)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (MissingResource, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (TrainingDiverged, NonFiniteError) as exc:
        print(f"error: numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ResourceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (DataError, ConfigError, CheckpointError, VocabularyMismatch, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
