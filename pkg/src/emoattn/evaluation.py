"""Multi-label metrics, thresholding and probability-averaging ensembles.

"Accuracy" throughout is the SemEval-2018 E-c multi-label accuracy: the mean
per-tweet Jaccard index |P & G| / |P | G|, scoring 1 when both sets are empty.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import model as M
from .checkpoint import Checkpoint
from .dataset import Example
from .labels import LABELS
from .training import collate, encode_examples


class VocabularyMismatch(ValueError):
    pass


def jaccard_accuracy(preds: Sequence[set], golds: Sequence[set]) -> float:
    if len(preds) != len(golds):
        raise ValueError(f"{len(preds)} predictions for {len(golds)} gold rows")
    if not golds:
        raise ValueError("jaccard_accuracy of an empty list")
    total = 0.0
    for p, g in zip(preds, golds):
        p, g = set(p), set(g)
        union = p | g
        total += 1.0 if not union else len(p & g) / len(union)
    return total / len(golds)


def jaccard_accuracy_matrix(pred, gold) -> float:
    """Same metric on binary [N, 11] matrices."""
    pred = np.asarray(pred, dtype=bool)
    gold = np.asarray(gold, dtype=bool)
    if pred.shape != gold.shape:
        raise ValueError(f"prediction shape {pred.shape} vs gold {gold.shape}")
    if gold.shape[0] == 0:
        raise ValueError("jaccard_accuracy of an empty list")
    inter = (pred & gold).sum(axis=1)
    union = (pred | gold).sum(axis=1)
    scores = np.where(union == 0, 1.0, inter / np.maximum(union, 1))
    return float(scores.mean())


def decide(probs, threshold: float = 0.5) -> np.ndarray:
    """Binary decisions, inclusive at the threshold."""
    return (np.asarray(probs) >= threshold).astype(np.int64)


def member_proba(ckpt: Checkpoint, examples: Sequence[Example], batch_size: int = 256) -> np.ndarray:
    """Eval-mode probabilities [N, 11] of one model, nrc2 applied if configured.

    Examples are encoded with the checkpoint's vocabulary when they carry
    tokens but no ids yet.
    """
    todo = [ex for ex in examples if ex.token_ids is None or (ckpt.lexicon is not None and ex.lex is None)]
    if todo:
        encode_examples(todo, ckpt.vocab, ckpt.lexicon)
    out = np.zeros((len(examples), len(LABELS)))
    for s in range(0, len(examples), batch_size):
        b = collate(examples[s:s + batch_size], ckpt.config.max_width)
        out[s:s + len(b.ids)] = M.predict_proba(b.token_ids, b.mask, ckpt.params, ckpt.config, b.lex)
    return out


def ensemble_predict(checkpoints: Sequence[Checkpoint], examples: Sequence[Example]) -> np.ndarray:
    """Arithmetic mean of member probabilities, reduced in member order."""
    if not checkpoints:
        raise ValueError("ensemble needs at least one checkpoint")
    ref = checkpoints[0].vocab.tokens
    for i, ck in enumerate(checkpoints[1:], 1):
        if ck.vocab.tokens != ref:
            raise VocabularyMismatch(f"checkpoint {i} has a different vocabulary from checkpoint 0")
    total = np.zeros((len(examples), len(LABELS)))
    for ck in checkpoints:
        for ex in examples:  # members may differ in lexicon settings
            ex.lex = None
        total += member_proba(ck, examples)
    return total / len(checkpoints)


@dataclass
class EmotionMetrics:
    label: str
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def precision(self):
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self):
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self):
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0


@dataclass
class EvalResult:
    accuracy: float
    subset_accuracy: float
    n: int
    per_emotion: list[EmotionMetrics] = field(default_factory=list)

    def summary(self) -> str:
        return f"accuracy={self.accuracy:.6f} subset_accuracy={self.subset_accuracy:.6f} n={self.n}"

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["emotion", "tp", "fp", "fn", "tn", "precision", "recall", "f1"])
            for m in self.per_emotion:
                w.writerow([m.label, m.tp, m.fp, m.fn, m.tn,
                            f"{m.precision:.6f}", f"{m.recall:.6f}", f"{m.f1:.6f}"])


def score(decisions, gold) -> EvalResult:
    decisions = np.asarray(decisions, dtype=bool)
    gold = np.asarray(gold, dtype=bool)
    per = []
    for j, label in enumerate(LABELS):
        p, g = decisions[:, j], gold[:, j]
        per.append(EmotionMetrics(label, int((p & g).sum()), int((p & ~g).sum()),
                                  int((~p & g).sum()), int((~p & ~g).sum())))
    subset = float(np.all(decisions == gold, axis=1).mean())
    return EvalResult(jaccard_accuracy_matrix(decisions, gold), subset, len(gold), per)


def evaluate(checkpoints, examples: Sequence[Example], threshold: float | None = None):
    """Score one checkpoint or an ensemble on labelled examples.

    Returns ``(EvalResult, probabilities, decisions)``.
    """
    if isinstance(checkpoints, Checkpoint):
        checkpoints = [checkpoints]
    if any(ex.labels is None for ex in examples):
        raise ValueError("evaluate needs labelled examples")
    threshold = checkpoints[0].config.threshold if threshold is None else threshold
    probs = ensemble_predict(checkpoints, examples)
    decisions = decide(probs, threshold)
    gold = np.stack([ex.labels for ex in examples])
    return score(decisions, gold), probs, decisions
