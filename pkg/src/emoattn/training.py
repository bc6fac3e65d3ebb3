"""Mini-batch training with Adam, per-epoch lr decay and early stopping,
plus pseudo-labelling and fine-tuning for the synthetic-data variant."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields
from typing import Sequence, TextIO

import numpy as np

from . import model as M
from .checkpoint import Checkpoint
from .dataset import Example
from .labels import NUM_LABELS
from .resources import Vocabulary, sentence_counts
from .tensor_core import NonFiniteError

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr: float = 0.001
    decay_rate: float = 0.95
    batch_size: int = 32
    max_epochs: int = 30
    patience: int = 5
    clip_norm: float = 5.0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    finetune_lr_factor: float = 0.1
    finetune_epochs: int = 5

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.max_epochs < 0 or self.patience < 1:
            raise ValueError("max_epochs must be >= 0 and patience >= 1")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


class TrainingDiverged(FloatingPointError):
    def __init__(self, msg, last_good: Checkpoint | None = None):
        super().__init__(msg)
        self.last_good = last_good


@dataclass
class Batch:
    token_ids: np.ndarray  # [B, n] int
    mask: np.ndarray       # [B, n] bool
    labels: np.ndarray | None  # [B, 11]
    lex: np.ndarray | None     # [B, 11]
    ids: list[str] = field(default_factory=list)


def encode_examples(examples: Sequence[Example], vocab: Vocabulary, lexicon=None) -> None:
    """Fill ``token_ids`` (and ``lex`` when a task-keyed lexicon is given)."""
    for ex in examples:
        ex.token_ids = vocab.encode(ex.tokens or [])
        if lexicon is not None:
            ex.lex = sentence_counts(ex.tokens or [], lexicon)


def collate(examples: Sequence[Example], min_width: int = 1) -> Batch:
    """Right-pad to the longest sentence (at least ``min_width``).

    A sentence with no known tokens keeps a single unmasked pad position so
    attention always has a key to attend to.
    """
    width = max([min_width] + [len(ex.token_ids) for ex in examples])
    ids = np.zeros((len(examples), width), dtype=np.int64)
    mask = np.zeros((len(examples), width), dtype=bool)
    for i, ex in enumerate(examples):
        n = len(ex.token_ids)
        ids[i, :n] = ex.token_ids
        mask[i, :max(n, 1)] = True
    labels = None
    if all(ex.labels is not None for ex in examples):
        labels = np.stack([ex.labels for ex in examples]) if examples else np.zeros((0, NUM_LABELS))
    lex = None
    if examples and all(ex.lex is not None for ex in examples):
        lex = np.stack([ex.lex for ex in examples]).astype(np.float64)
    return Batch(ids, mask, labels, lex, [ex.id for ex in examples])


def make_batches(examples: Sequence[Example], batch_size: int, seed: int, epoch: int = 0,
                 min_width: int = 1, shuffle: bool = True) -> list[Batch]:
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    order = np.arange(len(examples))
    if shuffle:
        order = np.random.default_rng((seed, epoch)).permutation(len(examples))
    return [collate([examples[i] for i in order[s:s + batch_size]], min_width)
            for s in range(0, len(examples), batch_size)]


# -- optimiser -----------------------------------------------------------------

@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    base_lr: float = 0.001
    decay_rate: float = 1.0

    @classmethod
    def for_params(cls, params, names, tc: TrainConfig, base_lr=None):
        return cls({k: np.zeros_like(params[k]) for k in names},
                   {k: np.zeros_like(params[k]) for k in names},
                   0, tc.beta1, tc.beta2, tc.adam_eps,
                   tc.lr if base_lr is None else base_lr, tc.decay_rate)

    def lr_at(self, epoch: int) -> float:
        return self.base_lr * self.decay_rate ** epoch


def adam_step(params: dict, grads: dict, state: AdamState, epoch: int = 0) -> None:
    """Bias-corrected Adam update, in place on ``params`` and ``state``."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient for {name}")
    state.t += 1
    lr = state.lr_at(epoch)
    c1 = 1.0 - state.beta1 ** state.t
    c2 = 1.0 - state.beta2 ** state.t
    for name, g in grads.items():
        m = state.m[name] = state.beta1 * state.m[name] + (1.0 - state.beta1) * g
        v = state.v[name] = state.beta2 * state.v[name] + (1.0 - state.beta2) * g * g
        params[name] = params[name] - lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def clip_global_norm(grads: dict, max_norm: float) -> float:
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if max_norm and norm > max_norm:
        scale = max_norm / norm
        for k in grads:
            grads[k] = grads[k] * scale
    return norm


# -- loop ----------------------------------------------------------------------

@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_acc: float
    lr: float


@dataclass
class TrainReport:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = -1
    best_val_acc: float = float("nan")
    stopped_early: bool = False
    wall_time: float = field(default=0.0, compare=False)

    def csv_lines(self) -> list[str]:
        rows = ["epoch,train_loss,val_acc,lr"]
        rows += [f"{r.epoch},{r.train_loss:.10g},{r.val_acc:.10g},{r.lr:.10g}" for r in self.epochs]
        return rows


def _run(ckpt: Checkpoint, train_set, dev_set, tc: TrainConfig, seed: int, epochs: int,
         base_lr: float, log_file: TextIO | None) -> tuple[Checkpoint, TrainReport]:
    from .evaluation import member_proba, decide, jaccard_accuracy_matrix

    config, params = ckpt.config, ckpt.params
    names = M.trainable(params)
    state = AdamState.for_params(params, names, tc, base_lr)
    drop_rng = np.random.default_rng((seed, 1_000_003))
    dev_gold = np.stack([ex.labels for ex in dev_set]) if dev_set else None

    report = TrainReport()
    best = ckpt.copy()
    started = time.perf_counter()
    if log_file is not None:
        log_file.write(report.csv_lines()[0] + "\n")
    for epoch in range(epochs):
        losses, sizes = [], []
        for batch in make_batches(train_set, tc.batch_size, seed, epoch, config.max_width):
            try:
                with np.errstate(over="ignore", invalid="ignore"):
                    loss, grads, _ = M.loss_and_grads(batch.token_ids, batch.mask, batch.labels,
                                                      params, config, batch.lex, drop_rng, training=True)
            except NonFiniteError as exc:
                raise TrainingDiverged(f"epoch {epoch}: {exc}", best) from exc
            if not math.isfinite(loss):
                raise TrainingDiverged(f"loss became {loss} in epoch {epoch}", best)
            clip_global_norm(grads, tc.clip_norm)
            try:
                adam_step(params, grads, state, epoch)
            except NonFiniteError as exc:
                raise TrainingDiverged(str(exc), best) from exc
            losses.append(loss)
            sizes.append(len(batch.ids))
        train_loss = float(np.average(losses, weights=sizes)) if losses else float("nan")
        if dev_set:
            probs = member_proba(ckpt, dev_set)
            val_acc = jaccard_accuracy_matrix(decide(probs, config.threshold), dev_gold)
        else:
            val_acc = float("nan")
        rec = EpochRecord(epoch, train_loss, val_acc, state.lr_at(epoch))
        report.epochs.append(rec)
        if log_file is not None:
            log_file.write(report.csv_lines()[-1] + "\n")
            log_file.flush()
        log.info("epoch %d loss %.4f val_acc %.4f", epoch, train_loss, val_acc)
        if not dev_set or report.best_epoch < 0 or val_acc > report.best_val_acc:
            report.best_epoch, report.best_val_acc = epoch, val_acc
            best = ckpt.copy()
        elif epoch - report.best_epoch >= tc.patience:
            report.stopped_early = True
            break
    report.wall_time = time.perf_counter() - started
    return best, report


def train(config: M.ModelConfig, train_set: Sequence[Example], dev_set: Sequence[Example],
          vocab: Vocabulary, vocab_matrix, seed: int, train_config: TrainConfig | None = None,
          lexicon=None, label_map=None, log_file: TextIO | None = None):
    """Train from scratch; returns the best-validation checkpoint and a report.

    ``train_set``/``dev_set`` must already carry ``tokens``. ``lexicon`` is a
    task-keyed mapping (see ``resources.task_flags``) and is stored in the
    checkpoint so evaluation can recompute the lexicon features.
    """
    tc = train_config or TrainConfig()
    if not train_set or not dev_set:
        raise ValueError("train and validation sets must be non-empty")
    if (config.use_nrc1 or config.use_nrc2) and lexicon is None:
        raise ValueError("nrc variants need a lexicon")
    encode_examples(train_set, vocab, lexicon)
    encode_examples(dev_set, vocab, lexicon)
    params = M.init_params(config, vocab_matrix, seed)
    ckpt = Checkpoint(config, vocab, params, seed, tc.to_dict(), lexicon, label_map)
    return _run(ckpt, list(train_set), list(dev_set), tc, seed, tc.max_epochs, tc.lr, log_file)


def pseudo_label(checkpoint: Checkpoint, unlabeled: Sequence[Sequence[str]],
                 threshold: float | None = None, prefix: str = "synth") -> list[Example]:
    """Label token sequences with the model's own decisions; sentences with no
    predicted emotion are dropped."""
    from .evaluation import decide, member_proba

    if not unlabeled:
        return []
    threshold = checkpoint.config.threshold if threshold is None else threshold
    examples = [Example(f"{prefix}-{i}", " ".join(toks), tokens=list(toks))
                for i, toks in enumerate(unlabeled)]
    decisions = decide(member_proba(checkpoint, examples), threshold)
    kept = []
    for ex, row in zip(examples, decisions):
        if row.any():
            ex.labels = row.astype(np.int64)
            kept.append(ex)
    return kept


def fine_tune(checkpoint: Checkpoint, synth: Sequence[Example], train_config: TrainConfig | None = None,
              dev_set: Sequence[Example] | None = None, epochs: int | None = None,
              seed: int | None = None, log_file: TextIO | None = None):
    """Continue training on synthetic data at ``finetune_lr_factor`` times the
    base lr. Returns ``(checkpoint, report)``; the report may show a drop in
    validation accuracy, which is recorded, not prevented."""
    tc = train_config or TrainConfig.from_dict(checkpoint.train_config)
    epochs = tc.finetune_epochs if epochs is None else epochs
    if not synth:
        raise ValueError("fine_tune needs at least one synthetic example")
    ckpt = checkpoint.copy()
    encode_examples(synth, ckpt.vocab, ckpt.lexicon)
    dev = list(dev_set or [])
    encode_examples(dev, ckpt.vocab, ckpt.lexicon)
    seed = ckpt.seed if seed is None else seed
    if epochs == 0:
        return ckpt, TrainReport()
    return _run(ckpt, list(synth), dev, tc, seed, epochs, tc.lr * tc.finetune_lr_factor, log_file)
