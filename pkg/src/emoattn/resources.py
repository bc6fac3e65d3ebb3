"""Word vectors, vocabulary and NRC EmoLex features."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from importlib import resources as _res
from typing import Iterable, Sequence

import numpy as np

from .labels import LABELS, NRC_CATEGORIES, NUM_LABELS

log = logging.getLogger(__name__)

OOV_RANGE = 0.05


class ResourceError(ValueError):
    pass


@dataclass
class EmbeddingTable:
    dim: int
    vectors: dict[str, np.ndarray]
    skipped: int = 0

    def __contains__(self, token):
        return token in self.vectors

    def __len__(self):
        return len(self.vectors)


def load_embeddings(path, dim: int, restrict_to: Iterable[str] | None = None) -> EmbeddingTable:
    """Read a GloVe/fastText text file.

    Lines that do not carry exactly ``dim`` float values are skipped and
    counted. A leading fastText ``<count> <dim>`` header is ignored. Passing
    ``restrict_to`` keeps only those tokens, which matters for the 2M-line
    Common Crawl files.
    """
    keep = None if restrict_to is None else set(restrict_to)
    vectors: dict[str, np.ndarray] = {}
    skipped = 0
    with open(path, encoding="utf-8", errors="replace") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if lineno == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
                continue
            if len(parts) != dim + 1:
                skipped += 1
                continue
            token = parts[0]
            if token in vectors or (keep is not None and token not in keep):
                continue
            try:
                vec = np.array(parts[1:], dtype=np.float64)
            except ValueError:
                skipped += 1
                continue
            if not np.all(np.isfinite(vec)):
                skipped += 1
                continue
            vectors[token] = vec
    if skipped:
        log.warning("%s: skipped %d malformed lines", path, skipped)
    if not vectors and keep is None:
        raise ResourceError(f"{path}: no embedding lines parsed (dim={dim})")
    return EmbeddingTable(dim=dim, vectors=vectors, skipped=skipped)


@dataclass
class Vocabulary:
    tokens: list[str]  # index = id; tokens[0] is the pad symbol
    oov_ids: set[int] = field(default_factory=set)

    PAD = "<pad>"
    pad_id = 0

    def __post_init__(self):
        if not self.tokens or self.tokens[0] != self.PAD:
            self.tokens = [self.PAD] + list(self.tokens)
        self.id_of = {t: i for i, t in enumerate(self.tokens)}
        if len(self.id_of) != len(self.tokens):
            raise ResourceError("duplicate tokens in vocabulary")

    def __len__(self):
        return len(self.tokens)

    def encode(self, tokens: Sequence[str]) -> list[int]:
        """Token ids; tokens outside the vocabulary are dropped."""
        ids = []
        for t in tokens:
            i = self.id_of.get(t)
            if i is not None and i != self.pad_id:
                ids.append(i)
        return ids


def build_vocab(corpus: Sequence[Sequence[str]], table: EmbeddingTable, seed: int):
    """Vocabulary over ``corpus`` in first-appearance order plus its frozen
    embedding matrix. Row 0 is zero padding; unknown words are drawn from
    U(-0.05, 0.05) with ``seed``."""
    if not corpus:
        raise ResourceError("cannot build a vocabulary from an empty corpus")
    seen: dict[str, None] = {}
    for sent in corpus:
        for tok in sent:
            seen.setdefault(tok, None)
    words = list(seen)
    rng = np.random.default_rng(seed)
    matrix = np.zeros((len(words) + 1, table.dim))
    oov = set()
    for i, w in enumerate(words, 1):
        vec = table.vectors.get(w)
        if vec is None:
            matrix[i] = rng.uniform(-OOV_RANGE, OOV_RANGE, size=table.dim)
            oov.add(i)
        else:
            matrix[i] = vec
    return Vocabulary(words, oov), matrix


@dataclass
class EmotionLexicon:
    """word -> 10 NRC flags in ``NRC_CATEGORIES`` order."""
    assoc: dict[str, np.ndarray]

    def __len__(self):
        return len(self.assoc)


def load_emolex(path) -> EmotionLexicon:
    index = {c: i for i, c in enumerate(NRC_CATEGORIES)}
    assoc: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ResourceError(f"{path}:{lineno}: expected word<TAB>category<TAB>flag")
            word, cat, flag = parts
            if cat not in index:
                raise ResourceError(f"{path}:{lineno}: unknown NRC category {cat!r}")
            if flag not in ("0", "1"):
                raise ResourceError(f"{path}:{lineno}: flag must be 0 or 1, got {flag!r}")
            row = assoc.setdefault(word.lower(), np.zeros(len(NRC_CATEGORIES), dtype=np.int64))
            row[index[cat]] = int(flag)
    return EmotionLexicon(assoc)


def load_label_map(path=None) -> tuple[str, ...]:
    """NRC category used as the proxy for each task label, in ``LABELS`` order."""
    if path is None:
        text = (_res.files("emoattn") / "data" / "label_map.tsv").read_text(encoding="utf-8")
        src = "label_map.tsv"
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
        src = str(path)
    mapping = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        try:
            label, cat = line.split("\t")
        except ValueError:
            raise ResourceError(f"{src}:{lineno}: expected task_label<TAB>nrc_category") from None
        if label not in LABELS:
            raise ResourceError(f"{src}:{lineno}: unknown task label {label!r}")
        if cat not in NRC_CATEGORIES:
            raise ResourceError(f"{src}:{lineno}: unknown NRC category {cat!r}")
        mapping[label] = cat
    missing = [l for l in LABELS if l not in mapping]
    if missing:
        raise ResourceError(f"{src}: no mapping for {', '.join(missing)}")
    return tuple(mapping[l] for l in LABELS)


DEFAULT_LABEL_MAP = load_label_map()


def task_flags(lex: EmotionLexicon, label_map: Sequence[str] = DEFAULT_LABEL_MAP) -> dict[str, np.ndarray]:
    """Re-key the lexicon onto the 11 task labels."""
    cols = [NRC_CATEGORIES.index(c) for c in label_map]
    return {w: row[cols] for w, row in lex.assoc.items()}


def sentence_counts(tokens: Sequence[str], lex, label_map: Sequence[str] = DEFAULT_LABEL_MAP) -> np.ndarray:
    """Per-label count of lexicon hits over ``tokens`` (raw, unnormalised).

    ``lex`` is an EmotionLexicon or a mapping already produced by
    :func:`task_flags`.
    """
    flags = task_flags(lex, label_map) if isinstance(lex, EmotionLexicon) else lex
    counts = np.zeros(NUM_LABELS, dtype=np.int64)
    for tok in tokens:
        row = flags.get(tok)
        if row is not None:
            counts += row
    return counts


def binarize(counts) -> np.ndarray:
    return (np.asarray(counts) > 0).astype(np.int64)
