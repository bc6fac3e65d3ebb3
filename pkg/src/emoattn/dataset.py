"""Task-format TSV files: ``ID<TAB>Tweet<TAB>`` plus 11 binary label columns."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .labels import LABELS, NUM_LABELS


class DataError(ValueError):
    pass


class UnlabeledDataError(DataError):
    pass


@dataclass
class Example:
    id: str
    text: str
    tokens: list[str] | None = None
    labels: np.ndarray | None = None  # [11] int, LABELS order
    lex: np.ndarray | None = None     # [11] raw lexicon counts
    token_ids: list[int] | None = None

    def label_set(self) -> set[str]:
        return {l for l, y in zip(LABELS, self.labels) if y}


def _label_order(header: list[str], path, lineno) -> list[int]:
    names = [h.strip().lower() for h in header[2:]]
    if sorted(names) != sorted(LABELS):
        raise DataError(f"{path}:{lineno}: header must name the 11 emotions {', '.join(LABELS)}")
    return [names.index(l) for l in LABELS]


def read_dataset(path, require_labels: bool = True) -> list[Example]:
    """Parse a task TSV. Unlabeled rows (``NONE`` cells or a two-column file)
    are an error when ``require_labels``."""
    examples: list[Example] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8", newline="") as fh:
        lines = fh.read().split("\n")
    if not lines or not lines[0].strip():
        raise DataError(f"{path}: missing header line")
    header = lines[0].rstrip("\r").split("\t")
    if len(header) == 2:
        order = None
    elif len(header) == 2 + NUM_LABELS:
        order = _label_order(header, path, 1)
    else:
        raise DataError(f"{path}:1: expected {2 + NUM_LABELS} columns in header, got {len(header)}")
    if order is None and require_labels:
        raise UnlabeledDataError(f"{path}: file has no label columns; use `predict` for unlabeled text")
    width = len(header)
    for lineno, line in enumerate(lines[1:], 2):
        line = line.rstrip("\r")
        if not line:
            continue
        cells = line.split("\t")
        if len(cells) != width:
            raise DataError(f"{path}:{lineno}: expected {width} columns, got {len(cells)}")
        ex_id, text = cells[0], cells[1]
        if ex_id in seen:
            raise DataError(f"{path}:{lineno}: duplicate ID {ex_id!r}")
        seen.add(ex_id)
        labels = None
        if order is not None:
            raw = cells[2:]
            if all(c.strip().upper() == "NONE" for c in raw):
                if require_labels:
                    raise UnlabeledDataError(
                        f"{path}:{lineno}: row has no labels; use `predict` for unlabeled text")
            else:
                if any(c not in ("0", "1") for c in raw):
                    raise DataError(f"{path}:{lineno}: label cells must be 0 or 1")
                labels = np.array([int(raw[i]) for i in order], dtype=np.int64)
        examples.append(Example(ex_id, text, labels=labels))
    return examples


def read_text_lines(path) -> list[Example]:
    """Unlabeled input for prediction: a task TSV (labels ignored) or one
    tweet per line."""
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
    if first.startswith("ID\t"):
        return [Example(e.id, e.text) for e in read_dataset(path, require_labels=False)]
    out = []
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if line.strip():
                out.append(Example(f"line-{i}", line))
    return out


def write_dataset(path, rows: Sequence[tuple[str, str, Sequence[int]]]) -> None:
    """Write ``(id, text, 11 labels)`` rows with the canonical header.

    ``labels=None`` writes ``NONE`` cells, as in the official unlabeled split.
    """
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\t".join(("ID", "Tweet") + LABELS) + "\n")
        for ex_id, text, labels in rows:
            if any(c in text for c in "\t\n\r"):
                text = " ".join(text.split())
            cells = ["NONE"] * len(LABELS) if labels is None else [str(int(v)) for v in labels]
            fh.write("\t".join([ex_id, text] + cells) + "\n")
