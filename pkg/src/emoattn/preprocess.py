"""Tweet preprocessing: emoji-to-meaning, mention/hashtag cleaning, tokenizing.

The tokenizer rule set, applied in order:

1. lowercase the text and delete zero-width joiners, variation selectors and
   other invisible format characters;
2. scan left to right, taking the first alternative that matches:
   URL (``http://``, ``https://`` or ``www.`` followed by non-space),
   emoticon (``:)``, ``:-(``, ``;p``, ``:'(``, ``(:``, ``<3`` ...),
   number with separators (``1,000.5``),
   word (``\\w+`` joined by internal apostrophes or hyphens, so ``don't`` and
   ``well-known`` stay whole), any other single non-space character;
3. bare ``@`` and ``#`` characters are discarded;
4. inside word tokens, runs of 4+ identical letters are cut to 3.
"""
from __future__ import annotations

import re
from functools import lru_cache
from importlib import resources
from pathlib import Path

_INVISIBLE = dict.fromkeys(map(ord, "\u200b\u200c\u200d\u2060\ufe0e\ufe0f\ufeff"))

_EYES = r"[:;=]"
_NOSE = r"[\-']?"
_MOUTH = r"(?:[)\](\[|\\}{@*]|[dp/](?!\w))"
_EMOTICON = (
    rf"{_EYES}{_NOSE}{_MOUTH}"
    rf"|[)\](\[]{_NOSE}{_EYES}(?![\w)\](\[])"
    r"|</?3(?!\d)"
)
_URL = r"(?:https?://|www\.)\S+"
_NUMBER = r"\d+(?:[.,]\d+)+"
_WORD = r"\w+(?:['’\-]\w+)*"

TOKEN_RE = re.compile(
    rf"(?P<url>{_URL})|(?P<emo>{_EMOTICON})|(?P<num>{_NUMBER})|(?P<word>{_WORD})|(?P<other>\S)"
)
ELONGATED_RE = re.compile(r"([^\W\d_])\1{3,}")
_DROPPED = {"@", "#"}


class EmojiTable:
    """Maps emoji codepoint sequences to lowercase name phrases.

    Lookup is greedy longest-match, so ``👍🏽`` resolves to the toned
    entry rather than thumbs-up followed by a skin-tone swatch.
    """

    def __init__(self, entries: dict[str, str]):
        for key, name in entries.items():
            if not key:
                raise ValueError("emoji table key must be non-empty")
            if not name or not re.fullmatch(r"[a-z0-9 \-]+", name):
                raise ValueError(f"bad name phrase for {key!r}: {name!r}")
        self.entries = dict(entries)
        self.max_len = max((len(k) for k in self.entries), default=0)
        self._singles = frozenset(k for k in self.entries if len(k) == 1)
        self._starts = frozenset(k[0] for k in self.entries)

    def __len__(self):
        return len(self.entries)

    def __contains__(self, seq):
        return seq in self.entries

    def match(self, text: str, start: int):
        """Longest table key starting at ``start``; (key, name) or None."""
        if text[start] not in self._starts:
            return None
        for size in range(min(self.max_len, len(text) - start), 0, -1):
            key = text[start:start + size]
            name = self.entries.get(key)
            if name is not None:
                return key, name
        return None

    def contains_single(self, ch: str) -> bool:
        return ch in self._singles

    @classmethod
    def from_file(cls, path) -> "EmojiTable":
        entries = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line or line.startswith("#"):
                    continue
                try:
                    key, name = line.split("\t")
                except ValueError:
                    raise ValueError(f"{path}:{lineno}: expected '<emoji>\\t<name>'") from None
                entries[key] = name
        return cls(entries)


@lru_cache(maxsize=1)
def default_emoji_table() -> EmojiTable:
    """The bundled CLDR-derived table."""
    ref = resources.files("emoattn") / "data" / "emoji_names.tsv"
    with resources.as_file(ref) as path:
        return EmojiTable.from_file(Path(path))


def emoji_to_meaning(text: str, table: EmojiTable) -> str:
    out: list[str] = []
    i = 0
    n = len(text)
    while i < n:
        hit = table.match(text, i)
        if hit is None:
            out.append(text[i])
            i += 1
            continue
        key, name = hit
        if out and not out[-1][-1:].isspace():
            out.append(" ")
        out.append(name)
        i += len(key)
        if i < n and not text[i].isspace():
            out.append(" ")
    return "".join(out)


def clean(text: str) -> str:
    """Drop @mentions; strip the leading '#' from hashtags but keep the topic.

    Whitespace between surviving tokens is normalised to one space.
    """
    kept = []
    for tok in text.split():
        if tok.startswith("@"):
            continue
        if tok.startswith("#"):
            tok = tok[1:]
        if tok:
            kept.append(tok)
    return " ".join(kept)


def _shorten(word: str) -> str:
    return ELONGATED_RE.sub(r"\1\1\1", word)


def tokenize(text: str) -> list[str]:
    text = text.lower().translate(_INVISIBLE)
    tokens = []
    for m in TOKEN_RE.finditer(text):
        tok = m.group()
        if m.lastgroup == "word":
            tok = _shorten(tok)
        elif tok in _DROPPED:
            continue
        tokens.append(tok)
    return tokens


def preprocess_pipeline(text: str, table: EmojiTable) -> list[str]:
    return tokenize(clean(emoji_to_meaning(text, table)))
