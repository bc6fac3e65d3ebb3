"""Regenerate src/emoattn/data/emoji_names.tsv from the CLDR short names
shipped with the ``emoji`` package (dev-time only; not a runtime dependency).

    pip install emoji && python tools/build_emoji_table.py
"""
import re
import unicodedata
from pathlib import Path

import emoji

OUT = Path(__file__).resolve().parents[1] / "src" / "emoattn" / "data" / "emoji_names.tsv"


def phrase(cldr_name):
    text = cldr_name.strip(":").replace("_", " ")
    text = unicodedata.normalize("NFKD", text).encode("ascii", "ignore").decode()
    text = re.sub(r"[^a-z0-9 \-]", " ", text.lower())
    return " ".join(text.split())


def main():
    rows = {}
    for seq, info in emoji.EMOJI_DATA.items():
        name = phrase(info["en"])
        # a leading '#' would read as a comment line
        if not name or seq.startswith("#"):
            continue
        rows[seq] = name
    # unqualified spellings (no VS16) are common in tweets
    for seq, name in list(rows.items()):
        bare = seq.replace("️", "")
        if bare and bare not in rows:
            rows[bare] = name
    lines = [
        "# emoji<TAB>name phrase; derived from Unicode CLDR short names",
        f"# generated with emoji=={emoji.__version__}",
    ]
    lines += [f"{seq}\t{rows[seq]}" for seq in sorted(rows)]
    OUT.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {len(rows)} entries to {OUT}")


if __name__ == "__main__":
    main()
