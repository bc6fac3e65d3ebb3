"""Regenerate the synthetic keyword fixture under tests/fixtures/.

Each emotion owns two cue words; a tweet carries the emotions whose cue
appears in it. Cues are sprinkled among filler words, @mentions, hashtags
and the occasional emoji so the whole preprocessing path is exercised.

    python tools/make_fixture.py
"""
from pathlib import Path

import numpy as np

LABELS = ("anger", "anticipation", "disgust", "fear", "joy", "love",
          "optimism", "pessimism", "sadness", "surprise", "trust")
CUES = {
    "anger": ["furious", "rage"], "anticipation": ["waiting", "soon"],
    "disgust": ["gross", "yuck"], "fear": ["scared", "terrified"],
    "joy": ["joy", "delighted"], "love": ["adore", "darling"],
    "optimism": ["hopeful", "brighter"], "pessimism": ["doomed", "hopeless"],
    "sadness": ["crying", "miserable"], "surprise": ["shocked", "wow"],
    "trust": ["reliable", "faithful"],
}
FILLER = ("the a today my this is it so and we they about really just week "
          "train coffee office phone weather game news morning night city "
          "people thing stuff again still quite zorbly flimzat").split()
OOV = {"zorbly", "flimzat"}  # deliberately missing from the embedding file
DIM = 50
HERE = Path(__file__).resolve().parents[1] / "tests" / "fixtures"


def sentence(rng):
    k = rng.integers(1, 4)
    emos = sorted(rng.choice(len(LABELS), size=k, replace=False))
    words = list(rng.choice(FILLER, size=rng.integers(4, 10)))
    for e in emos:
        cue = CUES[LABELS[e]][rng.integers(2)]
        if rng.random() < 0.25:
            cue = "#" + cue
        words.insert(rng.integers(len(words) + 1), cue)
    if rng.random() < 0.3:
        words.insert(0, "@user" + str(rng.integers(100)))
    if rng.random() < 0.2:
        words.append("☕")  # hot beverage, emotion-neutral
    labels = [1 if i in emos else 0 for i in range(len(LABELS))]
    return " ".join(words), labels


def write_split(name, n, rng):
    with open(HERE / name, "w", encoding="utf-8") as fh:
        fh.write("\t".join(("ID", "Tweet") + LABELS) + "\n")
        for i in range(n):
            text, labels = sentence(rng)
            fh.write("\t".join([f"{name.split('.')[0]}-{i:03d}", text] + list(map(str, labels))) + "\n")


def main():
    HERE.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(20180601)
    write_split("train.tsv", 32, rng)
    write_split("dev.tsv", 32, rng)
    vocab = sorted(set(FILLER) - OOV | {c for cs in CUES.values() for c in cs}
                   | {"hot", "beverage", "!", "?", "."})
    with open(HERE / "embeddings.txt", "w", encoding="utf-8") as fh:
        for w in vocab:
            vec = rng.normal(0.0, 0.5, size=DIM)
            fh.write(w + " " + " ".join(f"{x:.6f}" for x in vec) + "\n")
    # larger held-out pair for the attention ablation
    rng = np.random.default_rng(7)
    write_split("abl_train.tsv", 192, rng)
    write_split("abl_dev.tsv", 64, rng)


if __name__ == "__main__":
    main()
