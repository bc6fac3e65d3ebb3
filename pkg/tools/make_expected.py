"""Record the fixture model's dev accuracy in tests/fixtures/expected.json.

Trains with fixture.cfg at seed 0 through the CLI on the ablation pair, then
evaluates on abl_dev.tsv.
Rerun only when the model or training code changes on purpose.
"""
import json
import re
import sys
import tempfile
from contextlib import redirect_stdout
from io import StringIO
from pathlib import Path

from emoattn.cli import main

FX = Path(__file__).resolve().parent.parent / "tests" / "fixtures"


def run(argv):
    buf = StringIO()
    with redirect_stdout(buf):
        code = main(argv)
    if code:
        sys.exit(f"{argv[0]} failed with exit code {code}")
    return buf.getvalue()


def fixture_accuracy(workdir):
    out = Path(workdir)
    run(["train", "--config", str(FX / "fixture.cfg"), "--train", str(FX / "abl_train.tsv"),
         "--dev", str(FX / "abl_dev.tsv"), "--embeddings", str(FX / "embeddings.txt"),
         "--seed", "0", "--out", str(out), "--no-figures"])
    text = run(["evaluate", "--checkpoint", str(out / "model.ckpt"), "--test", str(FX / "abl_dev.tsv")])
    return float(re.search(r"accuracy=([0-9.]+)", text).group(1))


if __name__ == "__main__":
    with tempfile.TemporaryDirectory() as tmp:
        acc = fixture_accuracy(tmp)
    (FX / "expected.json").write_text(json.dumps({"fixture_dev_accuracy": acc, "seed": 0}, indent=2) + "\n")
    print(f"fixture_dev_accuracy={acc}")
