from pathlib import Path

import numpy as np
import pytest

from emoattn.dataset import read_dataset
from emoattn.preprocess import default_emoji_table, preprocess_pipeline
from emoattn.resources import build_vocab, load_embeddings

FIXTURES = Path(__file__).parent / "fixtures"
EMBED_DIM = 50

# criterion id -> (passed, detail); filled by test_acceptance, printed at exit
ACCEPTANCE: dict[str, tuple[str, str]] = {}


def numeric_grad(f, x, h=1e-6):
    """Central differences of scalar ``f()`` w.r.t. array ``x`` (perturbed in place)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = f()
        x[i] = old - h
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def max_rel_err(analytic, numeric):
    """Largest absolute discrepancy relative to the larger gradient's max-norm."""
    analytic, numeric = np.asarray(analytic), np.asarray(numeric)
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0))
    if scale == 0.0:
        return 0.0
    return float(np.abs(analytic - numeric).max() / scale)


@pytest.fixture(scope="session")
def emoji_table():
    return default_emoji_table()


def load_split(name):
    table = default_emoji_table()
    examples = read_dataset(FIXTURES / name)
    for ex in examples:
        ex.tokens = preprocess_pipeline(ex.text, table)
    return examples


@pytest.fixture(scope="session")
def fixture_embeddings():
    return load_embeddings(FIXTURES / "embeddings.txt", EMBED_DIM)


def fixture_vocab(*splits, seed=0):
    emb = load_embeddings(FIXTURES / "embeddings.txt", EMBED_DIM)
    return build_vocab([ex.tokens for s in splits for ex in s], emb, seed)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        status, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{status:<4} criterion {key}: {detail}")
