import os

# timing criteria are stated for a single thread
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import numpy as np
import pytest

from topiceval import PHATIC
from topiceval.classifiers import TrainConfig, init_model, train
from topiceval.dialog import Conversation, Turn, Utterance
from topiceval.synth import auto_topic_specs, generate_corpus
from topiceval.text import Vocabulary

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def record():
    def _record(n, ok, detail=""):
        ACCEPTANCE[n] = (bool(ok), detail)
        print(f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}")
    return _record


def make_conversation(pairs, conv_id="c", bot_id="bot", rating=None, errors=None, keywords=None):
    """Conversation from a list of (user_topic, bot_topic) pairs."""
    turns = []
    for i, (u, b) in enumerate(pairs, 1):
        err = errors[i - 1] if errors is not None else None
        ukw, bkw = keywords[i - 1] if keywords is not None else ([], [])
        turns.append(Turn(i, Utterance("user", f"u{i}", u, list(ukw)), Utterance("bot", f"b{i}", b, list(bkw)), err))
    return Conversation(conv_id, bot_id, rating, turns)


@pytest.fixture
def worked_example():
    texts = [
        ("Let's talk about music", "Sure, what's your favorite musician?", "Music", "Music"),
        ("Bob Dylan", "Bob Dylan is an American songwriter, singer, painter, and writer.", "Music", "Music"),
        ("Cool", "Do you want to know more about Bob Dylan?", PHATIC, "Music"),
        ("No, let's talk about politics instead", "Sure, here are the latest updates about Donald Trump", "Politics",
         "Politics"),
    ]
    turns = [Turn(i, Utterance("user", u, ut), Utterance("bot", b, bt)) for i, (u, b, ut, bt) in enumerate(texts, 1)]
    return Conversation("worked_example", "socialbot", 4.0, turns)


@pytest.fixture(scope="session")
def small_corpus():
    specs = auto_topic_specs(4, keywords_per_topic=6, seed=3)
    rows, truth = generate_corpus(specs, 400, seed=3)
    data = [(r["text"], r["topic"]) for r in rows]
    return specs, data[:320], data[320:], truth[320:]


@pytest.fixture(scope="session")
def tiny_models(small_corpus):
    _, tr, dv, _ = small_corpus
    cfg = TrainConfig(epochs=15, hidden=(16,), dim=16, seed=1, batch_size=32, lr=1e-2)
    dan, _ = train("dan", tr, dv, cfg)
    adan, _ = train("adan", tr, dv, cfg)
    return dan, adan


def random_model(kind, seed=0, n_topics=4, vocab_size=30, dim=6, hidden=(5,), labels=None):
    vocab = Vocabulary.from_tokens(["<unk>", *(f"w{i}" for i in range(vocab_size - 1))])
    labels = labels or [f"t{k}" for k in range(n_topics)]
    m = init_model(kind, vocab, labels, hidden=hidden, dim=dim, seed=seed)
    if kind == "adan":
        m.attention[...] = np.random.default_rng(seed).normal(size=m.attention.shape)
    return m
