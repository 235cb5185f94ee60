"""End-to-end acceptance criteria. Each test records a PASS/FAIL line shown in the terminal summary."""
import json
import time

import numpy as np
import pytest

from topiceval import PHATIC
from topiceval.classifiers import (
    ModelLoadError,
    TopicPrediction,
    TrainConfig,
    ensemble_predict,
    load_model,
    predict,
    save_model,
    train,
)
from topiceval.cli import main
from topiceval.dialog import segment
from topiceval.metrics import (
    dialog_depth,
    keyword_metrics,
    rer,
    spearman,
    system_depth,
    topic_histogram,
)
from topiceval.synth import auto_topic_specs, generate_corpus

from conftest import make_conversation, random_model
from oracles import brute_segments, brute_spearman

TOPICS = [f"t{k}" for k in range(5)] + [PHATIC]


def test_gradient_correctness(record, capsys):
    start = time.perf_counter()
    codes = {(kind, seed): main(["gradcheck", "--model", kind, "--seed", str(seed), "--eps", "1e-5"])
             for kind in ("dan", "adan") for seed in range(5)}
    elapsed = time.perf_counter() - start
    out = capsys.readouterr().out
    errs = [float(line.split("max relative error ")[1].split()[0]) for line in out.splitlines()]
    ok = all(c == 0 for c in codes.values()) and len(errs) == 10 and max(errs) <= 1e-4 and elapsed < 10
    record(1, ok, f"max rel err {max(errs):.2e} over 10 runs, {elapsed:.1f}s")
    assert ok


@pytest.fixture(scope="module")
def synthetic8():
    specs = auto_topic_specs(8, seed=0)
    rows, truth = generate_corpus(specs, 2400, seed=0)
    data = [(r["text"], r["topic"]) for r in rows]
    return specs, data[:2000], data[2000:], truth[2000:]


@pytest.fixture(scope="module")
def trained8(synthetic8):
    _, tr, dv, _ = synthetic8
    cfg = TrainConfig(epochs=30, seed=0)
    out = {}
    for kind in ("dan", "adan"):
        start = time.perf_counter()
        model, hist = train(kind, tr, dv, cfg)
        out[kind] = (model, hist, time.perf_counter() - start)
    return out


def test_synthetic_classification(trained8, record):
    (_, dan_h, dan_t), (_, adan_h, adan_t) = trained8["dan"], trained8["adan"]
    dan_acc = max(h.dev_accuracy for h in dan_h)
    adan_acc = max(h.dev_accuracy for h in adan_h)
    ok = dan_acc >= 0.99 and adan_acc >= 0.95 and dan_t < 120 and adan_t < 120 and len(dan_h) <= 30
    record(2, ok, f"DAN {dan_acc:.4f} ({dan_t:.1f}s), ADAN {adan_acc:.4f} ({adan_t:.1f}s)")
    assert ok


def test_keyword_recovery(trained8, synthetic8, record):
    model = trained8["adan"][0]
    _, _, dv, truth = synthetic8
    hits = 0
    for (text, topic), t in zip(dv, truth):
        # keywords for the predicted topic, as the classify pipeline uses them
        kws = {w for w, _ in predict(model, text, n_keywords=2).keywords}
        hits += bool(kws & set(t["keywords"]))
    rate = hits / len(dv)
    record(3, rate >= 0.9, f"{rate:.4f} of {len(dv)} dev utterances")
    assert rate >= 0.9


def test_segmentation_oracle(record, worked_example):
    rng = np.random.default_rng(0)
    mismatches = 0
    for _ in range(10_000):
        n = int(rng.integers(0, 41))
        pairs = [(TOPICS[rng.integers(6)], TOPICS[rng.integers(6)]) for _ in range(n)]
        seg = segment(make_conversation(pairs))
        runs, l_c = brute_segments(pairs)
        mismatches += [(s.topic, s.turn_indices) for s in seg.subconvs] != runs or seg.l_c != l_c
    seg = segment(worked_example)
    worked = ([s.l_s for s in seg.subconvs] == [3] and seg.l_c == 4 and dialog_depth(seg) == 3.0
              and len({s.topic for s in seg.subconvs}) == 1)
    ok = mismatches == 0 and worked
    record(4, ok, f"{mismatches} mismatches in 10000; worked example {'ok' if worked else 'wrong'}")
    assert ok


def test_metric_identities(record):
    rng = np.random.default_rng(1)
    worst_depth = worst_freq = 0.0
    for _ in range(1000):
        segs = []
        for _ in range(int(rng.integers(1, 6))):
            pairs = [(TOPICS[rng.integers(6)], TOPICS[rng.integers(6)]) for _ in range(int(rng.integers(0, 30)))]
            segs.append(segment(make_conversation(pairs)))
        counted = [(len(s.subconvs), dialog_depth(s)) for s in segs if s.subconvs]
        pooled = system_depth(segs)
        if counted:
            weighted = sum(n * d for n, d in counted) / sum(n for n, _ in counted)
            worst_depth = max(worst_depth, abs(pooled - weighted))
            freqs = topic_histogram(segs, TOPICS).freqs
            worst_freq = max(worst_freq, abs(sum(freqs.values()) - 1.0))
        else:
            assert pooled is None
    a = segment(make_conversation([("t0", "t0")] * 2))
    b = segment(make_conversation([("t1", "t1")] * 3 + [("t2", "t2")] * 5))
    exact = system_depth([a, b]) == 10 / 3
    ok = worst_depth <= 1e-12 and worst_freq <= 1e-12 and exact
    record(5, ok, f"depth err {worst_depth:.1e}, freq err {worst_freq:.1e}, pooled 10/3 {'exact' if exact else 'off'}")
    assert ok


def test_spearman_correctness(record):
    rng = np.random.default_rng(2)
    worst, checked = 0.0, 0
    for _ in range(1000):
        n = int(rng.integers(2, 30))
        x = rng.integers(0, 6, n).astype(float)  # small range forces ties
        y = rng.integers(0, 6, n).astype(float)
        got, want = spearman(x, y), brute_spearman(list(x), list(y))
        if (got is None) != (want is None):
            worst = float("inf")
        elif got is not None:
            worst = max(worst, abs(got - want))
            checked += 1
    invariant = True
    for _ in range(200):
        x, y = rng.normal(size=12), rng.normal(size=12)
        base = spearman(x, y)
        invariant &= spearman(np.exp(x), 3 * y + 7) == base and spearman(x ** 3, np.arctan(y)) == base
    worked = abs(spearman([1, 2, 2, 4], [10, 20, 30, 40]) - 0.9487) <= 1e-4
    ok = worst <= 1e-12 and invariant and worked
    record(6, ok, f"max |diff| {worst:.1e} over {checked} pairs, invariance {invariant}, ties example {worked}")
    assert ok


def test_end_to_end_validation(tmp_path, record, capsys):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"n_topics": 8, "convs_per_bot": 200}))
    depth_rhos, breadth_rhos = [], []
    for seed in range(10):
        d = tmp_path / str(seed)
        d.mkdir()
        assert main(["synth", "dialogs", "--spec", str(spec), "--seed", str(seed), "--out", str(d / "raw.jsonl"),
                     "--annotated-out", str(d / "ann.jsonl")]) == 0
        assert main(["metrics", "--classified", str(d / "ann.jsonl"), "--out-tsv", str(d / "m.tsv")]) == 0
        capsys.readouterr()
        assert main(["correlate", "--metrics-tsv", str(d / "m.tsv")]) == 0
        lines = capsys.readouterr().out.splitlines()
        rows = {l.split("\t")[0]: l.split("\t") for l in lines[1:]}
        depth_rhos.append(float(rows["depth"][1]))
        breadth_rhos.append(float(rows["breadth_avg"][1]))
    ok = all(r == 1.0 for r in depth_rhos) and all(abs(r) < 0.5 for r in breadth_rhos)
    record(7, ok, f"rho(depth) {sorted(set(depth_rhos))}, max |rho(breadth)| {max(map(abs, breadth_rhos)):.3f}")
    assert ok


def test_ensemble_rule(record):
    rng = np.random.default_rng(3)
    violations = ties = 0
    levels = np.linspace(0, 1, 6)
    for _ in range(1000):
        ea, eb = (float(rng.choice(levels)), float(rng.choice(levels))) if rng.random() < 0.5 else tuple(rng.random(2))
        a = TopicPrediction(np.array([0.5, 0.5]), "x", ea, None, "a")
        b = TopicPrediction(np.array([0.5, 0.5]), "y", eb, None, "b")
        chosen = ensemble_predict(a, b)
        other = eb if chosen.source == "a" else ea
        violations += chosen.normalized_entropy > other
        if ea == eb:
            ties += 1
            violations += chosen.source != "a"
    ok = violations == 0 and ties > 0
    record(8, ok, f"{violations} violations in 1000 pairs ({ties} ties)")
    assert ok


def corruptions(doc):
    yield "truncated", json.dumps(doc)[:-40]
    yield "missing field", json.dumps({k: v for k, v in doc.items() if k != "output"})
    yield "wrong type", json.dumps({**doc, "model_type": "cnn"})
    yield "bad version", json.dumps({**doc, "format_version": -1})
    bad = json.loads(json.dumps(doc))
    bad["output"]["W"][0] = bad["output"]["W"][0][:-1]
    yield "ragged matrix", json.dumps(bad)
    bad = json.loads(json.dumps(doc))
    bad["labels"] = bad["labels"][:-1]
    yield "label count", json.dumps(bad)
    yield "non-finite", json.dumps(doc).replace("[[", "[[NaN, ", 1)
    yield "not an object", "[]"


def test_serialization_round_trip(tmp_path, record):
    rng = np.random.default_rng(4)
    identical, rejected, attempts = True, 0, 0
    for kind in ("dan", "adan"):
        model = random_model(kind, seed=5, vocab_size=40, dim=7, hidden=(6, 5))
        path = tmp_path / f"{kind}.json"
        save_model(model, path)
        loaded = load_model(path, expect_type=kind)
        for _ in range(100):
            words = [f"w{i}" for i in rng.integers(0, 45, int(rng.integers(1, 12)))]
            p, q = predict(model, " ".join(words)), predict(loaded, " ".join(words))
            identical &= p.probs.tobytes() == q.probs.tobytes() and p.keywords == q.keywords
        doc = json.loads(path.read_text())
        for name, text in corruptions(doc):
            attempts += 1
            bad = tmp_path / f"{kind}-bad.json"
            bad.write_text(text)
            try:
                load_model(bad)
            except ModelLoadError:
                rejected += 1
    ok = identical and rejected == attempts
    record(9, ok, f"bitwise identical {identical}, rejected {rejected}/{attempts} corrupted files")
    assert ok


def test_rer_and_keyword_arithmetic(record):
    conv = make_conversation([("t0", "t0")] * 3, keywords=[([], ["x"]), ([], ["x"]), ([], ["y"])])
    ks = keyword_metrics([conv], "bot")
    errors = [True] * 3 + [False] * 7
    rate, n = rer([make_conversation([("t0", "t0")] * 10, errors=errors)])
    partial = make_conversation([("t0", "t0")] * 4, errors=[True, None, False, None])
    rate2, n2 = rer([partial])
    ok = (ks.c_fine == 2 and ks.freq == 1.5 and ks.total == 3 and rate == 0.3 and n == 10
          and rate2 == 0.5 and n2 == 2)
    record(10, ok, f"C_fine {ks.c_fine}, F {ks.freq}, RER {rate}, RER(annotated only) {rate2}")
    assert ok
