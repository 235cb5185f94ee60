"""DAN and attentional DAN (ADAN) topic classifiers.

Both models treat an utterance as a bag of token ids. DAN averages the
embeddings; ADAN keeps a K x |V| topic-word saliency table, turns the
saliencies of the utterance's words into per-topic attention weights and
builds one weighted representation per topic. Gradients are derived by hand.
"""
from __future__ import annotations

import json
import logging
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import ClassVar, Mapping, Sequence

import numpy as np

from . import PHATIC
from .netcore import (
    PROB_FLOOR,
    AdamState,
    DenseLayer,
    adam_step,
    finite_diff_gradcheck,
    normalized_entropy,
    relu,
    softmax,
)
from .text import EmbeddingTable, Vocabulary, lookup, random_embeddings, tokenize, build_vocab

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
ATTENTION_INIT = 0.01


class ClassificationError(ValueError):
    pass


class EmptyUtteranceError(ClassificationError):
    def __init__(self):
        super().__init__("empty utterance")


class DataError(ValueError):
    pass


class TransferError(ValueError):
    pass


class ModelLoadError(ValueError):
    pass


class LabelMapError(KeyError):
    def __str__(self):
        return str(self.args[0])


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 64
    lr: float = 1e-3
    seed: int = 0
    word_dropout: float = 0.0
    fine_tune_embeddings: bool = True
    downsample: tuple[str, float] | None = None
    patience: int = 5
    hidden: tuple[int, ...] = (500,)
    dim: int = 300
    min_count: int = 1
    length_norm: bool = True  # ADAN only: keep the extra 1/L factor

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        for name in ("batch_size", "patience", "dim", "min_count"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if any(h < 1 for h in self.hidden):
            raise ValueError("hidden sizes must be positive")
        if not 0.0 <= self.word_dropout <= 1.0:
            raise ValueError("word_dropout must be in [0, 1]")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.downsample is not None:
            label, keep = self.downsample
            if not 0.0 <= float(keep) <= 1.0:
                raise ValueError("downsample keep-probability must be in [0, 1]")
            self.downsample = (str(label), float(keep))


@dataclass
class DanModel:
    vocab: Vocabulary
    embeddings: EmbeddingTable
    hidden: list[DenseLayer]
    output: DenseLayer
    labels: list[str]

    model_type: ClassVar[str] = "dan"

    def __post_init__(self):
        self.labels = list(self.labels)
        if self.output.out_dim != len(self.labels):
            raise ValueError(f"output layer has {self.output.out_dim} units for {len(self.labels)} labels")
        if self.embeddings.matrix.shape[0] != len(self.vocab):
            raise ValueError("embedding rows do not match vocabulary size")
        dim = self.input_dim
        for i, layer in enumerate([*self.hidden, self.output]):
            if layer.in_dim != dim:
                raise ValueError(f"layer {i} expects {layer.in_dim} inputs, gets {dim}")
            dim = layer.out_dim

    @property
    def dim(self) -> int:
        return self.embeddings.dim

    @property
    def input_dim(self) -> int:
        return self.dim

    @property
    def hidden_sizes(self) -> tuple[int, ...]:
        return tuple(layer.out_dim for layer in self.hidden)

    def parameters(self, include_embeddings: bool | None = None) -> dict[str, np.ndarray]:
        if include_embeddings is None:
            include_embeddings = self.embeddings.trainable
        params = {}
        if include_embeddings:
            params["embeddings"] = self.embeddings.matrix
        for i, layer in enumerate(self.hidden):
            params[f"hidden.{i}.W"] = layer.W
            params[f"hidden.{i}.b"] = layer.b
        params["output.W"] = self.output.W
        params["output.b"] = self.output.b
        return params


@dataclass
class AdanModel(DanModel):
    attention: np.ndarray = field(default=None)
    length_norm: bool = True

    model_type: ClassVar[str] = "adan"

    def __post_init__(self):
        super().__post_init__()
        self.attention = np.ascontiguousarray(self.attention, dtype=np.float64)
        if self.attention.shape != (len(self.labels), len(self.vocab)):
            raise ValueError(f"attention table shape {self.attention.shape} != "
                             f"({len(self.labels)}, {len(self.vocab)})")

    @property
    def input_dim(self) -> int:
        return len(self.labels) * self.dim

    def parameters(self, include_embeddings: bool | None = None) -> dict[str, np.ndarray]:
        params = super().parameters(include_embeddings)
        params["attention"] = self.attention
        return params


MODEL_TYPES = {"dan": DanModel, "adan": AdanModel}


@dataclass
class TopicPrediction:
    probs: np.ndarray
    topic: str
    normalized_entropy: float
    keywords: list[tuple[str, float]] | None = None
    source: str = ""
    empty: bool = False


def init_model(kind: str, vocab: Vocabulary, labels: Sequence[str], embeddings: EmbeddingTable | None = None,
               hidden: Sequence[int] = (500,), dim: int = 300, seed: int = 0,
               length_norm: bool = True) -> DanModel:
    if kind not in MODEL_TYPES:
        raise ValueError(f"unknown model type {kind!r}")
    rng = np.random.default_rng(seed)
    if embeddings is None:
        embeddings = random_embeddings(vocab, dim, seed)
    labels = list(labels)
    in_dim = embeddings.dim * (len(labels) if kind == "adan" else 1)
    layers = []
    for size in hidden:
        layers.append(DenseLayer.init(in_dim, size, rng))
        in_dim = size
    output = DenseLayer.init(in_dim, len(labels), rng)
    if kind == "dan":
        return DanModel(vocab, embeddings, layers, output, labels)
    attention = rng.uniform(-ATTENTION_INIT, ATTENTION_INIT, size=(len(labels), len(vocab)))
    return AdanModel(vocab, embeddings, layers, output, labels, attention, length_norm)


# ---------------------------------------------------------------------------
# forward / backward

def _pad(batch: Sequence[Sequence[int]]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    lengths = np.array([len(ids) for ids in batch])
    if lengths.size == 0 or lengths.min() == 0:
        raise EmptyUtteranceError()
    ids = np.zeros((len(batch), lengths.max()), dtype=np.int64)
    mask = np.arange(lengths.max())[None, :] < lengths[:, None]
    # sorted ids fix the summation order, so permuted inputs give bitwise-equal outputs
    ids[mask] = np.concatenate([np.sort(np.asarray(x, dtype=np.int64)) for x in batch])
    return ids, mask, lengths


def _represent(model: DanModel, batch):
    """Utterance representations fed to the first dense layer, plus a cache."""
    ids, mask, lengths = _pad(batch)
    X = model.embeddings.matrix[ids]  # (B, L, D)
    if not isinstance(model, AdanModel):
        s = np.einsum("bl,bld->bd", mask.astype(np.float64), X) / lengths[:, None]
        return s, {"ids": ids, "mask": mask, "lengths": lengths}
    saliency = model.attention[:, ids].transpose(1, 0, 2)  # (B, K, L)
    saliency = np.where(mask[:, None, :], saliency, -np.inf)
    alpha = softmax(saliency, axis=-1)
    scale = 1.0 / lengths if model.length_norm else np.ones(len(lengths))
    S = (alpha @ X) * scale[:, None, None]  # (B, K, D)
    cache = {"ids": ids, "mask": mask, "lengths": lengths, "alpha": alpha, "X": X, "scale": scale}
    return S.reshape(len(batch), -1), cache


def _forward(model: DanModel, batch):
    x, cache = _represent(model, batch)
    acts = [x]
    for layer in model.hidden:
        x = relu(x @ layer.W.T + layer.b)
        acts.append(x)
    logits = x @ model.output.W.T + model.output.b
    cache["acts"] = acts
    return softmax(logits, axis=-1), cache


def _backward(model: DanModel, cache, dlogits: np.ndarray, with_embeddings: bool) -> dict[str, np.ndarray]:
    acts = cache["acts"]
    grads = {"output.W": dlogits.T @ acts[-1], "output.b": dlogits.sum(0)}
    dx = dlogits @ model.output.W
    for i in reversed(range(len(model.hidden))):
        layer = model.hidden[i]
        dz = dx * (acts[i + 1] > 0)
        grads[f"hidden.{i}.W"] = dz.T @ acts[i]
        grads[f"hidden.{i}.b"] = dz.sum(0)
        dx = dz @ layer.W

    ids, mask, lengths = cache["ids"], cache["mask"], cache["lengths"]
    if isinstance(model, AdanModel):
        alpha, X, scale = cache["alpha"], cache["X"], cache["scale"]
        dS = dx.reshape(len(lengths), len(model.labels), model.dim) * scale[:, None, None]
        dalpha = dS @ X.transpose(0, 2, 1)  # (B, K, L)
        dsal = alpha * (dalpha - np.sum(alpha * dalpha, axis=-1, keepdims=True))
        datt = np.zeros_like(model.attention)
        np.add.at(datt.T, ids[mask], dsal.transpose(0, 2, 1)[mask])
        grads["attention"] = datt
        if with_embeddings:
            dX = alpha.transpose(0, 2, 1) @ dS  # (B, L, D)
    elif with_embeddings:
        dX = np.broadcast_to((dx / lengths[:, None])[:, None, :], (len(lengths), ids.shape[1], model.dim))
    if with_embeddings:
        dE = np.zeros_like(model.embeddings.matrix)
        np.add.at(dE, ids[mask], dX[mask])
        grads["embeddings"] = dE
    return grads


def loss_and_grads(model: DanModel, batch: Sequence[Sequence[int]], labels: Sequence[int],
                   with_embeddings: bool | None = None) -> tuple[float, dict[str, np.ndarray]]:
    """Mean cross-entropy over a batch and its gradient for every trainable parameter."""
    if with_embeddings is None:
        with_embeddings = model.embeddings.trainable
    probs, cache = _forward(model, batch)
    rows = np.arange(len(labels))
    labels = np.asarray(labels)
    picked = probs[rows, labels]
    loss = float(np.mean(-np.log(np.maximum(picked, PROB_FLOOR))))
    dlogits = probs.copy()
    dlogits[rows, labels] -= 1.0
    dlogits[picked < PROB_FLOOR] = 0.0  # clamped loss is flat there
    dlogits /= len(labels)
    return loss, _backward(model, cache, dlogits, with_embeddings)


def batch_loss(model: DanModel, batch: Sequence[Sequence[int]], labels: Sequence[int]) -> float:
    probs, _ = _forward(model, batch)
    picked = probs[np.arange(len(labels)), np.asarray(labels)]
    return float(np.mean(-np.log(np.maximum(picked, PROB_FLOOR))))


def random_gradcheck(kind: str, seed: int = 0, eps: float = 1e-5, corrupt: bool = False,
                     n_topics: int = 4, vocab_size: int = 50, dim: int = 16, hidden: int = 8,
                     batch_size: int = 4) -> float:
    """Gradient check of a small random model on random utterances, every coordinate.

    ``corrupt`` doubles the first hidden layer's weight gradient, which the
    check must catch.
    """
    rng = np.random.default_rng([seed, 7])
    vocab = Vocabulary.from_tokens(["<unk>", *(f"w{i}" for i in range(vocab_size - 1))])
    model = init_model(kind, vocab, [f"t{k}" for k in range(n_topics)], hidden=(hidden,), dim=dim, seed=seed)
    model.embeddings.trainable = True
    # widen the attention table so the softmax is far from uniform
    if isinstance(model, AdanModel):
        model.attention[...] = rng.normal(0.0, 1.0, size=model.attention.shape)
    batch = [list(rng.integers(0, vocab_size, size=int(rng.integers(1, 9)))) for _ in range(batch_size)]
    labels = rng.integers(0, n_topics, size=batch_size)

    def fn(x, y):
        loss, grads = loss_and_grads(model, x, y, with_embeddings=True)
        if corrupt:
            grads["hidden.0.W"] = grads["hidden.0.W"] * 2.0
        return loss, grads

    return finite_diff_gradcheck(fn, model.parameters(include_embeddings=True), batch, labels, eps,
                                 loss_only=lambda x, y: batch_loss(model, x, y))


def dan_forward(model: DanModel, token_ids: Sequence[int]):
    probs, cache = _forward(model, [token_ids])
    return probs[0], cache


def adan_forward(model: AdanModel, token_ids: Sequence[int]):
    """Returns ``(probs, alpha, cache)``; ``alpha`` is K x L in utterance order."""
    probs, cache = _forward(model, [token_ids])
    alpha = np.empty_like(cache["alpha"][0])
    alpha[:, np.argsort(token_ids, kind="stable")] = cache["alpha"][0]
    return probs[0], alpha, cache


def predict_proba(model: DanModel, batch: Sequence[Sequence[int]], chunk: int = 512) -> np.ndarray:
    out = [_forward(model, batch[i:i + chunk])[0] for i in range(0, len(batch), chunk)]
    return np.concatenate(out) if out else np.zeros((0, len(model.labels)))


# ---------------------------------------------------------------------------
# prediction

def extract_keywords(model: AdanModel, token_ids: Sequence[int], topic: int, n: int = 2) -> list[tuple[str, float]]:
    """Distinct utterance words ranked by raw saliency for ``topic``, highest first.

    Ties keep the earlier position in the utterance.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    seen = []
    for i in token_ids:
        if i not in seen:
            seen.append(i)
    row = model.attention[topic]
    ranked = sorted(range(len(seen)), key=lambda j: (-row[seen[j]], j))
    return [(model.vocab.tokens[seen[j]], float(row[seen[j]])) for j in ranked[:n]]


def _prediction(model: DanModel, probs: np.ndarray, ids, source: str, n_keywords: int) -> TopicPrediction:
    k = int(np.argmax(probs))
    keywords = extract_keywords(model, ids, k, n_keywords) if isinstance(model, AdanModel) else None
    return TopicPrediction(probs, model.labels[k], normalized_entropy(probs), keywords, source)


def _empty_prediction(model: DanModel, source: str) -> TopicPrediction:
    K = len(model.labels)
    if PHATIC in model.labels:
        probs = np.zeros(K)
        probs[model.labels.index(PHATIC)] = 1.0
    else:
        probs = np.full(K, 1.0 / K)
    k = int(np.argmax(probs))
    return TopicPrediction(probs, model.labels[k], normalized_entropy(probs), [] if isinstance(model, AdanModel) else None,
                           source, empty=True)


def predict(model: DanModel, utterance: str, source: str = "", n_keywords: int = 2) -> TopicPrediction:
    ids = lookup(tokenize(utterance), model.vocab)
    if not ids:
        return _empty_prediction(model, source)
    probs, _ = _forward(model, [ids])
    return _prediction(model, probs[0], ids, source, n_keywords)


def predict_many(model: DanModel, utterances: Sequence[str], source: str = "",
                 n_keywords: int = 2) -> list[TopicPrediction]:
    all_ids = [lookup(tokenize(u), model.vocab) for u in utterances]
    nonempty = [i for i, ids in enumerate(all_ids) if ids]
    probs = predict_proba(model, [all_ids[i] for i in nonempty])
    out: list[TopicPrediction | None] = [None] * len(utterances)
    for row, i in enumerate(nonempty):
        out[i] = _prediction(model, probs[row], all_ids[i], source, n_keywords)
    return [p if p is not None else _empty_prediction(model, source) for p in out]


def ensemble_predict(a: TopicPrediction, b: TopicPrediction | None,
                     label_map: Mapping[str, Mapping[str, str]] | None = None) -> TopicPrediction:
    """Pick the lower normalized-entropy prediction (``a`` on ties) and map its topic.

    ``label_map`` is ``{source: {source_label: canonical_topic}}``; a source
    missing from the map keeps its labels unchanged.
    """
    chosen = a if b is None or a.normalized_entropy <= b.normalized_entropy else b
    topic = chosen.topic
    if label_map is not None and chosen.source in label_map:
        mapping = label_map[chosen.source]
        if topic not in mapping:
            raise LabelMapError(f"label {topic!r} from source {chosen.source!r} is not in the label map")
        topic = mapping[topic]
    return TopicPrediction(chosen.probs, topic, chosen.normalized_entropy, chosen.keywords, chosen.source,
                           chosen.empty)


# ---------------------------------------------------------------------------
# training

@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    dev_accuracy: float


def downsample(data: Sequence[tuple[str, str]], label: str, keep: float, seed: int) -> list[tuple[str, str]]:
    """Keep each row of ``label`` with probability ``keep``; other rows pass through."""
    rng = np.random.default_rng([seed, 2])
    draws = rng.random(len(data))
    return [row for row, u in zip(data, draws) if row[1] != label or u < keep]


def _word_dropout(ids: list[int], p: float, rng: np.random.Generator) -> list[int]:
    keep = rng.random(len(ids)) >= p
    if not keep.any():
        return [ids[int(rng.integers(len(ids)))]]
    return [i for i, k in zip(ids, keep) if k]


def _encode(model: DanModel, data: Sequence[tuple[str, str]], what: str):
    index = {lab: i for i, lab in enumerate(model.labels)}
    ids, ys, dropped = [], [], 0
    for text, label in data:
        if label not in index:
            raise DataError(f"{what} label {label!r} is not in the label set")
        toks = lookup(tokenize(text), model.vocab)
        if not toks:
            dropped += 1
            continue
        ids.append(toks)
        ys.append(index[label])
    if dropped:
        log.warning("%s: skipped %d empty utterances", what, dropped)
    return ids, np.array(ys, dtype=np.int64)


def accuracy(model: DanModel, ids, ys) -> float:
    if len(ys) == 0:
        return 0.0
    return float(np.mean(np.argmax(predict_proba(model, ids), axis=1) == ys))


def fit(model: DanModel, train_data, dev_data, config: TrainConfig) -> list[EpochRecord]:
    """Minibatch Adam with early stopping on dev accuracy.

    Leaves ``model`` holding the best-dev-accuracy weights.
    """
    if config.downsample is not None:
        train_data = downsample(train_data, *config.downsample, seed=config.seed)
    train_ids, train_y = _encode(model, train_data, "train")
    dev_ids, dev_y = _encode(model, dev_data, "dev")
    if not train_ids:
        raise DataError("empty training set")
    if not dev_ids:
        raise DataError("empty dev set")

    model.embeddings.trainable = config.fine_tune_embeddings
    params = model.parameters()
    state = AdamState(lr=config.lr)
    rng = np.random.default_rng([config.seed, 1])
    history: list[EpochRecord] = []
    best_acc, best, stale = -1.0, None, 0

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(train_ids))
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            batch = [train_ids[i] for i in idx]
            if config.word_dropout > 0:
                batch = [_word_dropout(ids, config.word_dropout, rng) for ids in batch]
            loss, grads = loss_and_grads(model, batch, train_y[idx])
            adam_step(params, grads, state)
            total += loss * len(idx)
        acc = accuracy(model, dev_ids, dev_y)
        history.append(EpochRecord(epoch, total / len(train_ids), acc))
        log.info("epoch %d loss %.4f dev acc %.4f", epoch, total / len(train_ids), acc)
        if acc > best_acc:
            best_acc, stale = acc, 0
            best = {k: v.copy() for k, v in params.items()}
        else:
            stale += 1
            if stale >= config.patience:
                break
    if best is not None:
        for k, v in best.items():
            params[k][...] = v
    return history


def train(kind: str, train_data: Sequence[tuple[str, str]], dev_data: Sequence[tuple[str, str]],
          config: TrainConfig | None = None, embeddings: EmbeddingTable | None = None,
          vocab: Vocabulary | None = None) -> tuple[DanModel, list[EpochRecord]]:
    """Train a fresh ``dan`` or ``adan`` model on ``(text, label)`` pairs.

    The vocabulary is built from the training texts unless given; when
    ``embeddings`` is given it must be aligned with that vocabulary.
    """
    config = config or TrainConfig()
    if not train_data:
        raise DataError("empty training set")
    labels = sorted({label for _, label in train_data})
    if len(labels) < 2:
        raise DataError("need at least two distinct labels")
    if vocab is None:
        vocab = build_vocab((tokenize(t) for t, _ in train_data), config.min_count)
    if embeddings is not None and embeddings.matrix.shape != (len(vocab), config.dim):
        raise DataError(f"embedding table shape {embeddings.matrix.shape} does not match "
                        f"({len(vocab)}, {config.dim})")
    model = init_model(kind, vocab, labels, embeddings, config.hidden, config.dim, config.seed, config.length_norm)
    history = fit(model, train_data, dev_data, config)
    return model, history


def transfer_model(source: DanModel, labels: Sequence[str], config: TrainConfig) -> DanModel:
    """Copy embeddings and hidden layers from ``source``; fresh output layer (and attention table)."""
    if source.hidden_sizes != config.hidden:
        raise TransferError(f"hidden sizes differ: source {source.hidden_sizes}, config {config.hidden}")
    if source.dim != config.dim:
        raise TransferError(f"embedding dim differs: source {source.dim}, config {config.dim}")
    labels = list(labels)
    if isinstance(source, AdanModel) and len(labels) != len(source.labels):
        raise TransferError(f"ADAN first layer expects {len(source.labels)} topics x {source.dim} inputs; "
                            f"cannot transfer to {len(labels)} topics")
    rng = np.random.default_rng([config.seed, 3])
    emb = EmbeddingTable(source.embeddings.matrix.copy(), source.embeddings.trainable)
    hidden = [DenseLayer(l.W.copy(), l.b.copy()) for l in source.hidden]
    in_dim = hidden[-1].out_dim if hidden else source.input_dim
    output = DenseLayer.init(in_dim, len(labels), rng)
    if isinstance(source, AdanModel):
        attention = rng.uniform(-ATTENTION_INIT, ATTENTION_INIT, size=(len(labels), len(source.vocab)))
        return AdanModel(source.vocab, emb, hidden, output, labels, attention, source.length_norm)
    return DanModel(source.vocab, emb, hidden, output, labels)


def transfer_finetune(source: DanModel, train_data, dev_data, config: TrainConfig | None = None,
                      labels: Sequence[str] | None = None) -> tuple[DanModel, list[EpochRecord]]:
    config = config or TrainConfig(hidden=source.hidden_sizes, dim=source.dim)
    if labels is None:
        labels = sorted({label for _, label in train_data})
    model = transfer_model(source, labels, config)
    history = fit(model, train_data, dev_data, config) if config.epochs > 0 else []
    return model, history


# ---------------------------------------------------------------------------
# serialization

def _layer_json(layer: DenseLayer) -> dict:
    return {"W": layer.W.tolist(), "b": layer.b.tolist()}


def model_to_json(model: DanModel) -> dict:
    doc = {
        "format_version": FORMAT_VERSION,
        "model_type": model.model_type,
        "labels": list(model.labels),
        "tokenizer": {"lowercase": True, "strip": "non-alnum-except-apostrophe"},
        "vocab": list(model.vocab.tokens),
        "embeddings": model.embeddings.matrix.tolist(),
        "embeddings_trainable": model.embeddings.trainable,
        "hidden": [_layer_json(l) for l in model.hidden],
        "output": _layer_json(model.output),
    }
    if isinstance(model, AdanModel):
        doc["attention"] = model.attention.tolist()
        doc["length_norm"] = model.length_norm
    return doc


def _matrix(doc, key, ndim):
    try:
        arr = np.array(doc[key], dtype=np.float64)
    except (ValueError, TypeError) as exc:
        raise ModelLoadError(f"{key}: ragged or non-numeric array ({exc})") from None
    if arr.ndim != ndim:
        raise ModelLoadError(f"{key}: expected {ndim}-d array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ModelLoadError(f"{key}: non-finite values")
    return np.ascontiguousarray(arr)


def model_from_json(doc: dict, expect_type: str | None = None) -> DanModel:
    try:
        version = doc["format_version"]
        if version != FORMAT_VERSION:
            raise ModelLoadError(f"unsupported format_version {version!r}, expected {FORMAT_VERSION}")
        kind = doc["model_type"]
        if kind not in MODEL_TYPES:
            raise ModelLoadError(f"unknown model_type {kind!r}")
        if expect_type is not None and kind != expect_type:
            raise ModelLoadError(f"model_type mismatch: file has {kind!r}, expected {expect_type!r}")
        vocab = Vocabulary.from_tokens(doc["vocab"])
        emb = EmbeddingTable(_matrix(doc, "embeddings", 2), bool(doc.get("embeddings_trainable", False)))
        hidden = [DenseLayer(_matrix(l, "W", 2), _matrix(l, "b", 1)) for l in doc["hidden"]]
        output = DenseLayer(_matrix(doc["output"], "W", 2), _matrix(doc["output"], "b", 1))
        if kind == "dan":
            return DanModel(vocab, emb, hidden, output, doc["labels"])
        return AdanModel(vocab, emb, hidden, output, doc["labels"], _matrix(doc, "attention", 2),
                         bool(doc.get("length_norm", True)))
    except ModelLoadError:
        raise
    except KeyError as exc:
        raise ModelLoadError(f"missing field {exc}") from None
    except (ValueError, TypeError) as exc:
        raise ModelLoadError(f"inconsistent model: {exc}") from None


def atomic_write_text(path: str | Path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_model(model: DanModel, path: str | Path) -> None:
    # json writes the shortest repr of each float, which round-trips exactly
    atomic_write_text(path, json.dumps(model_to_json(model)))


def load_model(path: str | Path, expect_type: str | None = None) -> DanModel:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelLoadError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ModelLoadError(f"{path}: top-level value is not an object")
    return model_from_json(doc, expect_type)
