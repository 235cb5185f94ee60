"""Conversation data model and segmentation into topic-coherent sub-conversations.

A turn is a (user, bot) utterance pair. Its resolved topic is the shared
topic of both sides; a Phatic side defers to the other side. Turns where both
sides are Phatic are transparent: they neither extend nor break a run of
same-topic turns. Runs of two or more same-topic turns are sub-conversations.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping

from . import PHATIC
from .classifiers import (
    AdanModel,
    ClassificationError,
    DanModel,
    TopicPrediction,
    ensemble_predict,
    predict_many,
)

log = logging.getLogger(__name__)


class TopicMissingError(ValueError):
    pass


class CorpusFormatError(ValueError):
    pass


@dataclass
class Utterance:
    speaker: str
    text: str
    topic: str | None = None
    keywords: list[str] | None = None
    entropy: float | None = None
    source: str | None = None
    flagged: bool = False


@dataclass
class Turn:
    index: int
    user: Utterance
    bot: Utterance
    response_error: bool | None = None

    def __post_init__(self):
        if self.user.speaker != "user" or self.bot.speaker != "bot":
            raise ValueError("turn needs a user utterance and a bot utterance")


@dataclass
class Conversation:
    id: str
    bot_id: str
    rating: float | None = None
    turns: list[Turn] = field(default_factory=list)

    def __post_init__(self):
        if [t.index for t in self.turns] != list(range(1, len(self.turns) + 1)):
            raise ValueError(f"conversation {self.id}: turn indices must run 1..n")


@dataclass
class SubConversation:
    topic: str
    turn_indices: list[int]

    @property
    def l_s(self) -> int:
        return len(self.turn_indices)


@dataclass
class SegmentationResult:
    subconvs: list[SubConversation]
    l_c: int
    resolved: list[str]
    mixed: list[int] = field(default_factory=list)  # turns whose two sides disagree


def resolve_turn_topic(turn: Turn) -> str:
    u, b = turn.user.topic, turn.bot.topic
    if u is None or b is None:
        raise TopicMissingError(f"turn {turn.index} has no topic assigned")
    if u == PHATIC:
        return b
    if b == PHATIC or u == b:
        return u
    return b


def segment(conv: Conversation) -> SegmentationResult:
    resolved = [resolve_turn_topic(t) for t in conv.turns]
    mixed = [t.index for t in conv.turns
             if PHATIC not in (t.user.topic, t.bot.topic) and t.user.topic != t.bot.topic]
    topical = [(t.index, topic) for t, topic in zip(conv.turns, resolved) if topic != PHATIC]

    subconvs = []
    run: list[int] = []
    run_topic = None
    for index, topic in [*topical, (None, None)]:
        if topic != run_topic:
            if len(run) >= 2:
                subconvs.append(SubConversation(run_topic, run))
            run, run_topic = [], topic
        run.append(index)
    return SegmentationResult(subconvs, len(topical), resolved, mixed)


# ---------------------------------------------------------------------------
# classification

def classify_conversation(conv: Conversation, model_a: DanModel, model_b: DanModel | None = None,
                          label_map: Mapping[str, Mapping[str, str]] | None = None,
                          names: tuple[str, str] = ("a", "b"),
                          keyword_model: AdanModel | None = None) -> Conversation:
    """Assign canonical topics, entropies and keywords to every utterance, in place.

    Empty or unclassifiable utterances become Phatic and are flagged.
    """
    utterances = [u for t in conv.turns for u in (t.user, t.bot)]
    texts = [u.text for u in utterances]
    try:
        preds_a = predict_many(model_a, texts, names[0])
        preds_b = predict_many(model_b, texts, names[1]) if model_b is not None else [None] * len(texts)
        preds_k = predict_many(keyword_model, texts, "keywords") if keyword_model is not None else None
    except ClassificationError as exc:
        log.warning("conversation %s: %s", conv.id, exc)
        preds_a = preds_b = preds_k = None

    for i, utt in enumerate(utterances):
        if preds_a is None or preds_a[i].empty:
            utt.topic, utt.keywords, utt.entropy, utt.source, utt.flagged = PHATIC, [], None, None, True
            continue
        chosen: TopicPrediction = ensemble_predict(preds_a[i], preds_b[i], label_map)
        utt.topic = chosen.topic
        utt.entropy = chosen.normalized_entropy
        utt.source = chosen.source
        if chosen.keywords is not None:
            utt.keywords = [w for w, _ in chosen.keywords]
        elif preds_k is not None:
            utt.keywords = [w for w, _ in preds_k[i].keywords]
        else:
            utt.keywords = []
    return conv


# ---------------------------------------------------------------------------
# JSONL i/o

def _utterance(speaker: str, text, info) -> Utterance:
    if not isinstance(text, str):
        raise CorpusFormatError(f"{speaker} utterance must be a string")
    utt = Utterance(speaker, text)
    if info is not None:
        utt.topic = info.get("topic")
        utt.keywords = list(info.get("keywords") or [])
        utt.entropy = info.get("entropy")
        utt.source = info.get("source")
        utt.flagged = bool(info.get("flagged", False))
    return utt


def conversation_from_dict(doc: dict) -> Conversation:
    try:
        ann = doc.get("turns") or []
        turns = []
        for i, t in enumerate(ann, 1):
            info = t.get("annotations") or {}
            err = t.get("response_error")
            turns.append(Turn(i, _utterance("user", t["user"], info.get("user")),
                              _utterance("bot", t["bot"], info.get("bot")),
                              None if err is None else bool(err)))
        rating = doc.get("rating")
        return Conversation(str(doc["id"]), str(doc["bot_id"]), None if rating is None else float(rating), turns)
    except (KeyError, TypeError, AttributeError) as exc:
        raise CorpusFormatError(f"malformed conversation record: {exc!r}") from None


def _info(utt: Utterance) -> dict:
    return {"topic": utt.topic, "entropy": utt.entropy, "keywords": list(utt.keywords or []),
            "source": utt.source, "flagged": utt.flagged}


def conversation_to_dict(conv: Conversation, annotations: bool = True) -> dict:
    turns = []
    for t in conv.turns:
        row = {"user": t.user.text, "bot": t.bot.text}
        if t.response_error is not None:
            row["response_error"] = t.response_error
        if annotations:
            row["annotations"] = {"user": _info(t.user), "bot": _info(t.bot)}
        turns.append(row)
    return {"id": conv.id, "bot_id": conv.bot_id, "rating": conv.rating, "turns": turns}


def read_jsonl(path: str | Path) -> Iterator[dict]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"{path}:{lineno}: {exc}") from None


def dumps_jsonl(records: Iterable[dict]) -> str:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in records)


def read_conversations(path: str | Path) -> list[Conversation]:
    out = []
    for i, doc in enumerate(read_jsonl(path), 1):
        try:
            out.append(conversation_from_dict(doc))
        except (CorpusFormatError, ValueError) as exc:
            raise CorpusFormatError(f"{path}: record {i}: {exc}") from None
    return out
