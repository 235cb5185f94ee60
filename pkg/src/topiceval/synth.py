"""Seeded generators for labeled utterances and multi-bot conversation corpora.

Every generator also returns its ground truth (planted keywords, per-turn
topics, sub-conversation boundaries) so downstream stages can be checked
against it.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import PHATIC

SYLLABLES = ["ba", "ko", "ri", "tu", "me", "sa", "lo", "pi", "da", "ne", "vu", "zo", "fe", "gi", "ha", "ju",
             "ka", "mo", "nu", "ra", "si", "te", "wo", "xi", "ye", "bo", "ce", "du", "ge", "li"]

PHATIC_PHRASES = ["cool", "okay", "thanks", "sounds good", "how are you", "i like you", "yeah sure",
                  "hello there", "nice", "really", "good to hear", "no thanks", "hmm", "that's fine"]

DEFAULT_FILLER = ["the", "a", "is", "what", "about", "tell", "me", "do", "you", "know", "when", "where", "my",
                  "favorite", "it", "and", "of", "to", "in", "for", "that", "this", "how", "who", "can", "was",
                  "are", "with", "on", "some", "more", "like", "think", "your"]


class SynthConfigError(ValueError):
    pass


@dataclass
class TopicSpec:
    name: str
    keywords: list[str]
    filler: list[str] = field(default_factory=lambda: list(DEFAULT_FILLER))
    length_range: tuple[int, int] = (4, 10)

    def __post_init__(self):
        lo, hi = self.length_range
        if not 1 <= lo <= hi:
            raise SynthConfigError(f"{self.name}: bad length range {self.length_range}")
        if not self.keywords:
            raise SynthConfigError(f"{self.name}: no keywords")
        if self.name == PHATIC:
            raise SynthConfigError(f"{PHATIC} is reserved")


@dataclass
class BotProfile:
    bot_id: str
    target_depth: float = 3.0
    switch_prob: float = 0.2
    phatic_prob: float = 0.1
    keyword_bias: float = 0.0
    rating_rule: dict = field(default_factory=lambda: {"kind": "bot_depth"})
    runs_per_conversation: float = 3.0
    error_rate: float = 0.1
    annotated_frac: float = 1.0

    def __post_init__(self):
        for name in ("switch_prob", "phatic_prob", "keyword_bias", "error_rate", "annotated_frac"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise SynthConfigError(f"{self.bot_id}: {name} must be in [0, 1]")
        if self.runs_per_conversation < 1:
            raise SynthConfigError(f"{self.bot_id}: runs_per_conversation must be >= 1")
        if self.rating_rule.get("kind") not in RATING_RULES:
            raise SynthConfigError(f"{self.bot_id}: unknown rating rule {self.rating_rule!r}")


def validate_specs(specs: Sequence[TopicSpec]) -> None:
    if len(specs) < 2:
        raise SynthConfigError("need at least two topics")
    owner: dict[str, str] = {}
    for spec in specs:
        for kw in spec.keywords:
            if kw in owner and owner[kw] != spec.name:
                raise SynthConfigError(f"keyword {kw!r} is shared by {owner[kw]!r} and {spec.name!r}")
            owner[kw] = spec.name
    if len({s.name for s in specs}) != len(specs):
        raise SynthConfigError("duplicate topic names")
    for spec in specs:
        clash = set(spec.filler) & owner.keys()
        if clash:
            raise SynthConfigError(f"{spec.name}: filler words {sorted(clash)} are topic keywords")


def auto_topic_specs(n_topics: int, keywords_per_topic: int = 12, seed: int = 0,
                     length_range: tuple[int, int] = (4, 10)) -> list[TopicSpec]:
    """Topics named ``topic_00``.. with disjoint pseudo-word keyword lists."""
    rng = np.random.default_rng([seed, 11])
    taken = set(DEFAULT_FILLER)
    specs = []
    for k in range(n_topics):
        words = []
        while len(words) < keywords_per_topic:
            w = "".join(rng.choice(SYLLABLES, size=int(rng.integers(2, 4))))
            if w not in taken:
                taken.add(w)
                words.append(w)
        specs.append(TopicSpec(f"topic_{k:02d}", words, length_range=length_range))
    return specs


def _utterance(spec: TopicSpec, keywords: list[str], rng: np.random.Generator) -> str:
    lo, hi = spec.length_range
    length = max(int(rng.integers(lo, hi + 1)), len(keywords))
    words = list(rng.choice(spec.filler, size=length - len(keywords))) + keywords
    return " ".join(words[i] for i in rng.permutation(len(words)))


def _pick_keywords(spec: TopicSpec, rng: np.random.Generator, pool: Sequence[str] | None = None) -> list[str]:
    pool = list(pool if pool is not None else spec.keywords)
    n = min(int(rng.integers(1, 4)), len(pool))
    return [pool[i] for i in rng.choice(len(pool), size=n, replace=False)]


def generate_corpus(specs: Sequence[TopicSpec], n: int, seed: int = 0) -> tuple[list[dict], list[dict]]:
    """``n`` labeled utterances, topics assigned round-robin.

    Returns the ``{"text", "topic"}`` rows and a parallel sidecar that adds
    the planted ``keywords`` of each row.
    """
    validate_specs(specs)
    if n < len(specs):
        raise SynthConfigError(f"n={n} is smaller than the number of topics")
    rng = np.random.default_rng(seed)
    rows, truth = [], []
    for i in range(n):
        spec = specs[i % len(specs)]
        kws = _pick_keywords(spec, rng)
        text = _utterance(spec, kws, rng)
        rows.append({"text": text, "topic": spec.name})
        truth.append({"text": text, "topic": spec.name, "keywords": kws})
    return rows, truth


# ---------------------------------------------------------------------------
# conversations

def _linear_depth_rating(depth, lo=2.0, hi=10.0):
    if depth is None:
        return 1.0
    return float(min(5.0, max(1.0, 1.0 + 4.0 * (depth - lo) / (hi - lo))))


def _rate_bot_depth(rule, dialog_depths, pooled_depth, rng):
    return [_linear_depth_rating(pooled_depth, rule.get("lo", 2.0), rule.get("hi", 10.0))] * len(dialog_depths)


def _rate_dialog_depth(rule, dialog_depths, pooled_depth, rng):
    return [_linear_depth_rating(d, rule.get("lo", 2.0), rule.get("hi", 10.0)) for d in dialog_depths]


def _rate_random(rule, dialog_depths, pooled_depth, rng):
    draws = rng.normal(rule.get("mean", 3.0), rule.get("sd", 1.0), size=len(dialog_depths))
    return [float(np.clip(d, 1.0, 5.0)) for d in draws]


def _rate_constant(rule, dialog_depths, pooled_depth, rng):
    return [float(rule.get("value", 3.0))] * len(dialog_depths)


# bot_depth: every conversation of a bot gets a strictly increasing linear map of the
# bot's realized pooled depth onto [1, 5]; dialog_depth: the same map per conversation.
RATING_RULES = {
    "bot_depth": _rate_bot_depth,
    "dialog_depth": _rate_dialog_depth,
    "random": _rate_random,
    "constant": _rate_constant,
}


def _run_length(target: float, rng: np.random.Generator) -> int:
    # 1 + Geometric(p) lives on {2, 3, ...} with mean 1 + 1/p
    p = 1.0 / max(target - 1.0, 1.0)
    return int(min(1 + rng.geometric(p), 10))


def _one_conversation(conv_id, profile, specs, favorites, rng):
    by_name = {s.name: s for s in specs}
    turns, topics, keywords = [], [], []

    def topical(name, biased):
        spec = by_name[name]
        pool = favorites[name] if biased and rng.random() < profile.keyword_bias else None
        kws = _pick_keywords(spec, rng, pool)
        return _utterance(spec, kws, rng), kws

    def add_turn(user_topic, bot_topic):
        if user_topic == PHATIC:
            u, ukw = str(rng.choice(PHATIC_PHRASES)), []
        else:
            u, ukw = topical(user_topic, False)
        if bot_topic == PHATIC:
            b, bkw = str(rng.choice(PHATIC_PHRASES)), []
        else:
            b, bkw = topical(bot_topic, True)
        turn = {"user": u, "bot": b}
        if rng.random() < profile.annotated_frac:
            turn["response_error"] = bool(rng.random() < profile.error_rate)
        turns.append(turn)
        topics.append([user_topic, bot_topic])
        keywords.append([ukw[:2], bkw[:2]])

    def maybe_phatic_turn():
        if rng.random() < profile.phatic_prob:
            add_turn(PHATIC, PHATIC)

    n_runs = 1 + int(rng.poisson(profile.runs_per_conversation - 1.0))
    subconvs = []
    previous = None
    maybe_phatic_turn()
    for _ in range(n_runs):
        choices = [s.name for s in specs if s.name != previous]
        topic = choices[int(rng.integers(len(choices)))]
        length = 1 if rng.random() < profile.switch_prob else _run_length(profile.target_depth, rng)
        members = []
        for _ in range(length):
            # one side may be chit-chat; the turn still belongs to the run
            side = rng.random()
            if side < profile.phatic_prob / 2:
                add_turn(PHATIC, topic)
            elif side < profile.phatic_prob:
                add_turn(topic, PHATIC)
            else:
                add_turn(topic, topic)
            members.append(len(turns))
            maybe_phatic_turn()
        if length >= 2:
            subconvs.append({"topic": topic, "turn_indices": members})
        previous = topic
    l_c = sum(1 for u, b in topics if (u, b) != (PHATIC, PHATIC))
    conv = {"id": conv_id, "bot_id": profile.bot_id, "rating": None, "turns": turns}
    truth = {"id": conv_id, "bot_id": profile.bot_id, "turn_topics": topics, "keywords": keywords,
             "subconvs": subconvs, "l_c": l_c}
    return conv, truth


def generate_conversations(profiles: Sequence[BotProfile], convs_per_bot: int, seed: int = 0,
                           specs: Sequence[TopicSpec] | None = None) -> tuple[list[dict], list[dict]]:
    """Conversation records (corpus JSONL shape) plus a ground-truth sidecar.

    Each conversation is a chain of topic runs. A run is a single stray turn
    with probability ``switch_prob``, otherwise its length is drawn from a
    geometric distribution truncated to [2, 10] around ``target_depth``. Fully
    Phatic turns are sprinkled in at ``phatic_prob``. Ratings follow each
    profile's rating rule.
    """
    specs = list(specs) if specs is not None else auto_topic_specs(8, seed=seed)
    validate_specs(specs)
    if len({p.bot_id for p in profiles}) != len(profiles):
        raise SynthConfigError("duplicate bot ids")
    convs, truths = [], []
    for b, profile in enumerate(profiles):
        rng = np.random.default_rng([seed, b])
        favorites = {s.name: [s.keywords[i] for i in rng.choice(len(s.keywords), size=min(2, len(s.keywords)),
                                                                 replace=False)] for s in specs}
        bot_convs, bot_truth = [], []
        for i in range(convs_per_bot):
            conv, truth = _one_conversation(f"{profile.bot_id}-{i:05d}", profile, specs, favorites, rng)
            bot_convs.append(conv)
            bot_truth.append(truth)
        lengths = [[len(s["turn_indices"]) for s in t["subconvs"]] for t in bot_truth]
        dialog_depths = [sum(l) / len(l) if l else None for l in lengths]
        flat = [x for l in lengths for x in l]
        pooled = sum(flat) / len(flat) if flat else None
        ratings = RATING_RULES[profile.rating_rule["kind"]](profile.rating_rule, dialog_depths, pooled, rng)
        for conv, truth, rating in zip(bot_convs, bot_truth, ratings):
            conv["rating"] = rating
            truth["rating"] = rating
        convs += bot_convs
        truths += bot_truth
    return convs, truths


def with_truth_annotations(conv: dict, truth: dict) -> dict:
    """Classified-corpus record carrying the ground-truth topics and planted keywords."""
    out = {k: v for k, v in conv.items() if k != "turns"}
    out["turns"] = []
    for turn, (ut, bt), (ukw, bkw) in zip(conv["turns"], truth["turn_topics"], truth["keywords"]):
        row = dict(turn)
        row["annotations"] = {
            "user": {"topic": ut, "entropy": 0.0, "keywords": ukw, "source": "truth", "flagged": False},
            "bot": {"topic": bt, "entropy": 0.0, "keywords": bkw, "source": "truth", "flagged": False},
        }
        out["turns"].append(row)
    return out


def profiles_from_config(cfg: dict) -> list[BotProfile]:
    """``{"bots": [{BotProfile fields}]}``; without a bot list, the eight validation bots."""
    if "bots" not in cfg:
        return validation_profiles(cfg.get("rating_rule"))
    return [BotProfile(**p) for p in cfg["bots"]]


def specs_from_config(cfg: dict, seed: int = 0) -> list[TopicSpec]:
    """``{"topics": [{"name", "keywords", ...}]}`` or ``{"n_topics": K, "keywords_per_topic": M}``."""
    if "topics" in cfg:
        specs = []
        for t in cfg["topics"]:
            kw = dict(t)
            if "length_range" in kw:
                kw["length_range"] = tuple(kw["length_range"])
            if "filler" not in kw and "filler" in cfg:
                kw["filler"] = list(cfg["filler"])
            specs.append(TopicSpec(**kw))
        return specs
    return auto_topic_specs(int(cfg.get("n_topics", 8)), int(cfg.get("keywords_per_topic", 12)), seed,
                            tuple(cfg.get("length_range", (4, 10))))


# breadth ranks chosen so their rank correlation with the depth order is exactly 0
_BREADTH_RANKS = [5, 2, 8, 3, 6, 1, 7, 4]


def validation_profiles(rating_rule: dict | None = None) -> list[BotProfile]:
    """Eight bots with increasing target depth and a breadth setting unrelated to depth.

    With the default ``bot_depth`` rule, mean ratings are a strictly increasing
    function of realized depth and carry no information about breadth.
    """
    rule = rating_rule or {"kind": "bot_depth"}
    return [BotProfile(f"bot{i}", target_depth=2.5 + 0.8 * i, switch_prob=0.2, phatic_prob=0.15,
                       keyword_bias=0.1 * i, rating_rule=dict(rule), runs_per_conversation=1.0 + 0.5 * r,
                       error_rate=0.05 + 0.02 * (7 - i))
            for i, r in enumerate(_BREADTH_RANKS)]
