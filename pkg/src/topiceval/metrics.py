"""Topic depth, breadth and keyword coverage metrics, RER, and rank correlation.

Undefined values (depth of a dialog without sub-conversations, RER without
annotations, Spearman's rho of a constant column, ...) are ``None``.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import PHATIC
from .dialog import Conversation, SegmentationResult, segment


def dialog_depth(seg: SegmentationResult) -> float | None:
    if not seg.subconvs:
        return None
    return sum(s.l_s for s in seg.subconvs) / len(seg.subconvs)


def system_depth(segs: Iterable[SegmentationResult]) -> float | None:
    """Mean length over every sub-conversation of the bot (pooled, not a mean of dialog means)."""
    lengths = [s.l_s for seg in segs for s in seg.subconvs]
    if not lengths:
        return None
    return sum(lengths) / len(lengths)


def dialog_breadth(seg: SegmentationResult) -> int:
    return len({s.topic for s in seg.subconvs})


def system_breadth_avg(segs: Sequence[SegmentationResult]) -> float:
    if not segs:
        raise ValueError("no conversations")
    return sum(dialog_breadth(s) for s in segs) / len(segs)


@dataclass
class TopicHistogram:
    counts: dict[str, int]
    freqs: dict[str, float] | None
    entropy: float | None
    stddev: float | None


def topic_histogram(segs: Iterable[SegmentationResult], canonical_topics: Sequence[str] | None = None) -> TopicHistogram:
    """Sub-conversation counts per topic, their normalized frequencies, and the
    normalized entropy / population standard deviation of those frequencies over
    the full canonical topic set."""
    counts = Counter(s.topic for seg in segs for s in seg.subconvs)
    topics = [t for t in (canonical_topics or []) if t != PHATIC]
    topics += sorted(t for t in counts if t not in topics)
    full = {t: counts.get(t, 0) for t in topics}
    total = sum(full.values())
    if total == 0:
        return TopicHistogram(full, None, None, None)
    freqs = {t: c / total for t, c in full.items()}
    f = np.array(list(freqs.values()))
    nz = f[f > 0]
    entropy = float(-np.sum(nz * np.log(nz)) / math.log(len(f))) if len(f) > 1 else 0.0
    return TopicHistogram(full, freqs, entropy, float(np.std(f)))


@dataclass
class KeywordStats:
    c_fine: int
    total: int
    freq: float
    empty: bool = False


def keyword_metrics(convs: Iterable[Conversation], side: str) -> KeywordStats:
    """Distinct keywords, total keyword occurrences and occurrences per distinct keyword
    over the ``side`` ("bot" or "user") utterances."""
    if side not in ("bot", "user"):
        raise ValueError(f"side must be 'bot' or 'user', not {side!r}")
    counts = Counter(kw for c in convs for t in c.turns for kw in (getattr(t, side).keywords or []))
    if not counts:
        return KeywordStats(0, 0, 0.0, empty=True)
    total = sum(counts.values())
    return KeywordStats(len(counts), total, total / len(counts))


def rer(convs: Iterable[Conversation]) -> tuple[float | None, int]:
    """Response error rate over annotated turns, and the number of annotated turns."""
    flags = [t.response_error for c in convs for t in c.turns if t.response_error is not None]
    if not flags:
        return None, 0
    return sum(flags) / len(flags), len(flags)


def mean_rating(convs: Iterable[Conversation]) -> float | None:
    ratings = [c.rating for c in convs if c.rating is not None]
    if not ratings:
        return None
    return sum(ratings) / len(ratings)


# ---------------------------------------------------------------------------
# rank correlation

def average_ranks(x: Sequence[float]) -> np.ndarray:
    """1-based ranks; tied values share the mean of the ranks they span."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="stable")
    ranks = np.empty(len(x))
    xs = x[order]
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and xs[j + 1] == xs[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


def pearson(x: np.ndarray, y: np.ndarray) -> float | None:
    dx = x - x.mean()
    dy = y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0 or syy == 0:
        return None
    return max(-1.0, min(1.0, float(dx @ dy) / math.sqrt(sxx * syy)))


def spearman(x: Sequence[float], y: Sequence[float]) -> float | None:
    if len(x) != len(y):
        raise ValueError(f"length mismatch: {len(x)} vs {len(y)}")
    if len(x) < 2:
        raise ValueError("need at least two observations")
    return pearson(average_ranks(x), average_ranks(y))


@dataclass
class CorrelationRow:
    metric: str
    rho: float | None
    n_bots: int
    status: str


def correlate(table: Sequence[Mapping[str, float | None]], metrics: Sequence[str],
              rating_key: str = "mean_rating", min_bots: int = 3) -> list[CorrelationRow]:
    """Spearman's rho of each metric column against the rating column.

    Bots missing either value are dropped for that metric only.
    """
    rows = []
    for metric in metrics:
        pairs = [(r[metric], r[rating_key]) for r in table
                 if r.get(metric) is not None and r.get(rating_key) is not None]
        if len(pairs) < min_bots:
            rows.append(CorrelationRow(metric, None, len(pairs), "insufficient"))
            continue
        rho = spearman([p[0] for p in pairs], [p[1] for p in pairs])
        rows.append(CorrelationRow(metric, rho, len(pairs), "ok" if rho is not None else "undefined"))
    return rows


# ---------------------------------------------------------------------------
# reports

@dataclass
class DialogMetrics:
    id: str
    depth: float | None
    breadth: int
    l_c: int
    n_turns: int
    n_subconversations: int


@dataclass
class BotMetricsReport:
    bot_id: str
    n_conversations: int
    n_rated: int
    mean_rating: float | None
    depth: float | None
    breadth_avg: float
    n_subconversations: int
    topic_counts: dict[str, int]
    topic_freqs: dict[str, float] | None
    topic_entropy: float | None
    topic_stddev: float | None
    keywords: dict[str, dict] = field(default_factory=dict)
    rer: float | None = None
    rer_annotated_turns: int = 0
    rer_unannotated_turns: int = 0
    avg_turns: float = 0.0
    avg_topic_turns: float = 0.0


TSV_COLUMNS = [
    "bot_id", "n_conversations", "mean_rating", "rer", "depth", "breadth_avg",
    "topic_entropy", "topic_stddev", "avg_turns", "avg_topic_turns",
    "c_fine_bot", "keyword_total_bot", "keyword_freq_bot",
    "c_fine_user", "keyword_total_user", "keyword_freq_user",
]
# columns correlate() treats as metrics
METRIC_COLUMNS = [c for c in TSV_COLUMNS if c not in ("bot_id", "n_conversations", "mean_rating")]


def dialog_metrics(conv: Conversation, seg: SegmentationResult | None = None) -> DialogMetrics:
    seg = seg or segment(conv)
    return DialogMetrics(conv.id, dialog_depth(seg), dialog_breadth(seg), seg.l_c, len(conv.turns), len(seg.subconvs))


def bot_report(bot_id: str, convs: Sequence[Conversation], canonical_topics: Sequence[str] | None = None,
               segs: Sequence[SegmentationResult] | None = None) -> BotMetricsReport:
    if not convs:
        raise ValueError(f"bot {bot_id}: no conversations")
    segs = segs if segs is not None else [segment(c) for c in convs]
    hist = topic_histogram(segs, canonical_topics)
    rate, annotated = rer(convs)
    n_turns = sum(len(c.turns) for c in convs)
    keywords = {}
    for side in ("bot", "user"):
        ks = keyword_metrics(convs, side)
        keywords[side] = {"c_fine": ks.c_fine, "total": ks.total, "freq": ks.freq, "empty": ks.empty}
    return BotMetricsReport(
        bot_id=bot_id,
        n_conversations=len(convs),
        n_rated=sum(c.rating is not None for c in convs),
        mean_rating=mean_rating(convs),
        depth=system_depth(segs),
        breadth_avg=system_breadth_avg(segs),
        n_subconversations=sum(len(s.subconvs) for s in segs),
        topic_counts=hist.counts,
        topic_freqs=hist.freqs,
        topic_entropy=hist.entropy,
        topic_stddev=hist.stddev,
        keywords=keywords,
        rer=rate,
        rer_annotated_turns=annotated,
        rer_unannotated_turns=n_turns - annotated,
        avg_turns=n_turns / len(convs),
        avg_topic_turns=sum(s.l_c for s in segs) / len(convs),
    )


def corpus_report(convs: Sequence[Conversation], canonical_topics: Sequence[str] | None = None) -> dict:
    """Per-bot reports (sorted by bot id), per-dialog metrics and corpus totals."""
    by_bot: dict[str, list[Conversation]] = {}
    for c in convs:
        by_bot.setdefault(c.bot_id, []).append(c)
    segs = {c.id: segment(c) for c in convs}
    bots = [bot_report(b, cs, canonical_topics, [segs[c.id] for c in cs]) for b, cs in sorted(by_bot.items())]
    all_segs = list(segs.values())
    corpus = {
        "n_conversations": len(convs),
        "n_bots": len(by_bot),
        "depth": system_depth(all_segs),
        "breadth_avg": system_breadth_avg(all_segs) if all_segs else None,
        "n_subconversations": sum(len(s.subconvs) for s in all_segs),
        "mixed_turns": sum(len(s.mixed) for s in all_segs),
    }
    return {
        "bots": [asdict(b) for b in bots],
        "corpus": corpus,
        "dialogs": [asdict(dialog_metrics(c, segs[c.id])) for c in convs],
    }


def flat_row(report: Mapping) -> dict[str, object]:
    kw = report["keywords"]
    row = {k: report[k] for k in TSV_COLUMNS if k in report}
    for side in ("bot", "user"):
        empty = kw[side]["empty"]
        row[f"c_fine_{side}"] = None if empty else kw[side]["c_fine"]
        row[f"keyword_total_{side}"] = None if empty else kw[side]["total"]
        row[f"keyword_freq_{side}"] = None if empty else kw[side]["freq"]
    return row


def _fmt(v) -> str:
    if v is None:
        return "NA"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def to_tsv(rows: Iterable[Mapping], columns: Sequence[str]) -> str:
    lines = ["\t".join(columns)]
    for r in rows:
        lines.append("\t".join(_fmt(r.get(c)) for c in columns))
    return "\n".join(lines) + "\n"


def parse_tsv(text: str) -> tuple[list[str], list[dict[str, object]]]:
    """Read a metrics TSV; numeric cells become floats and ``NA``/empty become None."""
    lines = [l for l in text.splitlines() if l.strip()]
    if not lines:
        return [], []
    header = lines[0].split("\t")
    rows = []
    for line in lines[1:]:
        cells = line.split("\t")
        row: dict[str, object] = {}
        for col, cell in zip(header, cells):
            if cell in ("", "NA", "nan", "None"):
                row[col] = None
                continue
            try:
                row[col] = float(cell)
            except ValueError:
                row[col] = cell
        rows.append(row)
    return header, rows
