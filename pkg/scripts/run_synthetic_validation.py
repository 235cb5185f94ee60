"""Correlate every bot-level metric with ratings on generated multi-bot corpora, over several seeds.

Ratings follow the chosen rule (default: increasing in each bot's realized depth).
Prints one row per metric with the mean, min and max Spearman rho across seeds.

    python3 scripts/run_synthetic_validation.py --seeds 10 --rule bot_depth
    python3 scripts/run_synthetic_validation.py --rule random
"""
import argparse
import math

from topiceval.dialog import conversation_from_dict
from topiceval.metrics import METRIC_COLUMNS, corpus_report, correlate, flat_row
from topiceval.synth import auto_topic_specs, generate_conversations, validation_profiles, with_truth_annotations


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--convs-per-bot", type=int, default=200)
    ap.add_argument("--topics", type=int, default=8)
    ap.add_argument("--rule", default="bot_depth", choices=["bot_depth", "dialog_depth", "random", "constant"])
    args = ap.parse_args()

    rhos: dict[str, list[float]] = {m: [] for m in METRIC_COLUMNS}
    for seed in range(args.seeds):
        specs = auto_topic_specs(args.topics, seed=seed)
        convs, truth = generate_conversations(validation_profiles({"kind": args.rule}), args.convs_per_bot, seed, specs)
        annotated = [conversation_from_dict(with_truth_annotations(c, t)) for c, t in zip(convs, truth)]
        table = [flat_row(b) for b in corpus_report(annotated, [s.name for s in specs])["bots"]]
        for row in correlate(table, METRIC_COLUMNS):
            rhos[row.metric].append(row.rho if row.rho is not None else math.nan)

    print(f"{'metric':20s} {'mean':>8s} {'min':>8s} {'max':>8s}")
    for metric, vals in rhos.items():
        ok = [v for v in vals if not math.isnan(v)]
        if not ok:
            print(f"{metric:20s} {'NA':>8s}")
            continue
        print(f"{metric:20s} {sum(ok) / len(ok):8.3f} {min(ok):8.3f} {max(ok):8.3f}")


if __name__ == "__main__":
    main()
