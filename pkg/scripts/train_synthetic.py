"""Train DAN and ADAN on a generated labeled corpus and report accuracy and keyword recovery.

    python3 scripts/train_synthetic.py --topics 8 --train 2000 --dev 400 --epochs 30 --out-dir runs/
"""
import argparse
import time
from dataclasses import asdict
from pathlib import Path

from topiceval.classifiers import TrainConfig, predict, save_model, train
from topiceval.metrics import to_tsv
from topiceval.synth import auto_topic_specs, generate_corpus


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--topics", type=int, default=8)
    ap.add_argument("--train", type=int, default=2000)
    ap.add_argument("--dev", type=int, default=400)
    ap.add_argument("--epochs", type=int, default=30)
    ap.add_argument("--dim", type=int, default=300)
    ap.add_argument("--hidden", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out-dir", type=Path)
    args = ap.parse_args()

    specs = auto_topic_specs(args.topics, seed=args.seed)
    rows, truth = generate_corpus(specs, args.train + args.dev, seed=args.seed)
    data = [(r["text"], r["topic"]) for r in rows]
    tr, dv, dv_truth = data[:args.train], data[args.train:], truth[args.train:]
    cfg = TrainConfig(epochs=args.epochs, dim=args.dim, hidden=(args.hidden,), seed=args.seed)

    for kind in ("dan", "adan"):
        start = time.perf_counter()
        model, history = train(kind, tr, dv, cfg)
        elapsed = time.perf_counter() - start
        best = max(h.dev_accuracy for h in history)
        line = f"{kind}: best dev accuracy {best:.4f} after {len(history)} epochs, {elapsed:.1f}s"
        if kind == "adan":
            hits = sum(bool({w for w, _ in predict(model, text).keywords} & set(t["keywords"]))
                       for (text, _), t in zip(dv, dv_truth))
            line += f", keyword recovery {hits / len(dv):.4f}"
        print(line)
        if args.out_dir:
            args.out_dir.mkdir(parents=True, exist_ok=True)
            save_model(model, args.out_dir / f"{kind}.json")
            (args.out_dir / f"{kind}.history.tsv").write_text(
                to_tsv([asdict(h) for h in history], ["epoch", "train_loss", "dev_accuracy"]))


if __name__ == "__main__":
    main()
