"""Train encoder variants on the synthetic entailment task and probe the frozen encoders.

Writes one metrics file and checkpoint per variant under --out, then prints a
summary with best validation accuracy and probe micro / macro averages.
"""
import argparse
import json
import time
from pathlib import Path

from sufisent.checkpoint import save
from sufisent.data import build_vocab, gen_toy_nli, random_embeddings
from sufisent.encoder import VARIANT_NAMES, EncoderConfig
from sufisent.head import HeadConfig
from sufisent.model import Model
from sufisent.train import TrainConfig, fit
from sufisent.transfer import gen_probe_tasks, run_transfer


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--variants", nargs="+", default=VARIANT_NAMES, choices=VARIANT_NAMES)
    ap.add_argument("--d", type=int, default=16)
    ap.add_argument("--e", type=int, default=16)
    ap.add_argument("--fc-dim", type=int, default=512)
    ap.add_argument("--train-size", type=int, default=2000)
    ap.add_argument("--val-size", type=int, default=500)
    ap.add_argument("--epochs", type=int, default=10)
    ap.add_argument("--batch-size", type=int, default=16)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--out", default="runs/toy")
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data = gen_toy_nli(args.seed, args.train_size + args.val_size)
    train, val = data[: args.train_size], data[args.train_size:]
    vocab = build_vocab(train)
    tasks = gen_probe_tasks(args.seed)
    cfg = TrainConfig(batch_size=args.batch_size, max_epochs=args.epochs, seed=0)

    rows = []
    for name in args.variants:
        enc = EncoderConfig(name, args.d, args.e)
        model = Model.init(enc, HeadConfig(fc_dim=args.fc_dim), vocab, random_embeddings(vocab, args.e, 0), seed=0)
        t0 = time.perf_counter()
        best, reports = fit(model, train, val, cfg, metrics_path=out / f"{name}.metrics.jsonl")
        save(out / f"{name}.ckpt", best)
        probe = run_transfer(best.to_model(), tasks, seed=0)
        rows.append({"variant": name, "dim": enc.encoding_dim, "epochs": len(reports),
                     "best_val": best.best_val_acc, "micro": probe.micro, "macro": probe.macro,
                     "seconds": round(time.perf_counter() - t0, 1)})
        print(json.dumps(rows[-1]), flush=True)

    print(f"\n{'variant':18s} {'dim':>4s} {'val':>6s}  micro / macro")
    for r in rows:
        print(f"{r['variant']:18s} {r['dim']:4d} {100 * r['best_val']:6.1f}  {r['micro']:.1f} / {r['macro']:.1f}")
    (out / "summary.json").write_text(json.dumps(rows, indent=2))


if __name__ == "__main__":
    main()
