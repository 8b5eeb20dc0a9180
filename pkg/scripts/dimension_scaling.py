"""Accuracy versus encoding dimension at desk scale.

Trains one variant at several hidden sizes on the synthetic task and reports
validation accuracy and probe micro average per encoding dimension.
"""
import argparse
import json

from sufisent.data import build_vocab, gen_toy_nli, random_embeddings
from sufisent.encoder import VARIANT_NAMES, EncoderConfig
from sufisent.head import HeadConfig
from sufisent.model import Model
from sufisent.train import TrainConfig, fit
from sufisent.transfer import gen_probe_tasks, run_transfer

ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
ap.add_argument("--variant", default="sufisent-tied", choices=VARIANT_NAMES)
ap.add_argument("--dims", type=int, nargs="+", default=[2, 4, 8, 16])
ap.add_argument("--epochs", type=int, default=6)
ap.add_argument("--fc-dim", type=int, default=128)
ap.add_argument("--seed", type=int, default=7)
ap.add_argument("--out", default=None, help="optional JSON results path")
args = ap.parse_args()

data = gen_toy_nli(args.seed, 2500)
train, val = data[:2000], data[2000:]
vocab = build_vocab(train)
tasks = gen_probe_tasks(args.seed)
results = []
for d in args.dims:
    enc = EncoderConfig(args.variant, d, 16)
    model = Model.init(enc, HeadConfig(fc_dim=args.fc_dim), vocab, random_embeddings(vocab, 16, 0), seed=0)
    best, _ = fit(model, train, val, TrainConfig(batch_size=16, max_epochs=args.epochs, seed=0))
    probe = run_transfer(best.to_model(), tasks, seed=0)
    results.append({"d": d, "dim": enc.encoding_dim, "val": best.best_val_acc, "micro": probe.micro})
    print(f"d={d:3d} dim={enc.encoding_dim:4d} val={100 * best.best_val_acc:5.1f} micro={probe.micro:5.1f}",
          flush=True)
if args.out:
    with open(args.out, "w") as fh:
        json.dump(results, fh, indent=2)
