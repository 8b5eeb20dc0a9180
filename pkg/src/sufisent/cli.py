"""Command-line entry point: gen-toy, train, encode, eval, gradcheck.

Exit codes: 0 success, 1 usage error, 2 data or runtime error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _echo(command: str, config: dict) -> None:
    print(json.dumps({"command": command, "config": config}, sort_keys=True), flush=True)


def build_parser() -> argparse.ArgumentParser:
    from .encoder import VARIANT_NAMES
    from .train import TrainConfig

    p = _Parser(prog="sufisent", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("gen-toy", help="write the synthetic entailment corpus")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--count", type=_positive_int, required=True)
    s.add_argument("--out", required=True)

    s = sub.add_parser("train", help="train an encoder and entailment head")
    s.add_argument("--train", required=True)
    s.add_argument("--val", required=True)
    s.add_argument("--variant", choices=VARIANT_NAMES, default="sufisent-tied")
    s.add_argument("--d", type=_positive_int, default=16)
    s.add_argument("--e", type=_positive_int, default=16)
    s.add_argument("--embeddings", default=None, help="word-vector text file; random N(0,1) rows otherwise")
    s.add_argument("--train-embeddings", action="store_true",
                   help="update loaded word vectors (random ones are always trained)")
    s.add_argument("--min-count", type=_positive_int, default=1)
    s.add_argument("--fc-dim", type=_positive_int, default=512)
    s.add_argument("--nonlinearity", choices=["tanh", "none"], default="tanh")
    d = TrainConfig()
    s.add_argument("--lr0", type=float, default=d.lr0)
    s.add_argument("--epoch-decay", type=float, default=d.epoch_decay)
    s.add_argument("--drop-decay", type=float, default=d.drop_decay)
    s.add_argument("--clip-norm", type=float, default=d.clip_norm)
    s.add_argument("--batch-size", type=_positive_int, default=d.batch_size)
    s.add_argument("--max-epochs", type=_positive_int, default=d.max_epochs)
    s.add_argument("--min-lr", type=float, default=d.min_lr)
    s.add_argument("--drop-reference", choices=["previous", "best"], default=d.drop_reference)
    s.add_argument("--seed", type=int, default=d.seed)
    s.add_argument("--out", required=True, help="checkpoint path")
    s.add_argument("--metrics", default=None, help="per-epoch JSONL metrics path")

    s = sub.add_parser("encode", help="encode one sentence per input line")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--input", required=True)
    s.add_argument("--out", required=True)

    s = sub.add_parser("eval", help="linear-probe transfer evaluation")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--tasks", required=True, help="directory of *.jsonl probe tasks")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--report", default=None, help="JSONL report path")

    s = sub.add_parser("gradcheck", help="finite-difference check of the full model")
    s.add_argument("--variant", choices=VARIANT_NAMES, default="sufisent")
    s.add_argument("--d", type=_positive_int, default=8)
    s.add_argument("--e", type=_positive_int, default=6)
    s.add_argument("--n", type=_positive_int, default=5)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--fc-dim", type=_positive_int, default=8)
    s.add_argument("--h", type=float, default=1e-6)
    s.add_argument("--tolerance", type=float, default=1e-5)
    s.add_argument("--corrupt-gradient", action="store_true", help="debug: perturb one analytic gradient")
    return p


# -- commands -----------------------------------------------------------------
def cmd_gen_toy(args) -> int:
    from .data import gen_toy_nli, write_snli

    if args.count < 3:
        raise UsageError("--count must be at least 3 so every label appears")
    _echo("gen-toy", {"seed": args.seed, "count": args.count, "out": args.out})
    examples = gen_toy_nli(args.seed, args.count)
    write_snli(args.out, examples)
    print(f"wrote {len(examples)} examples to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    from .checkpoint import save
    from .data import build_vocab, load_embeddings, parse_snli, random_embeddings
    from .encoder import EncoderConfig
    from .head import HeadConfig
    from .model import Model
    from .train import TrainConfig, TrainingError, fit

    try:
        enc_cfg = EncoderConfig(args.variant, args.d, args.e)
        head_cfg = HeadConfig(fc_dim=args.fc_dim, nonlinearity=args.nonlinearity)
        cfg = TrainConfig(lr0=args.lr0, epoch_decay=args.epoch_decay, drop_decay=args.drop_decay,
                          clip_norm=args.clip_norm, batch_size=args.batch_size, max_epochs=args.max_epochs,
                          min_lr=args.min_lr, seed=args.seed, drop_reference=args.drop_reference)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    _echo("train", {
        "encoder": enc_cfg.to_dict(), "encoding_dim": enc_cfg.encoding_dim,
        "head": {"fc_dim": head_cfg.fc_dim, "fc_layers": 2, "nonlinearity": head_cfg.nonlinearity},
        "train": cfg.to_dict(), "train_path": args.train, "val_path": args.val,
        "embeddings": args.embeddings, "train_embeddings": args.train_embeddings or args.embeddings is None,
        "min_count": args.min_count, "out": args.out, "metrics": args.metrics,
    })

    train, skipped_tr = parse_snli(args.train)
    val, skipped_va = parse_snli(args.val)
    print(f"train {len(train)} examples ({skipped_tr} skipped), val {len(val)} ({skipped_va} skipped)")
    vocab = build_vocab(train, min_count=args.min_count)
    if args.embeddings:
        emb = load_embeddings(args.embeddings, vocab, args.e, seed=args.seed, trainable=args.train_embeddings)
        found, total = emb.coverage
        print(f"embeddings: {found} of {total} vocabulary tokens pretrained")
    else:
        emb = random_embeddings(vocab, args.e, seed=args.seed, trainable=True)
    model = Model.init(enc_cfg, head_cfg, vocab, emb, seed=args.seed)

    def show(rep):
        print(f"epoch {rep.epoch:3d}  loss {rep.train_loss:.4f}  train {rep.train_acc:.4f}  "
              f"val {rep.val_acc:.4f}  lr {rep.lr:.6g}", flush=True)

    try:
        best, reports = fit(model, train, val, cfg, metrics_path=args.metrics, on_epoch=show)
    except TrainingError as exc:
        for rep in exc.reports[-1:]:
            print(f"last completed epoch: {rep.to_json()}")
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    save(args.out, best)
    print(f"best val accuracy {best.best_val_acc:.4f} after {len(reports)} epochs; checkpoint {args.out}")
    return EXIT_OK


def cmd_encode(args) -> int:
    from .checkpoint import load

    _echo("encode", {"checkpoint": args.checkpoint, "input": args.input, "out": args.out})
    model = load(args.checkpoint).to_model()
    with open(args.input, encoding="utf-8") as fh:
        sentences = [line.rstrip("\n") for line in fh]
    rows = model.encode_sentences(sentences)
    np.savetxt(args.out, rows.reshape(len(sentences), -1), fmt="%.17g")
    print(f"wrote {rows.shape[0]} encodings of dim {model.encoder_config.encoding_dim} to {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .checkpoint import load
    from .transfer import load_probe_tasks, run_transfer

    _echo("eval", {"checkpoint": args.checkpoint, "tasks": args.tasks, "seed": args.seed, "report": args.report})
    model = load(args.checkpoint).to_model()
    report = run_transfer(model, load_probe_tasks(args.tasks), seed=args.seed)
    if args.report:
        report.write(args.report)
    print(report.table())
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .gradcheck import check_pipeline

    _echo("gradcheck", {k: getattr(args, k) for k in
                        ("variant", "d", "e", "n", "seed", "fc_dim", "h", "tolerance", "corrupt_gradient")})
    report = check_pipeline(args.variant, args.d, args.e, args.n, seed=args.seed, fc_dim=args.fc_dim,
                            h=args.h, tolerance=args.tolerance, corrupt=args.corrupt_gradient)
    print(report.summary())
    return EXIT_OK if report.passed else EXIT_NUMERIC


COMMANDS = {"gen-toy": cmd_gen_toy, "train": cmd_train, "encode": cmd_encode,
            "eval": cmd_eval, "gradcheck": cmd_gradcheck}


def main(argv=None) -> int:
    from .autodiff import NonFiniteError
    from .checkpoint import CheckpointError
    from .data import DataError

    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "tolerance", 1.0) <= 0 or getattr(args, "h", 1.0) <= 0:
            raise UsageError("--h and --tolerance must be positive")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NonFiniteError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, CheckpointError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
