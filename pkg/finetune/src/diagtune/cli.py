"""Command line: validate corpora, train the two stages, serve the result."""

import argparse
import json
import sys

from .training import TrainSpec, dry_run, toy_profile, train


def build_parser():
    parser = argparse.ArgumentParser(
        prog="diagtune",
        description="Train and serve the profile-defect diagnostic model.")
    subs = parser.add_subparsers(dest="command", required=True)

    for name in ("train", "dry-run"):
        cmd = subs.add_parser(name)
        cmd.add_argument("--pretrain", default=None,
                         help="pre-training corpus JSONL ({'text': ...})")
        cmd.add_argument("--finetune", default=None,
                         help="instruction corpus JSONL (four-part records)")
        cmd.add_argument("--profile", choices=["paper", "toy"],
                         default="toy",
                         help="'paper' mirrors the published settings; "
                              "'toy' sizes them for the built-in model")
        cmd.add_argument("--learning-rate", type=float, default=None)
        cmd.add_argument("--batch-size", type=int, default=None)
        cmd.add_argument("--epochs", type=int, default=1)
        cmd.add_argument("--max-steps", type=int, default=None)
        cmd.add_argument("--seed", type=int, default=0)
        cmd.add_argument("--output-dir", default="checkpoints")

    serve_cmd = subs.add_parser("serve")
    serve_cmd.add_argument("checkpoint")
    serve_cmd.add_argument("--host", default="127.0.0.1")
    serve_cmd.add_argument("--port", type=int, default=8711)
    return parser


def _spec(args) -> TrainSpec:
    base = toy_profile() if args.profile == "toy" else TrainSpec()
    overrides = {
        "pretrain_path": args.pretrain,
        "finetune_path": args.finetune,
        "epochs_pretrain": args.epochs,
        "epochs_finetune": args.epochs,
        "max_steps": args.max_steps,
        "seed": args.seed,
        "output_dir": args.output_dir,
    }
    if args.learning_rate is not None:
        overrides["learning_rate"] = args.learning_rate
    if args.batch_size is not None:
        overrides["batch_size"] = args.batch_size
    from dataclasses import replace
    return replace(base, **overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "serve":
        from .serve import serve
        serve(args.checkpoint, host=args.host, port=args.port)
        return 0
    try:
        spec = _spec(args)
        if args.command == "dry-run":
            print(json.dumps(dry_run(spec), indent=2, sort_keys=True))
            return 0
        result = train(spec)
        first = result.finetune_losses or result.pretrain_losses
        print(f"checkpoint: {result.checkpoint_path}")
        if first:
            print(f"loss: {first[0]:.4f} -> {first[-1]:.4f} "
                  f"over {len(first)} steps")
        return 0
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
