"""Command line for pretraining the base model, p-tuning, and serving."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .model import MODEL_REGISTRY, TinyCausalLM, state_checksum
from .softprompt import PTuneConfig, SoftPrompt
from .tokenizer import WordTokenizer
from .training import (
    load_base,
    load_pairs,
    load_soft_prompt,
    pretrain_base,
    save_base,
    save_soft_prompt,
    synthetic_corpus,
    train_soft_prompt,
)


def cmd_pretrain(args) -> int:
    if args.corpus:
        corpus = [l for l in Path(args.corpus).read_text(encoding="utf-8").splitlines() if l.strip()]
    else:
        corpus = synthetic_corpus(seed=args.seed)
    tokenizer = WordTokenizer.build(corpus)
    model = TinyCausalLM(args.model, vocab_size=len(tokenizer), seed=args.seed)
    losses = pretrain_base(model, tokenizer, corpus, steps=args.steps, seed=args.seed)
    save_base(model, tokenizer, args.out, seed=args.seed)
    print(
        f"pretrained {args.model} (vocab {len(tokenizer)}) for {args.steps} steps: "
        f"loss {losses[0]:.3f} -> {losses[-1]:.3f}; saved to {args.out}"
    )
    return 0


def cmd_train(args) -> int:
    model, tokenizer = load_base(args.base)
    pairs = load_pairs(args.pairs)
    cfg = PTuneConfig(
        virtual_token_len=args.virtual_tokens,
        learning_rate=args.lr,
        epochs=args.epochs,
        prompt_encoder=args.encoder,
        base_model_id=model.model_id,
        seed=args.seed,
    )
    soft_prompt, curve = train_soft_prompt(cfg, pairs, model, tokenizer)
    save_soft_prompt(soft_prompt, cfg, state_checksum(model), args.out, curve)
    print(
        f"p-tuned on {len(pairs)} pairs for {cfg.epochs} epochs: "
        f"loss {curve.first:.3f} -> {curve.final:.3f} nats/token; saved to {args.out}"
    )
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .server import GenerationEngine, create_app

    logging.basicConfig(level=logging.INFO)
    model, tokenizer = load_base(args.base)
    if args.ckpt:
        soft_prompt, cfg, base_checksum = load_soft_prompt(args.ckpt, hidden=model.hidden)
        if base_checksum != state_checksum(model):
            print("warning: checkpoint was trained against a different base model", file=sys.stderr)
    else:
        soft_prompt = SoftPrompt(length=args.virtual_tokens, hidden=model.hidden, seed=0)
    engine = GenerationEngine(model, tokenizer, soft_prompt)
    app = create_app(engine)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ptune-server")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pretrain", help="train a fresh base model on a text corpus")
    p.add_argument("--model", default="tiny-2x64", choices=sorted(MODEL_REGISTRY))
    p.add_argument("--corpus", help="one training line per row (default: built-in synthetic corpus)")
    p.add_argument("--steps", type=int, default=300)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("train", help="p-tune a soft prompt against a frozen base")
    p.add_argument("--base", required=True)
    p.add_argument("--pairs", required=True, help="JSONL with input/output fields")
    p.add_argument("--out", required=True)
    p.add_argument("--virtual-tokens", type=int, default=50)
    p.add_argument("--lr", type=float, default=0.02, help="desk-scale default; config default is 1e-4")
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--encoder", default="lstm_mlp", choices=("lstm_mlp", "embedding_only"))
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("serve", help="serve /generate and /health")
    p.add_argument("--base", required=True)
    p.add_argument("--ckpt", help="soft-prompt checkpoint (default: untrained prompt)")
    p.add_argument("--virtual-tokens", type=int, default=50)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8023)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


def cli_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    cli_entry()
