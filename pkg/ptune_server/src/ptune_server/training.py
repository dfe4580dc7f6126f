"""Base-model pretraining (desk scale) and the soft-prompt training loop.

During p-tuning every base parameter is frozen; the optimizer sees only the
soft-prompt tensors, and the cross-entropy loss is computed exclusively on
the positions that predict output tokens.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import asdict, dataclass
from pathlib import Path

import torch
from torch import nn
from torch.nn import functional as F

from .model import TinyCausalLM, state_checksum
from .softprompt import LossCurve, PROMPT_TEMPLATE, PTuneConfig, SoftPrompt, VIRTUAL_MARKER
from .tokenizer import WordTokenizer

# Vocabulary shared by the synthetic pretraining corpus and the toy pairs.
_INPUT_WORDS = [
    "alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel",
    "india", "juliet", "kilo", "lima",
]
_OUTPUT_WORDS = [
    "take", "the", "white", "tablet", "every", "morning", "walk", "twice",
    "around", "garden", "daily", "drink", "water", "with", "meal", "today",
    "rest", "quietly", "and", "avoid", "heavy", "lifting", "small", "sips",
    "keep", "legs", "raised", "evening",
]


def synthetic_corpus(seed: int = 0, lines: int = 400) -> list[str]:
    """Template-shaped lines over the toy vocabulary (random pairings)."""
    rng = random.Random(seed)
    corpus = []
    for _ in range(lines):
        inp = " ".join(rng.choice(_INPUT_WORDS) for _ in range(rng.randint(1, 3)))
        out = " ".join(rng.choice(_OUTPUT_WORDS) for _ in range(rng.randint(3, 7)))
        corpus.append(PROMPT_TEMPLATE.replace(VIRTUAL_MARKER, "").format(input=inp, output=out))
    return corpus


@dataclass
class EncodedPair:
    context_ids: list[int]  # template + input tokens, before the output
    output_ids: list[int]  # output tokens plus <eos>


def encode_pair(tokenizer: WordTokenizer, input_text: str, output_text: str) -> EncodedPair:
    body = PROMPT_TEMPLATE.replace(VIRTUAL_MARKER, "")
    context_part = body.split("{output}")[0].format(input=input_text)
    return EncodedPair(
        context_ids=tokenizer.encode(context_part),
        output_ids=tokenizer.encode(output_text) + [tokenizer.eos_id],
    )


def _batch_loss(
    model: TinyCausalLM,
    soft_prompt: SoftPrompt,
    tokenizer: WordTokenizer,
    pairs: list[EncodedPair],
) -> torch.Tensor:
    """Mean cross-entropy (nats per output token) over a batch of pairs."""
    prefix = soft_prompt()
    prefix_len = prefix.shape[0]
    rows = []
    targets = []
    max_len = max(prefix_len + len(p.context_ids) + len(p.output_ids) for p in pairs)
    for pair in pairs:
        ids = pair.context_ids + pair.output_ids
        pad = max_len - prefix_len - len(ids)
        ids_tensor = torch.tensor(ids + [tokenizer.pad_id] * pad, dtype=torch.long)
        embeds = torch.cat([prefix, model.embed(ids_tensor)], dim=0)
        rows.append(embeds)
        # Position t predicts the token at t+1; label only positions whose
        # next token belongs to the output span.
        target = torch.full((max_len,), -100, dtype=torch.long)
        out_start = prefix_len + len(pair.context_ids)
        for offset, token_id in enumerate(pair.output_ids):
            target[out_start + offset - 1] = token_id
        targets.append(target)
    batch = torch.stack(rows)
    logits = model(batch)
    target = torch.stack(targets)
    return F.cross_entropy(
        logits.reshape(-1, model.vocab_size), target.reshape(-1), ignore_index=-100
    )


def pretrain_base(
    model: TinyCausalLM,
    tokenizer: WordTokenizer,
    corpus: list[str],
    steps: int = 300,
    lr: float = 3e-3,
    batch_size: int = 16,
    seed: int = 0,
) -> list[float]:
    """Plain next-token training of all base parameters on a text corpus."""
    rng = random.Random(seed)
    encoded = [tokenizer.encode(line) + [tokenizer.eos_id] for line in corpus]
    optimizer = torch.optim.Adam(model.parameters(), lr=lr)
    losses = []
    model.train()
    for _ in range(steps):
        batch_ids = [rng.choice(encoded) for _ in range(batch_size)]
        max_len = max(len(ids) for ids in batch_ids)
        ids = torch.full((batch_size, max_len), tokenizer.pad_id, dtype=torch.long)
        target = torch.full((batch_size, max_len), -100, dtype=torch.long)
        for row, seq in enumerate(batch_ids):
            ids[row, : len(seq)] = torch.tensor(seq, dtype=torch.long)
            target[row, : len(seq)] = torch.tensor(seq, dtype=torch.long)
        logits = model(model.embed(ids))
        loss = F.cross_entropy(
            logits[:, :-1, :].reshape(-1, model.vocab_size),
            target[:, 1:].reshape(-1),
            ignore_index=-100,
        )
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        losses.append(loss.item())
    model.eval()
    return losses


def train_soft_prompt(
    cfg: PTuneConfig,
    dataset: list[tuple[str, str]],
    model: TinyCausalLM,
    tokenizer: WordTokenizer,
) -> tuple[SoftPrompt, LossCurve]:
    """P-tune: freeze the base, optimize only the soft-prompt parameters."""
    if not dataset:
        raise ValueError("dataset must be non-empty")
    model.freeze()
    model.eval()
    checksum_before = state_checksum(model)

    soft_prompt = SoftPrompt(
        length=cfg.virtual_token_len,
        hidden=model.hidden,
        encoder=cfg.prompt_encoder,
        seed=cfg.seed,
    )
    pairs = [encode_pair(tokenizer, inp, out) for inp, out in dataset]
    longest = cfg.virtual_token_len + max(len(p.context_ids) + len(p.output_ids) for p in pairs)
    if longest > model.context:
        raise ValueError(f"longest encoded pair ({longest} tokens) exceeds model context")

    optimizer = torch.optim.Adam(soft_prompt.parameters(), lr=cfg.learning_rate)
    accumulation = max(1, math.ceil(cfg.global_batch_size / cfg.micro_batch_size))
    rng = random.Random(cfg.seed)
    curve = LossCurve()
    for _ in range(cfg.epochs):
        order = list(range(len(pairs)))
        rng.shuffle(order)
        epoch_losses = []
        optimizer.zero_grad()
        pending = 0
        for start in range(0, len(order), cfg.micro_batch_size):
            micro = [pairs[i] for i in order[start : start + cfg.micro_batch_size]]
            loss = _batch_loss(model, soft_prompt, tokenizer, micro)
            (loss / accumulation).backward()
            epoch_losses.append(loss.item())
            pending += 1
            if pending == accumulation:
                optimizer.step()
                optimizer.zero_grad()
                pending = 0
        if pending:
            optimizer.step()
            optimizer.zero_grad()
        curve.per_epoch.append(sum(epoch_losses) / len(epoch_losses))

    if state_checksum(model) != checksum_before:
        raise RuntimeError("base model parameters changed during p-tuning")
    return soft_prompt, curve


def evaluate_loss(
    model: TinyCausalLM,
    soft_prompt: SoftPrompt,
    tokenizer: WordTokenizer,
    dataset: list[tuple[str, str]],
) -> float:
    pairs = [encode_pair(tokenizer, inp, out) for inp, out in dataset]
    with torch.no_grad():
        return _batch_loss(model, soft_prompt, tokenizer, pairs).item()


# ---------------------------------------------------------------------------
# Archives
# ---------------------------------------------------------------------------


def save_base(model: TinyCausalLM, tokenizer: WordTokenizer, path: str | Path, seed: int = 0) -> None:
    torch.save(
        {
            "model_id": model.model_id,
            "vocab": tokenizer.vocab,
            "state_dict": model.state_dict(),
            "seed": seed,
        },
        path,
    )


def load_base(path: str | Path) -> tuple[TinyCausalLM, WordTokenizer]:
    payload = torch.load(path, map_location="cpu", weights_only=True)
    tokenizer = WordTokenizer(vocab=list(payload["vocab"]))
    model = TinyCausalLM(payload["model_id"], vocab_size=len(tokenizer), seed=payload["seed"])
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, tokenizer


def save_soft_prompt(
    soft_prompt: SoftPrompt,
    cfg: PTuneConfig,
    base_checksum: str,
    path: str | Path,
    curve: LossCurve | None = None,
) -> None:
    torch.save(
        {
            "config": asdict(cfg),
            "state_dict": soft_prompt.state_dict(),
            "base_checksum": base_checksum,
            "loss_curve": curve.per_epoch if curve else [],
        },
        path,
    )


def load_soft_prompt(path: str | Path, hidden: int) -> tuple[SoftPrompt, PTuneConfig, str]:
    payload = torch.load(path, map_location="cpu", weights_only=True)
    cfg = PTuneConfig(**payload["config"])
    soft_prompt = SoftPrompt(
        length=cfg.virtual_token_len, hidden=hidden, encoder=cfg.prompt_encoder, seed=cfg.seed
    )
    soft_prompt.load_state_dict(payload["state_dict"])
    soft_prompt.eval()
    return soft_prompt, cfg, payload["base_checksum"]


def load_pairs(path: str | Path) -> list[tuple[str, str]]:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            record = json.loads(line)
            try:
                pairs.append((record["input"], record["output"]))
            except (KeyError, TypeError):
                raise ValueError(f"{path}:{lineno}: expected keys 'input' and 'output'") from None
    return pairs
