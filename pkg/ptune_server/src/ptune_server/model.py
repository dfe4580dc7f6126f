"""A small causal transformer language model with an embedding-input path.

The head is tied to the token embedding, so freezing the model freezes the
output projection as well. ``forward`` accepts pre-computed input embeddings,
which is how the virtual-token prefix is injected ahead of real tokens.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import torch
from torch import nn


@dataclass(frozen=True)
class ModelSpec:
    hidden: int
    layers: int
    heads: int
    context: int
    ffn: int


MODEL_REGISTRY: dict[str, ModelSpec] = {
    "tiny-2x64": ModelSpec(hidden=64, layers=2, heads=4, context=512, ffn=256),
    "small-4x128": ModelSpec(hidden=128, layers=4, heads=4, context=512, ffn=512),
    "micro-1x16": ModelSpec(hidden=16, layers=1, heads=2, context=128, ffn=32),
}


def get_spec(model_id: str) -> ModelSpec:
    try:
        return MODEL_REGISTRY[model_id]
    except KeyError:
        raise KeyError(
            f"unknown base model id {model_id!r}; known: {sorted(MODEL_REGISTRY)}"
        ) from None


class Block(nn.Module):
    def __init__(self, spec: ModelSpec):
        super().__init__()
        self.ln1 = nn.LayerNorm(spec.hidden)
        self.attn = nn.MultiheadAttention(spec.hidden, spec.heads, batch_first=True)
        self.ln2 = nn.LayerNorm(spec.hidden)
        self.mlp = nn.Sequential(
            nn.Linear(spec.hidden, spec.ffn),
            nn.GELU(),
            nn.Linear(spec.ffn, spec.hidden),
        )

    def forward(self, x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        h = self.ln1(x)
        attn_out, _ = self.attn(h, h, h, attn_mask=mask, need_weights=False)
        x = x + attn_out
        return x + self.mlp(self.ln2(x))


class TinyCausalLM(nn.Module):
    def __init__(self, model_id: str, vocab_size: int, seed: int = 0):
        super().__init__()
        spec = get_spec(model_id)
        self.model_id = model_id
        self.spec = spec
        self.vocab_size = vocab_size
        generator_state = torch.random.get_rng_state()
        torch.manual_seed(seed)
        self.tok_emb = nn.Embedding(vocab_size, spec.hidden)
        self.pos_emb = nn.Embedding(spec.context, spec.hidden)
        self.blocks = nn.ModuleList(Block(spec) for _ in range(spec.layers))
        self.ln_f = nn.LayerNorm(spec.hidden)
        with torch.no_grad():
            self.tok_emb.weight.mul_(0.5)
            self.pos_emb.weight.mul_(0.1)
        torch.random.set_rng_state(generator_state)

    @property
    def hidden(self) -> int:
        return self.spec.hidden

    @property
    def context(self) -> int:
        return self.spec.context

    def embed(self, ids: torch.Tensor) -> torch.Tensor:
        return self.tok_emb(ids)

    def forward(self, inputs_embeds: torch.Tensor) -> torch.Tensor:
        """[batch, seq, hidden] embeddings -> [batch, seq, vocab] logits."""
        batch, seq, _ = inputs_embeds.shape
        if seq > self.spec.context:
            raise ValueError(f"sequence of {seq} tokens exceeds context {self.spec.context}")
        positions = torch.arange(seq, device=inputs_embeds.device)
        x = inputs_embeds + self.pos_emb(positions)[None, :, :]
        mask = torch.triu(
            torch.full((seq, seq), float("-inf"), dtype=inputs_embeds.dtype), diagonal=1
        )
        for block in self.blocks:
            x = block(x, mask)
        x = self.ln_f(x)
        return x @ self.tok_emb.weight.t() / math.sqrt(self.spec.hidden)

    def freeze(self) -> None:
        for param in self.parameters():
            param.requires_grad_(False)


def state_checksum(module: nn.Module) -> str:
    """Order-stable digest of every parameter and buffer."""
    digest = hashlib.sha256()
    state = module.state_dict()
    for name in sorted(state):
        digest.update(name.encode("utf-8"))
        tensor = state[name].detach().cpu().contiguous()
        digest.update(str(tensor.dtype).encode("utf-8"))
        digest.update(tensor.numpy().tobytes())
    return digest.hexdigest()
