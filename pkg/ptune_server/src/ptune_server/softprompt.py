"""Trainable virtual-token prefix and its optional LSTM + MLP re-encoder."""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
from torch import nn

VIRTUAL_MARKER = "<VIRTUAL_PROMPT>"
PROMPT_TEMPLATE = VIRTUAL_MARKER + " Input: {input}\n Output:{output}"

ENCODERS = ("lstm_mlp", "embedding_only")


@dataclass
class PTuneConfig:
    virtual_token_len: int = 50
    learning_rate: float = 0.0001
    global_batch_size: int = 64
    micro_batch_size: int = 8
    epochs: int = 20
    prompt_encoder: str = "lstm_mlp"
    base_model_id: str = "tiny-2x64"
    seed: int = 0

    def __post_init__(self):
        if self.virtual_token_len <= 0:
            raise ValueError("virtual_token_len must be > 0")
        if self.prompt_encoder not in ENCODERS:
            raise ValueError(f"prompt_encoder must be one of {ENCODERS}")
        if self.micro_batch_size <= 0 or self.global_batch_size <= 0:
            raise ValueError("batch sizes must be > 0")


@dataclass
class LossCurve:
    per_epoch: list[float] = field(default_factory=list)

    @property
    def first(self) -> float:
        return self.per_epoch[0]

    @property
    def final(self) -> float:
        return self.per_epoch[-1]


class SoftPrompt(nn.Module):
    """Virtual embeddings, optionally passed through an LSTM then a 2-layer MLP."""

    def __init__(self, length: int, hidden: int, encoder: str = "lstm_mlp", seed: int = 0):
        super().__init__()
        if encoder not in ENCODERS:
            raise ValueError(f"encoder must be one of {ENCODERS}")
        self.length = length
        self.hidden = hidden
        self.encoder = encoder
        state = torch.random.get_rng_state()
        torch.manual_seed(seed)
        self.virtual = nn.Parameter(torch.randn(length, hidden) * 0.5)
        if encoder == "lstm_mlp":
            self.lstm = nn.LSTM(hidden, hidden, num_layers=1, batch_first=True)
            self.mlp = nn.Sequential(
                nn.Linear(hidden, hidden), nn.ReLU(), nn.Linear(hidden, hidden)
            )
        torch.random.set_rng_state(state)

    def forward(self) -> torch.Tensor:
        """The [length, hidden] prefix actually prepended to inputs."""
        if self.encoder == "embedding_only":
            return self.virtual
        encoded, _ = self.lstm(self.virtual.unsqueeze(0))
        return self.mlp(encoded).squeeze(0)
