"""HTTP generation server speaking the pipeline's /generate protocol.

The ``<VIRTUAL_PROMPT>`` marker in the incoming prompt is replaced by the
learned prefix embeddings; decoding is nucleus sampling with the requested
temperature and top-p. Prompts that would not fit the model context after
prefixing are rejected with a distinct 422 status so the caller can record a
per-document failure instead of retrying.
"""

from __future__ import annotations

import logging
import threading

import torch
from fastapi import FastAPI
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .model import TinyCausalLM
from .softprompt import SoftPrompt, VIRTUAL_MARKER
from .tokenizer import WordTokenizer

log = logging.getLogger("ptune_server")


class GenerateRequest(BaseModel):
    prompt: str
    temperature: float = 0.2
    top_p: float = 0.6
    max_new_tokens: int = 512
    seed: int | None = None


def nucleus_sample(
    logits: torch.Tensor, temperature: float, top_p: float, generator: torch.Generator
) -> int:
    """Sample one token id from the smallest set whose mass reaches top_p."""
    probs = torch.softmax(logits / max(temperature, 1e-6), dim=-1)
    sorted_probs, sorted_ids = torch.sort(probs, descending=True)
    cumulative = torch.cumsum(sorted_probs, dim=-1)
    keep = cumulative <= top_p
    keep[0] = True  # always keep the most likely token
    kept_probs = sorted_probs[keep]
    kept_ids = sorted_ids[keep]
    choice = torch.multinomial(kept_probs / kept_probs.sum(), 1, generator=generator)
    return int(kept_ids[choice])


class GenerationEngine:
    """Single-request-at-a-time wrapper around base model + soft prompt."""

    def __init__(self, model: TinyCausalLM, tokenizer: WordTokenizer, soft_prompt: SoftPrompt):
        self.model = model
        self.tokenizer = tokenizer
        self.soft_prompt = soft_prompt
        self.lock = threading.Lock()
        model.eval()
        soft_prompt.eval()

    def prompt_embeddings(self, prompt: str) -> torch.Tensor:
        """Prefix + token embeddings, with the marker replaced in place."""
        before, marker, after = prompt.partition(VIRTUAL_MARKER)
        if not marker:
            before, after = "", prompt
        with torch.no_grad():
            chunks = []
            if before:
                ids = torch.tensor(self.tokenizer.encode(before), dtype=torch.long)
                chunks.append(self.model.embed(ids))
            chunks.append(self.soft_prompt())
            if after:
                ids = torch.tensor(self.tokenizer.encode(after), dtype=torch.long)
                chunks.append(self.model.embed(ids))
        return torch.cat(chunks, dim=0)

    def generate(self, req: GenerateRequest) -> str:
        with self.lock, torch.no_grad():
            embeds = self.prompt_embeddings(req.prompt)
            if embeds.shape[0] + 1 > self.model.context:
                raise ContextOverflow(
                    f"prompt occupies {embeds.shape[0]} positions, "
                    f"context is {self.model.context}"
                )
            generator = torch.Generator()
            generator.manual_seed(req.seed if req.seed is not None else 0)
            produced: list[int] = []
            budget = min(req.max_new_tokens, self.model.context - embeds.shape[0])
            for _ in range(budget):
                logits = self.model(embeds.unsqueeze(0))[0, -1]
                token_id = nucleus_sample(logits, req.temperature, req.top_p, generator)
                if token_id == self.tokenizer.eos_id:
                    break
                produced.append(token_id)
                next_embed = self.model.embed(torch.tensor([token_id], dtype=torch.long))
                embeds = torch.cat([embeds, next_embed], dim=0)
            return self.tokenizer.decode(produced)


class ContextOverflow(Exception):
    pass


def create_app(engine: GenerationEngine) -> FastAPI:
    app = FastAPI(title="ptune-server")

    @app.get("/health")
    def health():
        return {
            "status": "ok",
            "model": engine.model.model_id,
            "virtual_token_len": engine.soft_prompt.length,
        }

    @app.post("/generate")
    def generate(req: GenerateRequest):
        log.info(
            "generate request: temperature=%s top_p=%s max_new_tokens=%s seed=%s",
            req.temperature,
            req.top_p,
            req.max_new_tokens,
            req.seed,
        )
        try:
            text = engine.generate(req)
        except ContextOverflow as exc:
            return JSONResponse(status_code=422, content={"error": "context_overflow", "detail": str(exc)})
        return {"text": text}

    return app
