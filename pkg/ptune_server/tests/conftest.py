from __future__ import annotations

import pytest

from ptune_server.model import TinyCausalLM
from ptune_server.tokenizer import WordTokenizer
from ptune_server.training import load_pairs, pretrain_base, synthetic_corpus

PRETRAIN_STEPS = 1000


@pytest.fixture(scope="session")
def toy_pairs():
    import pathlib

    return load_pairs(pathlib.Path(__file__).resolve().parents[1] / "fixtures" / "toy_pairs.jsonl")


@pytest.fixture(scope="session")
def pretrained():
    """One shared pretrained base (order of magnitude: ten seconds on CPU)."""
    corpus = synthetic_corpus(seed=0)
    tokenizer = WordTokenizer.build(corpus)
    model = TinyCausalLM("tiny-2x64", vocab_size=len(tokenizer), seed=0)
    pretrain_base(model, tokenizer, corpus, steps=PRETRAIN_STEPS, seed=0)
    model.eval()
    return model, tokenizer
