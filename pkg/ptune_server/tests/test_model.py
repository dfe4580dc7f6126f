import pytest
import torch

from ptune_server.model import MODEL_REGISTRY, TinyCausalLM, get_spec, state_checksum
from ptune_server.softprompt import SoftPrompt
from ptune_server.tokenizer import WordTokenizer
from ptune_server.training import _batch_loss, encode_pair


def test_registry_lookup():
    assert get_spec("tiny-2x64").hidden == 64
    with pytest.raises(KeyError, match="unknown base model id"):
        get_spec("gpt-20b")
    assert "micro-1x16" in MODEL_REGISTRY


def test_seeded_init_is_deterministic():
    a = TinyCausalLM("micro-1x16", vocab_size=32, seed=5)
    b = TinyCausalLM("micro-1x16", vocab_size=32, seed=5)
    c = TinyCausalLM("micro-1x16", vocab_size=32, seed=6)
    assert state_checksum(a) == state_checksum(b)
    assert state_checksum(a) != state_checksum(c)


def test_forward_shape_and_context_limit():
    model = TinyCausalLM("micro-1x16", vocab_size=32, seed=0)
    ids = torch.randint(0, 32, (2, 10))
    logits = model(model.embed(ids))
    assert logits.shape == (2, 10, 32)
    too_long = torch.randint(0, 32, (1, model.context + 1))
    with pytest.raises(ValueError, match="exceeds context"):
        model(model.embed(too_long))


def test_causality():
    model = TinyCausalLM("micro-1x16", vocab_size=32, seed=0)
    model.eval()
    ids = torch.randint(0, 32, (1, 12))
    with torch.no_grad():
        base = model(model.embed(ids))
        changed = ids.clone()
        changed[0, -1] = (changed[0, -1] + 1) % 32
        other = model(model.embed(changed))
    # Changing the last token must not affect logits at earlier positions.
    assert torch.allclose(base[0, :-1], other[0, :-1], atol=1e-5)
    assert not torch.allclose(base[0, -1], other[0, -1], atol=1e-5)


def _micro_setup():
    corpus = ["alpha bravo take the tablet", "echo golf drink water today"]
    tokenizer = WordTokenizer.build(corpus)
    model = TinyCausalLM("micro-1x16", vocab_size=len(tokenizer), seed=1).double()
    model.freeze()
    soft_prompt = SoftPrompt(length=4, hidden=16, encoder="lstm_mlp", seed=2).double()
    pairs = [encode_pair(tokenizer, "alpha bravo", "take the tablet")]
    return model, tokenizer, soft_prompt, pairs


def test_gradient_matches_central_finite_differences():
    model, tokenizer, soft_prompt, pairs = _micro_setup()
    loss = _batch_loss(model, soft_prompt, tokenizer, pairs)
    (grad,) = torch.autograd.grad(loss, soft_prompt.virtual)

    h = 1e-5
    checked = 0
    for i, j in ((0, 0), (1, 5), (3, 15)):
        with torch.no_grad():
            soft_prompt.virtual[i, j] += h
            up = _batch_loss(model, soft_prompt, tokenizer, pairs).item()
            soft_prompt.virtual[i, j] -= 2 * h
            down = _batch_loss(model, soft_prompt, tokenizer, pairs).item()
            soft_prompt.virtual[i, j] += h
        numeric = (up - down) / (2 * h)
        analytic = grad[i, j].item()
        assert numeric == pytest.approx(analytic, rel=1e-3, abs=1e-8), (i, j)
        checked += 1
    assert checked == 3


def test_soft_prompt_shapes_and_encoders():
    for encoder in ("lstm_mlp", "embedding_only"):
        sp = SoftPrompt(length=50, hidden=16, encoder=encoder, seed=0)
        assert sp().shape == (50, 16)
    with pytest.raises(ValueError):
        SoftPrompt(length=4, hidden=8, encoder="conv")


def test_embedding_only_prefix_is_the_parameter():
    sp = SoftPrompt(length=3, hidden=8, encoder="embedding_only", seed=0)
    assert torch.equal(sp(), sp.virtual)
