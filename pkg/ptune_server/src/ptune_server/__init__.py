"""Soft-prompt tuning on a small causal language model, served over HTTP.

The base model's weights stay frozen; only a trainable virtual-token prefix
(optionally re-encoded through an LSTM + MLP) receives gradient updates. The
server replaces the ``<VIRTUAL_PROMPT>`` marker in incoming prompts with the
learned prefix and decodes with nucleus sampling.
"""

__version__ = "0.1.0"
