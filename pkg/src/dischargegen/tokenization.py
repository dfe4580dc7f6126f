"""Token counting and trimming used for input budgets and corpus statistics."""

from __future__ import annotations

import math
import re

_WS_TOKEN = re.compile(r"\S+")

MODES = ("whitespace", "chars4")


class BudgetTokenizer:
    """Counts and trims text under one of two budget schemes.

    "whitespace": a token is a maximal run of non-whitespace characters.
    "chars4": the count is estimated as ceil(len(text) / 4).
    """

    def __init__(self, mode: str = "whitespace"):
        if mode not in MODES:
            raise ValueError(f"unknown tokenizer mode {mode!r}, expected one of {MODES}")
        self.mode = mode

    def count(self, text: str) -> int:
        if not text:
            return 0
        if self.mode == "whitespace":
            return sum(1 for _ in _WS_TOKEN.finditer(text))
        return math.ceil(len(text) / 4)

    def trim(self, text: str, max_tokens: int) -> str:
        """Longest prefix of ``text``, cut at token granularity, counting <= max_tokens."""
        if max_tokens <= 0:
            return ""
        if self.count(text) <= max_tokens:
            return text
        if self.mode == "whitespace":
            spans = list(_WS_TOKEN.finditer(text))
            return text[: spans[max_tokens - 1].end()]
        return text[: max_tokens * 4]
