"""Word-level tokenizer with a fixed vocabulary.

Tokens are word runs or single punctuation characters; unknown words map to
<unk>. The vocabulary is frozen when the base model is created, so its
embedding table never needs to grow.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

_TOKEN = re.compile(r"\w+|[^\w\s]")

PAD = "<pad>"
UNK = "<unk>"
EOS = "<eos>"
SPECIALS = (PAD, UNK, EOS)


def split_text(text: str) -> list[str]:
    return _TOKEN.findall(text)


@dataclass
class WordTokenizer:
    vocab: list[str]

    def __post_init__(self):
        self.index = {token: i for i, token in enumerate(self.vocab)}

    @classmethod
    def build(cls, texts: list[str]) -> "WordTokenizer":
        seen: dict[str, None] = {}
        for text in texts:
            for token in split_text(text):
                seen.setdefault(token, None)
        return cls(vocab=list(SPECIALS) + sorted(seen))

    @property
    def pad_id(self) -> int:
        return self.index[PAD]

    @property
    def unk_id(self) -> int:
        return self.index[UNK]

    @property
    def eos_id(self) -> int:
        return self.index[EOS]

    def __len__(self) -> int:
        return len(self.vocab)

    def encode(self, text: str) -> list[int]:
        unk = self.unk_id
        return [self.index.get(token, unk) for token in split_text(text)]

    def decode(self, ids: list[int]) -> str:
        words = [self.vocab[i] for i in ids if self.vocab[i] not in SPECIALS]
        return " ".join(words)
