"""Shipped fixture data: a synthetic visit corpus and the concept lexicon."""

from pathlib import Path

_DATA_DIR = Path(__file__).resolve().parent


def fixture_corpus_path() -> Path:
    return _DATA_DIR / "fixture_corpus.jsonl"


def fixture_lexicon_path() -> Path:
    return _DATA_DIR / "fixture_lexicon.tsv"
