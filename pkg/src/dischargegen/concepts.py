"""Dictionary-driven extraction of PROBLEM / TREATMENT / TEST mentions.

The matcher scans word-token sequences (maximal runs of letters and digits;
punctuation and underscores act as boundaries) and takes the longest lexicon
phrase at each position, left to right. Matching is case-insensitive and
ignores how much whitespace or punctuation separates the words, while the
returned spans always point back into the original text. An HTTP protocol
with the same span schema lets a trained NER model replace the lexicon.
"""

from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import re

import requests

from .errors import LexiconError, RemoteProtocolError, RemoteUnavailableError
from .sections import AnySection, section_label

log = logging.getLogger(__name__)

_TOKEN = re.compile(r"[^\W_]+", re.UNICODE)

NORMALIZATION_RULE = "lower-token-seq-v1"


class ConceptType(enum.Enum):
    PROBLEM = "PROBLEM"
    TREATMENT = "TREATMENT"
    TEST = "TEST"


@dataclass(frozen=True)
class ConceptSpan:
    text: str
    ctype: ConceptType
    start: int
    end: int
    section: AnySection


def _key_tokens(surface: str) -> tuple[str, ...]:
    return tuple(m.group(0).lower() for m in _TOKEN.finditer(surface))


def normalize_surface(surface: str) -> str:
    """Canonical comparison key: lowercase word tokens joined by single spaces."""
    return " ".join(_key_tokens(surface))


@dataclass
class Lexicon:
    entries: dict[tuple[str, ...], ConceptType]
    normalization: str = NORMALIZATION_RULE
    max_phrase_tokens: int = field(init=False, default=0)

    def __post_init__(self):
        self.max_phrase_tokens = max((len(k) for k in self.entries), default=0)

    def __len__(self) -> int:
        return len(self.entries)

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, ConceptType]]) -> "Lexicon":
        entries: dict[tuple[str, ...], ConceptType] = {}
        for surface, ctype in pairs:
            key = _key_tokens(surface)
            if not key:
                raise LexiconError(f"empty lexicon surface form: {surface!r}")
            if key in entries and entries[key] is not ctype:
                raise LexiconError(
                    f"ambiguous lexicon entry {' '.join(key)!r}: "
                    f"{entries[key].value} vs {ctype.value}"
                )
            entries[key] = ctype
        return cls(entries=entries)

    @classmethod
    def load(cls, path: str | Path) -> "Lexicon":
        """Read a UTF-8 TSV with columns ``surface<TAB>type``."""
        pairs: list[tuple[str, ConceptType]] = []
        with open(path, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.rstrip("\n")
                if not line.strip():
                    continue
                cols = line.split("\t")
                if len(cols) != 2:
                    raise LexiconError(f"{path}:{lineno}: expected 2 tab-separated columns")
                surface, type_name = cols[0].strip(), cols[1].strip()
                try:
                    ctype = ConceptType(type_name)
                except ValueError:
                    raise LexiconError(
                        f"{path}:{lineno}: unknown concept type {type_name!r}"
                    ) from None
                if not surface:
                    raise LexiconError(f"{path}:{lineno}: empty surface form")
                pairs.append((surface, ctype))
        return cls.from_pairs(pairs)


def extract_concepts(text: str, section: AnySection, lexicon: Lexicon) -> list[ConceptSpan]:
    """All longest-match, non-overlapping lexicon hits, left to right."""
    if len(lexicon) == 0:
        raise LexiconError("extract_concepts requires a non-empty lexicon")
    tokens = list(_TOKEN.finditer(text))
    keys = [m.group(0).lower() for m in tokens]
    spans: list[ConceptSpan] = []
    i = 0
    n = len(tokens)
    while i < n:
        matched = 0
        for length in range(min(lexicon.max_phrase_tokens, n - i), 0, -1):
            key = tuple(keys[i : i + length])
            ctype = lexicon.entries.get(key)
            if ctype is not None:
                start = tokens[i].start()
                end = tokens[i + length - 1].end()
                spans.append(
                    ConceptSpan(text=text[start:end], ctype=ctype, start=start, end=end, section=section)
                )
                matched = length
                break
        i += matched if matched else 1
    return spans


def dedup_concepts(spans: Iterable[ConceptSpan]) -> list[str]:
    """Surface forms in first-occurrence order; duplicates compared case-insensitively."""
    seen: set[str] = set()
    out: list[str] = []
    for span in spans:
        key = normalize_surface(span.text)
        if key and key not in seen:
            seen.add(key)
            out.append(span.text)
    return out


def _validate_remote_span(item: Mapping, text: str, section: AnySection, index: int) -> ConceptSpan:
    try:
        surface = item["text"]
        type_name = item["type"]
        start = item["start"]
        end = item["end"]
    except (KeyError, TypeError):
        raise RemoteProtocolError(f"span #{index}: missing one of text/type/start/end") from None
    try:
        ctype = ConceptType(type_name)
    except ValueError:
        raise RemoteProtocolError(f"span #{index} ({surface!r}): unknown type {type_name!r}") from None
    if not (isinstance(start, int) and isinstance(end, int) and 0 <= start < end <= len(text)):
        raise RemoteProtocolError(
            f"span #{index} ({surface!r}): offsets [{start}, {end}) out of bounds for text of length {len(text)}"
        )
    if text[start:end] != surface:
        raise RemoteProtocolError(
            f"span #{index}: surface {surface!r} does not equal source slice {text[start:end]!r}"
        )
    return ConceptSpan(text=surface, ctype=ctype, start=start, end=end, section=section)


def remote_extract(
    text: str,
    section: AnySection,
    endpoint: str,
    *,
    timeout: float = 10.0,
    retries: int = 2,
    backoff: float = 0.5,
    session: requests.Session | None = None,
) -> list[ConceptSpan]:
    """POST the text to a concept-extraction service and validate its spans.

    Transport failures (timeouts, connection errors, 5xx) are retried with
    exponential backoff; after ``retries`` extra attempts the document fails
    with RemoteUnavailableError. Schema violations are never retried.
    """
    http = session or requests
    payload = {"text": text, "section": section_label(section)}
    last_error: Exception | None = None
    for attempt in range(retries + 1):
        if attempt:
            time.sleep(backoff * (2 ** (attempt - 1)))
        try:
            resp = http.post(endpoint, json=payload, timeout=timeout)
        except requests.RequestException as exc:
            last_error = exc
            continue
        if resp.status_code >= 500:
            last_error = RemoteUnavailableError(f"server error {resp.status_code}")
            continue
        if resp.status_code != 200:
            raise RemoteProtocolError(f"unexpected status {resp.status_code}: {resp.text[:200]}")
        try:
            body = resp.json()
            items = body["spans"]
        except (ValueError, KeyError, TypeError):
            raise RemoteProtocolError(f"malformed extraction response: {resp.text[:200]}") from None
        return [_validate_remote_span(item, text, section, i) for i, item in enumerate(items)]
    raise RemoteUnavailableError(f"extraction endpoint {endpoint} unreachable: {last_error}")
