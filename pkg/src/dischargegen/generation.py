"""Generation backends behind one request/response shape.

Three backends are provided: a deterministic mock (canned text per target),
an extractive baseline (first k sentences of the verbatim-selected sections),
and an HTTP client for any service speaking the POST /generate protocol. The
batch driver bounds concurrency, never lets one document abort the run, and
re-orders responses deterministically.
"""

from __future__ import annotations

import concurrent.futures
import csv
import re
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping

import requests

from .errors import (
    BackendConfigError,
    RemoteProtocolError,
    RemoteUnavailableError,
    SubmissionFormatError,
)
from .inputs import SelectionConfig, TargetSection, default_selection
from .sections import SegmentedNote, extract_section, find_first_canonical_header


@dataclass(frozen=True)
class GenerationParams:
    temperature: float = 0.2
    top_p: float = 0.6
    max_new_tokens: int = 512
    seed: int | None = None

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")
        if not (0 < self.top_p <= 1):
            raise ValueError("top_p must be in (0, 1]")
        if self.max_new_tokens <= 0:
            raise ValueError("max_new_tokens must be > 0")


@dataclass
class GenerationRequest:
    hadm_id: str
    target: TargetSection
    prompt: str
    params: GenerationParams = field(default_factory=GenerationParams)

    def __post_init__(self):
        if not self.prompt:
            raise ValueError("prompt must be non-empty")


@dataclass
class GenerationResponse:
    hadm_id: str
    target: TargetSection
    text: str
    backend_id: str
    latency_ms: int
    retries: int = 0


def _elapsed_ms(start: float) -> int:
    return max(0, int((time.perf_counter() - start) * 1000))


def generate_mock(req: GenerationRequest, canned: Mapping[TargetSection, str]) -> GenerationResponse:
    """Return the canned text for the request's target, verbatim."""
    start = time.perf_counter()
    if req.target not in canned:
        raise BackendConfigError(f"no canned output configured for target {req.target.value!r}")
    return GenerationResponse(
        hadm_id=req.hadm_id,
        target=req.target,
        text=canned[req.target],
        backend_id="mock",
        latency_ms=_elapsed_ms(start),
    )


_SENTENCE_BREAK = re.compile(r"(?<=\.)\s+|\n+")


def first_sentences(text: str, k: int) -> str:
    parts = [p.strip() for p in _SENTENCE_BREAK.split(text) if p and p.strip()]
    return " ".join(parts[:k])


def generate_extractive(
    req: GenerationRequest,
    note: SegmentedNote,
    k: int,
    cfg: SelectionConfig | None = None,
) -> GenerationResponse:
    """First k sentences of the concatenated verbatim-selected sections."""
    if k < 1:
        raise ValueError("k must be >= 1")
    start = time.perf_counter()
    sel = (cfg or default_selection()).for_target(req.target)
    bodies = []
    for section in sel.verbatim_sections:
        body = extract_section(note, section)
        if body:
            bodies.append(body)
    return GenerationResponse(
        hadm_id=req.hadm_id,
        target=req.target,
        text=first_sentences("\n".join(bodies), k),
        backend_id="extractive",
        latency_ms=_elapsed_ms(start),
    )


def postprocess_generated(text: str) -> str:
    """Strip padding whitespace and cut run-on output at the next section header."""
    cut = find_first_canonical_header(text)
    if cut is not None:
        text = text[:cut]
    return text.strip()


def _truncate_words(text: str, max_tokens: int) -> str:
    words = text.split()
    if len(words) <= max_tokens:
        return text
    spans = list(re.finditer(r"\S+", text))
    return text[: spans[max_tokens - 1].end()]


def generate_remote(
    req: GenerationRequest,
    endpoint: str,
    *,
    timeout: float = 60.0,
    retries: int = 2,
    backoff: float = 0.5,
    session: requests.Session | None = None,
) -> GenerationResponse:
    """POST the prompt to a /generate service and normalize its answer.

    Timeouts, connection errors, and 5xx answers are retried with exponential
    backoff. Other non-200 statuses (for example a context-overflow rejection)
    fail the document immediately. A leading echo of the prompt is stripped,
    and output longer than max_new_tokens (whitespace words) is cut.
    """
    http = session or requests
    payload = {
        "prompt": req.prompt,
        "temperature": req.params.temperature,
        "top_p": req.params.top_p,
        "max_new_tokens": req.params.max_new_tokens,
        "seed": req.params.seed,
    }
    start = time.perf_counter()
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
            raise RemoteProtocolError(
                f"generation rejected with status {resp.status_code}: {resp.text[:200]}"
            )
        try:
            text = resp.json()["text"]
        except (ValueError, KeyError, TypeError):
            raise RemoteProtocolError(f"malformed generation response: {resp.text[:200]}") from None
        if not isinstance(text, str):
            raise RemoteProtocolError("generation response 'text' must be a string")
        if text.startswith(req.prompt):
            text = text[len(req.prompt) :]
        text = _truncate_words(postprocess_generated(text), req.params.max_new_tokens)
        return GenerationResponse(
            hadm_id=req.hadm_id,
            target=req.target,
            text=text,
            backend_id=f"remote:{endpoint}",
            latency_ms=_elapsed_ms(start),
            retries=attempt,
        )
    raise RemoteUnavailableError(f"generation endpoint {endpoint} unreachable: {last_error}")


@dataclass
class DocumentOutcome:
    hadm_id: str
    target: TargetSection
    status: str  # "ok" | "failed"
    error: str | None = None
    retries: int = 0
    latency_ms: int = 0


def run_generation(
    requests_: Iterable[GenerationRequest],
    backend: Callable[[GenerationRequest], GenerationResponse],
    max_workers: int = 4,
) -> tuple[list[GenerationResponse], list[DocumentOutcome]]:
    """Drive the backend over all requests with bounded concurrency.

    Every (hadm_id, target) pair appears in the outcome list exactly once;
    failures are recorded per document and never abort the batch. Both result
    lists come back sorted by (hadm_id, target).
    """
    reqs = list(requests_)
    responses: list[GenerationResponse] = []
    outcomes: list[DocumentOutcome] = []
    with concurrent.futures.ThreadPoolExecutor(max_workers=max(1, max_workers)) as pool:
        futures = {pool.submit(backend, req): req for req in reqs}
        for future in concurrent.futures.as_completed(futures):
            req = futures[future]
            try:
                resp = future.result()
            except Exception as exc:  # per-document isolation
                outcomes.append(
                    DocumentOutcome(
                        hadm_id=req.hadm_id,
                        target=req.target,
                        status="failed",
                        error=f"{type(exc).__name__}: {exc}",
                    )
                )
                continue
            responses.append(resp)
            outcomes.append(
                DocumentOutcome(
                    hadm_id=req.hadm_id,
                    target=req.target,
                    status="ok",
                    retries=resp.retries,
                    latency_ms=resp.latency_ms,
                )
            )
    order = lambda item: (item.hadm_id, item.target.value)
    responses.sort(key=order)
    outcomes.sort(key=order)
    return responses, outcomes


SUBMISSION_COLUMNS = ("hadm_id", "brief_hospital_course", "discharge_instructions")


def write_submission(
    responses: Iterable[GenerationResponse],
    path: str | Path,
    all_hadm_ids: Iterable[str] | None = None,
) -> int:
    """Write the submission CSV (one row per visit, RFC-4180 quoting).

    Missing generations leave their cell empty; ``all_hadm_ids`` forces a row
    even for visits whose generations all failed. Returns the row count.
    """
    by_visit: dict[str, dict[str, str]] = {}
    for hadm_id in all_hadm_ids or ():
        by_visit.setdefault(hadm_id, {})
    for resp in responses:
        by_visit.setdefault(resp.hadm_id, {})[resp.target.value] = resp.text
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUBMISSION_COLUMNS)
        for hadm_id in sorted(by_visit):
            row = by_visit[hadm_id]
            writer.writerow(
                [
                    hadm_id,
                    row.get(TargetSection.BRIEF_HOSPITAL_COURSE.value, ""),
                    row.get(TargetSection.DISCHARGE_INSTRUCTIONS.value, ""),
                ]
            )
    return len(by_visit)


def read_submission(path: str | Path) -> list[dict[str, str]]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != list(SUBMISSION_COLUMNS):
            raise SubmissionFormatError(
                f"submission header must be {','.join(SUBMISSION_COLUMNS)}, got {reader.fieldnames}"
            )
        return list(reader)
