"""Loading, validation, and length statistics for the visit corpus.

A corpus file is UTF-8 JSON-lines with one visit per line and exactly these
keys: "hadm_id", "note_text", "radiology_reports" (array of strings),
"ed_diagnoses" (array of {"icd_code", "icd_version", "long_title"} with
icd_version 9 or 10), and "chief_complaint_ed" (string or null). Files carry
no split marker; the caller names the split they were loaded from.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .errors import CorpusFormatError
from .sections import SectionName, extract_section, segment
from .tokenization import BudgetTokenizer


class Split(enum.Enum):
    TRAIN = "train"
    VALID = "valid"
    TEST_PHASE_1 = "test_phase_1"
    TEST_PHASE_2 = "test_phase_2"


class IcdVersion(enum.IntEnum):
    ICD9 = 9
    ICD10 = 10


@dataclass(frozen=True)
class Diagnosis:
    icd_code: str
    icd_version: IcdVersion
    long_title: str


@dataclass(frozen=True)
class Visit:
    hadm_id: str
    note_text: str
    radiology_reports: tuple[str, ...]
    ed_diagnoses: tuple[Diagnosis, ...]
    chief_complaint_ed: str | None
    split: Split


_VISIT_KEYS = {"hadm_id", "note_text", "radiology_reports", "ed_diagnoses", "chief_complaint_ed"}
_DIAGNOSIS_KEYS = {"icd_code", "icd_version", "long_title"}


def _parse_diagnosis(obj, where: str) -> Diagnosis:
    if not isinstance(obj, dict) or set(obj) != _DIAGNOSIS_KEYS:
        raise CorpusFormatError(f"{where}: diagnosis must have exactly keys {sorted(_DIAGNOSIS_KEYS)}")
    code = obj["icd_code"]
    if not isinstance(code, str) or not code:
        raise CorpusFormatError(f"{where}: icd_code must be a non-empty string")
    try:
        version = IcdVersion(obj["icd_version"])
    except (ValueError, TypeError):
        raise CorpusFormatError(f"{where}: icd_version must be 9 or 10") from None
    title = obj["long_title"]
    if not isinstance(title, str):
        raise CorpusFormatError(f"{where}: long_title must be a string")
    return Diagnosis(icd_code=code, icd_version=version, long_title=title)


def _parse_visit(obj, split: Split, where: str) -> Visit:
    if not isinstance(obj, dict):
        raise CorpusFormatError(f"{where}: record must be a JSON object")
    missing = _VISIT_KEYS - set(obj)
    if missing:
        raise CorpusFormatError(f"{where}: missing required field(s) {sorted(missing)}")
    extra = set(obj) - _VISIT_KEYS
    if extra:
        raise CorpusFormatError(f"{where}: unknown field(s) {sorted(extra)}")
    hadm_id = obj["hadm_id"]
    if not isinstance(hadm_id, str) or not hadm_id:
        raise CorpusFormatError(f"{where}: hadm_id must be a non-empty string")
    note_text = obj["note_text"]
    if not isinstance(note_text, str) or not note_text:
        raise CorpusFormatError(f"{where}: note_text must be a non-empty string")
    reports = obj["radiology_reports"]
    if not isinstance(reports, list) or not reports or not all(isinstance(r, str) for r in reports):
        raise CorpusFormatError(f"{where}: radiology_reports must be a non-empty array of strings")
    raw_dx = obj["ed_diagnoses"]
    if not isinstance(raw_dx, list):
        raise CorpusFormatError(f"{where}: ed_diagnoses must be an array")
    diagnoses = tuple(_parse_diagnosis(d, where) for d in raw_dx)
    chief = obj["chief_complaint_ed"]
    if chief is not None and not isinstance(chief, str):
        raise CorpusFormatError(f"{where}: chief_complaint_ed must be a string or null")
    return Visit(
        hadm_id=hadm_id,
        note_text=note_text,
        radiology_reports=tuple(reports),
        ed_diagnoses=diagnoses,
        chief_complaint_ed=chief,
        split=split,
    )


def load_corpus(path: str | Path, split: Split) -> list[Visit]:
    """Load one split file; ordering is preserved and invariants are enforced."""
    visits: list[Visit] = []
    seen: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            where = f"{path}: line {lineno}"
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"{where}: invalid JSON ({exc.msg})") from None
            visit = _parse_visit(obj, split, where)
            first = seen.get(visit.hadm_id)
            if first is not None:
                raise CorpusFormatError(
                    f"{path}: duplicate hadm_id {visit.hadm_id!r} on lines {first} and {lineno}"
                )
            seen[visit.hadm_id] = lineno
            visits.append(visit)
    return visits


def visit_to_record(visit: Visit) -> dict:
    return {
        "hadm_id": visit.hadm_id,
        "note_text": visit.note_text,
        "radiology_reports": list(visit.radiology_reports),
        "ed_diagnoses": [
            {"icd_code": d.icd_code, "icd_version": int(d.icd_version), "long_title": d.long_title}
            for d in visit.ed_diagnoses
        ],
        "chief_complaint_ed": visit.chief_complaint_ed,
    }


def dump_corpus(visits: Iterable[Visit], path: str | Path) -> None:
    """Write visits back out in the line schema (splits live in file layout)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for visit in visits:
            fh.write(json.dumps(visit_to_record(visit), ensure_ascii=False) + "\n")


TARGET_NOTE_SECTIONS = (SectionName.BRIEF_HOSPITAL_COURSE, SectionName.DISCHARGE_INSTRUCTIONS)


@dataclass
class GroupStats:
    sample_count: int = 0
    mean_note_tokens: float = 0.0
    fraction_over_budget: float = 0.0
    mean_target_tokens: dict[str, float] = field(default_factory=dict)


@dataclass
class CorpusStats:
    budget: int
    tokenizer_mode: str
    overall: GroupStats
    by_split: dict[str, GroupStats]


def _group_stats(visits: list[Visit], tokenizer: BudgetTokenizer, budget: int) -> GroupStats:
    if not visits:
        return GroupStats(mean_target_tokens={s.value: 0.0 for s in TARGET_NOTE_SECTIONS})
    counts = [tokenizer.count(v.note_text) for v in visits]
    over = sum(1 for c in counts if c > budget)
    target_means: dict[str, float] = {}
    for target in TARGET_NOTE_SECTIONS:
        lengths = []
        for visit in visits:
            body = extract_section(segment(visit.note_text), target)
            if body is not None:
                lengths.append(tokenizer.count(body))
        target_means[target.value] = sum(lengths) / len(lengths) if lengths else 0.0
    return GroupStats(
        sample_count=len(visits),
        mean_note_tokens=sum(counts) / len(counts),
        fraction_over_budget=over / len(visits),
        mean_target_tokens=target_means,
    )


def compute_stats(visits: list[Visit], tokenizer: BudgetTokenizer, budget: int) -> CorpusStats:
    """Note-length statistics over the list, overall and per split."""
    if budget <= 0:
        raise ValueError("budget must be positive")
    by_split: dict[str, GroupStats] = {}
    for split in Split:
        members = [v for v in visits if v.split is split]
        if members:
            by_split[split.value] = _group_stats(members, tokenizer, budget)
    return CorpusStats(
        budget=budget,
        tokenizer_mode=tokenizer.mode,
        overall=_group_stats(visits, tokenizer, budget),
        by_split=by_split,
    )


def stats_to_json(stats: CorpusStats) -> dict:
    def group(g: GroupStats) -> dict:
        return {
            "sample_count": g.sample_count,
            "mean_note_tokens": g.mean_note_tokens,
            "fraction_over_budget": g.fraction_over_budget,
            "mean_target_tokens": g.mean_target_tokens,
        }

    return {
        "budget": stats.budget,
        "tokenizer": stats.tokenizer_mode,
        "overall": group(stats.overall),
        "by_split": {k: group(v) for k, v in stats.by_split.items()},
    }
