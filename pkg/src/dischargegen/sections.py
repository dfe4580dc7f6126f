"""Rule-based segmentation of discharge notes into named sections.

A header is a line whose trimmed content case-insensitively equals one of the
fifteen canonical section names, optionally followed by ":" (a space before
the colon is tolerated). "Pertinent Results" is additionally recognized when
the name plus colon starts a line that carries further content on the same
line, because lab blocks frequently begin right after the label. Any other
line of the shape ``Capitalized Words:`` becomes an Unknown section so that
unlisted headings do not bleed into their neighbors.

All spans are offsets into the source string; the preamble plus the header
and body spans of all sections tile the source exactly.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass


class SectionName(enum.Enum):
    CHIEF_COMPLAINT = "Chief Complaint"
    MAJOR_SURGICAL_OR_INVASIVE_PROCEDURE = "Major Surgical or Invasive Procedure"
    HISTORY_OF_PRESENT_ILLNESS = "History of Present Illness"
    PAST_MEDICAL_HISTORY = "Past Medical History"
    SOCIAL_HISTORY = "Social History"
    FAMILY_HISTORY = "Family History"
    PHYSICAL_EXAM = "Physical Exam"
    PERTINENT_RESULTS = "Pertinent Results"
    BRIEF_HOSPITAL_COURSE = "Brief Hospital Course"
    MEDICATIONS_ON_ADMISSION = "Medications on Admission"
    DISCHARGE_MEDICATIONS = "Discharge Medications"
    DISCHARGE_DISPOSITION = "Discharge Disposition"
    DISCHARGE_DIAGNOSIS = "Discharge Diagnosis"
    DISCHARGE_CONDITION = "Discharge Condition"
    DISCHARGE_INSTRUCTIONS = "Discharge Instructions"


@dataclass(frozen=True)
class UnknownSection:
    """A recognized header line that is not one of the canonical names."""

    raw_header: str


AnySection = SectionName | UnknownSection


def section_label(name: AnySection) -> str:
    """Display string for a section name (raw header text for unknowns)."""
    if isinstance(name, SectionName):
        return name.value
    return name.raw_header


def _normalize(text: str) -> str:
    return " ".join(text.split()).lower()


_CANONICAL_BY_NORM = {_normalize(name.value): name for name in SectionName}
_UNKNOWN_HEADER = re.compile(r"^[A-Z][A-Za-z /]{2,40}:$")
_PERTINENT_INLINE = re.compile(r"^[ \t]*pertinent\s+results\s*:", re.IGNORECASE)


@dataclass(frozen=True)
class Section:
    name: AnySection
    header_span: tuple[int, int]
    body_span: tuple[int, int]
    body_text: str


@dataclass(frozen=True)
class SegmentedNote:
    source: str
    preamble_span: tuple[int, int]
    sections: tuple[Section, ...]

    @property
    def preamble(self) -> str:
        return self.source[self.preamble_span[0] : self.preamble_span[1]]


def _iter_lines(text: str):
    """Yield (start, end) spans of lines including their terminator."""
    start = 0
    n = len(text)
    while start < n:
        nl = text.find("\n", start)
        end = n if nl == -1 else nl + 1
        yield start, end
        start = end


def _classify_header(text: str, start: int, end: int) -> tuple[AnySection, int] | None:
    """Return (section name, header end offset) when the line opens a section."""
    line = text[start:end]
    stripped = line.strip()
    norm = _normalize(stripped)
    if norm.endswith(" :"):
        norm = norm[:-2]
    elif norm.endswith(":"):
        norm = norm[:-1]
    canonical = _CANONICAL_BY_NORM.get(norm)
    if canonical is not None:
        return canonical, end
    inline = _PERTINENT_INLINE.match(line)
    if inline is not None:
        return SectionName.PERTINENT_RESULTS, start + inline.end()
    if _UNKNOWN_HEADER.match(stripped):
        return UnknownSection(stripped), end
    return None


def segment(note_text: str) -> SegmentedNote:
    """Split a note into sections; unrecognized structure becomes the preamble."""
    headers: list[tuple[AnySection, int, int]] = []
    for start, end in _iter_lines(note_text):
        hit = _classify_header(note_text, start, end)
        if hit is not None:
            name, header_end = hit
            headers.append((name, start, header_end))

    if not headers:
        return SegmentedNote(source=note_text, preamble_span=(0, len(note_text)), sections=())

    sections: list[Section] = []
    for idx, (name, h_start, h_end) in enumerate(headers):
        body_end = headers[idx + 1][1] if idx + 1 < len(headers) else len(note_text)
        sections.append(
            Section(
                name=name,
                header_span=(h_start, h_end),
                body_span=(h_end, body_end),
                body_text=note_text[h_end:body_end],
            )
        )
    return SegmentedNote(
        source=note_text,
        preamble_span=(0, headers[0][1]),
        sections=tuple(sections),
    )


def _strip_blank_lines(text: str) -> str:
    lines = text.split("\n")
    while lines and not lines[0].strip():
        lines.pop(0)
    while lines and not lines[-1].strip():
        lines.pop()
    return "\n".join(lines)


def extract_section(note: SegmentedNote, name: AnySection) -> str | None:
    """Body of the first section with this name, minus surrounding blank lines."""
    for section in note.sections:
        if section.name == name:
            return _strip_blank_lines(section.body_text)
    return None


_TARGET_SECTIONS = (SectionName.BRIEF_HOSPITAL_COURSE, SectionName.DISCHARGE_INSTRUCTIONS)


def redact_targets(note: SegmentedNote) -> str:
    """Source text with the two target section bodies removed, headers kept."""
    parts = [note.preamble]
    for section in note.sections:
        parts.append(note.source[section.header_span[0] : section.header_span[1]])
        if section.name not in _TARGET_SECTIONS:
            parts.append(section.body_text)
    return "".join(parts)


def find_first_canonical_header(text: str) -> int | None:
    """Offset of the first canonical header line in ``text``, if any."""
    for section in segment(text).sections:
        if isinstance(section.name, SectionName):
            return section.header_span[0]
    return None


def note_to_json(note: SegmentedNote) -> dict:
    """JSON-ready view with the documented keys (spans as [start, end])."""
    return {
        "preamble": list(note.preamble_span),
        "sections": [
            {
                "name": section_label(s.name),
                "header": list(s.header_span),
                "body": list(s.body_span),
            }
            for s in note.sections
        ],
    }
