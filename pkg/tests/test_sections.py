import random

from dischargegen.sections import (
    SectionName,
    UnknownSection,
    extract_section,
    note_to_json,
    redact_targets,
    segment,
)

ALL_NAMES = [s.value for s in SectionName]


def test_two_section_literal():
    note = segment("Chief Complaint:\nheadache\n\nFamily History:\nnone\n")
    assert note.preamble_span == (0, 0)
    assert [s.name for s in note.sections] == [
        SectionName.CHIEF_COMPLAINT,
        SectionName.FAMILY_HISTORY,
    ]
    assert note.sections[0].body_text == "headache\n\n"
    assert note.sections[1].body_text == "none\n"


def test_empty_input():
    note = segment("")
    assert note.preamble == ""
    assert note.sections == ()


def test_no_headers_is_all_preamble():
    text = "free text with no headers"
    note = segment(text)
    assert note.preamble == text
    assert note.sections == ()


def test_case_and_colon_variants_match():
    note = segment("CHIEF COMPLAINT :\nchest pain\n")
    assert note.sections[0].name is SectionName.CHIEF_COMPLAINT
    note = segment("chief complaint\nchest pain\n")
    assert note.sections[0].name is SectionName.CHIEF_COMPLAINT


def test_pertinent_results_with_inline_content():
    text = "Pertinent Results: WBC 9.4 on arrival\nmore labs\n"
    note = segment(text)
    assert note.sections[0].name is SectionName.PERTINENT_RESULTS
    assert note.sections[0].body_text == " WBC 9.4 on arrival\nmore labs\n"


def test_unknown_header_captures_raw_text():
    note = segment("Allergies:\npenicillin\n\nChief Complaint:\nfever\n")
    assert note.sections[0].name == UnknownSection("Allergies:")
    assert note.sections[1].name is SectionName.CHIEF_COMPLAINT


def test_golden_note_has_all_fifteen_sections(visits):
    note = segment(visits[0].note_text)
    assert [s.name.value for s in note.sections] == ALL_NAMES


def _tiling_holds(text: str) -> bool:
    note = segment(text)
    parts = [note.preamble]
    for section in note.sections:
        parts.append(text[section.header_span[0] : section.header_span[1]])
        parts.append(section.body_text)
    return "".join(parts) == text


def _random_note(rng: random.Random) -> str:
    pieces = []
    headers = ALL_NAMES + ["Allergies", "Attending", "Followup Instructions"]
    for _ in range(rng.randint(0, 12)):
        kind = rng.random()
        if kind < 0.45:
            name = rng.choice(headers)
            if rng.random() < 0.4:
                name = name.upper()
            colon = rng.choice([":", " :", ""])
            pieces.append(f"{name}{colon}\n")
        elif kind < 0.9:
            words = " ".join(rng.choice(["alpha", "beta", "x", "9.4", "care—plan", "naïve"]) for _ in range(rng.randint(0, 9)))
            pieces.append(words + rng.choice(["\n", "\n\n", ""]))
        else:
            pieces.append(rng.choice(["\n", "   \n", "\r\n"]))
    return "".join(pieces)


def test_tiling_property_on_randomized_notes():
    rng = random.Random(1234)
    for _ in range(100):
        text = _random_note(rng)
        assert _tiling_holds(text), repr(text)


def test_tiling_holds_on_fixture_corpus(visits):
    for visit in visits:
        assert _tiling_holds(visit.note_text), visit.hadm_id


def test_extract_section_trims_and_takes_first():
    note = segment(
        "Chief Complaint:\n\nheadache  \n\nBrief Hospital Course:\nstable course\n\n"
        "Chief Complaint:\nsecond occurrence\n"
    )
    assert extract_section(note, SectionName.CHIEF_COMPLAINT) == "headache  "
    assert extract_section(note, SectionName.BRIEF_HOSPITAL_COURSE) == "stable course"
    assert extract_section(note, SectionName.FAMILY_HISTORY) is None


def test_redact_targets_removes_both_bodies():
    text = (
        "Chief Complaint:\nfever\nBrief Hospital Course:\nimproved daily\n"
        "Discharge Instructions:\nrest well\n"
    )
    redacted = redact_targets(segment(text))
    assert "Brief Hospital Course:" in redacted
    assert "Discharge Instructions:" in redacted
    assert "improved daily" not in redacted
    assert "rest well" not in redacted
    assert "fever" in redacted


def test_redact_targets_identity_without_targets():
    text = "Chief Complaint:\nfever\nFamily History:\nnone\n"
    assert redact_targets(segment(text)) == text


def test_redact_single_target_only():
    text = "Chief Complaint:\nfever\nDischarge Instructions:\nrest well\n"
    redacted = redact_targets(segment(text))
    assert "rest well" not in redacted
    assert "fever" in redacted


def test_segment_after_redaction_keeps_non_target_sections(visits):
    for visit in visits[:6]:
        original = segment(visit.note_text)
        redacted = segment(redact_targets(original))
        keep = lambda sections: [
            (s.name, s.body_text)
            for s in sections
            if s.name not in (SectionName.BRIEF_HOSPITAL_COURSE, SectionName.DISCHARGE_INSTRUCTIONS)
        ]
        assert keep(redacted.sections) == keep(original.sections)


def test_note_to_json_shape():
    payload = note_to_json(segment("Chief Complaint:\nfever\n"))
    assert payload["preamble"] == [0, 0]
    assert payload["sections"][0]["name"] == "Chief Complaint"
    assert payload["sections"][0]["header"] == [0, 17]
    assert payload["sections"][0]["body"] == [17, 23]


def test_determinism():
    text = "Chief Complaint:\nfever\nPertinent Results: WBC 9\n"
    assert segment(text) == segment(text)
