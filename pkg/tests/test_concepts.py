import random

import pytest

from dischargegen.concepts import (
    ConceptSpan,
    ConceptType,
    Lexicon,
    dedup_concepts,
    extract_concepts,
    normalize_surface,
    remote_extract,
)
from dischargegen.errors import LexiconError, RemoteProtocolError, RemoteUnavailableError
from dischargegen.sections import SectionName, UnknownSection

SEC = UnknownSection("test")

REFERENCE_PMH = (
    "- prior paramedian pontine infarct (___)\n"
    "- right-sided lenticulostriate territory infarct ___\n"
    "- Hypertension as per prior medical records(patient denies)\n"
    "- Dyslipidemia\n"
    "- Colon cancer 2/p right colectomy in ___ with prolonged\n"
    "stuttering course of adjuvant chemotherapy (diagnosed in setting\n"
    "of GI bleeding)\n"
    "- Cholecystectomy for chronic cholecystitis and gallstones in\n"
    "___\n"
    "- Diverticulosis\n"
    "- Hemorrhoids"
)

REFERENCE_CONCEPTS = [
    "prior paramedian pontine infarct",
    "right-sided lenticulostriate territory infarct",
    "Hypertension",
    "Dyslipidemia",
    "Colon cancer",
    "right colectomy",
    "adjuvant chemotherapy",
    "GI bleeding",
    "Cholecystectomy",
    "chronic cholecystitis",
    "gallstones",
    "Diverticulosis",
    "Hemorrhoids",
]


def make_lexicon(*pairs):
    return Lexicon.from_pairs(pairs)


def test_single_hit_with_offsets():
    lex = make_lexicon(("hypertension", ConceptType.PROBLEM))
    spans = extract_concepts("Hypertension as per prior medical records", SEC, lex)
    assert [s.text for s in spans] == ["Hypertension"]
    assert spans[0].ctype is ConceptType.PROBLEM
    assert (spans[0].start, spans[0].end) == (0, len("Hypertension"))


def test_longest_match_wins():
    lex = make_lexicon(
        ("right colectomy", ConceptType.TREATMENT),
        ("adjuvant chemotherapy", ConceptType.TREATMENT),
        ("colectomy", ConceptType.TREATMENT),
    )
    spans = extract_concepts("right colectomy with adjuvant chemotherapy", SEC, lex)
    assert [s.text for s in spans] == ["right colectomy", "adjuvant chemotherapy"]


def test_empty_text_yields_nothing(lexicon):
    assert extract_concepts("", SEC, lexicon) == []


def test_empty_lexicon_rejected():
    with pytest.raises(LexiconError):
        extract_concepts("anything", SEC, Lexicon(entries={}))


def test_no_mid_word_hits():
    lex = make_lexicon(("art", ConceptType.TEST))
    assert extract_concepts("heart rate normal", SEC, lex) == []
    assert [s.text for s in extract_concepts("art therapy", SEC, lex)] == ["art"]


def test_matching_spans_punctuation_boundaries():
    lex = make_lexicon(("gi bleeding", ConceptType.PROBLEM))
    spans = extract_concepts("(in setting of GI bleeding)", SEC, lex)
    assert [s.text for s in spans] == ["GI bleeding"]
    text = "(in setting of GI bleeding)"
    assert text[spans[0].start : spans[0].end] == "GI bleeding"


def test_case_insensitive_by_normalized_text():
    lex = make_lexicon(("chest pain", ConceptType.PROBLEM))
    lower = extract_concepts("complains of chest pain today", SEC, lex)
    upper = extract_concepts("COMPLAINS OF CHEST PAIN TODAY", SEC, lex)
    assert [normalize_surface(s.text) for s in lower] == [
        normalize_surface(s.text) for s in upper
    ]


def test_spans_sorted_and_non_overlapping(lexicon, visits):
    for visit in visits[:8]:
        spans = extract_concepts(visit.note_text, SEC, lexicon)
        for a, b in zip(spans, spans[1:]):
            assert a.end <= b.start


def test_reference_snippet_extraction(lexicon):
    spans = extract_concepts(REFERENCE_PMH, SectionName.PAST_MEDICAL_HISTORY, lexicon)
    assert dedup_concepts(spans) == REFERENCE_CONCEPTS


def test_dedup_keeps_first_casing():
    spans = [
        ConceptSpan("Hypertension", ConceptType.PROBLEM, 0, 12, SEC),
        ConceptSpan("GI bleeding", ConceptType.PROBLEM, 20, 31, SEC),
        ConceptSpan("hypertension", ConceptType.PROBLEM, 40, 52, SEC),
    ]
    assert dedup_concepts(spans) == ["Hypertension", "GI bleeding"]


def test_dedup_empty():
    assert dedup_concepts([]) == []


def test_lexicon_rejects_ambiguous_entries():
    with pytest.raises(LexiconError):
        make_lexicon(("aspirin", ConceptType.TREATMENT), ("Aspirin", ConceptType.PROBLEM))


def test_lexicon_rejects_empty_surface():
    with pytest.raises(LexiconError):
        make_lexicon(("  ,  ", ConceptType.TEST))


def test_lexicon_load_rejects_bad_type(tmp_path):
    path = tmp_path / "lex.tsv"
    path.write_text("aspirin\tDRUG\n", encoding="utf-8")
    with pytest.raises(LexiconError, match="line 1|:1"):
        Lexicon.load(path)


def test_lexicon_load_fixture(lexicon):
    assert len(lexicon) >= 60
    assert lexicon.entries[("hypertension",)] is ConceptType.PROBLEM


# Brute-force oracle: repeatedly take the leftmost (then longest) placement
# from the set of all possible lexicon placements.
def _greedy_oracle(text, lexicon):
    import re

    tokens = list(re.finditer(r"[^\W_]+", text))
    keys = [m.group(0).lower() for m in tokens]
    placements = []
    for i in range(len(tokens)):
        for length in range(1, lexicon.max_phrase_tokens + 1):
            if i + length <= len(tokens) and tuple(keys[i : i + length]) in lexicon.entries:
                placements.append((i, length))
    chosen = []
    occupied = set()
    while True:
        free = [
            (i, length)
            for i, length in placements
            if not (set(range(i, i + length)) & occupied)
        ]
        if not free:
            break
        i, length = min(free, key=lambda p: (p[0], -p[1]))
        chosen.append((i, length))
        occupied.update(range(i, i + length))
    chosen.sort()
    return [
        text[tokens[i].start() : tokens[i + length - 1].end()] for i, length in chosen
    ]


def test_greedy_matches_bruteforce_oracle():
    rng = random.Random(77)
    vocab = ["acute", "heart", "failure", "renal", "pain", "chest", "scan", "ct", "left"]
    lex = make_lexicon(
        ("heart failure", ConceptType.PROBLEM),
        ("acute heart failure", ConceptType.PROBLEM),
        ("chest pain", ConceptType.PROBLEM),
        ("ct scan", ConceptType.TEST),
        ("pain", ConceptType.PROBLEM),
        ("renal", ConceptType.PROBLEM),
    )
    for _ in range(300):
        words = [rng.choice(vocab) for _ in range(rng.randint(0, 30))]
        text = " ".join(words)
        got = [s.text for s in extract_concepts(text, SEC, lex)]
        assert got == _greedy_oracle(text, lex), text


def test_compression_vs_source_tokens(lexicon, visits):
    for visit in visits:
        for report in visit.radiology_reports:
            spans = extract_concepts(report, SEC, lexicon)
            joined = ", ".join(dedup_concepts(spans))
            assert len(joined.split()) <= len(report.split())


def test_remote_extract_zero_spans(mock_service):
    mock_service.route("/extract", lambda body: (200, {"spans": []}))
    assert remote_extract("text", SEC, mock_service.url + "/extract") == []


def test_remote_extract_out_of_bounds_span(mock_service):
    mock_service.route(
        "/extract",
        lambda body: (200, {"spans": [{"text": "x", "type": "PROBLEM", "start": 0, "end": 99}]}),
    )
    with pytest.raises(RemoteProtocolError, match="out of bounds"):
        remote_extract("short", SEC, mock_service.url + "/extract")


def test_remote_extract_unknown_type(mock_service):
    mock_service.route(
        "/extract",
        lambda body: (200, {"spans": [{"text": "sh", "type": "DRUG", "start": 0, "end": 2}]}),
    )
    with pytest.raises(RemoteProtocolError, match="unknown type"):
        remote_extract("short", SEC, mock_service.url + "/extract")


def test_remote_extract_round_trip_equals_lexicon(mock_service, lexicon):
    expected = extract_concepts(REFERENCE_PMH, SEC, lexicon)

    def serve(body):
        assert body["text"] == REFERENCE_PMH
        return (
            200,
            {
                "spans": [
                    {"text": s.text, "type": s.ctype.value, "start": s.start, "end": s.end}
                    for s in expected
                ]
            },
        )

    mock_service.route("/extract", serve)
    got = remote_extract(REFERENCE_PMH, SEC, mock_service.url + "/extract")
    assert got == expected


def test_remote_extract_retries_then_fails(mock_service):
    calls = []

    def flaky(body):
        calls.append(1)
        return 503, {"error": "down"}

    mock_service.route("/extract", flaky)
    with pytest.raises(RemoteUnavailableError):
        remote_extract("text", SEC, mock_service.url + "/extract", retries=2, backoff=0.0)
    assert len(calls) == 3
