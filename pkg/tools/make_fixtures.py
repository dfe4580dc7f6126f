#!/usr/bin/env python3
"""Regenerate the shipped fixture corpus and lexicon (deterministic).

The corpus is synthetic but mirrors the production visit schema: every note
carries the standard discharge sections, every visit has radiology reports
and coded ED diagnoses, a couple of notes blow past the default token budget,
and several notes drop sections on purpose. Run from the repo root:

    python tools/make_fixtures.py

The script re-derives everything from a fixed seed and then self-checks the
properties the test suite relies on (section coverage, concept extraction on
the reference snippet, prompt/gold separation, concept-mode compression).
"""

from __future__ import annotations

import json
import random
import sys
from pathlib import Path

REPO = Path(__file__).resolve().parents[1]
OUT_DIR = REPO / "src" / "dischargegen" / "data"

from dischargegen.concepts import Lexicon, dedup_concepts, extract_concepts
from dischargegen.corpus import load_corpus, Split
from dischargegen.inputs import (
    TargetSection,
    build_input,
    default_selection,
    extract_visit_concepts,
    render_prompt,
)
from dischargegen.sections import SectionName, extract_section, segment

RNG = random.Random(20240519)

# --------------------------------------------------------------------------
# Lexicon
# --------------------------------------------------------------------------

PROBLEMS = [
    "prior paramedian pontine infarct",
    "right-sided lenticulostriate territory infarct",
    "Hypertension",
    "Dyslipidemia",
    "Colon cancer",
    "GI bleeding",
    "chronic cholecystitis",
    "gallstones",
    "Diverticulosis",
    "Hemorrhoids",
    "cholecystitis",
    "pneumonia",
    "sepsis",
    "atrial fibrillation",
    "heart failure",
    "congestive heart failure",
    "coronary artery disease",
    "NSTEMI",
    "stroke",
    "anemia",
    "acute kidney injury",
    "chronic kidney disease",
    "COPD",
    "asthma",
    "urinary tract infection",
    "cellulitis",
    "nausea",
    "vomiting",
    "headache",
    "chest pain",
    "shortness of breath",
    "dyspnea",
    "fever",
    "cough",
    "dizziness",
    "abdominal pain",
    "hypotension",
    "tachycardia",
    "pleural effusion",
    "pulmonary embolism",
    "deep vein thrombosis",
    "pneumothorax",
    "hyperlipidemia",
    "type 2 diabetes",
    "diabetes mellitus",
    "edema",
    "vascular dementia",
    "focal consolidation",
    "leg swelling",
]

TREATMENTS = [
    "right colectomy",
    "colectomy",
    "adjuvant chemotherapy",
    "chemotherapy",
    "Cholecystectomy",
    "laparoscopic cholecystectomy",
    "appendectomy",
    "aspirin",
    "metoprolol",
    "lisinopril",
    "furosemide",
    "warfarin",
    "heparin",
    "insulin",
    "metformin",
    "atorvastatin",
    "ceftriaxone",
    "vancomycin",
    "azithromycin",
    "acetaminophen",
    "oxycodone",
    "ibuprofen",
    "omeprazole",
    "amlodipine",
    "apixaban",
    "physical therapy",
    "diuresis",
    "supplemental oxygen",
    "antibiotics",
    "stent placement",
    "incision and drainage",
]

TESTS = [
    "chest x-ray",
    "CT scan",
    "MRI",
    "echocardiogram",
    "electrocardiogram",
    "EKG",
    "complete blood count",
    "CBC",
    "basic metabolic panel",
    "troponin",
    "blood cultures",
    "urinalysis",
    "colonoscopy",
    "endoscopy",
    "lumbar puncture",
    "CXR",
    "lower extremity ultrasound",
]


def write_lexicon(path: Path) -> None:
    rows = (
        [(s, "PROBLEM") for s in PROBLEMS]
        + [(s, "TREATMENT") for s in TREATMENTS]
        + [(s, "TEST") for s in TESTS]
    )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for surface, ctype in rows:
            fh.write(f"{surface}\t{ctype}\n")
    print(f"wrote {len(rows)} lexicon entries to {path}")


# --------------------------------------------------------------------------
# Reference extraction snippet (past-medical-history style list)
# --------------------------------------------------------------------------

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

# --------------------------------------------------------------------------
# Case archetypes
# --------------------------------------------------------------------------

CASES = [
    {
        "cc": "shortness of breath",
        "msip": "None",
        "hpi": (
            "The patient is a ___ year old who came to the emergency department after "
            "two days of worsening dyspnea and leg swelling. Home furosemide doses had "
            "been missed repeatedly over the prior week. Triage vitals showed mild "
            "tachycardia, and the exam suggested volume overload, so the team admitted "
            "the patient for intravenous diuresis and telemetry monitoring."
        ),
        "pmh": "- congestive heart failure\n- Hypertension\n- hyperlipidemia\n- atrial fibrillation",
        "pe": (
            "VS: T 98.4 HR 96 BP 142/84 RR 20 SpO2 93% on room air.\n"
            "General: sitting upright, speaking in full sentences.\n"
            "CV: irregularly irregular rhythm, no murmur appreciated, consistent with atrial fibrillation.\n"
            "Lungs: bibasilar crackles, no wheeze.\n"
            "Ext: pitting edema to the mid shin bilaterally."
        ),
        "pr": (
            "___ 06:10AM BLOOD WBC-7.8 RBC-4.4 Hgb-12.9 Hct-38.7 Plt-242\n"
            "___ 06:10AM BLOOD Glucose-131 UreaN-28 Creat-1.3 Na-136 K-4.1 Cl-99 HCO3-27\n"
            "Troponin negative on three serial draws. BNP elevated at 1240.\n"
            "Echocardiogram showed a preserved ejection fraction with diastolic dysfunction.\n"
            "CXR: small right pleural effusion, mild vascular congestion, no focal consolidation."
        ),
        "dm": (
            "1. furosemide 40 mg by mouth twice daily\n"
            "2. metoprolol succinate 50 mg by mouth daily\n"
            "3. lisinopril 10 mg by mouth daily\n"
            "4. apixaban 5 mg by mouth twice daily\n"
            "5. atorvastatin 40 mg by mouth at bedtime"
        ),
        "ddx": "Primary: acute diastolic heart failure exacerbation\nSecondary: atrial fibrillation, Hypertension",
        "rad": [
            "EXAMINATION: CHEST (PA AND LAT). INDICATION: dyspnea, evaluate for edema. "
            "FINDINGS: Mild pulmonary vascular congestion with a small right pleural effusion. "
            "Heart size is top normal. No pneumothorax. IMPRESSION: Findings compatible with "
            "mild volume overload.",
        ],
        "dx": [
            ("I5033", 10, "Acute on chronic diastolic (congestive) heart failure"),
            ("I4891", 10, "Unspecified atrial fibrillation"),
            ("I10", 10, "Essential (primary) hypertension"),
        ],
        "bhc_extra": "Net negative fluid balance was reached by the second evening and breathing grew easier with each round.",
        "di_extra": "Weigh yourself every morning before breakfast and call if the number climbs more than three pounds in two days.",
    },
    {
        "cc": "productive cough and fever",
        "msip": "None",
        "hpi": (
            "The patient is a ___ year old smoker who reported four days of productive "
            "cough, subjective fever, and pleuritic discomfort on the right side. An "
            "outpatient course of azithromycin brought no relief. In the emergency "
            "department the oxygen saturation dipped to 90% on ambient air, prompting "
            "admission for intravenous antibiotics."
        ),
        "pmh": "- COPD\n- type 2 diabetes\n- Hypertension",
        "pe": (
            "VS: T 101.2 HR 104 BP 128/76 RR 22 SpO2 91% on 2L.\n"
            "General: flushed, mildly labored breathing.\n"
            "Lungs: bronchial breath sounds at the right base with egophony.\n"
            "CV: tachycardia, regular rhythm.\n"
            "Abd: soft, nontender."
        ),
        "pr": (
            "___ 07:25AM BLOOD WBC-14.6 RBC-4.7 Hgb-13.8 Hct-41.0 Plt-310\n"
            "___ 07:25AM BLOOD Lactate-1.9\n"
            "Blood cultures drawn on arrival remained without growth at discharge.\n"
            "CXR: right lower lobe focal consolidation consistent with pneumonia.\n"
            "Repeat chest x-ray on day three showed early clearing."
        ),
        "dm": (
            "1. ceftriaxone completed in house, transitioned to oral therapy\n"
            "2. azithromycin 250 mg by mouth daily for three more days\n"
            "3. metformin 500 mg by mouth twice daily\n"
            "4. lisinopril 20 mg by mouth daily\n"
            "5. acetaminophen 650 mg by mouth every six hours as needed"
        ),
        "ddx": "Primary: community acquired pneumonia\nSecondary: COPD, type 2 diabetes",
        "rad": [
            "EXAMINATION: CHEST (PA AND LAT). INDICATION: cough and fever. FINDINGS: "
            "Focal consolidation in the right lower lobe. No pleural effusion or "
            "pneumothorax. IMPRESSION: Right lower lobe pneumonia.",
            "EXAMINATION: CHEST (PORTABLE AP). INDICATION: interval assessment. FINDINGS: "
            "Improving right basilar opacity. IMPRESSION: Resolving pneumonia.",
        ],
        "dx": [
            ("J189", 10, "Pneumonia, unspecified organism"),
            ("J441", 10, "Chronic obstructive pulmonary disease with (acute) exacerbation"),
        ],
        "bhc_extra": "Fever curves flattened within forty-eight hours of the first intravenous dose and oxygen was weaned stepwise.",
        "di_extra": "Finish every remaining antibiotic tablet even when the cough has already faded.",
    },
    {
        "cc": "dark stools and lightheadedness",
        "msip": "Upper endoscopy with clipping of a duodenal vessel",
        "hpi": (
            "The patient is a ___ year old on daily aspirin who noticed tarry stools "
            "for three days accompanied by lightheadedness when standing. The primary "
            "care office checked a hemoglobin that returned four points below baseline "
            "and directed the patient to the emergency department, where orthostatic "
            "hypotension was documented."
        ),
        "pmh": "- GI bleeding\n- Hemorrhoids\n- coronary artery disease\n- Dyslipidemia",
        "pe": (
            "VS: T 97.9 HR 102 supine BP 108/64.\n"
            "General: pale but conversant.\n"
            "CV: tachycardia without murmur.\n"
            "Abd: mild epigastric tenderness, no rebound.\n"
            "Rectal: melena on glove, external hemorrhoids noted."
        ),
        "pr": (
            "___ 04:55AM BLOOD WBC-9.1 RBC-2.9 Hgb-8.2 Hct-25.1 Plt-198\n"
            "___ 04:55AM BLOOD Glucose-109 UreaN-34 Creat-0.9 Na-139 K-3.8\n"
            "Serial complete blood count checks confirmed stability after transfusion.\n"
            "Endoscopy identified an oozing duodenal vessel controlled with a clip.\n"
            "EKG without ischemic change; troponin negative twice."
        ),
        "dm": (
            "1. omeprazole 40 mg by mouth twice daily\n"
            "2. atorvastatin 80 mg by mouth at bedtime\n"
            "3. hold aspirin until the gastroenterology visit\n"
            "4. acetaminophen 500 mg by mouth as needed for discomfort"
        ),
        "ddx": "Primary: upper GI bleeding from duodenal vessel\nSecondary: anemia, coronary artery disease",
        "rad": [
            "EXAMINATION: CT ABDOMEN AND PELVIS WITH CONTRAST. INDICATION: melena. "
            "FINDINGS: No active extravasation. Diverticulosis of the sigmoid colon "
            "without inflammation. IMPRESSION: No acute intra-abdominal process.",
        ],
        "dx": [
            ("K9281", 10, "Gastrointestinal hemorrhage, unspecified"),
            ("D649", 10, "Anemia, unspecified"),
            ("41401", 9, "Coronary atherosclerosis of native coronary artery"),
        ],
        "bhc_extra": "Two units of packed cells restored the count and repeat checks held steady through the final day.",
        "di_extra": "Avoid aspirin and ibuprofen entirely until the stomach specialist says otherwise.",
    },
    {
        "cc": "right leg redness and pain",
        "msip": "None",
        "hpi": (
            "The patient is a ___ year old who scraped the right shin while gardening "
            "a week ago. Over the last two days the surrounding skin became red, warm, "
            "and increasingly tender, and a fever developed overnight. Oral antibiotics "
            "from an urgent care visit did not halt the spread, so admission was "
            "arranged for intravenous therapy."
        ),
        "pmh": "- type 2 diabetes\n- obesity\n- chronic kidney disease",
        "pe": (
            "VS: T 100.8 HR 92 BP 134/80.\n"
            "General: comfortable at rest.\n"
            "Skin: a warm erythematous plaque over the right anterior shin with a "
            "central abrasion, margins outlined in ink.\n"
            "Ext: no crepitus, distal pulses intact."
        ),
        "pr": (
            "___ 08:40AM BLOOD WBC-13.2 RBC-4.6 Hgb-13.5 Hct-40.2 Plt-288\n"
            "___ 08:40AM BLOOD Glucose-176 UreaN-30 Creat-1.6 Na-137 K-4.4\n"
            "Blood cultures showed no growth at five days.\n"
            "Lower extremity ultrasound excluded deep vein thrombosis."
        ),
        "dm": (
            "1. vancomycin transitioned to oral antibiotics at discharge\n"
            "2. insulin glargine 18 units at bedtime\n"
            "3. metformin held, resume after kidney labs recheck\n"
            "4. acetaminophen 650 mg by mouth as needed"
        ),
        "ddx": "Primary: cellulitis of the right lower leg\nSecondary: type 2 diabetes, chronic kidney disease",
        "rad": [
            "EXAMINATION: UNILATERAL LOWER EXTREMITY VEINS RIGHT. INDICATION: swelling, "
            "rule out clot. FINDINGS: Normal compressibility and flow in the common "
            "femoral through popliteal veins. IMPRESSION: No deep vein thrombosis.",
        ],
        "dx": [
            ("L03115", 10, "Cellulitis of right lower limb"),
            ("E119", 10, "Type 2 diabetes mellitus without complications"),
        ],
        "bhc_extra": "The inked border stopped advancing by the second day and the redness began receding toward the abrasion.",
        "di_extra": "Keep the leg propped on a pillow whenever you sit and trace any returning redness with a pen so the clinic can compare.",
    },
    {
        "cc": "burning with urination and confusion",
        "msip": "None",
        "hpi": (
            "The patient is a ___ year old brought in by family for one day of new "
            "confusion. Collateral history uncovered several days of burning with "
            "urination and poor fluid intake. Initial evaluation showed a low-grade "
            "fever and cloudy urine, and admission followed for treatment of a "
            "presumed urinary source."
        ),
        "pmh": "- vascular dementia\n- Hypertension\n- chronic kidney disease",
        "pe": (
            "VS: T 100.1 HR 88 BP 118/70.\n"
            "General: drowsy but arousable, oriented to name only on arrival.\n"
            "CV: regular rate and rhythm.\n"
            "Abd: suprapubic tenderness.\n"
            "Neuro: no focal deficit."
        ),
        "pr": (
            "___ 03:15PM URINE Color-Amber Appear-Cloudy WBC->50 Bacteria-MANY\n"
            "___ 03:15PM BLOOD WBC-12.4 Creat-1.7\n"
            "Urinalysis consistent with infection; urine culture grew a pan-sensitive organism.\n"
            "Basic metabolic panel normalized with fluids.\n"
            "Head CT scan without acute abnormality."
        ),
        "dm": (
            "1. ceftriaxone completed, switch to oral antibiotics for four more days\n"
            "2. amlodipine 5 mg by mouth daily\n"
            "3. hold lisinopril until the kidney panel recheck next week"
        ),
        "ddx": "Primary: urinary tract infection with delirium\nSecondary: vascular dementia, acute kidney injury",
        "rad": [
            "EXAMINATION: CT HEAD WITHOUT CONTRAST. INDICATION: acute confusion. "
            "FINDINGS: No hemorrhage, mass effect, or territorial infarct. Chronic "
            "small vessel changes. IMPRESSION: No acute intracranial process.",
            "EXAMINATION: RENAL ULTRASOUND. INDICATION: elevated creatinine. FINDINGS: "
            "Normal kidney size without hydronephrosis. IMPRESSION: No obstruction.",
        ],
        "dx": [
            ("N390", 10, "Urinary tract infection, site not specified"),
            ("F0390", 10, "Unspecified dementia without behavioral disturbance"),
            ("N179", 10, "Acute kidney injury, unspecified"),
        ],
        "bhc_extra": "Orientation returned in parallel with the culture-guided regimen and fluids corrected the kidney numbers.",
        "di_extra": "A family member should check in twice daily this week and report any returning confusion right away.",
    },
    {
        "cc": "chest pressure with exertion",
        "msip": "Coronary angiography with stent placement",
        "hpi": (
            "The patient is a ___ year old with known coronary artery disease who felt "
            "squeezing chest pressure while climbing stairs, lasting ten minutes and "
            "easing with rest. A repeat episode at rest the same evening prompted the "
            "emergency visit, where the first troponin returned elevated."
        ),
        "pmh": "- coronary artery disease\n- Dyslipidemia\n- Hypertension\n- former tobacco use",
        "pe": (
            "VS: T 98.1 HR 78 BP 146/88.\n"
            "General: anxious, no distress at rest.\n"
            "CV: regular rhythm, no murmur or rub.\n"
            "Lungs: clear to auscultation bilaterally.\n"
            "Ext: warm, no edema."
        ),
        "pr": (
            "___ 09:05PM BLOOD Troponin-T elevated with a rising pattern on repeat\n"
            "___ 09:05PM BLOOD WBC-8.8 Hgb-14.1 Plt-256\n"
            "Electrocardiogram showed subtle lateral ST depression; NSTEMI declared.\n"
            "Echocardiogram after the procedure showed preserved function.\n"
            "Angiography found a single culprit lesion treated with stent placement."
        ),
        "dm": (
            "1. aspirin 81 mg by mouth daily, do not miss doses\n"
            "2. ticagrelor 90 mg by mouth twice daily\n"
            "3. metoprolol succinate 25 mg by mouth daily\n"
            "4. atorvastatin 80 mg by mouth at bedtime\n"
            "5. nitroglycerin 0.4 mg under the tongue as needed"
        ),
        "ddx": "Primary: NSTEMI\nSecondary: coronary artery disease, Dyslipidemia",
        "rad": [
            "EXAMINATION: CHEST (PA AND LAT). INDICATION: chest pain. FINDINGS: Clear "
            "lungs, normal cardiomediastinal silhouette, no pleural effusion. "
            "IMPRESSION: No acute cardiopulmonary abnormality.",
        ],
        "dx": [
            ("I214", 10, "Non-ST elevation (NSTEMI) myocardial infarction"),
            ("E785", 10, "Hyperlipidemia, unspecified"),
            ("I10", 10, "Essential (primary) hypertension"),
        ],
        "bhc_extra": "The catheterization went without complication and the access site stayed clean and soft afterward.",
        "di_extra": "Never skip the two blood thinning tablets, and bring the wallet card from the catheter lab to every appointment.",
    },
]

BHC_OPENERS = [
    "Ward admission went smoothly and telemetry stayed quiet overnight.",
    "The floor team assumed care without incident after arrival from the emergency room.",
    "Initial orders were carried out promptly and the first night passed uneventfully.",
]
BHC_MIDDLE = [
    "Symptoms settled by hospital day two under the adjusted regimen described below.",
    "Repeat laboratory values trended toward baseline before departure.",
    "Oral intake advanced without difficulty and ambulation resumed under supervision.",
    "Consultants signed off once the clinical picture had stabilized.",
    "No further episodes occurred after the initial intervention took effect.",
]
BHC_CLOSERS = [
    "Arrangements for outpatient follow-through were confirmed prior to departure.",
    "The patient left in improved condition with plans reviewed at the bedside.",
    "Case management finalized services before the patient headed home.",
]

DI_OPENERS = [
    "Thank you for letting this team share in your recovery.",
    "We appreciated the chance to look after you during this stay.",
    "It meant a great deal to care for you here.",
]
DI_MIDDLE = [
    "Take each medicine exactly as the pharmacy label directs.",
    "Rest as needed, but try a short walk twice daily as strength returns.",
    "Drink fluids regularly unless a doctor has told you to limit them.",
    "Do not drive until your outpatient doctor agrees it is safe.",
]
DI_CLOSERS = [
    "Call the clinic for fevers, chills, or anything that worries you.",
    "Seek help right away for new trouble breathing or fainting.",
    "Your appointments are listed at the bottom of this page.",
]

DISPOSITIONS = ["Home", "Home With Service", "Extended Care"]

CONDITION_BLOCK = (
    "Mental Status: Clear and coherent.\n"
    "Level of Consciousness: Alert and interactive.\n"
    "Activity Status: Ambulatory - Independent."
)

MOA_POOL = [
    "1. aspirin 81 mg daily\n2. atorvastatin 40 mg at bedtime",
    "1. lisinopril 10 mg daily\n2. metformin 500 mg twice daily",
    "1. metoprolol succinate 50 mg daily\n2. omeprazole 20 mg daily",
    "1. amlodipine 5 mg daily",
]

SOCIAL_POOL = ["___", "Lives with family. Retired. Denies tobacco and alcohol use.", "___"]
FAMILY_POOL = ["Non-contributory.", "Mother with Hypertension. Father with stroke.", "No early cardiac disease in first degree relatives."]

PREAMBLE = (
    "Name: ___ Unit No: ___\n"
    "\n"
    "Admission Date: ___ Discharge Date: ___\n"
    "\n"
    "Date of Birth: ___ Sex: ___\n"
    "\n"
    "Service: MEDICINE\n"
    "\n"
)

ALLERGY_BLOCK = "Allergies:\nNo Known Allergies / Adverse Drug Reactions\n\n"

LONG_LAB_LINE = (
    "___ {hh}:{mm}AM BLOOD Glucose-{g} UreaN-{u} Creat-1.{c} Na-13{na} "
    "K-4.{k} Cl-10{cl} HCO3-2{h} AnGap-1{a}"
)


def _long_labs(rng: random.Random, lines: int) -> str:
    rows = []
    for _ in range(lines):
        rows.append(
            LONG_LAB_LINE.format(
                hh=rng.randint(10, 11),
                mm=rng.randint(10, 59),
                g=rng.randint(90, 180),
                u=rng.randint(10, 40),
                c=rng.randint(0, 9),
                na=rng.randint(4, 9),
                k=rng.randint(0, 9),
                cl=rng.randint(0, 5),
                h=rng.randint(2, 8),
                a=rng.randint(0, 9),
            )
        )
    return "\n".join(rows)


def _section(header: str, body: str) -> str:
    return f"{header}:\n{body}\n\n"


def build_visit(idx: int) -> dict:
    rng = random.Random(9000 + idx)
    case = CASES[idx % len(CASES)]
    hadm_id = f"2{idx:07d}"

    bhc = " ".join(
        [rng.choice(BHC_OPENERS), case["bhc_extra"], rng.choice(BHC_MIDDLE), rng.choice(BHC_CLOSERS)]
    )
    di = "\n".join(
        [rng.choice(DI_OPENERS), case["di_extra"], rng.choice(DI_MIDDLE), rng.choice(DI_CLOSERS)]
    )

    drop_family = idx in (3, 9, 15)
    drop_social = idx in (5, 11)
    drop_pe = idx in (7, 19)
    drop_msip = idx in (13,)
    drop_moa = idx in (17,)
    over_budget = idx in (10, 16)
    duplicate_cc = idx == 8
    golden = idx == 0
    reference_pmh = idx == 1

    pr_body = case["pr"]
    if over_budget:
        pr_body = pr_body + "\nSerial daily panels are reproduced below.\n" + _long_labs(rng, 230)

    parts = [PREAMBLE]
    if not golden:
        parts.append(ALLERGY_BLOCK)
    parts.append(_section("Chief Complaint", case["cc"]))
    if not drop_msip:
        parts.append(_section("Major Surgical or Invasive Procedure", case["msip"]))
    parts.append(_section("History of Present Illness", case["hpi"]))
    parts.append(_section("Past Medical History", REFERENCE_PMH if reference_pmh else case["pmh"]))
    if not drop_social:
        parts.append(_section("Social History", rng.choice(SOCIAL_POOL)))
    if not drop_family:
        parts.append(_section("Family History", rng.choice(FAMILY_POOL)))
    if not drop_pe:
        parts.append(_section("Physical Exam", case["pe"]))
    parts.append(_section("Pertinent Results", pr_body))
    parts.append(_section("Brief Hospital Course", bhc))
    if not drop_moa:
        parts.append(_section("Medications on Admission", rng.choice(MOA_POOL)))
    parts.append(_section("Discharge Medications", case["dm"]))
    parts.append(_section("Discharge Disposition", rng.choice(DISPOSITIONS)))
    parts.append(_section("Discharge Diagnosis", case["ddx"]))
    parts.append(_section("Discharge Condition", CONDITION_BLOCK))
    parts.append(_section("Discharge Instructions", di))
    if duplicate_cc:
        parts.append(_section("Chief Complaint", "(addendum) restated at transfer"))
    note_text = "".join(parts).rstrip("\n") + "\n"

    diagnoses = [
        {"icd_code": code, "icd_version": version, "long_title": title}
        for code, version, title in case["dx"]
    ]
    if idx == 4:
        # same textual description under two coding systems
        diagnoses.append(
            {"icd_code": "4019", "icd_version": 9, "long_title": diagnoses[-1]["long_title"]}
        )

    return {
        "hadm_id": hadm_id,
        "note_text": note_text,
        "radiology_reports": list(case["rad"]),
        "ed_diagnoses": diagnoses,
        "chief_complaint_ed": None if idx % 6 == 2 else case["cc"].capitalize(),
    }


GOLDEN_ORDER = [s.value for s in SectionName]


def self_check(corpus_path: Path, lexicon_path: Path) -> None:
    lexicon = Lexicon.load(lexicon_path)
    visits = load_corpus(corpus_path, Split.TRAIN)
    assert len(visits) >= 20, "need at least 20 visits"

    golden = segment(visits[0].note_text)
    names = [s.name.value for s in golden.sections if isinstance(s.name, SectionName)]
    assert names == GOLDEN_ORDER, f"golden note sections wrong: {names}"
    assert len(golden.sections) == len(GOLDEN_ORDER), "golden note has extra sections"

    spans = extract_concepts(REFERENCE_PMH, SectionName.PAST_MEDICAL_HISTORY, lexicon)
    assert dedup_concepts(spans) == REFERENCE_CONCEPTS, dedup_concepts(spans)

    selection = default_selection()
    budget = 10**9
    over_budget_count = 0
    for visit in visits:
        note = segment(visit.note_text)
        if len(visit.note_text.split()) > 2048:
            over_budget_count += 1
        visit_concepts = extract_visit_concepts(visit, note, lexicon, selection)
        for target in TargetSection:
            gold = extract_section(note, target.section)
            assert gold, f"{visit.hadm_id} missing {target.value}"
            concept_input = build_input(
                visit, note, visit_concepts, target, selection, budget=budget
            )
            verbatim_input = build_input(
                visit, note, None, target, selection, budget=budget, concept_mode=False
            )
            assert concept_input.total_tokens < verbatim_input.total_tokens, (
                visit.hadm_id,
                target.value,
                concept_input.total_tokens,
                verbatim_input.total_tokens,
            )
            prompt = render_prompt(concept_input)
            for i in range(0, max(0, len(gold) - 20) + 1):
                window = gold[i : i + 20]
                if len(window) == 20:
                    assert window not in prompt, (
                        f"{visit.hadm_id}/{target.value}: gold window {window!r} leaked into prompt"
                    )
    assert over_budget_count >= 2, "need at least two over-budget notes"
    print(f"self-check passed over {len(visits)} visits ({over_budget_count} over budget)")


def main() -> int:
    OUT_DIR.mkdir(parents=True, exist_ok=True)
    lexicon_path = OUT_DIR / "fixture_lexicon.tsv"
    corpus_path = OUT_DIR / "fixture_corpus.jsonl"
    write_lexicon(lexicon_path)
    visits = [build_visit(i) for i in range(22)]
    with open(corpus_path, "w", encoding="utf-8", newline="\n") as fh:
        for record in visits:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
    print(f"wrote {len(visits)} visits to {corpus_path}")
    self_check(corpus_path, lexicon_path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
