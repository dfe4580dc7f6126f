"""Reconstruction of the generator input for each target section.

Selected note sections are routed one of two ways: concept sections are
reduced to a comma-joined list of extracted clinical concepts, verbatim
sections are copied as-is. Radiology reports (concept route) and the textual
descriptions of the ED diagnoses join the blocks, everything is labeled with
its section display name, and the result is packed under a token budget by
dropping and tail-trimming the lowest-priority blocks.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

from .concepts import ConceptSpan, Lexicon, dedup_concepts, extract_concepts
from .corpus import Visit
from .errors import ConfigError, TemplateError, UnbuildableInputError
from .sections import AnySection, SectionName, SegmentedNote, UnknownSection, extract_section
from .tokenization import BudgetTokenizer


class TargetSection(enum.Enum):
    BRIEF_HOSPITAL_COURSE = "brief_hospital_course"
    DISCHARGE_INSTRUCTIONS = "discharge_instructions"

    @property
    def section(self) -> SectionName:
        return _TARGET_TO_SECTION[self]

    @property
    def display(self) -> str:
        return self.section.value


_TARGET_TO_SECTION = {
    TargetSection.BRIEF_HOSPITAL_COURSE: SectionName.BRIEF_HOSPITAL_COURSE,
    TargetSection.DISCHARGE_INSTRUCTIONS: SectionName.DISCHARGE_INSTRUCTIONS,
}

INSTRUCTION_TEMPLATE = (
    'Given the following concepts and text extracted from each section in a '
    'discharge summary, generate the section "{name}".'
)

RADIOLOGY_LABEL = "Radiology report"
DIAGNOSIS_LABEL = "Diagnosis description"

# Pseudo-section under which radiology-report concepts are filed; radiology
# reports are standalone documents, not note sections.
RADIOLOGY_SECTION = UnknownSection(RADIOLOGY_LABEL)


@dataclass(frozen=True)
class TargetSelection:
    concept_sections: tuple[SectionName, ...]
    verbatim_sections: tuple[SectionName, ...]
    include_radiology: bool
    include_diagnosis_descriptions: bool

    def validate(self, target: TargetSection) -> None:
        overlap = set(self.concept_sections) & set(self.verbatim_sections)
        if overlap:
            names = ", ".join(sorted(s.value for s in overlap))
            raise ConfigError(f"section(s) {names} listed both as concept and verbatim")
        if target.section in self.concept_sections or target.section in self.verbatim_sections:
            raise ConfigError(f"target section {target.display!r} cannot be one of its own inputs")


@dataclass(frozen=True)
class SelectionConfig:
    brief_hospital_course: TargetSelection
    discharge_instructions: TargetSelection

    def for_target(self, target: TargetSection) -> TargetSelection:
        if target is TargetSection.BRIEF_HOSPITAL_COURSE:
            return self.brief_hospital_course
        return self.discharge_instructions

    def validate(self) -> None:
        for target in TargetSection:
            self.for_target(target).validate(target)


_SHARED_VERBATIM = (
    SectionName.CHIEF_COMPLAINT,
    SectionName.MAJOR_SURGICAL_OR_INVASIVE_PROCEDURE,
    SectionName.HISTORY_OF_PRESENT_ILLNESS,
    SectionName.DISCHARGE_DISPOSITION,
    SectionName.DISCHARGE_DIAGNOSIS,
    SectionName.DISCHARGE_CONDITION,
)


def default_selection() -> SelectionConfig:
    """Per-target routing of note sections into concept vs verbatim blocks."""
    return SelectionConfig(
        brief_hospital_course=TargetSelection(
            concept_sections=(SectionName.PHYSICAL_EXAM, SectionName.PERTINENT_RESULTS),
            verbatim_sections=_SHARED_VERBATIM,
            include_radiology=True,
            include_diagnosis_descriptions=True,
        ),
        discharge_instructions=TargetSelection(
            concept_sections=(SectionName.PERTINENT_RESULTS, SectionName.DISCHARGE_MEDICATIONS),
            verbatim_sections=_SHARED_VERBATIM,
            include_radiology=False,
            include_diagnosis_descriptions=True,
        ),
    )


class BlockMode(enum.Enum):
    VERBATIM = "verbatim"
    CONCEPT_LIST = "concept_list"


@dataclass
class InputBlock:
    label: str
    mode: BlockMode
    content: str
    token_count: int
    priority: int

    def render(self) -> str:
        return f"{self.label}: {self.content}"


@dataclass
class ReconstructedInput:
    target: TargetSection
    instruction: str
    blocks: list[InputBlock]
    total_tokens: int
    truncated: bool

    def serialize(self) -> str:
        if not self.blocks:
            return self.instruction
        return self.instruction + "\n\n" + "\n".join(b.render() for b in self.blocks)


DEFAULT_TEMPLATE = "<VIRTUAL_PROMPT> Input: {input}\n Output:{output}"


@dataclass(frozen=True)
class PromptTemplate:
    template: str = DEFAULT_TEMPLATE
    virtual_marker: str = "<VIRTUAL_PROMPT>"

    def validate(self) -> None:
        for placeholder in ("{input}", "{output}"):
            n = self.template.count(placeholder)
            if n != 1:
                raise TemplateError(
                    f"template must contain {placeholder} exactly once, found {n}"
                )


def render_prompt(
    input_: "ReconstructedInput | str",
    tmpl: PromptTemplate | None = None,
    output: str = "",
) -> str:
    """Fill the template; an empty output leaves the prompt ready for inference."""
    tmpl = tmpl or PromptTemplate()
    tmpl.validate()
    text = input_.serialize() if isinstance(input_, ReconstructedInput) else input_
    return tmpl.template.replace("{input}", text).replace("{output}", output)


@dataclass
class VisitConcepts:
    """Per-section extraction results for one visit (radiology merged)."""

    spans: dict[AnySection, list[ConceptSpan]] = field(default_factory=dict)

    def names(self, section: AnySection) -> list[str]:
        return dedup_concepts(self.spans.get(section, []))


def extract_visit_concepts(
    visit: Visit,
    note: SegmentedNote,
    lexicon: Lexicon,
    cfg: SelectionConfig | None = None,
) -> VisitConcepts:
    """Run the extractor over every section any target routes through concepts."""
    cfg = cfg or default_selection()
    wanted: list[SectionName] = []
    need_radiology = False
    for target in TargetSection:
        sel = cfg.for_target(target)
        need_radiology = need_radiology or sel.include_radiology
        for section in sel.concept_sections:
            if section not in wanted:
                wanted.append(section)
    out = VisitConcepts()
    for section in wanted:
        body = extract_section(note, section)
        if body:
            out.spans[section] = extract_concepts(body, section, lexicon)
    if need_radiology:
        merged: list[ConceptSpan] = []
        for report in visit.radiology_reports:
            merged.extend(extract_concepts(report, RADIOLOGY_SECTION, lexicon))
        out.spans[RADIOLOGY_SECTION] = merged
    return out


def _unique_diagnosis_titles(visit: Visit) -> list[str]:
    seen: set[str] = set()
    titles: list[str] = []
    for dx in visit.ed_diagnoses:
        title = dx.long_title.strip()
        if title and title not in seen:
            seen.add(title)
            titles.append(title)
    return titles


def _plan_blocks(
    visit: Visit,
    note: SegmentedNote,
    concepts: VisitConcepts | None,
    sel: TargetSelection,
    concept_mode: bool,
) -> list[tuple[str, BlockMode, str]]:
    plan: list[tuple[str, BlockMode, str]] = []

    def concept_block(label: str, section: AnySection) -> None:
        names = concepts.names(section) if concepts else []
        if names:
            plan.append((label, BlockMode.CONCEPT_LIST, ", ".join(names)))

    for section in sel.concept_sections:
        if concept_mode:
            concept_block(section.value, section)
        else:
            body = extract_section(note, section)
            if body:
                plan.append((section.value, BlockMode.VERBATIM, body))
    if sel.include_radiology:
        if concept_mode:
            concept_block(RADIOLOGY_LABEL, RADIOLOGY_SECTION)
        else:
            joined = "\n".join(r for r in visit.radiology_reports if r.strip())
            if joined:
                plan.append((RADIOLOGY_LABEL, BlockMode.VERBATIM, joined))

    diagnosis_entry = None
    if sel.include_diagnosis_descriptions:
        titles = _unique_diagnosis_titles(visit)
        if titles:
            diagnosis_entry = (DIAGNOSIS_LABEL, BlockMode.VERBATIM, "; ".join(titles))

    for section in sel.verbatim_sections:
        body = extract_section(note, section)
        if body:
            plan.append((section.value, BlockMode.VERBATIM, body))
        # Diagnosis descriptions ride along with the history block so that
        # narrative context precedes the discharge-state sections.
        if section is SectionName.HISTORY_OF_PRESENT_ILLNESS and diagnosis_entry:
            plan.append(diagnosis_entry)
            diagnosis_entry = None
    if diagnosis_entry:
        plan.append(diagnosis_entry)
    return plan


def _trim_block(
    block: InputBlock, budget: int, tokenizer: BudgetTokenizer
) -> InputBlock | None:
    """Largest tail-trimmed copy fitting ``budget`` tokens, or None to drop."""
    prefix = f"{block.label}: "
    lo, hi = 1, tokenizer.count(block.content)
    best: str | None = None
    while lo <= hi:
        mid = (lo + hi) // 2
        candidate = tokenizer.trim(block.content, mid)
        if tokenizer.count(prefix + candidate) <= budget:
            best = candidate
            lo = mid + 1
        else:
            hi = mid - 1
    if best is None or not best.strip():
        return None
    return replace(block, content=best, token_count=tokenizer.count(prefix + best))


def build_input(
    visit: Visit,
    note: SegmentedNote,
    concepts: VisitConcepts | None,
    target: TargetSection,
    cfg: SelectionConfig | None = None,
    budget: int = 2048,
    tokenizer: BudgetTokenizer | None = None,
    concept_mode: bool = True,
) -> ReconstructedInput:
    """Assemble the labeled blocks for one (visit, target) pair under a budget.

    Blocks keep the selection order; when the budget forces truncation, whole
    blocks are dropped from the low-priority end and the block at the boundary
    is tail-trimmed at token granularity.
    """
    cfg = cfg or default_selection()
    tokenizer = tokenizer or BudgetTokenizer()
    sel = cfg.for_target(target)
    sel.validate(target)

    instruction = INSTRUCTION_TEMPLATE.format(name=target.display)
    instruction_tokens = tokenizer.count(instruction)
    if budget <= instruction_tokens:
        raise UnbuildableInputError(
            f"budget {budget} cannot hold the {instruction_tokens}-token instruction"
        )

    planned = _plan_blocks(visit, note, concepts, sel, concept_mode)
    total_planned = len(planned)
    blocks = [
        InputBlock(
            label=label,
            mode=mode,
            content=content,
            token_count=tokenizer.count(f"{label}: {content}"),
            priority=total_planned - idx,
        )
        for idx, (label, mode, content) in enumerate(planned)
    ]

    kept: list[InputBlock] = []
    remaining = budget - instruction_tokens
    truncated = False
    for block in blocks:
        if block.token_count <= remaining:
            kept.append(block)
            remaining -= block.token_count
            continue
        truncated = True
        trimmed = _trim_block(block, remaining, tokenizer)
        if trimmed is not None:
            kept.append(trimmed)
        break

    total = instruction_tokens + sum(b.token_count for b in kept)
    return ReconstructedInput(
        target=target,
        instruction=instruction,
        blocks=kept,
        total_tokens=total,
        truncated=truncated,
    )
