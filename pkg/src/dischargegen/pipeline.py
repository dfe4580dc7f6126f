"""End-to-end orchestration: load, build inputs, generate, evaluate, report.

Every stage writes the documented file formats, so a full ``run`` is
equivalent to chaining the ``build-input``, ``generate``, and ``evaluate``
subcommands over the same configuration. Per-document problems are recorded
in the run report; only stage-level failures abort.
"""

from __future__ import annotations

import concurrent.futures
import csv
import dataclasses
import functools
import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from . import concepts as concepts_mod
from . import evaluation as ev
from . import generation as gen
from .corpus import Split, Visit, load_corpus
from .errors import (
    BackendConfigError,
    ConfigError,
    RemoteProtocolError,
    RemoteUnavailableError,
    StageError,
)
from .inputs import (
    ReconstructedInput,
    SelectionConfig,
    TargetSection,
    build_input,
    default_selection,
    extract_visit_concepts,
    render_prompt,
)
from .sections import SectionName, SegmentedNote, extract_section, segment
from .tokenization import MODES, BudgetTokenizer

DEFAULT_CANNED = {
    TargetSection.BRIEF_HOSPITAL_COURSE.value: (
        "The hospitalization proceeded without complication and the patient "
        "improved with supportive management."
    ),
    TargetSection.DISCHARGE_INSTRUCTIONS.value: (
        "Please take your medications as prescribed, keep your follow-up "
        "appointments, and return for any new or worsening symptoms."
    ),
}

BACKEND_KINDS = ("mock", "extractive", "remote")
INPUT_MODES = ("ner_text", "all_text")
NER_KINDS = ("lexicon", "remote")


@dataclass
class BackendSettings:
    kind: str = "mock"
    canned: dict[str, str] = field(default_factory=lambda: dict(DEFAULT_CANNED))
    k: int = 3
    endpoint: str | None = None
    timeout: float = 60.0
    retries: int = 2
    backoff: float = 0.5


@dataclass
class PipelineConfig:
    corpus: str = ""
    split: str = "train"
    lexicon: str = ""
    output_dir: str = "runs/out"
    budget: int = 2048
    tokenizer: str = "whitespace"
    input_mode: str = "ner_text"
    backend: BackendSettings = field(default_factory=BackendSettings)
    temperature: float = 0.2
    top_p: float = 0.6
    max_new_tokens: int = 512
    seed: int | None = 7
    metrics: list[str] = field(default_factory=lambda: [m.value for m in ev.CORE_METRICS])
    scorer_endpoint: str | None = None
    ner_kind: str = "lexicon"
    ner_endpoint: str | None = None
    workers: int = 4
    selection: dict[str, Any] = field(default_factory=dict)

    def generation_params(self) -> gen.GenerationParams:
        return gen.GenerationParams(
            temperature=self.temperature,
            top_p=self.top_p,
            max_new_tokens=self.max_new_tokens,
            seed=self.seed,
        )

    def budget_tokenizer(self) -> BudgetTokenizer:
        return BudgetTokenizer(self.tokenizer)

    def metric_ids(self) -> list[ev.MetricId]:
        return [ev.MetricId(m) for m in self.metrics]

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_CONFIG_DEFAULTS = PipelineConfig().to_dict()


def config_from_dict(data: dict) -> PipelineConfig:
    """Build a config from a plain mapping, rejecting unknown keys."""
    known = set(_CONFIG_DEFAULTS)
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
    merged = dict(data)
    backend_data = merged.pop("backend", {})
    if not isinstance(backend_data, dict):
        raise ConfigError("backend must be a mapping")
    unknown_backend = set(backend_data) - {f.name for f in dataclasses.fields(BackendSettings)}
    if unknown_backend:
        raise ConfigError(f"unknown backend key(s): {sorted(unknown_backend)}")
    backend_defaults = BackendSettings()
    if "canned" in backend_data and backend_data["canned"] is not None:
        backend_defaults.canned = dict(backend_data["canned"])
        backend_data = {k: v for k, v in backend_data.items() if k != "canned"}
    backend = dataclasses.replace(backend_defaults, **backend_data)
    return PipelineConfig(backend=backend, **merged)


def config_hash(cfg: PipelineConfig) -> str:
    canonical = json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass
class Finding:
    severity: str  # "error" | "warning"
    field: str
    message: str


_SECTION_BY_VALUE = {s.value: s for s in SectionName}


def _parse_section_list(raw, field_path: str, findings: list[Finding]) -> tuple[SectionName, ...]:
    out = []
    for item in raw:
        section = _SECTION_BY_VALUE.get(item)
        if section is None:
            findings.append(Finding("error", field_path, f"unknown section name {item!r}"))
        else:
            out.append(section)
    return tuple(out)


def resolve_selection(cfg: PipelineConfig, findings: list[Finding] | None = None) -> SelectionConfig:
    """Apply per-target selection overrides from the config onto the defaults."""
    findings = findings if findings is not None else []
    base = default_selection()
    resolved = {}
    for target in TargetSection:
        sel = base.for_target(target)
        override = cfg.selection.get(target.value, {}) if cfg.selection else {}
        if override:
            path = f"selection.{target.value}"
            kwargs = {}
            if "concept_sections" in override:
                kwargs["concept_sections"] = _parse_section_list(
                    override["concept_sections"], f"{path}.concept_sections", findings
                )
            if "verbatim_sections" in override:
                kwargs["verbatim_sections"] = _parse_section_list(
                    override["verbatim_sections"], f"{path}.verbatim_sections", findings
                )
            if "include_radiology" in override:
                kwargs["include_radiology"] = bool(override["include_radiology"])
            if "include_diagnosis_descriptions" in override:
                kwargs["include_diagnosis_descriptions"] = bool(
                    override["include_diagnosis_descriptions"]
                )
            sel = dataclasses.replace(sel, **kwargs)
        resolved[target] = sel
    return SelectionConfig(
        brief_hospital_course=resolved[TargetSection.BRIEF_HOSPITAL_COURSE],
        discharge_instructions=resolved[TargetSection.DISCHARGE_INSTRUCTIONS],
    )


def validate_config(cfg: PipelineConfig) -> list[Finding]:
    """All invariant violations as findings; an empty list means runnable."""
    findings: list[Finding] = []

    def error(field_path: str, message: str) -> None:
        findings.append(Finding("error", field_path, message))

    if not cfg.corpus:
        error("corpus", "corpus path is required")
    elif not Path(cfg.corpus).is_file():
        error("corpus", f"corpus file not found: {cfg.corpus}")
    if cfg.split not in {s.value for s in Split}:
        error("split", f"unknown split {cfg.split!r}")
    if cfg.ner_kind not in NER_KINDS:
        error("ner_kind", f"must be one of {NER_KINDS}")
    needs_lexicon = cfg.ner_kind == "lexicon" or ev.MetricId.CONCEPT_F1.value in cfg.metrics
    if needs_lexicon:
        if not cfg.lexicon:
            error("lexicon", "lexicon path is required")
        elif not Path(cfg.lexicon).is_file():
            error("lexicon", f"lexicon file not found: {cfg.lexicon}")
    if cfg.ner_kind == "remote" and not cfg.ner_endpoint:
        error("ner_endpoint", "required when ner_kind is 'remote'")
    if cfg.budget <= 0:
        error("budget", "budget must be > 0")
    if cfg.tokenizer not in MODES:
        error("tokenizer", f"must be one of {MODES}")
    if cfg.input_mode not in INPUT_MODES:
        error("input_mode", f"must be one of {INPUT_MODES}")
    if cfg.backend.kind not in BACKEND_KINDS:
        error("backend.kind", f"must be one of {BACKEND_KINDS}")
    if cfg.backend.kind == "mock":
        for target in TargetSection:
            if target.value not in cfg.backend.canned:
                error("backend.canned", f"missing canned text for {target.value}")
    if cfg.backend.kind == "extractive" and cfg.backend.k < 1:
        error("backend.k", "k must be >= 1")
    if cfg.backend.kind == "remote" and not cfg.backend.endpoint:
        error("backend.endpoint", "required when backend.kind is 'remote'")
    if not cfg.metrics:
        error("metrics", "metric set must be non-empty")
    else:
        valid = {m.value for m in ev.MetricId}
        for name in cfg.metrics:
            if name not in valid:
                error("metrics", f"unknown metric {name!r}")
        remote_requested = {m for m in cfg.metrics if m in {x.value for x in ev.REMOTE_METRICS}}
        if remote_requested and not cfg.scorer_endpoint:
            error("scorer_endpoint", f"required for remote metric(s) {sorted(remote_requested)}")
    if cfg.temperature <= 0:
        error("temperature", "must be > 0")
    if not (0 < cfg.top_p <= 1):
        error("top_p", "must be in (0, 1]")
    if cfg.max_new_tokens <= 0:
        error("max_new_tokens", "must be > 0")
    if cfg.workers < 1:
        error("workers", "must be >= 1")

    selection = resolve_selection(cfg, findings)
    try:
        selection.validate()
    except ConfigError as exc:
        error("selection", str(exc))
    return findings


@dataclass
class BuiltDocument:
    visit: Visit
    note: SegmentedNote
    inputs: dict[TargetSection, ReconstructedInput]
    prompts: dict[TargetSection, str]
    verbatim_tokens: dict[TargetSection, int]


def _segment_and_build(
    visit: Visit,
    lexicon: concepts_mod.Lexicon | None,
    cfg: PipelineConfig,
    selection: SelectionConfig,
) -> BuiltDocument:
    note = segment(visit.note_text)
    tokenizer = cfg.budget_tokenizer()
    concept_mode = cfg.input_mode == "ner_text"
    visit_concepts = None
    if concept_mode:
        if cfg.ner_kind == "remote":
            visit_concepts = _remote_visit_concepts(visit, note, cfg, selection)
        else:
            visit_concepts = extract_visit_concepts(visit, note, lexicon, selection)
    inputs = {}
    prompts = {}
    verbatim_tokens = {}
    no_limit = 10**9
    for target in TargetSection:
        built = build_input(
            visit,
            note,
            visit_concepts,
            target,
            cfg=selection,
            budget=cfg.budget,
            tokenizer=tokenizer,
            concept_mode=concept_mode,
        )
        inputs[target] = built
        prompts[target] = render_prompt(built)
        verbatim_tokens[target] = build_input(
            visit,
            note,
            None,
            target,
            cfg=selection,
            budget=no_limit,
            tokenizer=tokenizer,
            concept_mode=False,
        ).total_tokens
    return BuiltDocument(
        visit=visit, note=note, inputs=inputs, prompts=prompts, verbatim_tokens=verbatim_tokens
    )


def _remote_visit_concepts(visit, note, cfg: PipelineConfig, selection: SelectionConfig):
    from .inputs import RADIOLOGY_SECTION, VisitConcepts

    wanted: list[SectionName] = []
    need_radiology = False
    for target in TargetSection:
        sel = selection.for_target(target)
        need_radiology = need_radiology or sel.include_radiology
        for section in sel.concept_sections:
            if section not in wanted:
                wanted.append(section)
    out = VisitConcepts()
    for section in wanted:
        body = extract_section(note, section)
        if body:
            out.spans[section] = concepts_mod.remote_extract(
                body,
                section,
                cfg.ner_endpoint,
                timeout=cfg.backend.timeout,
                retries=cfg.backend.retries,
                backoff=cfg.backend.backoff,
            )
    if need_radiology:
        merged = []
        for report in visit.radiology_reports:
            merged.extend(
                concepts_mod.remote_extract(
                    report,
                    RADIOLOGY_SECTION,
                    cfg.ner_endpoint,
                    timeout=cfg.backend.timeout,
                    retries=cfg.backend.retries,
                    backoff=cfg.backend.backoff,
                )
            )
        out.spans[RADIOLOGY_SECTION] = merged
    return out


def make_backend(
    cfg: PipelineConfig, notes_by_id: dict[str, SegmentedNote], selection: SelectionConfig
) -> Callable[[gen.GenerationRequest], gen.GenerationResponse]:
    settings = cfg.backend
    if settings.kind == "mock":
        canned = {TargetSection(k): v for k, v in settings.canned.items()}
        return functools.partial(gen.generate_mock, canned=canned)
    if settings.kind == "extractive":

        def extractive(req: gen.GenerationRequest) -> gen.GenerationResponse:
            note = notes_by_id[req.hadm_id]
            return gen.generate_extractive(req, note, settings.k, selection)

        return extractive
    if settings.kind == "remote":
        if not settings.endpoint:
            raise BackendConfigError("remote backend requires an endpoint")
        return functools.partial(
            gen.generate_remote,
            endpoint=settings.endpoint,
            timeout=settings.timeout,
            retries=settings.retries,
            backoff=settings.backoff,
        )
    raise BackendConfigError(f"unknown backend kind {settings.kind!r}")


@dataclass
class RunReport:
    config_hash: str
    stage_seconds: dict[str, float]
    outcomes: list[gen.DocumentOutcome]
    compression: dict[str, dict[str, float]]
    aggregate: dict | None
    visits: int
    failed_documents: int

    def to_json(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "stage_seconds": self.stage_seconds,
            "visits": self.visits,
            "failed_documents": self.failed_documents,
            "compression": self.compression,
            "outcomes": [
                {
                    "hadm_id": o.hadm_id,
                    "target": o.target.value,
                    "status": o.status,
                    "error": o.error,
                    "retries": o.retries,
                    "latency_ms": o.latency_ms,
                }
                for o in self.outcomes
            ],
            "aggregate": self.aggregate,
        }


def _dump_json(payload: dict, path: Path) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")


@dataclass
class BuildFailure:
    visit: Visit
    error: str


def build_documents(
    visits: list[Visit],
    lexicon: concepts_mod.Lexicon | None,
    cfg: PipelineConfig,
    selection: SelectionConfig,
) -> tuple[list[BuiltDocument], list[BuildFailure]]:
    """Segment and build every visit; remote-extraction problems fail only
    that document (after the client's bounded retries), never the batch."""
    worker = functools.partial(_segment_and_build, lexicon=lexicon, cfg=cfg, selection=selection)

    def isolated(visit: Visit) -> "BuiltDocument | BuildFailure":
        try:
            return worker(visit)
        except (RemoteUnavailableError, RemoteProtocolError) as exc:
            return BuildFailure(visit=visit, error=f"{type(exc).__name__}: {exc}")

    if cfg.workers == 1 or len(visits) <= 1:
        results = [isolated(v) for v in visits]
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(isolated, visits))
    documents = [r for r in results if isinstance(r, BuiltDocument)]
    failures = [r for r in results if isinstance(r, BuildFailure)]
    return documents, failures


def write_prompts(documents: list[BuiltDocument], path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for doc in documents:
            for target in TargetSection:
                built = doc.inputs[target]
                fh.write(
                    json.dumps(
                        {
                            "hadm_id": doc.visit.hadm_id,
                            "target": target.value,
                            "prompt": doc.prompts[target],
                            "total_tokens": built.total_tokens,
                            "truncated": built.truncated,
                        },
                        ensure_ascii=False,
                        sort_keys=True,
                    )
                    + "\n"
                )


def compression_summary(documents: list[BuiltDocument]) -> dict[str, dict[str, float]]:
    out: dict[str, dict[str, float]] = {}
    for target in TargetSection:
        built = [d.inputs[target].total_tokens for d in documents]
        raw = [d.verbatim_tokens[target] for d in documents]
        mean_built = sum(built) / len(built) if built else 0.0
        mean_raw = sum(raw) / len(raw) if raw else 0.0
        out[target.value] = {
            "mean_reconstructed_tokens": mean_built,
            "mean_verbatim_tokens": mean_raw,
            "ratio": (mean_built / mean_raw) if mean_raw else 0.0,
        }
    return out


def write_scores(reports: list[ev.MetricReport], path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["hadm_id", "target", "metric", "value"])
        for report in sorted(reports, key=lambda r: (r.hadm_id, r.target.value)):
            for metric in sorted(report.scores, key=lambda m: m.value):
                writer.writerow(
                    [report.hadm_id, report.target.value, metric.value, repr(report.scores[metric])]
                )


def evaluate_submission(
    rows: list[dict[str, str]],
    visits: list[Visit],
    lexicon: concepts_mod.Lexicon | None,
    metrics: list[ev.MetricId],
    scorer_endpoint: str | None = None,
) -> tuple[list[ev.MetricReport], ev.AggregateReport, dict]:
    """Score every non-empty submission cell against the gold section bodies."""
    gold: dict[tuple[str, TargetSection], str] = {}
    visit_ids = set()
    for visit in visits:
        visit_ids.add(visit.hadm_id)
        note = segment(visit.note_text)
        for target in TargetSection:
            body = extract_section(note, target.section)
            if body:
                gold[(visit.hadm_id, target)] = body

    unavailable: set[ev.MetricId] = set()
    remote_requested = [m for m in metrics if m in ev.REMOTE_METRICS]
    skipped: list[dict] = []
    reports: list[ev.MetricReport] = []
    for row in rows:
        hadm_id = row["hadm_id"]
        if hadm_id not in visit_ids:
            raise StageError("evaluate", f"submission hadm_id {hadm_id!r} not in gold corpus")
        for target in TargetSection:
            candidate = row.get(target.value, "") or ""
            reference = gold.get((hadm_id, target))
            if reference is None:
                skipped.append(
                    {"hadm_id": hadm_id, "target": target.value, "reason": "missing_gold_section"}
                )
                continue
            # Empty candidates (including failed generations) are scored like
            # any other sample; each metric's empty-side convention applies.
            remote_values: dict[ev.MetricId, float] = {}
            for metric in remote_requested:
                if metric in unavailable:
                    continue
                try:
                    remote_values[metric] = ev.remote_score(
                        candidate, reference, metric, scorer_endpoint
                    )
                except RemoteUnavailableError:
                    unavailable.add(metric)
            local = [m for m in metrics if m not in ev.REMOTE_METRICS]
            scores = ev.score_pair(candidate, reference, lexicon, local)
            scores.update(remote_values)
            reports.append(ev.MetricReport(hadm_id=hadm_id, target=target, scores=scores))

    if unavailable:
        for report in reports:
            for metric in unavailable:
                report.scores.pop(metric, None)
    agg = ev.aggregate(reports)
    agg.unavailable_metrics = tuple(sorted(unavailable, key=lambda m: m.value))
    extras = {"skipped": skipped}
    return reports, agg, extras


def run_pipeline(cfg: PipelineConfig) -> RunReport:
    """Execute every stage and write all artifacts into ``cfg.output_dir``."""
    findings = validate_config(cfg)
    errors = [f for f in findings if f.severity == "error"]
    if errors:
        raise ConfigError("; ".join(f"{f.field}: {f.message}" for f in errors))

    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stage_seconds: dict[str, float] = {}
    selection = resolve_selection(cfg)

    def timed(name: str, fn: Callable):
        start = time.perf_counter()
        try:
            result = fn()
        except StageError:
            raise
        except Exception as exc:
            raise StageError(name, str(exc)) from exc
        stage_seconds[name] = time.perf_counter() - start
        return result

    visits = timed("load", lambda: load_corpus(cfg.corpus, Split(cfg.split)))
    lexicon = None
    if cfg.lexicon:
        lexicon = timed("lexicon", lambda: concepts_mod.Lexicon.load(cfg.lexicon))

    documents, build_failures = timed(
        "build_input", lambda: build_documents(visits, lexicon, cfg, selection)
    )
    write_prompts(documents, out_dir / "prompts.jsonl")

    notes_by_id = {d.visit.hadm_id: d.note for d in documents}
    backend = make_backend(cfg, notes_by_id, selection)
    params = cfg.generation_params()
    requests_ = [
        gen.GenerationRequest(
            hadm_id=doc.visit.hadm_id,
            target=target,
            prompt=doc.prompts[target],
            params=params,
        )
        for doc in documents
        for target in TargetSection
    ]
    responses, outcomes = timed(
        "generate", lambda: gen.run_generation(requests_, backend, cfg.workers)
    )
    for failure in build_failures:
        for target in TargetSection:
            outcomes.append(
                gen.DocumentOutcome(
                    hadm_id=failure.visit.hadm_id,
                    target=target,
                    status="failed",
                    error=failure.error,
                )
            )
    outcomes.sort(key=lambda o: (o.hadm_id, o.target.value))
    gen.write_submission(
        responses, out_dir / "submission.csv", [v.hadm_id for v in visits]
    )

    rows = gen.read_submission(out_dir / "submission.csv")
    reports, agg, extras = timed(
        "evaluate",
        lambda: evaluate_submission(
            rows, visits, lexicon, cfg.metric_ids(), cfg.scorer_endpoint
        ),
    )
    write_scores(reports, out_dir / "scores.csv")
    aggregate_json = ev.aggregate_to_json(agg)
    aggregate_json["skipped"] = extras["skipped"]
    _dump_json(aggregate_json, out_dir / "aggregate.json")

    failed = sum(1 for o in outcomes if o.status == "failed")
    report = RunReport(
        config_hash=config_hash(cfg),
        stage_seconds=stage_seconds,
        outcomes=outcomes,
        compression=compression_summary(documents),
        aggregate=aggregate_json,
        visits=len(visits),
        failed_documents=failed,
    )
    _dump_json(report.to_json(), out_dir / "run_report.json")
    return report
