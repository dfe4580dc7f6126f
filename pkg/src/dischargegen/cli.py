"""Command-line interface over the pipeline stages.

Every subcommand reads the same YAML configuration; any leaf key can be
overridden with ``--set dotted.path=value`` or an environment variable of the
form ``DISCHARGEGEN_<PATH>`` (dots become underscores, uppercased). Exit
codes: 0 success, 1 validation failure, 2 stage failure, 3 completed with
per-document failures.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import yaml

from . import concepts as concepts_mod
from . import evaluation as ev
from . import generation as gen
from .corpus import Split, compute_stats, load_corpus, stats_to_json
from .errors import ConfigError, DischargeGenError, StageError
from .inputs import TargetSection
from .pipeline import (
    PipelineConfig,
    build_documents,
    config_from_dict,
    evaluate_submission,
    make_backend,
    resolve_selection,
    run_pipeline,
    validate_config,
    write_prompts,
    write_scores,
)
from .sections import UnknownSection, note_to_json, segment

ENV_PREFIX = "DISCHARGEGEN_"

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_STAGE = 2
EXIT_PARTIAL = 3


def _leaf_paths(data: dict, prefix: str = "") -> list[str]:
    paths = []
    for key, value in data.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, dict) and value and key != "canned" and key != "selection":
            paths.extend(_leaf_paths(value, dotted + "."))
        else:
            paths.append(dotted)
    return paths


def _set_path(data: dict, dotted: str, value) -> None:
    parts = dotted.split(".")
    node = data
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot override through non-mapping key {part!r} in {dotted!r}")
    node[parts[-1]] = value


def _env_overrides(known_paths: list[str]) -> dict[str, str]:
    by_env_name = {p.replace(".", "_").upper(): p for p in known_paths}
    out = {}
    for name, value in os.environ.items():
        if not name.startswith(ENV_PREFIX):
            continue
        path = by_env_name.get(name[len(ENV_PREFIX) :])
        if path is not None:
            out[path] = value
    return out


def load_config(path: str | None, overrides: list[str]) -> PipelineConfig:
    """Defaults <- config file <- environment <- --set flags, then validate shape."""
    data = PipelineConfig().to_dict()
    if path:
        raw = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
        if raw is None:
            raw = {}
        if not isinstance(raw, dict):
            raise ConfigError(f"config file {path} must hold a mapping")
        for key, value in raw.items():
            if isinstance(value, dict) and isinstance(data.get(key), dict) and key != "selection":
                data[key].update(value)
            else:
                data[key] = value
    known = _leaf_paths(data)
    for dotted, value in _env_overrides(known).items():
        _set_path(data, dotted, yaml.safe_load(value))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects dotted.path=value, got {item!r}")
        dotted, _, raw_value = item.partition("=")
        _set_path(data, dotted.strip(), yaml.safe_load(raw_value))
    return config_from_dict(data)


def _read_text_arg(args) -> str:
    if args.input and args.input != "-":
        return Path(args.input).read_text(encoding="utf-8")
    return sys.stdin.read()


def cmd_segment(args) -> int:
    note = segment(_read_text_arg(args))
    json.dump(note_to_json(note), sys.stdout, indent=2)
    sys.stdout.write("\n")
    return EXIT_OK


def cmd_extract(args) -> int:
    lexicon = concepts_mod.Lexicon.load(args.lexicon)
    text = _read_text_arg(args)
    section = UnknownSection(args.section) if args.section else UnknownSection("input")
    spans = concepts_mod.extract_concepts(text, section, lexicon)
    payload = {
        "spans": [
            {"text": s.text, "type": s.ctype.value, "start": s.start, "end": s.end}
            for s in spans
        ],
        "concepts": concepts_mod.dedup_concepts(spans),
    }
    json.dump(payload, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return EXIT_OK


def _require_valid(cfg: PipelineConfig) -> int | None:
    findings = validate_config(cfg)
    errors = [f for f in findings if f.severity == "error"]
    for finding in findings:
        print(f"{finding.severity}: {finding.field}: {finding.message}", file=sys.stderr)
    if errors:
        return EXIT_VALIDATION
    return None


def cmd_validate(args) -> int:
    cfg = load_config(args.config, args.set or [])
    code = _require_valid(cfg)
    if code is None:
        print("configuration valid")
        return EXIT_OK
    return code


def cmd_stats(args) -> int:
    cfg = load_config(args.config, args.set or [])
    code = _require_valid(cfg)
    if code is not None:
        return code
    visits = load_corpus(cfg.corpus, Split(cfg.split))
    stats = compute_stats(visits, cfg.budget_tokenizer(), cfg.budget)
    json.dump(stats_to_json(stats), sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return EXIT_OK


def cmd_build_input(args) -> int:
    cfg = load_config(args.config, args.set or [])
    code = _require_valid(cfg)
    if code is not None:
        return code
    visits = load_corpus(cfg.corpus, Split(cfg.split))
    lexicon = concepts_mod.Lexicon.load(cfg.lexicon) if cfg.lexicon else None
    selection = resolve_selection(cfg)
    documents, failures = build_documents(visits, lexicon, cfg, selection)
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_prompts(documents, out_dir / "prompts.jsonl")
    for failure in failures:
        print(f"failed: {failure.visit.hadm_id}: {failure.error}", file=sys.stderr)
    print(f"wrote {len(documents) * 2} prompts to {out_dir / 'prompts.jsonl'}")
    return EXIT_PARTIAL if failures else EXIT_OK


def cmd_generate(args) -> int:
    cfg = load_config(args.config, args.set or [])
    code = _require_valid(cfg)
    if code is not None:
        return code
    out_dir = Path(cfg.output_dir)
    prompts_path = out_dir / "prompts.jsonl"
    if not prompts_path.is_file():
        print(f"error: {prompts_path} not found (run build-input first)", file=sys.stderr)
        return EXIT_STAGE
    requests_ = []
    params = cfg.generation_params()
    with open(prompts_path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            record = json.loads(line)
            requests_.append(
                gen.GenerationRequest(
                    hadm_id=record["hadm_id"],
                    target=TargetSection(record["target"]),
                    prompt=record["prompt"],
                    params=params,
                )
            )
    notes_by_id = {}
    if cfg.backend.kind == "extractive":
        visits = load_corpus(cfg.corpus, Split(cfg.split))
        notes_by_id = {v.hadm_id: segment(v.note_text) for v in visits}
    backend = make_backend(cfg, notes_by_id, resolve_selection(cfg))
    responses, outcomes = gen.run_generation(requests_, backend, cfg.workers)
    gen.write_submission(
        responses, out_dir / "submission.csv", {r.hadm_id for r in requests_}
    )
    failed = [o for o in outcomes if o.status == "failed"]
    for outcome in failed:
        print(f"failed: {outcome.hadm_id}/{outcome.target.value}: {outcome.error}", file=sys.stderr)
    print(f"wrote {len(responses)} generations to {out_dir / 'submission.csv'}")
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = load_config(args.config, args.set or [])
    code = _require_valid(cfg)
    if code is not None:
        return code
    out_dir = Path(cfg.output_dir)
    submission = Path(args.submission) if args.submission else out_dir / "submission.csv"
    if not submission.is_file():
        print(f"error: submission file {submission} not found", file=sys.stderr)
        return EXIT_STAGE
    rows = gen.read_submission(submission)
    visits = load_corpus(cfg.corpus, Split(cfg.split))
    lexicon = concepts_mod.Lexicon.load(cfg.lexicon) if cfg.lexicon else None
    reports, agg, extras = evaluate_submission(
        rows, visits, lexicon, cfg.metric_ids(), cfg.scorer_endpoint
    )
    out_dir.mkdir(parents=True, exist_ok=True)
    write_scores(reports, out_dir / "scores.csv")
    payload = ev.aggregate_to_json(agg)
    payload["skipped"] = extras["skipped"]
    (out_dir / "aggregate.json").write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    print(json.dumps({"overall": agg.overall}, indent=None))
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = load_config(args.config, args.set or [])
    code = _require_valid(cfg)
    if code is not None:
        return code
    try:
        report = run_pipeline(cfg)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    ratios = {t: round(c["ratio"], 4) for t, c in report.compression.items()}
    print(
        f"run complete: {report.visits} visits, "
        f"{report.failed_documents} failed documents, "
        f"compression ratios {ratios}, "
        f"overall score {report.aggregate['overall']:.4f}"
    )
    return EXIT_PARTIAL if report.failed_documents else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dischargegen",
        description="Segment discharge notes, build budgeted prompts, generate and score target sections.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_args(p):
        p.add_argument("--config", "-c", help="YAML configuration file")
        p.add_argument(
            "--set",
            action="append",
            metavar="PATH=VALUE",
            help="override a config key by dotted path (repeatable)",
        )

    p_segment = sub.add_parser("segment", help="split a note into sections (JSON spans)")
    p_segment.add_argument("--input", "-i", help="note file, or '-' for stdin (default)")
    p_segment.set_defaults(func=cmd_segment)

    p_extract = sub.add_parser("extract", help="extract clinical concepts from text")
    p_extract.add_argument("--input", "-i", help="text file, or '-' for stdin (default)")
    p_extract.add_argument("--lexicon", required=True, help="TSV lexicon path")
    p_extract.add_argument("--section", help="section label recorded on the spans")
    p_extract.set_defaults(func=cmd_extract)

    for name, handler, summary in (
        ("validate", cmd_validate, "check the configuration and report findings"),
        ("stats", cmd_stats, "corpus token-length statistics"),
        ("build-input", cmd_build_input, "write prompts.jsonl for the corpus"),
        ("generate", cmd_generate, "run the backend over prompts.jsonl"),
        ("run", cmd_run, "execute the full pipeline"),
    ):
        p = sub.add_parser(name, help=summary)
        add_config_args(p)
        p.set_defaults(func=handler)

    p_eval = sub.add_parser("evaluate", help="score a submission CSV against the gold corpus")
    add_config_args(p_eval)
    p_eval.add_argument("--submission", help="submission CSV (default: <output_dir>/submission.csv)")
    p_eval.set_defaults(func=cmd_evaluate)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except DischargeGenError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE


def cli_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    cli_entry()
