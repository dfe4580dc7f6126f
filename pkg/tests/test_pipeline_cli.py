import dataclasses
import io
import json

import pytest
import yaml

from dischargegen import cli
from dischargegen.corpus import dump_corpus
from dischargegen.errors import ConfigError
from dischargegen.pipeline import (
    PipelineConfig,
    config_from_dict,
    config_hash,
    evaluate_submission,
    run_pipeline,
    validate_config,
)
from dischargegen.evaluation import MetricId


def write_config(tmp_path, corpus_path, lexicon_path, **overrides):
    data = {
        "corpus": str(corpus_path),
        "split": "train",
        "lexicon": str(lexicon_path),
        "output_dir": str(tmp_path / "out"),
        "seed": 7,
    }
    data.update(overrides)
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump(data), encoding="utf-8")
    return path


@pytest.fixture
def fixture_config(tmp_path, corpus_path, lexicon_path):
    return write_config(tmp_path, corpus_path, lexicon_path)


def test_validate_default_fixture_config_clean(fixture_config):
    cfg = cli.load_config(str(fixture_config), [])
    assert validate_config(cfg) == []


def test_validate_budget_zero(fixture_config):
    cfg = cli.load_config(str(fixture_config), ["budget=0"])
    findings = validate_config(cfg)
    assert any(f.field == "budget" and f.severity == "error" for f in findings)


def test_validate_overlapping_selection_override(fixture_config):
    cfg = cli.load_config(str(fixture_config), [])
    cfg = dataclasses.replace(
        cfg,
        selection={
            "brief_hospital_course": {
                "concept_sections": ["Physical Exam"],
                "verbatim_sections": ["Physical Exam"],
            }
        },
    )
    findings = validate_config(cfg)
    assert any("Physical Exam" in f.message for f in findings)


def test_validate_unknown_section_name(fixture_config):
    cfg = cli.load_config(str(fixture_config), [])
    cfg = dataclasses.replace(
        cfg,
        selection={"brief_hospital_course": {"concept_sections": ["No Such Section"]}},
    )
    findings = validate_config(cfg)
    assert any("No Such Section" in f.message for f in findings)


def test_validate_missing_lexicon_path(tmp_path, corpus_path):
    path = write_config(tmp_path, corpus_path, tmp_path / "missing.tsv")
    assert cli.main(["validate", "-c", str(path)]) == cli.EXIT_VALIDATION


def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigError, match="unknown config key"):
        config_from_dict({"not_a_key": 1})


def test_config_hash_stable_and_sensitive(fixture_config):
    cfg = cli.load_config(str(fixture_config), [])
    assert config_hash(cfg) == config_hash(cfg)
    other = cli.load_config(str(fixture_config), ["budget=99"])
    assert config_hash(cfg) != config_hash(other)


def test_env_override(monkeypatch, fixture_config):
    monkeypatch.setenv("DISCHARGEGEN_BUDGET", "64")
    cfg = cli.load_config(str(fixture_config), [])
    assert cfg.budget == 64


def test_set_override_beats_env(monkeypatch, fixture_config):
    monkeypatch.setenv("DISCHARGEGEN_BUDGET", "64")
    cfg = cli.load_config(str(fixture_config), ["budget=128", "backend.kind=extractive"])
    assert cfg.budget == 128
    assert cfg.backend.kind == "extractive"


def test_run_writes_all_artifacts(fixture_config, tmp_path, visits):
    assert cli.main(["run", "-c", str(fixture_config)]) == cli.EXIT_OK
    out = tmp_path / "out"
    for name in ("prompts.jsonl", "submission.csv", "scores.csv", "aggregate.json", "run_report.json"):
        assert (out / name).is_file(), name
    prompts = [json.loads(l) for l in (out / "prompts.jsonl").read_text().splitlines()]
    assert len(prompts) == 2 * len(visits)
    assert all(p["total_tokens"] <= 2048 for p in prompts)
    rows = (out / "submission.csv").read_text(encoding="utf-8").splitlines()
    assert rows[0] == "hadm_id,brief_hospital_course,discharge_instructions"
    report = json.loads((out / "run_report.json").read_text())
    assert report["visits"] == len(visits)
    assert report["failed_documents"] == 0
    assert len(report["outcomes"]) == 2 * len(visits)
    for target_stats in report["compression"].values():
        assert target_stats["ratio"] < 1.0


def test_run_is_equivalent_to_chained_stages(tmp_path, corpus_path, lexicon_path):
    cfg_one = write_config(tmp_path, corpus_path, lexicon_path, output_dir=str(tmp_path / "one"))
    assert cli.main(["run", "-c", str(cfg_one)]) == cli.EXIT_OK
    cfg_two = write_config(tmp_path, corpus_path, lexicon_path, output_dir=str(tmp_path / "two"))
    assert cli.main(["build-input", "-c", str(cfg_two)]) == cli.EXIT_OK
    assert cli.main(["generate", "-c", str(cfg_two)]) == cli.EXIT_OK
    assert cli.main(["evaluate", "-c", str(cfg_two)]) == cli.EXIT_OK
    for name in ("submission.csv", "scores.csv", "aggregate.json"):
        one = (tmp_path / "one" / name).read_bytes()
        two = (tmp_path / "two" / name).read_bytes()
        assert one == two, name


def test_generate_without_prompts_is_stage_failure(fixture_config):
    assert cli.main(["generate", "-c", str(fixture_config)]) == cli.EXIT_STAGE


def test_extractive_backend_run(tmp_path, corpus_path, lexicon_path):
    cfg = write_config(
        tmp_path, corpus_path, lexicon_path, backend={"kind": "extractive", "k": 3}
    )
    assert cli.main(["run", "-c", str(cfg)]) == cli.EXIT_OK
    rows = (tmp_path / "out" / "submission.csv").read_text(encoding="utf-8")
    assert "emergency department" in rows  # k=3 reaches the first history sentence


def test_stats_reports_over_budget_fraction(fixture_config, capsys):
    assert cli.main(["stats", "-c", str(fixture_config)]) == cli.EXIT_OK
    payload = json.loads(capsys.readouterr().out)
    assert payload["budget"] == 2048
    assert payload["overall"]["sample_count"] == 22
    assert 0 < payload["overall"]["fraction_over_budget"] < 1
    assert payload["overall"]["mean_target_tokens"]["Brief Hospital Course"] > 0


def test_segment_subcommand(monkeypatch, capsys):
    monkeypatch.setattr("sys.stdin", io.StringIO("Chief Complaint:\nfever\n"))
    assert cli.main(["segment"]) == cli.EXIT_OK
    payload = json.loads(capsys.readouterr().out)
    assert payload["sections"][0]["name"] == "Chief Complaint"
    assert payload["sections"][0]["body"] == [17, 23]


def test_extract_subcommand(monkeypatch, capsys, lexicon_path):
    monkeypatch.setattr("sys.stdin", io.StringIO("history of hypertension and colectomy"))
    assert cli.main(["extract", "--lexicon", str(lexicon_path)]) == cli.EXIT_OK
    payload = json.loads(capsys.readouterr().out)
    assert payload["concepts"] == ["hypertension", "colectomy"]
    assert payload["spans"][0]["type"] == "PROBLEM"


def test_remote_backend_document_failures_do_not_abort(
    tmp_path, visits, lexicon_path, mock_service
):
    edited = [
        visits[0],
        dataclasses.replace(
            visits[1],
            note_text=visits[1].note_text.replace(
                "Chief Complaint:\nproductive cough and fever",
                "Chief Complaint:\nzzfailzz cough",
            ),
        ),
    ]
    corpus = tmp_path / "two_visits.jsonl"
    dump_corpus(edited, corpus)

    def generate(body):
        if "zzfailzz" in body["prompt"]:
            return 422, {"error": "context_overflow"}
        return 200, {"text": "A steady recovery followed the admission."}

    mock_service.route("/generate", generate)
    cfg = write_config(
        tmp_path,
        corpus,
        lexicon_path,
        backend={"kind": "remote", "endpoint": mock_service.url + "/generate", "backoff": 0.0},
    )
    assert cli.main(["run", "-c", str(cfg)]) == cli.EXIT_PARTIAL
    report = json.loads((tmp_path / "out" / "run_report.json").read_text())
    assert report["failed_documents"] == 2
    statuses = {(o["hadm_id"], o["target"]): o["status"] for o in report["outcomes"]}
    assert len(statuses) == 4
    assert statuses[(edited[1].hadm_id, "brief_hospital_course")] == "failed"
    assert statuses[(edited[0].hadm_id, "brief_hospital_course")] == "ok"


def test_remote_ner_failure_is_per_document(tmp_path, visits, lexicon_path, mock_service):
    # Extraction service errors out on one visit's pertinent-results text;
    # that visit fails at build time, the rest flow through generation.
    poisoned_marker = "Serial complete blood count checks"  # visit 20000002 only

    def extract(body):
        if poisoned_marker in body["text"]:
            return 500, {"error": "down"}
        return 200, {"spans": []}

    mock_service.route("/extract", extract)
    corpus = tmp_path / "three.jsonl"
    dump_corpus(visits[:3], corpus)
    cfg = write_config(
        tmp_path,
        corpus,
        lexicon_path,
        ner_kind="remote",
        ner_endpoint=mock_service.url + "/extract",
        backend={"kind": "mock", "backoff": 0.0, "retries": 0},
    )
    assert cli.main(["run", "-c", str(cfg)]) == cli.EXIT_PARTIAL
    report = json.loads((tmp_path / "out" / "run_report.json").read_text())
    assert report["failed_documents"] == 2
    statuses = {(o["hadm_id"], o["target"]): o["status"] for o in report["outcomes"]}
    assert len(statuses) == 6
    assert statuses[("20000002", "brief_hospital_course")] == "failed"
    assert statuses[("20000002", "discharge_instructions")] == "failed"
    assert statuses[("20000000", "brief_hospital_course")] == "ok"
    rows = (tmp_path / "out" / "submission.csv").read_text(encoding="utf-8").splitlines()
    assert len(rows) == 4  # header + all three visits, failed one with empty cells


def test_unavailable_remote_metric_excluded(visits, lexicon, mock_service):
    mock_service.route("/score", lambda body: (500, {"error": "down"}))
    rows = [
        {
            "hadm_id": visits[0].hadm_id,
            "brief_hospital_course": "recovered well",
            "discharge_instructions": "rest at home",
        }
    ]
    metrics = [MetricId.ROUGE1, MetricId.BERTSCORE]
    reports, agg, _ = evaluate_submission(
        rows, [visits[0]], lexicon, metrics, mock_service.url + "/score"
    )
    assert agg.unavailable_metrics == (MetricId.BERTSCORE,)
    assert set(agg.cross_target_means) == {MetricId.ROUGE1}
    assert all(MetricId.BERTSCORE not in r.scores for r in reports)


def test_available_remote_metric_included(visits, lexicon, mock_service):
    mock_service.route("/score", lambda body: (200, {"value": 0.8}))
    rows = [
        {
            "hadm_id": visits[0].hadm_id,
            "brief_hospital_course": "recovered well",
            "discharge_instructions": "rest at home",
        }
    ]
    metrics = [MetricId.ROUGE1, MetricId.BERTSCORE]
    _, agg, _ = evaluate_submission(
        rows, [visits[0]], lexicon, metrics, mock_service.url + "/score"
    )
    assert agg.cross_target_means[MetricId.BERTSCORE] == 0.8
    assert agg.unavailable_metrics == ()


def test_run_pipeline_rejects_invalid_config(tmp_path):
    cfg = PipelineConfig(corpus=str(tmp_path / "nope.jsonl"), lexicon=str(tmp_path / "nope.tsv"))
    with pytest.raises(ConfigError):
        run_pipeline(cfg)
