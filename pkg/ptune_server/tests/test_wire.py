"""Wire conformance: the discharge pipeline CLI driven against a live server.

The pipeline is exercised only through its external interfaces: the corpus
and lexicon files it documents, its console entry point, and the artifacts it
writes. The server runs in-process on a random port.
"""

import json
import socket
import subprocess
import sys
import threading
import time
from pathlib import Path

import pytest
import requests
import uvicorn
import yaml

from ptune_server.server import GenerationEngine, create_app
from ptune_server.softprompt import SoftPrompt

REPO_ROOT = Path(__file__).resolve().parents[2]
PRIMARY_CORPUS = REPO_ROOT / "src" / "dischargegen" / "data" / "fixture_corpus.jsonl"
PRIMARY_LEXICON = REPO_ROOT / "src" / "dischargegen" / "data" / "fixture_lexicon.tsv"

NORMAL_VISIT = "20000000"
OVERSIZED_VISIT = "20000010"  # note text far beyond the server context


@pytest.fixture(scope="module")
def live_server(pretrained):
    model, tokenizer = pretrained
    engine = GenerationEngine(model, tokenizer, SoftPrompt(50, model.hidden, seed=0))
    with socket.socket() as probe:
        probe.bind(("127.0.0.1", 0))
        port = probe.getsockname()[1]
    config = uvicorn.Config(create_app(engine), host="127.0.0.1", port=port, log_level="warning")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.time() + 10
    url = f"http://127.0.0.1:{port}"
    while time.time() < deadline:
        try:
            if requests.get(url + "/health", timeout=1).status_code == 200:
                break
        except requests.RequestException:
            time.sleep(0.05)
    else:
        pytest.fail("server did not come up")
    yield url
    server.should_exit = True
    thread.join(timeout=5)


@pytest.fixture(scope="module")
def subset_corpus(tmp_path_factory):
    wanted = {NORMAL_VISIT, OVERSIZED_VISIT}
    lines = []
    with open(PRIMARY_CORPUS, encoding="utf-8") as fh:
        for line in fh:
            if json.loads(line)["hadm_id"] in wanted:
                lines.append(line)
    assert len(lines) == 2
    path = tmp_path_factory.mktemp("wire") / "subset.jsonl"
    path.write_text("".join(lines), encoding="utf-8")
    return path


def _run_pipeline(tmp_path, subset_corpus, endpoint, **overrides):
    out_dir = tmp_path / "out"
    config = {
        "corpus": str(subset_corpus),
        "split": "train",
        "lexicon": str(PRIMARY_LEXICON),
        "output_dir": str(out_dir),
        "seed": 7,
        "max_new_tokens": 12,
        "workers": 2,
        "backend": {"kind": "remote", "endpoint": endpoint + "/generate", "backoff": 0.0},
    }
    config.update(overrides)
    config_path = tmp_path / "config.yaml"
    config_path.write_text(yaml.safe_dump(config), encoding="utf-8")
    proc = subprocess.run(
        [sys.executable, "-m", "dischargegen.cli", "run", "-c", str(config_path)],
        capture_output=True,
        text=True,
        cwd=REPO_ROOT,
        timeout=300,
    )
    return proc, out_dir


def test_full_run_against_live_server(tmp_path, subset_corpus, live_server):
    proc, out_dir = _run_pipeline(tmp_path, subset_corpus, live_server)
    assert proc.returncode == 0, proc.stderr
    report = json.loads((out_dir / "run_report.json").read_text())
    assert report["failed_documents"] == 0
    assert {o["status"] for o in report["outcomes"]} == {"ok"}
    rows = (out_dir / "submission.csv").read_text(encoding="utf-8").splitlines()
    assert len(rows) == 3  # header + two visits
    aggregate = json.loads((out_dir / "aggregate.json").read_text())
    assert 0.0 <= aggregate["overall"] <= 1.0


def test_context_overflow_is_per_document_failure(tmp_path, subset_corpus, live_server):
    proc, out_dir = _run_pipeline(
        tmp_path,
        subset_corpus,
        live_server,
        input_mode="all_text",
        budget=100000,
    )
    assert proc.returncode == 3, proc.stderr
    report = json.loads((out_dir / "run_report.json").read_text())
    statuses = {(o["hadm_id"], o["target"]): o for o in report["outcomes"]}
    assert len(statuses) == 4
    for target in ("brief_hospital_course", "discharge_instructions"):
        assert statuses[(NORMAL_VISIT, target)]["status"] == "ok"
        oversized = statuses[(OVERSIZED_VISIT, target)]
        assert oversized["status"] == "failed"
        assert "422" in oversized["error"]
    # evaluation still completed: the failed visit's empty cells score by the
    # empty-candidate conventions and both visits stay in the mean
    aggregate = json.loads((out_dir / "aggregate.json").read_text())
    assert aggregate["sample_counts"] == {
        "brief_hospital_course": 2,
        "discharge_instructions": 2,
    }
    assert 0.0 <= aggregate["overall"] <= 1.0
