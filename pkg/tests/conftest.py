from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from dischargegen.concepts import Lexicon
from dischargegen.corpus import Split, load_corpus
from dischargegen.data import fixture_corpus_path, fixture_lexicon_path


@pytest.fixture(scope="session")
def corpus_path():
    return fixture_corpus_path()


@pytest.fixture(scope="session")
def lexicon_path():
    return fixture_lexicon_path()


@pytest.fixture(scope="session")
def lexicon(lexicon_path):
    return Lexicon.load(lexicon_path)


@pytest.fixture(scope="session")
def visits(corpus_path):
    return load_corpus(corpus_path, Split.TRAIN)


class _Handler(BaseHTTPRequestHandler):
    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        raw = self.rfile.read(length) if length else b"{}"
        try:
            body = json.loads(raw.decode("utf-8"))
        except ValueError:
            body = {}
        route = self.server.routes.get(self.path)
        if route is None:
            self.send_response(404)
            self.end_headers()
            return
        status, payload = route(body)
        data = payload.encode("utf-8") if isinstance(payload, str) else json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


class MockService:
    """Threaded HTTP stub; map paths to ``fn(body) -> (status, payload)``."""

    def __init__(self):
        self.server = ThreadingHTTPServer(("127.0.0.1", 0), _Handler)
        self.server.routes = {}
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()

    @property
    def url(self) -> str:
        host, port = self.server.server_address
        return f"http://{host}:{port}"

    def route(self, path, fn):
        self.server.routes[path] = fn

    def close(self):
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture
def mock_service():
    service = MockService()
    yield service
    service.close()
