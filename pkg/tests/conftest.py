"""Shared test fixtures: layout builders and a local stub judge server."""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from layoutpref.geometry import BBox, Canvas, Element, ElementKind, Layout


def make_element(i: int, kind: ElementKind = ElementKind.IMAGE) -> Element:
    if kind is ElementKind.TEXT:
        return Element(id=f"e{i}", kind=kind, text=f"TEXT {i}")
    return Element(id=f"e{i}", kind=kind)


def make_layout(boxes, canvas=(100.0, 100.0), kinds=None) -> Layout:
    """Layout from a list of (x, y, w, h) tuples."""
    kinds = kinds or [ElementKind.IMAGE] * len(boxes)
    placements = [
        (make_element(i, kind), BBox(*box)) for i, (box, kind) in enumerate(zip(boxes, kinds))
    ]
    return Layout(Canvas(*canvas), placements)


class StubJudgeHandler(BaseHTTPRequestHandler):
    def do_POST(self):
        server = self.server
        server.hits += 1
        length = int(self.headers.get("Content-Length", 0))
        body = json.loads(self.rfile.read(length)) if length else {}
        server.requests.append(
            {
                "path": self.path,
                "auth": self.headers.get("Authorization"),
                "model": body.get("model"),
                "n_images": sum(
                    1
                    for part in body.get("messages", [{}])[0].get("content", [])
                    if part.get("type") == "image_url"
                ),
            }
        )
        if server.responses:
            status, content = server.responses.pop(0)
        else:
            status, content = server.default_response
        if status == "drop":
            self.connection.close()
            return
        payload = json.dumps({"choices": [{"message": {"content": content}}]}).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


class StubJudgeServer:
    """Scripted chat-completions endpoint with request accounting."""

    def __init__(self):
        self.httpd = HTTPServer(("127.0.0.1", 0), StubJudgeHandler)
        self.httpd.hits = 0
        self.httpd.requests = []
        self.httpd.responses = []
        self.httpd.default_response = (200, '{"better_layout": "image_1"}')
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self.thread.start()

    @property
    def endpoint(self) -> str:
        return f"http://127.0.0.1:{self.httpd.server_port}"

    @property
    def hits(self) -> int:
        return self.httpd.hits

    @property
    def requests(self):
        return self.httpd.requests

    def script(self, *responses):
        """Queue (status, content) replies consumed in order; then the default applies."""
        self.httpd.responses = list(responses)

    def set_default(self, content: str, status: int = 200):
        self.httpd.default_response = (status, content)

    def reset(self):
        self.httpd.hits = 0
        self.httpd.requests = []
        self.httpd.responses = []

    def close(self):
        self.httpd.shutdown()
        self.httpd.server_close()


@pytest.fixture
def stub_judge():
    server = StubJudgeServer()
    yield server
    server.close()
