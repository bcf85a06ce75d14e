"""Script-driven local mock servers speaking the generation and embedding
wire protocols, for tests and offline demos."""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .embedding import hashed_embed


@dataclass
class ChatRule:
    """First matching rule wins; a rule with ``times`` set expires after firing."""

    contains: str = ""
    reply: str | None = None
    status: int = 200
    times: int | None = None
    delay_s: float = 0.0
    raw_body: str | None = None  # overrides the completion envelope entirely

    def matches(self, text: str) -> bool:
        if self.times is not None and self.times <= 0:
            return False
        return self.contains in text


@dataclass
class RecordedRequest:
    path: str
    headers: dict[str, str]
    body: dict
    raw: str


class MockChatServer:
    """In-process chat-completion backend driven by substring rules.

    Rules are matched against the concatenated message contents. With no
    matching rule the server echoes the last user message, so answer == question
    for bare prompts.
    """

    def __init__(self, rules: list[ChatRule] | None = None, default_reply: str | None = None):
        self.rules = list(rules or [])
        self.default_reply = default_reply
        self.requests: list[RecordedRequest] = []
        self._lock = threading.Lock()
        self._server = ThreadingHTTPServer(("127.0.0.1", 0), self._make_handler())
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    @classmethod
    def from_script(cls, path: str | Path) -> "MockChatServer":
        """Load rules from a JSON script: {"rules": [{"contains", "reply"|"status", "times"?}], "default": "..."}."""
        spec = json.loads(Path(path).read_text(encoding="utf-8"))
        rules = [
            ChatRule(
                contains=r.get("contains", ""),
                reply=r.get("reply"),
                status=int(r.get("status", 200)),
                times=r.get("times"),
            )
            for r in spec.get("rules", [])
        ]
        return cls(rules, spec.get("default"))

    def _make_handler(self):
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                raw = self.rfile.read(length).decode("utf-8")
                try:
                    body = json.loads(raw)
                except json.JSONDecodeError:
                    body = {}
                with outer._lock:
                    outer.requests.append(
                        RecordedRequest(self.path, dict(self.headers), body, raw)
                    )
                    rule = outer._match(body, raw)
                if rule is not None and rule.delay_s > 0:
                    time.sleep(rule.delay_s)
                if rule is not None and rule.status != 200:
                    self.send_response(rule.status)
                    self.end_headers()
                    self.wfile.write(b'{"error": "scripted failure"}')
                    return
                if rule is not None and rule.raw_body is not None:
                    payload = rule.raw_body.encode("utf-8")
                    self.send_response(200)
                    self.send_header("Content-Type", "application/json")
                    self.send_header("Content-Length", str(len(payload)))
                    self.end_headers()
                    self.wfile.write(payload)
                    return
                if rule is not None and rule.reply is not None:
                    reply = rule.reply
                elif outer.default_reply is not None:
                    reply = outer.default_reply
                else:
                    reply = _last_user_content(body)
                payload = json.dumps(
                    {"choices": [{"message": {"content": reply}}]}
                ).encode("utf-8")
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(payload)))
                self.end_headers()
                self.wfile.write(payload)

        return Handler

    def _match(self, body: dict, raw: str) -> ChatRule | None:
        text = "\n".join(
            str(m.get("content", "")) for m in body.get("messages", []) if isinstance(m, dict)
        ) or raw
        for rule in self.rules:
            if rule.matches(text):
                if rule.times is not None:
                    rule.times -= 1
                return rule
        return None

    @property
    def url(self) -> str:
        host, port = self._server.server_address
        return f"http://{host}:{port}/v1/chat/completions"

    def __enter__(self) -> "MockChatServer":
        self._thread.start()
        return self

    def __exit__(self, *exc) -> None:
        self._server.shutdown()
        self._server.server_close()

    def reset(self) -> None:
        with self._lock:
            self.requests.clear()


def _last_user_content(body: dict) -> str:
    for message in reversed(body.get("messages", [])):
        if isinstance(message, dict) and message.get("role") == "user":
            return str(message.get("content", ""))
    return ""


def serve_chat_mock(script: str | None, host: str, port: int) -> None:
    """Run a chat mock in the foreground (demo helper)."""
    server = MockChatServer.from_script(script) if script else MockChatServer()
    server._server.server_close()
    server._server = ThreadingHTTPServer((host, port), server._make_handler())
    print(f"mock chat backend listening on http://{host}:{port}/v1/chat/completions")
    try:
        server._server.serve_forever()
    except KeyboardInterrupt:
        pass


class MockEmbedServer:
    """In-process embedding backend speaking the {"inputs": ...} protocol.

    Produces the same vectors as the hashed local embedder, so remote and
    local providers can be cross-checked. ``fail_times`` simulates transient
    failures; ``wrong_dim`` makes it misreport vector dimensions.
    """

    def __init__(self, dim: int = 64, seed: int = 0, fail_times: int = 0, wrong_dim: bool = False):
        self.dim = dim
        self.seed = seed
        self.fail_times = fail_times
        self.wrong_dim = wrong_dim
        self.requests: list[dict] = []
        self._lock = threading.Lock()
        self._server = ThreadingHTTPServer(("127.0.0.1", 0), self._make_handler())
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    def _make_handler(self):
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(length).decode("utf-8"))
                with outer._lock:
                    outer.requests.append(body)
                    should_fail = outer.fail_times > 0
                    if should_fail:
                        outer.fail_times -= 1
                if should_fail:
                    self.send_response(503)
                    self.end_headers()
                    self.wfile.write(b'{"error": "scripted failure"}')
                    return
                inputs = body.get("inputs", [])
                vectors = [
                    hashed_embed(text, dim=outer.dim, seed=outer.seed).values.tolist()
                    for text in inputs
                ]
                if outer.wrong_dim:
                    vectors = [v[:-1] for v in vectors]
                payload = json.dumps({"vectors": vectors, "dim": outer.dim}).encode("utf-8")
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(payload)))
                self.end_headers()
                self.wfile.write(payload)

        return Handler

    @property
    def url(self) -> str:
        host, port = self._server.server_address
        return f"http://{host}:{port}/v1/embed"

    def __enter__(self) -> "MockEmbedServer":
        self._thread.start()
        return self

    def __exit__(self, *exc) -> None:
        self._server.shutdown()
        self._server.server_close()


if __name__ == "__main__":
    import argparse

    parser = argparse.ArgumentParser(description="run a scripted mock chat backend")
    parser.add_argument("--script", default=None, help="JSON rules file")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=9009)
    args = parser.parse_args()
    serve_chat_mock(args.script, args.host, args.port)
