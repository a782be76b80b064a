"""HTTP face of the skill gateway.

POST /execute       run a task           (bearer token required)
GET  /healthz       liveness probe       (open)
GET  /state/<store> debug store dump     (bearer token required)

Auth and body validation happen before any store is touched, so a non-200
response can never leave a mutation behind. Every executed step is also
appended to steps.jsonl together with its call_id.
"""
from __future__ import annotations

import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .skills import SkillError, execute
from .stores import GatewayState, StoreError

logger = logging.getLogger(__name__)

DEFAULT_PORT = 18789


class GatewayApp:
    def __init__(self, state_dir: str | Path, token: str,
                 fixtures_dir: str | Path | None = None, allow_net: bool = False,
                 now_ms=None):
        if not token:
            raise ValueError("gateway token must be non-empty")
        self.state = GatewayState(state_dir, fixtures_dir, allow_net=allow_net)
        self.token = token
        self.now_ms = now_ms  # optional clock override for tests

    def run_task(self, call_id: str, task: str, context=None) -> dict:
        now = self.now_ms() if callable(self.now_ms) else self.now_ms
        result = execute(task, context, self.state, now_ms=now)
        for step in result.steps:
            self.state.steps.append({"call_id": call_id, **step.to_dict()})
        logger.info("executed %s: %s (%d steps, %s)", call_id, task[:80],
                    len(result.steps), result.status)
        return {
            "call_id": call_id,
            "status": result.status,
            "summary": result.summary,
            "steps": [s.to_dict() for s in result.steps],
            "artifacts": result.artifacts,
        }


class _Handler(BaseHTTPRequestHandler):
    app: GatewayApp  # set on the server class
    protocol_version = "HTTP/1.1"  # keep-alive matters for the concurrent router

    def log_message(self, fmt, *args):  # route through logging, not stderr
        logger.debug("%s - %s", self.address_string(), fmt % args)

    def _send(self, code: int, obj) -> None:
        body = json.dumps(obj, ensure_ascii=False).encode("utf-8")
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _authorized(self) -> bool:
        header = self.headers.get("Authorization", "")
        return header == f"Bearer {self.app.token}"

    def do_GET(self) -> None:
        if self.path == "/healthz":
            body = b"ok"
            self.send_response(200)
            self.send_header("Content-Type", "text/plain")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)
            return
        if self.path.startswith("/state/"):
            if not self._authorized():
                self._send(401, {"error": "unauthorized"})
                return
            store = self.path[len("/state/"):]
            try:
                self._send(200, self.app.state.dump(store))
            except StoreError as exc:
                self._send(404, {"error": str(exc)})
            return
        self._send(404, {"error": "not found"})

    def do_POST(self) -> None:
        if self.path != "/execute":
            self._send(404, {"error": "not found"})
            return
        if not self._authorized():
            self._send(401, {"error": "unauthorized"})
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
            body = json.loads(self.rfile.read(length) or b"{}")
        except (ValueError, json.JSONDecodeError):
            self._send(422, {"error": "body must be JSON"})
            return
        task = body.get("task")
        call_id = body.get("call_id", "")
        if not isinstance(task, str) or not task.strip():
            self._send(422, {"error": "missing or empty 'task' field"})
            return
        if not isinstance(call_id, str):
            self._send(422, {"error": "'call_id' must be a string"})
            return
        try:
            self._send(200, self.app.run_task(call_id or "anonymous", task,
                                              body.get("context")))
        except SkillError as exc:
            self._send(422, {"error": str(exc)})
        except Exception:
            logger.exception("task execution crashed")
            self._send(500, {"error": "internal gateway error"})


class GatewayServer:
    """ThreadingHTTPServer wrapper that can run embedded in tests."""

    def __init__(self, app: GatewayApp, host: str = "127.0.0.1", port: int = DEFAULT_PORT):
        handler = type("BoundHandler", (_Handler,), {"app": app})
        self.httpd = ThreadingHTTPServer((host, port), handler)
        self.app = app
        self._thread: threading.Thread | None = None

    @property
    def port(self) -> int:
        return self.httpd.server_address[1]

    @property
    def url(self) -> str:
        host, port = self.httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "GatewayServer":
        self._thread = threading.Thread(target=self.httpd.serve_forever,
                                        name="gateway", daemon=True)
        self._thread.start()
        logger.info("gateway listening on %s", self.url)
        return self

    def stop(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def __enter__(self) -> "GatewayServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()
