"""Fixture-backed HTTP server speaking all three provider payload shapes.

Lets the whole audit pipeline run against real HTTP with zero credentials:
point each adapter's base URL at ``server.base_url(provider)`` and responses
come verbatim from a :class:`~corpusgender.predictors.PayloadStore`. Every
request is appended to ``request_log`` with a monotonic timestamp, which is
what the rate-limiter tests inspect.
"""

from __future__ import annotations

import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, unquote, urlparse

from .names import fold_name
from .predictors import GENDERAPI, GENDERIZE, NAMSOR, PayloadStore

_NULL_PAYLOADS = {
    GENDERIZE: lambda name: json.dumps(
        {"name": name, "gender": None, "probability": 0.0, "count": 0}
    ),
    GENDERAPI: lambda name: json.dumps(
        {"name": name, "gender": "unknown", "accuracy": 0, "samples": 0}
    ),
    NAMSOR: lambda name: json.dumps(
        {"firstName": name, "likelyGender": "unknown", "probabilityCalibrated": 0.5}
    ),
}


class _Handler(BaseHTTPRequestHandler):
    server: "MockProviderServer"

    def do_GET(self) -> None:  # noqa: N802 (http.server API)
        parsed = urlparse(self.path)
        segments = [s for s in parsed.path.split("/") if s]
        if not segments or segments[0] not in _NULL_PAYLOADS:
            self._reply(404, json.dumps({"error": f"unknown path {parsed.path}"}))
            return
        provider = segments[0]

        if provider == NAMSOR and len(segments) >= 2:
            name = unquote(segments[-1])
        else:
            query = parse_qs(parsed.query)
            name = query.get("name", [""])[0]
        if not name:
            self._reply(400, json.dumps({"error": "missing name"}))
            return

        srv = self.server
        with srv.log_lock:
            srv.request_log.append((time.monotonic(), provider, name))
            srv.request_count += 1
            over_quota = srv.quota is not None and srv.request_count > srv.quota
        if over_quota:
            self._reply(429, json.dumps({"error": "request limit reached"}))
            return

        hit = srv.store.get(provider, fold_name(name))
        payload = hit[0] if hit is not None else _NULL_PAYLOADS[provider](fold_name(name))
        self._reply(200, payload)

    def _reply(self, status: int, body: str) -> None:
        data = body.encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, fmt, *args) -> None:
        pass  # keep test output quiet


class MockProviderServer(ThreadingHTTPServer):
    """Serve fixture payloads on 127.0.0.1; port 0 picks a free port."""

    def __init__(self, store: PayloadStore, host: str = "127.0.0.1", port: int = 0,
                 quota: int | None = None):
        super().__init__((host, port), _Handler)
        self.store = store
        self.quota = quota
        self.request_log: list[tuple[float, str, str]] = []
        self.request_count = 0
        self.log_lock = threading.Lock()
        self._thread: threading.Thread | None = None

    def base_url(self, provider: str) -> str:
        host, port = self.server_address[:2]
        return f"http://{host}:{port}/{provider}"

    def start(self) -> "MockProviderServer":
        self._thread = threading.Thread(target=self.serve_forever, daemon=True)
        self._thread.start()
        return self

    def close(self) -> None:
        self.shutdown()
        self.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def __enter__(self) -> "MockProviderServer":
        return self.start()

    def __exit__(self, *exc_info) -> None:
        self.close()
