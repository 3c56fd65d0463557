"""Serve any in-process backend over the HTTP wire contract.

Lets a run exercise the full remote path (serialization, status codes,
retries) against a stub without an external process. A lock serializes
backend calls, so stub state mutates in request order even though the
server is threaded.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .agents import Backend, parse_act_request, parse_survey_request
from .errors import BackendError, InvalidInputError, ProtocolError


class BackendHTTPServer:
    def __init__(self, backend: Backend, host: str = "127.0.0.1", port: int = 0) -> None:
        self.backend = backend
        self._lock = threading.Lock()
        self._server = ThreadingHTTPServer((host, port), self._handler_class())
        self._server.daemon_threads = True
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "BackendHTTPServer":
        if self._thread is None:
            self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
            self._thread.start()
        return self

    def stop(self) -> None:
        if self._thread is not None:
            self._server.shutdown()
            self._thread.join()
            self._thread = None
        self._server.server_close()

    def __enter__(self) -> "BackendHTTPServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()

    def _handler_class(self) -> type[BaseHTTPRequestHandler]:
        outer = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            def log_message(self, fmt: str, *args) -> None:
                pass

            def _send(self, status: int, body: dict) -> None:
                data = json.dumps(body).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def _read_payload(self) -> dict:
                length = int(self.headers.get("Content-Length", "0"))
                raw = self.rfile.read(length) if length else b""
                try:
                    payload = json.loads(raw.decode("utf-8"))
                except (UnicodeDecodeError, json.JSONDecodeError) as exc:
                    raise ProtocolError(f"request body is not JSON: {exc}") from exc
                if not isinstance(payload, dict):
                    raise ProtocolError("request body must be a JSON object")
                return payload

            def do_GET(self) -> None:
                if self.path != "/v1/health":
                    self._send(404, {"error": f"no such endpoint: {self.path}"})
                    return
                try:
                    with outer._lock:
                        body = outer.backend.health()
                    self._send(200, body)
                except Exception as exc:  # noqa: BLE001 - surfaces as 500
                    self._send(500, {"error": str(exc)})

            def do_POST(self) -> None:
                try:
                    payload = self._read_payload()
                    if self.path == "/v1/act":
                        request = parse_act_request(payload)
                        with outer._lock:
                            response = outer.backend.act(request)
                    elif self.path == "/v1/survey":
                        request = parse_survey_request(payload)
                        with outer._lock:
                            response = outer.backend.survey(request)
                    else:
                        self._send(404, {"error": f"no such endpoint: {self.path}"})
                        return
                except (ProtocolError, InvalidInputError, BackendError) as exc:
                    self._send(400, {"error": str(exc)})
                    return
                except Exception as exc:  # noqa: BLE001 - surfaces as 500
                    self._send(500, {"error": str(exc)})
                    return
                self._send(200, response.to_payload())

        return Handler
