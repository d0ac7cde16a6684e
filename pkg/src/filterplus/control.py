"""Control API: rule CRUD, resolve preview, event feed, and console static files.

This is the only write path into the rule store; every successful mutation is
persisted to the rules file before the response goes out.
"""

from __future__ import annotations

import json
import logging
import mimetypes
import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Optional
from urllib.parse import parse_qs, unquote, urlsplit

from .events import EventLog
from .policy import (
    BASELINE_DEFAULT,
    PatternError,
    PolicySet,
    PolicyValueError,
    RuleStore,
    SitePattern,
    format_rfc3339,
    policy_set_from_json,
)

logger = logging.getLogger("filterplus.control")

LONG_POLL_MAX = 30.0

_FALLBACK_PAGE = b"""<!DOCTYPE html>
<html>
<head><meta charset="utf-8"><title>FilterPlus</title></head>
<body>
<h1>FilterPlus control API</h1>
<p>The web console is not installed (start with --ui-dir to serve it).</p>
<ul>
<li>GET /api/rules</li>
<li>PUT /api/rules/{pattern}</li>
<li>DELETE /api/rules/{pattern}</li>
<li>GET /api/resolve?url=...</li>
<li>GET /api/events?since=N</li>
</ul>
</body>
</html>
"""


def parse_listen(text: str) -> tuple[str, int]:
    """Parse an addr:port listen spec; IPv6 addresses use [addr]:port."""
    host, sep, port_s = text.rpartition(":")
    if not sep or not host:
        raise ValueError(f"listen address {text!r} must be addr:port")
    if host.startswith("[") and host.endswith("]"):
        host = host[1:-1]
    try:
        port = int(port_s)
        if not 0 <= port <= 65535:
            raise ValueError
    except ValueError:
        raise ValueError(f"listen address {text!r} has an invalid port") from None
    return host, port


@dataclass
class ServerConfig:
    proxy_listen: str = "127.0.0.1:8888"
    control_listen: str = "127.0.0.1:8899"
    rules_path: str = "./filterplus-rules.json"
    log_capacity: int = 1024
    baseline: PolicySet = BASELINE_DEFAULT
    ui_dir: Optional[str] = None
    console_origin: Optional[str] = None

    def validate(self):
        proxy = parse_listen(self.proxy_listen)
        control = parse_listen(self.control_listen)
        if proxy == control:
            raise ValueError("proxy and control listeners must be distinct endpoints")
        if self.log_capacity < 1:
            raise ValueError("log capacity must be >= 1")
        if not self.baseline.is_complete():
            raise ValueError("baseline must set all five categories")


class ControlHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server: "ControlServer"

    def log_message(self, fmt, *args):
        logger.debug("%s %s", self.address_string(), fmt % args)

    # ------------------------------------------------------------- responses

    def _cors_headers(self) -> list[tuple[str, str]]:
        origin = self.server.console_origin
        if not origin:
            return []
        return [
            ("Access-Control-Allow-Origin", origin),
            ("Access-Control-Allow-Methods", "GET, PUT, DELETE, OPTIONS"),
            ("Access-Control-Allow-Headers", "Content-Type"),
        ]

    def _send(self, status: int, body: bytes, content_type: str):
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        for name, value in self._cors_headers():
            self.send_header(name, value)
        self.end_headers()
        if self.command != "HEAD":
            self.wfile.write(body)

    def _json(self, status: int, obj) -> None:
        self._send(status, json.dumps(obj).encode("utf-8"), "application/json")

    def _error(self, status: int, message: str) -> None:
        self._json(status, {"error": message})

    # ---------------------------------------------------------------- routes

    def do_OPTIONS(self):
        self.send_response(204)
        for name, value in self._cors_headers():
            self.send_header(name, value)
        self.send_header("Content-Length", "0")
        self.end_headers()

    def do_GET(self):
        parts = urlsplit(self.path)
        path = parts.path
        if path == "/api/rules":
            self._json(200, self.server.store.to_json())
        elif path == "/api/resolve":
            self._resolve(parts.query)
        elif path == "/api/events":
            self._events(parts.query)
        elif path.startswith("/api/"):
            self._error(404, f"unknown endpoint {path}")
        else:
            self._static(path)

    do_HEAD = do_GET

    def do_PUT(self):
        parts = urlsplit(self.path)
        if not parts.path.startswith("/api/rules/"):
            self._error(404, f"unknown endpoint {parts.path}")
            return
        raw_pattern = unquote(parts.path[len("/api/rules/") :])
        body = self._read_body()
        if body is None:
            return
        try:
            doc = json.loads(body)
        except json.JSONDecodeError as e:
            self._error(422, f"body: invalid JSON ({e.msg} at line {e.lineno})")
            return
        try:
            pattern = SitePattern.parse(raw_pattern)
            policies = policy_set_from_json(doc, where="policies")
        except (PatternError, PolicyValueError) as e:
            self._error(422, str(e))
            return
        with self.server.write_lock:
            rule = self.server.store.upsert(pattern, policies)
            try:
                self.server.store.save(self.server.rules_path)
            except OSError as e:
                self._error(500, f"could not persist rules: {e}")
                return
        self._json(
            200,
            {
                "pattern": rule.pattern.text,
                "policies": rule.policies.to_json(),
                "modified_at": format_rfc3339(rule.modified_at),
            },
        )

    def do_DELETE(self):
        parts = urlsplit(self.path)
        if not parts.path.startswith("/api/rules/"):
            self._error(404, f"unknown endpoint {parts.path}")
            return
        raw_pattern = unquote(parts.path[len("/api/rules/") :])
        try:
            pattern = SitePattern.parse(raw_pattern)
        except PatternError as e:
            self._error(422, str(e))
            return
        with self.server.write_lock:
            deleted = self.server.store.delete(pattern)
            if deleted:
                try:
                    self.server.store.save(self.server.rules_path)
                except OSError as e:
                    self._error(500, f"could not persist rules: {e}")
                    return
        self._json(200, {"deleted": deleted})

    # ------------------------------------------------------------- endpoints

    def _resolve(self, query: str):
        params = parse_qs(query)
        urls = params.get("url")
        if not urls:
            self._error(422, "url: query parameter required")
            return
        try:
            effective, provenance = self.server.store.resolve(urls[0])
        except ValueError as e:
            self._error(422, f"url: {e}")
            return
        self._json(
            200,
            {"url": urls[0], "effective": effective.to_json(), "provenance": provenance},
        )

    def _events(self, query: str):
        params = parse_qs(query)
        try:
            since = int(params.get("since", ["0"])[0])
        except ValueError:
            self._error(422, "since: must be an integer")
            return
        timeout = LONG_POLL_MAX
        if "timeout" in params:
            try:
                timeout = min(LONG_POLL_MAX, max(0.0, float(params["timeout"][0])))
            except ValueError:
                self._error(422, "timeout: must be a number of seconds")
                return
        events, latest = self.server.events.wait(since, timeout=timeout)
        self._json(200, {"events": [e.to_json() for e in events], "latest": latest})

    def _read_body(self) -> Optional[bytes]:
        cl = self.headers.get("Content-Length")
        if cl is None:
            self._error(411, "Content-Length required")
            return None
        try:
            length = int(cl)
            if length < 0:
                raise ValueError
        except ValueError:
            self._error(400, "invalid Content-Length")
            return None
        return self.rfile.read(length)

    # ----------------------------------------------------------- static files

    def _static(self, path: str):
        root = self.server.ui_root
        if root is None:
            if path in ("/", "/index.html"):
                self._send(200, _FALLBACK_PAGE, "text/html; charset=utf-8")
            else:
                self._error(404, "not found")
            return
        rel = unquote(path).lstrip("/") or "index.html"
        target = (root / rel).resolve()
        if root not in target.parents and target != root:
            self._error(404, "not found")
            return
        if target.is_dir():
            target = target / "index.html"
        if not target.is_file():
            self._error(404, "not found")
            return
        ctype = mimetypes.guess_type(str(target))[0] or "application/octet-stream"
        self._send(200, target.read_bytes(), ctype)


class ControlServer(ThreadingHTTPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(
        self,
        address: tuple[str, int],
        store: RuleStore,
        events: EventLog,
        rules_path: str,
        ui_dir: Optional[str] = None,
        console_origin: Optional[str] = None,
    ):
        self.store = store
        self.events = events
        self.rules_path = rules_path
        self.ui_root = Path(ui_dir).resolve() if ui_dir else None
        self.console_origin = console_origin
        self.write_lock = threading.Lock()
        super().__init__(address, ControlHandler)
