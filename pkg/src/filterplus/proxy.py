"""HTTP/1.1 forward proxy enforcing the five filter categories per request."""

from __future__ import annotations

import http.client
import logging
import socket
import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional
from urllib.parse import urlsplit

from .cookies import apply_cookie_policy
from .events import EventLog
from .policy import BinaryPolicy, CookiePolicy, NotificationPolicy, PolicySet, RuleStore
from .rewriter import HtmlRewriter, RewriteFlags

logger = logging.getLogger("filterplus.proxy")

BLOCKED_HEADER = "X-FilterPlus-Blocked"

IMAGE_EXTENSIONS = {"png", "jpg", "jpeg", "gif", "webp", "svg", "ico", "bmp", "avif"}
SCRIPT_EXTENSIONS = {"js", "mjs"}
SCRIPT_CONTENT_TYPES = {
    "text/javascript",
    "application/javascript",
    "application/x-javascript",
    "text/ecmascript",
    "application/ecmascript",
}

HOP_BY_HOP = {
    "connection",
    "keep-alive",
    "proxy-authenticate",
    "proxy-authorization",
    "te",
    "trailer",
    "transfer-encoding",
    "upgrade",
    "proxy-connection",
}

_UTF16_BOMS = (b"\xff\xfe", b"\xfe\xff")


@dataclass
class RequestContext:
    method: str
    url: str
    headers: list[tuple[str, str]]
    client: str
    policy: PolicySet
    provenance: dict[str, str]


@dataclass(frozen=True)
class Synthetic:
    """A response the proxy fabricates instead of forwarding."""

    status: int
    category: str


@dataclass
class ResponsePlan:
    status: int
    reason: str
    headers: list[tuple[str, str]]
    body_mode: str  # "pass" | "discard" | "rewrite"
    rewrite_flags: Optional[RewriteFlags] = None
    content_length: Optional[int] = None


def path_extension(url: str) -> str:
    segment = urlsplit(url).path.rsplit("/", 1)[-1]
    if "." not in segment:
        return ""
    return segment.rsplit(".", 1)[1].lower()


def accept_prefers_image(headers: list[tuple[str, str]]) -> bool:
    """True when the Accept header's highest-q media type (first wins ties) is image/*."""
    accept = next((v for n, v in headers if n.lower() == "accept"), None)
    if not accept:
        return False
    best_q = -1.0
    best_type = ""
    for part in accept.split(","):
        pieces = part.split(";")
        media = pieces[0].strip().lower()
        if not media:
            continue
        q = 1.0
        for param in pieces[1:]:
            param = param.strip()
            if param.startswith("q="):
                try:
                    q = float(param[2:])
                except ValueError:
                    q = 0.0
        if q > best_q:
            best_q = q
            best_type = media
    return best_type.startswith("image/")


def _strip_hop_by_hop(headers: list[tuple[str, str]]) -> list[tuple[str, str]]:
    named = set()
    for name, value in headers:
        if name.lower() == "connection":
            named.update(tok.strip().lower() for tok in value.split(",") if tok.strip())
    drop = HOP_BY_HOP | named
    return [(n, v) for n, v in headers if n.lower() not in drop]


def _content_type(headers: list[tuple[str, str]]) -> str:
    for name, value in headers:
        if name.lower() == "content-type":
            return value.split(";")[0].strip().lower()
    return ""


def _dominant_pattern(provenance: dict[str, str]) -> str:
    for value in provenance.values():
        if value != "baseline":
            return value
    return "baseline"


def filter_request(ctx: RequestContext, events: EventLog) -> Synthetic | list[tuple[str, str]]:
    """Gate one request: either a Synthetic block or the headers to forward."""
    headers, cookie_actions = apply_cookie_policy("request", ctx.headers, ctx.policy.cookies)
    for act in cookie_actions:
        events.append("cookies", act.action, ctx.url, ctx.provenance["cookies"])

    ext = path_extension(ctx.url)
    if ctx.policy.images is BinaryPolicy.BLOCK and (
        ext in IMAGE_EXTENSIONS or accept_prefers_image(ctx.headers)
    ):
        events.append("images", "blocked", ctx.url, ctx.provenance["images"])
        return Synthetic(204, "images")
    if ctx.policy.javascript is BinaryPolicy.BLOCK and ext in SCRIPT_EXTENSIONS:
        events.append("javascript", "blocked", ctx.url, ctx.provenance["javascript"])
        return Synthetic(403, "javascript")

    out = _strip_hop_by_hop(headers)
    out = [(n, v) for n, v in out if n.lower() != "host"]
    if RewriteFlags.from_policy(ctx.policy).any_active:
        # Rewritable bodies must arrive uncompressed; we do not decompress in-proxy.
        out = [(n, v) for n, v in out if n.lower() != "accept-encoding"]
        out.append(("Accept-Encoding", "identity"))
    return out


def plan_response(
    ctx: RequestContext,
    status: int,
    reason: str,
    headers: list[tuple[str, str]],
    events: EventLog,
) -> ResponsePlan:
    """Decide how one origin response is filtered, framed, and annotated."""
    policy = ctx.policy
    headers, cookie_actions = apply_cookie_policy("response", headers, policy.cookies)
    for act in cookie_actions:
        events.append("cookies", act.action, ctx.url, ctx.provenance["cookies"])
    headers = _strip_hop_by_hop(headers)

    ct = _content_type(headers)

    if policy.javascript is BinaryPolicy.BLOCK and ct in SCRIPT_CONTENT_TYPES:
        events.append("javascript", "blocked", ctx.url, ctx.provenance["javascript"])
        headers = [(n, v) for n, v in headers if n.lower() != "content-length"]
        headers.append((BLOCKED_HEADER, "javascript"))
        headers.append(("Cache-Control", "no-store"))
        return ResponsePlan(status, reason, headers, "discard")

    if policy.images is BinaryPolicy.BLOCK and ct.startswith("image/"):
        events.append("images", "blocked", ctx.url, ctx.provenance["images"])
        headers = [(n, v) for n, v in headers if n.lower() != "content-length"]
        headers.append((BLOCKED_HEADER, "images"))
        headers.append(("Cache-Control", "no-store"))
        return ResponsePlan(204, "No Content", headers, "discard")

    if ct == "text/html" or ct.startswith("text/html"):
        flags = RewriteFlags.from_policy(policy)
        if policy.javascript is BinaryPolicy.BLOCK:
            headers.append(("Content-Security-Policy", "script-src 'none'"))
            events.append("javascript", "modified", ctx.url, ctx.provenance["javascript"])
        if policy.popups is BinaryPolicy.BLOCK:
            if policy.javascript is BinaryPolicy.BLOCK:
                sandbox = "sandbox allow-same-origin allow-forms"
            else:
                sandbox = "sandbox allow-scripts allow-same-origin allow-forms"
            headers.append(("Content-Security-Policy", sandbox))
            events.append("popups", "modified", ctx.url, ctx.provenance["popups"])
        if policy.notifications is NotificationPolicy.BLOCK:
            headers.append(("Permissions-Policy", "notifications=()"))
            events.append("notifications", "modified", ctx.url, ctx.provenance["notifications"])
        elif policy.notifications is NotificationPolicy.ASK:
            events.append("notifications", "would-ask", ctx.url, ctx.provenance["notifications"])

        encoding = next(
            (v.strip().lower() for n, v in headers if n.lower() == "content-encoding"), ""
        )
        if flags.any_active and encoding in ("", "identity"):
            headers = [(n, v) for n, v in headers if n.lower() != "content-length"]
            return ResponsePlan(status, reason, headers, "rewrite", rewrite_flags=flags)
        if flags.any_active:
            logger.warning("cannot rewrite %s: origin sent Content-Encoding %s", ctx.url, encoding)
        return _pass_plan(status, reason, headers)

    return _pass_plan(status, reason, headers)


def _pass_plan(status: int, reason: str, headers: list[tuple[str, str]]) -> ResponsePlan:
    cl = None
    for name, value in headers:
        if name.lower() == "content-length":
            try:
                cl = int(value)
            except ValueError:
                cl = None
            break
    return ResponsePlan(status, reason, headers, "pass", content_length=cl)


def most_restrictive(policy: PolicySet) -> bool:
    return (
        policy.cookies is CookiePolicy.BLOCK
        and policy.images is BinaryPolicy.BLOCK
        and policy.javascript is BinaryPolicy.BLOCK
        and policy.popups is BinaryPolicy.BLOCK
        and policy.notifications is NotificationPolicy.BLOCK
    )


class ProxyHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    timeout = 120  # idle client connections are dropped
    server: "FilterProxyServer"

    # ------------------------------------------------------------------ util

    def log_message(self, fmt, *args):
        logger.debug("%s %s", self.address_string(), fmt % args)

    def _write_head(self, status: int, reason: str, headers: list[tuple[str, str]]):
        lines = [f"HTTP/1.1 {status} {reason}\r\n"]
        for name, value in headers:
            lines.append(f"{name}: {value}\r\n")
        if self.close_connection:
            lines.append("Connection: close\r\n")
        lines.append("\r\n")
        self.wfile.write("".join(lines).encode("latin-1"))

    def _send_synthetic(self, status: int, category: str, reason: str = ""):
        reasons = {204: "No Content", 403: "Forbidden", 400: "Bad Request", 502: "Bad Gateway"}
        self._write_head(
            status,
            reason or reasons.get(status, "Blocked"),
            [
                (BLOCKED_HEADER, category),
                ("Content-Length", "0"),
                ("Cache-Control", "no-store"),
            ],
        )

    def _send_error(self, status: int, reason: str):
        self.close_connection = True
        self._write_head(status, reason, [("Content-Length", "0")])

    # ------------------------------------------------------------- plumbing

    def _read_request_body(self) -> Optional[bytes]:
        te = self.headers.get("Transfer-Encoding")
        if te:
            self._send_error(411, "Length Required")
            return None
        cl = self.headers.get("Content-Length")
        if cl is None:
            return b""
        try:
            length = int(cl)
            if length < 0:
                raise ValueError
        except ValueError:
            self._send_error(400, "Bad Request")
            return None
        return self.rfile.read(length)

    def _resolve_context(self, url: str) -> RequestContext:
        policy, provenance = self.server.store.resolve(url)
        return RequestContext(
            method=self.command,
            url=url,
            headers=list(self.headers.items()),
            client=self.client_address[0],
            policy=policy,
            provenance=provenance,
        )

    # -------------------------------------------------------------- proxying

    def _handle_proxy(self):
        url = self.path
        if not url.lower().startswith("http://"):
            self._send_error(400, "Bad Request (absolute http:// target required)")
            return
        try:
            ctx = self._resolve_context(url)
        except ValueError:
            self._send_error(400, "Bad Request (no host in URL)")
            return

        body = self._read_request_body()
        if body is None:
            return

        decision = filter_request(ctx, self.server.events)
        if isinstance(decision, Synthetic):
            self._send_synthetic(decision.status, decision.category)
            return

        parts = urlsplit(url)
        host = parts.hostname
        port = parts.port or 80
        origin_path = parts.path or "/"
        if parts.query:
            origin_path += "?" + parts.query

        conn = http.client.HTTPConnection(host, port, timeout=self.server.origin_timeout)
        try:
            conn.putrequest(self.command, origin_path, skip_host=True, skip_accept_encoding=True)
            conn.putheader("Host", parts.netloc)
            for name, value in decision:
                conn.putheader(name, value)
            conn.putheader("Connection", "close")
            conn.endheaders(body if body else None)
            resp = conn.getresponse()
        except (OSError, http.client.HTTPException) as e:
            conn.close()
            logger.info("upstream failure for %s: %s", url, e)
            self.server.events.append(
                "upstream", "blocked", url, _dominant_pattern(ctx.provenance)
            )
            self._send_synthetic(502, "upstream")
            return

        try:
            plan = plan_response(
                ctx, resp.status, resp.reason, list(resp.getheaders()), self.server.events
            )
            self._stream_response(ctx, resp, plan)
        except (OSError, http.client.HTTPException) as e:
            # Mid-stream failure: truncate (client sees an incomplete chunked body).
            logger.info("stream aborted for %s: %s", url, e)
            self.close_connection = True
        finally:
            conn.close()

    def _stream_response(self, ctx: RequestContext, resp, plan: ResponsePlan):
        bodyless = (
            self.command == "HEAD"
            or plan.status in (204, 304)
            or 100 <= plan.status < 200
        )
        headers = list(plan.headers)

        if plan.body_mode == "discard" or bodyless:
            if not bodyless or plan.body_mode == "discard":
                headers = [(n, v) for n, v in headers if n.lower() != "content-length"]
                headers.append(("Content-Length", "0"))
            self._write_head(plan.status, plan.reason, headers)
            resp.read()  # drain origin
            return

        if plan.body_mode == "pass" and plan.content_length is not None:
            self._write_head(plan.status, plan.reason, headers)
            remaining = plan.content_length
            while remaining > 0:
                chunk = resp.read(min(65536, remaining))
                if not chunk:
                    raise http.client.IncompleteRead(b"", remaining)
                self.wfile.write(chunk)
                remaining -= len(chunk)
            return

        # Chunked output: either a re-framed passthrough or a rewritten body.
        headers = [(n, v) for n, v in headers if n.lower() != "content-length"]
        headers.append(("Transfer-Encoding", "chunked"))
        self._write_head(plan.status, plan.reason, headers)

        rewriter = None
        if plan.body_mode == "rewrite":
            first = resp.read(65536)
            if first[:2] in _UTF16_BOMS:
                # Not an ASCII-compatible encoding: pass through unmodified.
                logger.warning("UTF-16 document passed through unrewritten: %s", ctx.url)
            else:
                rewriter = HtmlRewriter(plan.rewrite_flags)
            self._write_chunk(rewriter.feed(first) if rewriter else first)
            while True:
                chunk = resp.read(65536)
                if not chunk:
                    break
                self._write_chunk(rewriter.feed(chunk) if rewriter else chunk)
            if rewriter:
                self._write_chunk(rewriter.finish())
                for cls in sorted(rewriter.dropped_classes):
                    self.server.events.append(cls, "blocked", ctx.url, ctx.provenance[cls])
        else:
            while True:
                chunk = resp.read(65536)
                if not chunk:
                    break
                self._write_chunk(chunk)
        self.wfile.write(b"0\r\n\r\n")

    def _write_chunk(self, data: bytes):
        if not data:
            return
        self.wfile.write(f"{len(data):x}\r\n".encode("ascii") + data + b"\r\n")

    # -------------------------------------------------------------- CONNECT

    def do_CONNECT(self):
        self.close_connection = True
        target = self.path
        host, sep, port_s = target.rpartition(":")
        if not sep or not host:
            self._send_error(400, "Bad Request (CONNECT host:port required)")
            return
        try:
            port = int(port_s)
            if not 1 <= port <= 65535:
                raise ValueError
        except ValueError:
            self._send_error(400, "Bad Request (invalid port)")
            return
        if host.startswith("[") and host.endswith("]"):
            host = host[1:-1]

        url = f"https://{target}/"
        try:
            policy, provenance = self.server.store.resolve(url)
        except ValueError:
            self._send_error(400, "Bad Request (invalid CONNECT target)")
            return

        if most_restrictive(policy):
            self.server.events.append("tunnel", "blocked", url, _dominant_pattern(provenance))
            self._send_synthetic(403, "tunnel")
            return

        try:
            upstream = socket.create_connection((host, port), timeout=self.server.origin_timeout)
        except OSError as e:
            logger.info("CONNECT failure for %s: %s", target, e)
            self.server.events.append("upstream", "blocked", url, _dominant_pattern(provenance))
            self._send_synthetic(502, "upstream")
            return

        self.server.events.append("tunnel", "bypassed", url, _dominant_pattern(provenance))
        self.wfile.write(b"HTTP/1.1 200 Connection Established\r\n\r\n")
        self._relay(upstream)

    def _relay(self, upstream: socket.socket):
        upstream.settimeout(self.server.tunnel_timeout)
        self.connection.settimeout(self.server.tunnel_timeout)

        def client_to_upstream():
            try:
                while True:
                    data = self.rfile.read1(65536)
                    if not data:
                        break
                    upstream.sendall(data)
                upstream.shutdown(socket.SHUT_WR)
            except OSError:
                pass

        pump = threading.Thread(target=client_to_upstream, daemon=True)
        pump.start()
        try:
            while True:
                data = upstream.recv(65536)
                if not data:
                    break
                self.wfile.write(data)
        except OSError:
            pass
        finally:
            try:
                upstream.close()
            except OSError:
                pass
            try:
                self.connection.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
        pump.join(timeout=5)

    do_GET = _handle_proxy
    do_POST = _handle_proxy
    do_PUT = _handle_proxy
    do_DELETE = _handle_proxy
    do_HEAD = _handle_proxy
    do_OPTIONS = _handle_proxy
    do_PATCH = _handle_proxy


class FilterProxyServer(ThreadingHTTPServer):
    """The proxy listener; shares the rule store and event log with the control plane."""

    daemon_threads = True
    allow_reuse_address = True

    def __init__(
        self,
        address: tuple[str, int],
        store: RuleStore,
        events: EventLog,
        origin_timeout: float = 15.0,
        tunnel_timeout: float = 300.0,
    ):
        self.store = store
        self.events = events
        self.origin_timeout = origin_timeout
        self.tunnel_timeout = tunnel_timeout
        super().__init__(address, ProxyHandler)
