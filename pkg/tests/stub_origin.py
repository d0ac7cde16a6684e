"""A local stub origin server the proxy tests forward to."""

from __future__ import annotations

import gzip
import socket
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

PAGE_HTML = b"""<!DOCTYPE html>
<html>
<head>
<title>Fixture page</title>
<script src="/app.js"></script>
<script>console.log("inline", 1 < 2);</script>
</head>
<body>
<p>Hello page</p>
<img src="/pic.png" alt="pic">
<a href="/next.html" target="_blank" onclick="track()">next</a>
<a href="javascript:alert(1)">evil link</a>
</body>
</html>
"""

PAGE_SET_COOKIE = "session=abc123; Expires=Wed, 21 Oct 2026 07:28:00 GMT; Path=/"

APP_JS = b"console.log('external');\n"

PNG_BYTES = bytes.fromhex(
    "89504e470d0a1a0a0000000d4948445200000001000000010806000000"
    "1f15c4890000000a49444154789c6360000002000154a24f6f0000000049454e44ae426082"
)


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server: "StubOrigin"

    def log_message(self, fmt, *args):
        pass

    def _body(self, status: int, data: bytes, ctype: str, extra=()):
        self.send_response(status)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(data)))
        for name, value in extra:
            self.send_header(name, value)
        self.end_headers()
        if self.command != "HEAD":
            self.wfile.write(data)

    def do_GET(self):
        self.server.requests.append((self.command, self.path, dict(self.headers.items())))
        path = self.path.split("?")[0]
        if path == "/page.html":
            self._body(200, PAGE_HTML, "text/html; charset=utf-8",
                       [("Set-Cookie", PAGE_SET_COOKIE)])
        elif path == "/app.js":
            self._body(200, APP_JS, "application/javascript")
        elif path == "/script-no-ext":
            self._body(200, APP_JS, "text/javascript")
        elif path == "/pic.png":
            self._body(200, PNG_BYTES, "image/png")
        elif path == "/image-no-ext":
            self._body(200, PNG_BYTES, "image/png")
        elif path == "/plain.txt":
            self._body(200, b"plain text body\n", "text/plain")
        elif path == "/multi-cookie":
            self._body(
                200,
                b"ok",
                "text/plain",
                [("Set-Cookie", "a=1"), ("Set-Cookie", "b=2; Max-Age=60"), ("Set-Cookie", "c=3")],
            )
        elif path == "/chunked.html":
            self.send_response(200)
            self.send_header("Content-Type", "text/html")
            self.send_header("Transfer-Encoding", "chunked")
            self.end_headers()
            for piece in (b"<p>chunk one</p>", b"<script>bad()</script>", b"<p>chunk two</p>"):
                self.wfile.write(f"{len(piece):x}\r\n".encode() + piece + b"\r\n")
            self.wfile.write(b"0\r\n\r\n")
        elif path == "/gzip.html":
            data = gzip.compress(b"<html><script>zipped()</script>gz body</html>")
            self._body(200, data, "text/html", [("Content-Encoding", "gzip")])
        elif path == "/utf16.html":
            data = "<html><script>wide()</script>utf16</html>".encode("utf-16-le")
            self._body(200, b"\xff\xfe" + data, "text/html")
        elif path == "/nocontent":
            self.send_response(204)
            self.end_headers()
        elif path == "/echo-headers":
            lines = "".join(f"{n}: {v}\n" for n, v in self.headers.items())
            self._body(200, lines.encode(), "text/plain")
        else:
            self._body(404, b"not found", "text/plain")

    do_HEAD = do_GET

    def do_POST(self):
        length = int(self.headers.get("Content-Length", "0"))
        body = self.rfile.read(length)
        self.server.requests.append((self.command, self.path, dict(self.headers.items())))
        self._body(200, b"posted:" + body, "text/plain")


class StubOrigin:
    """Runs the stub origin on an ephemeral loopback port."""

    def __init__(self):
        self.server = ThreadingHTTPServer(("127.0.0.1", 0), _Handler)
        self.server.daemon_threads = True
        self.server.requests = []
        self.port = self.server.server_address[1]
        self._thread = threading.Thread(target=self.server.serve_forever, daemon=True)

    @property
    def requests(self):
        return self.server.requests

    def url(self, path: str) -> str:
        return f"http://127.0.0.1:{self.port}{path}"

    def __enter__(self):
        self._thread.start()
        return self

    def __exit__(self, *exc):
        self.server.shutdown()
        self.server.server_close()


class EchoTcpServer:
    """Bare TCP service for CONNECT tunnel tests: echoes whatever it receives."""

    def __init__(self):
        self._sock = socket.socket()
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind(("127.0.0.1", 0))
        self._sock.listen(4)
        self.port = self._sock.getsockname()[1]
        self._stop = False
        self._thread = threading.Thread(target=self._serve, daemon=True)

    def _serve(self):
        while not self._stop:
            try:
                conn, _ = self._sock.accept()
            except OSError:
                return
            threading.Thread(target=self._echo, args=(conn,), daemon=True).start()

    @staticmethod
    def _echo(conn: socket.socket):
        try:
            while True:
                data = conn.recv(4096)
                if not data:
                    break
                conn.sendall(data)
        except OSError:
            pass
        finally:
            conn.close()

    def __enter__(self):
        self._thread.start()
        return self

    def __exit__(self, *exc):
        self._stop = True
        try:
            self._sock.close()
        except OSError:
            pass
