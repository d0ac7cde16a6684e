"""Shared test utilities: independent oracles, random generators, corpus access."""

from __future__ import annotations

import glob
import random
import re
import socket
import sysconfig
from html.parser import HTMLParser
from urllib.parse import urlsplit

from filterplus.policy import (
    BinaryPolicy,
    CookiePolicy,
    FIELD_NAMES,
    NotificationPolicy,
    PatternKind,
    PolicySet,
    Rule,
    RuleStore,
)

# --------------------------------------------------------------------------
# Brute-force precedence oracle: scores every rule per field and takes the max.
# Exact host = 3, subdomain wildcard = 2 (longer suffix beats shorter),
# global default = 1; anything else does not match.


def oracle_resolve(rules: list[Rule], url: str, baseline: PolicySet):
    host = urlsplit(url).hostname
    assert host, f"oracle needs a host in {url!r}"
    host = host.lower().rstrip(".")
    effective = {}
    provenance = {}
    for field in FIELD_NAMES:
        best_score = (0, 0)
        best_rule = None
        for rule in rules:
            if getattr(rule.policies, field) is None:
                continue
            if rule.pattern.kind is PatternKind.EXACT_HOST:
                score = (3, 0) if host == rule.pattern.text else None
            elif rule.pattern.kind is PatternKind.SUBDOMAIN_WILDCARD:
                suffix = rule.pattern.text[2:]
                score = (2, len(suffix)) if host.endswith("." + suffix) else None
            else:
                score = (1, 0)
            if score is not None and score > best_score:
                best_score = score
                best_rule = rule
        if best_rule is None:
            effective[field] = getattr(baseline, field)
            provenance[field] = "baseline"
        else:
            effective[field] = getattr(best_rule.policies, field)
            provenance[field] = best_rule.pattern.text
    return PolicySet(**effective), provenance


# --------------------------------------------------------------------------
# Random stores and URLs over a small host space (to force rule collisions).

_LABELS = ["a", "b", "c", "x"]
_TLDS = ["com", "org", "test"]


def random_host(rng: random.Random) -> str:
    depth = rng.randint(1, 3)
    return ".".join(rng.choice(_LABELS) for _ in range(depth)) + "." + rng.choice(_TLDS)


def random_policy_set(rng: random.Random, allow_empty: bool = True) -> PolicySet:
    choices = {
        "cookies": list(CookiePolicy),
        "images": list(BinaryPolicy),
        "javascript": list(BinaryPolicy),
        "popups": list(BinaryPolicy),
        "notifications": list(NotificationPolicy),
    }
    while True:
        values = {
            f: rng.choice(opts) if rng.random() < 0.5 else None for f, opts in choices.items()
        }
        if allow_empty or any(v is not None for v in values.values()):
            return PolicySet(**values)


def random_store(rng: random.Random, max_rules: int = 20) -> RuleStore:
    store = RuleStore()
    for _ in range(rng.randint(0, max_rules)):
        roll = rng.random()
        if roll < 0.1:
            pattern = "*"
        elif roll < 0.5:
            pattern = "*." + random_host(rng)
        else:
            pattern = random_host(rng)
        store.upsert(pattern, random_policy_set(rng))
    return store


def random_url(rng: random.Random) -> str:
    host = random_host(rng)
    port = f":{rng.randint(1, 65535)}" if rng.random() < 0.2 else ""
    path = "/" + "/".join(rng.choice(_LABELS) for _ in range(rng.randint(0, 3)))
    return f"http://{host}{port}{path}"


# --------------------------------------------------------------------------
# Random Set-Cookie headers.

_COOKIE_ATTRS = [
    ("Path", "/"),
    ("Path", "/app"),
    ("Domain", "example.com"),
    ("Secure", None),
    ("HttpOnly", None),
    ("SameSite", "Lax"),
    ("SameSite", "Strict"),
    ("Expires", "Wed, 21 Oct 2026 07:28:00 GMT"),
    ("Expires", "Thu, 01 Jan 1970 00:00:00 GMT"),
    ("Max-Age", "3600"),
    ("Max-Age", "0"),
    ("Version", "1"),
]


def _mixed_case(rng: random.Random, text: str) -> str:
    return "".join(c.upper() if rng.random() < 0.5 else c.lower() for c in text)


def random_set_cookie(rng: random.Random) -> str:
    """A parseable Set-Cookie header with randomized attributes and casing."""
    name = "".join(rng.choice("abcdefgXYZ_-0123456789") for _ in range(rng.randint(1, 12)))
    value = "".join(rng.choice("abcdef0189%+=/") for _ in range(rng.randint(0, 16)))
    parts = [f"{name}={value}"]
    for _ in range(rng.randint(0, 5)):
        attr, attr_value = rng.choice(_COOKIE_ATTRS)
        attr = _mixed_case(rng, attr)
        parts.append(attr if attr_value is None else f"{attr}={attr_value}")
    sep = rng.choice(["; ", ";", " ; "])
    return sep.join(parts)


# --------------------------------------------------------------------------
# Random HTML documents (arbitrary but deterministic under a seed).

_TAG_NAMES = [
    "div", "p", "span", "a", "ul", "li", "td", "section", "h1", "em", "strong",
    "form", "button", "input", "br", "iframe", "noscript", "video",
]
_ATTR_NAMES = ["class", "id", "href", "src", "style", "data-x", "alt", "type", "value", "action"]
_WORDS = ["lorem", "ipsum", "dolor", "sit", "amet", "consectetur", "x < y", "a & b", "5 > 4"]


def _rand_attr(rng: random.Random) -> str:
    name = rng.choice(_ATTR_NAMES + ["onclick", "onload", "onmouseover", "target", "TARGET", "OnClick"])
    roll = rng.random()
    if roll < 0.15:
        return name  # bare attribute
    if name.lower() == "target":
        value = rng.choice(["_blank", "_BLANK", "_new", "_self", "frame2"])
    elif name.lower() in ("href", "src", "action") and rng.random() < 0.4:
        value = rng.choice(
            [
                "javascript:alert(1)",
                "JaVaScRiPt:void(0)",
                "java\tscript:run()",
                " javascript:x",
                "https://example.com/a",
                "/relative/path",
                "&#106;avascript:alert(2)",
            ]
        )
    else:
        value = "".join(rng.choice("abc 123 &amp; -_/") for _ in range(rng.randint(0, 12)))
    quote = rng.choice(['"', "'", ""])
    if quote == "" and (" " in value or ">" in value or not value):
        quote = '"'
    return f"{name}={quote}{value}{quote}"


def _rand_text(rng: random.Random, scale: int = 1) -> str:
    parts = []
    for _ in range(rng.randint(1, 8 * scale)):
        parts.append(rng.choice(_WORDS))
    return " ".join(parts)


def random_html(rng: random.Random, approx_size: int = 4096, text_scale: int = 1) -> bytes:
    """A messy but deterministic document: tags, comments, scripts, raw text.

    text_scale stretches text runs and raw-text bodies (higher = fewer,
    larger tokens per byte, like content-heavy real pages).
    """
    out = []
    if rng.random() < 0.7:
        out.append("<!DOCTYPE html>")
    size = 0
    while size < approx_size:
        roll = rng.random()
        if roll < 0.45:
            name = rng.choice(_TAG_NAMES)
            attrs = " ".join(_rand_attr(rng) for _ in range(rng.randint(0, 3)))
            piece = f"<{name}{' ' + attrs if attrs else ''}>{_rand_text(rng, text_scale)}</{name}>"
        elif roll < 0.6:
            piece = _rand_text(rng, text_scale)
        elif roll < 0.7:
            piece = f"<!-- {_rand_text(rng, text_scale)} -->"
        elif roll < 0.78:
            body = "\n".join(
                rng.choice(
                    [
                        "alert(1)",
                        "if (a < b) { run() }",
                        'var s = "</scr" + "ipt>";',
                        "// </style> not here",
                        "for (;;) {}",
                    ]
                )
                for _ in range(rng.randint(1, 3 * text_scale))
            )
            piece = f"<script{rng.choice(['', ' type=text/javascript'])}>{body}</script>"
        elif roll < 0.84:
            piece = f"<style>.x {{ color: red; }} /* {_rand_text(rng)} */</style>"
        elif roll < 0.9:
            piece = f"<img src={rng.choice(['a.png', 'b.jpg'])} alt='{_rand_text(rng)[:10]}'>"
        elif roll < 0.94:
            piece = (
                "<picture><source srcset=x.webp type=image/webp>"
                "<img src=y.png></picture>"
            )
        elif roll < 0.97:
            piece = f"<textarea>{_rand_text(rng)} <not-a-tag> </textarea>"
        else:
            piece = rng.choice(
                [
                    "<?bogus thing?>",
                    "<![CDATA[ raw <stuff> ]]>",
                    "a < b but not markup",
                    "5<6 and 7>2",
                    "<br/>",
                    "<input type=checkbox checked/>",
                ]
            )
        out.append(piece)
        size += len(piece)
    return "".join(out).encode("utf-8")


# --------------------------------------------------------------------------
# Real-world documents installed on this machine.

_CORPUS_ROOTS = [
    "/usr/lib/node_modules",
    "/opt/rustup",
    "/usr/include",
    sysconfig.get_paths()["purelib"],
]


def real_world_corpus(limit: int = 80, max_bytes: int = 2_000_000) -> list[bytes]:
    docs = []
    for root in _CORPUS_ROOTS:
        for path in sorted(glob.glob(f"{root}/**/*.html", recursive=True)):
            try:
                with open(path, "rb") as f:
                    data = f.read(max_bytes)
            except OSError:
                continue
            if data:
                docs.append(data)
            if len(docs) >= limit:
                return docs
    return docs


# --------------------------------------------------------------------------
# Independent scan of rewriter output (stdlib parser, not our tokenizer).


class TagScan(HTMLParser):
    def __init__(self):
        super().__init__(convert_charrefs=False)
        self.start_tags: list[str] = []
        self.attr_names: list[str] = []

    def handle_starttag(self, tag, attrs):
        self.start_tags.append(tag)
        self.attr_names.extend(name for name, _ in attrs if name)

    def handle_startendtag(self, tag, attrs):
        self.handle_starttag(tag, attrs)


SCRIPT_OPEN_RE = re.compile(rb"<script[ \t\n\r\f/>]", re.IGNORECASE)


def scan_html(data: bytes) -> TagScan:
    scanner = TagScan()
    scanner.feed(data.decode("latin-1"))
    scanner.close()
    return scanner


def chunk_randomly(data: bytes, rng: random.Random, max_cuts: int = 64) -> list[bytes]:
    if len(data) < 2:
        return [data]
    cuts = sorted(rng.sample(range(1, len(data)), min(rng.randint(1, max_cuts), len(data) - 1)))
    bounds = [0] + cuts + [len(data)]
    return [data[a:b] for a, b in zip(bounds, bounds[1:])]


def tokenize_chunked(chunks) -> list:
    from filterplus.rewriter import HtmlTokenizer

    t = HtmlTokenizer()
    out = []
    for chunk in chunks:
        out.extend(t.feed(chunk))
    out.extend(t.finish())
    return out


def free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def proxy_request(proxy_port, url, method="GET", headers=None, body=None):
    """Issue one absolute-form request through a proxy on 127.0.0.1:proxy_port."""
    import http.client

    conn = http.client.HTTPConnection("127.0.0.1", proxy_port, timeout=10)
    try:
        conn.putrequest(method, url, skip_host=True, skip_accept_encoding=True)
        names = {n.lower() for n, _ in (headers or [])}
        if "host" not in names:
            conn.putheader("Host", urlsplit(url).netloc)
        for name, value in headers or []:
            conn.putheader(name, value)
        if body is not None and "content-length" not in names:
            conn.putheader("Content-Length", str(len(body)))
        conn.endheaders(body)
        resp = conn.getresponse()
        data = resp.read()
        return resp.status, resp.reason, list(resp.getheaders()), data
    finally:
        conn.close()
