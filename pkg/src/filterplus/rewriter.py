"""Streaming HTML tokenizer and policy-driven rewriter over byte streams.

The tokenizer never buffers more than one token: text and raw-text runs
coalesce until real markup (or end of input), so the emitted token stream is
independent of how the input was chunked. Every token carries the exact input
slice it came from; serializing an untouched token is therefore byte-identical
to the input.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from html import unescape
from typing import Optional

from .policy import BinaryPolicy, PolicySet

TEXT = "text"
START_TAG = "start-tag"
END_TAG = "end-tag"
COMMENT = "comment"
DOCTYPE = "doctype"
RAW_TEXT = "raw-text"

# Elements whose content is consumed verbatim until the matching end tag.
RAWTEXT_ELEMENTS = (b"script", b"style", b"textarea", b"title")

_WS = b" \t\n\r\f"

_TAGNAME_RE = re.compile(rb"[^ \t\n\r\f/>]+")
_BETWEEN_DELIM_RE = re.compile(rb"[>=]")
_NONWS_RE = re.compile(rb"[^ \t\n\r\f]")
_UNQUOTED_END_RE = re.compile(rb"[ \t\n\r\f>]")
_ATTR_RE = re.compile(
    rb"([^ \t\n\r\f/>=]+)"
    rb"(?:[ \t\n\r\f]*=[ \t\n\r\f]*(\"[^\"]*\"|'[^']*'|[^ \t\n\r\f>]*))?"
)
_RAW_END_RES = {
    name: re.compile(rb"</" + name + rb"[ \t\n\r\f/>]", re.IGNORECASE)
    for name in RAWTEXT_ELEMENTS
}


@dataclass
class Attr:
    """One attribute: original-case name, unquoted value (None if no "="), raw slice."""

    name: bytes
    value: Optional[bytes]
    raw: bytes


def _parse_tag(raw: bytes, is_end: bool) -> tuple[bytes, list[Attr], bool]:
    m = _TAGNAME_RE.match(raw, 2 if is_end else 1)
    name_raw = m.group(0)
    inside = raw[m.end() : -1]
    attrs: list[Attr] = []
    self_closing = False
    pos, length = 0, len(inside)
    while pos < length:
        c = inside[pos]
        if c in _WS:
            pos += 1
            continue
        if c == 0x2F:  # stray "/" separates attrs; a trailing one marks self-closing
            if pos == length - 1:
                self_closing = True
            pos += 1
            continue
        m2 = _ATTR_RE.match(inside, pos)
        if m2 is None or m2.end() == pos:
            pos += 1
            continue
        rawv = m2.group(2)
        if rawv is None:
            value = None
        elif rawv[:1] in (b'"', b"'"):
            value = rawv[1:-1]
        else:
            value = rawv
        attrs.append(Attr(m2.group(1), value, inside[m2.start() : m2.end()]))
        pos = m2.end()
    return name_raw, attrs, self_closing


class Token:
    """One tokenizer output unit; raw is always the exact input slice."""

    __slots__ = ("kind", "raw", "name", "_parsed")

    def __init__(self, kind: str, raw: bytes, name: str = ""):
        self.kind = kind
        self.raw = raw
        self.name = name
        self._parsed = None

    def _parse(self):
        if self._parsed is None:
            self._parsed = _parse_tag(self.raw, self.kind == END_TAG)
        return self._parsed

    @property
    def name_raw(self) -> bytes:
        return self._parse()[0]

    @property
    def attrs(self) -> list[Attr]:
        return self._parse()[1]

    @property
    def self_closing(self) -> bool:
        return self.kind == START_TAG and self._parse()[2]

    def __eq__(self, other):
        return (
            isinstance(other, Token)
            and self.kind == other.kind
            and self.name == other.name
            and self.raw == other.raw
        )

    def __hash__(self):
        return hash((self.kind, self.name, self.raw))

    def __repr__(self):
        head = f"{self.kind}:{self.name}" if self.name else self.kind
        return f"Token({head}, {self.raw[:40]!r})"


# Tokenizer states.
_DATA, _TAG, _COMMENT, _BOGUS, _RAWTEXT = range(5)
# Tag-scan modes (HTML5-faithful: a quote opens a value only after "=").
_M_BETWEEN, _M_AFTER_EQ, _M_UNQUOTED, _M_QUOTED = range(4)

_RAWTEXT_SET = frozenset(RAWTEXT_ELEMENTS)
_NAME_CACHE: dict[bytes, str] = {}


def _tag_name(name_b: bytes) -> str:
    name = _NAME_CACHE.get(name_b)
    if name is None:
        name = name_b.lower().decode("latin-1")
        if len(_NAME_CACHE) < 4096:
            _NAME_CACHE[name_b] = name
    return name


def _is_letter(c: int) -> bool:
    return 65 <= c <= 90 or 97 <= c <= 122


class HtmlTokenizer:
    """Incremental HTML tokenizer; input may be split at arbitrary byte boundaries."""

    def __init__(self):
        self._buf = b""
        self._state = _DATA
        self._scan = 0
        self._tag_is_end = False
        self._tag_mode = _M_BETWEEN
        self._quote = 0
        self._raw_name = b""
        self._finished = False

    def feed(self, chunk: bytes) -> list[Token]:
        if self._finished:
            raise RuntimeError("feed() after finish()")
        self._buf += chunk
        return self._run(eof=False)

    def finish(self) -> list[Token]:
        if self._finished:
            return []
        out = self._run(eof=True)
        self._finished = True
        self._buf = b""
        return out

    def _run(self, eof: bool) -> list[Token]:
        buf = self._buf
        n = len(buf)
        out: list[Token] = []
        base = 0  # start of the pending construct (text run, tag, ...)
        state = self._state
        scan = self._scan
        tag_is_end = self._tag_is_end
        tag_mode = self._tag_mode
        quote = self._quote
        raw_name = self._raw_name

        while True:
            if state == _DATA:
                i = buf.find(b"<", scan)
                if i < 0:
                    if eof:
                        if base < n:
                            out.append(Token(TEXT, buf[base:]))
                        base = scan = n
                        break
                    scan = n
                    break
                if i + 1 >= n:
                    if eof:
                        out.append(Token(TEXT, buf[base:]))
                        base = scan = n
                        break
                    scan = i
                    break
                c = buf[i + 1]
                if _is_letter(c):
                    # Fast path: without "=" a tag has no quoted values, so it
                    # ends at the first ">".
                    j = buf.find(b">", i + 2)
                    if j >= 0 and buf.find(b"=", i + 2, j) < 0:
                        if i > base:
                            out.append(Token(TEXT, buf[base:i]))
                        raw = buf[i : j + 1]
                        name_b = _TAGNAME_RE.match(raw, 1).group(0)
                        out.append(Token(START_TAG, raw, _tag_name(name_b)))
                        base = scan = j + 1
                        lower = name_b.lower()
                        if lower in _RAWTEXT_SET:
                            state, raw_name = _RAWTEXT, lower
                        continue
                    if i > base:
                        out.append(Token(TEXT, buf[base:i]))
                    base, state = i, _TAG
                    tag_is_end, tag_mode, scan = False, _M_BETWEEN, i + 2
                elif c == 0x2F:  # "/"
                    if i + 2 >= n:
                        if eof:
                            out.append(Token(TEXT, buf[base:]))
                            base = scan = n
                            break
                        scan = i
                        break
                    c2 = buf[i + 2]
                    if _is_letter(c2):
                        j = buf.find(b">", i + 3)
                        if j >= 0 and buf.find(b"=", i + 3, j) < 0:
                            if i > base:
                                out.append(Token(TEXT, buf[base:i]))
                            raw = buf[i : j + 1]
                            name_b = _TAGNAME_RE.match(raw, 2).group(0)
                            out.append(Token(END_TAG, raw, _tag_name(name_b)))
                            base = scan = j + 1
                            continue
                        if i > base:
                            out.append(Token(TEXT, buf[base:i]))
                        base, state = i, _TAG
                        tag_is_end, tag_mode, scan = True, _M_BETWEEN, i + 3
                    else:
                        # "</" + non-letter: bogus comment up to ">"
                        if i > base:
                            out.append(Token(TEXT, buf[base:i]))
                        base, state, scan = i, _BOGUS, i + 2
                elif c == 0x21:  # "!"
                    if not eof and n < i + 4 and b"--".startswith(buf[i + 2 : i + 4]):
                        scan = i
                        break
                    if i > base:
                        out.append(Token(TEXT, buf[base:i]))
                    if buf[i + 2 : i + 4] == b"--":
                        base, state, scan = i, _COMMENT, i + 2
                    else:
                        base, state, scan = i, _BOGUS, i + 2
                elif c == 0x3F:  # "?"
                    if i > base:
                        out.append(Token(TEXT, buf[base:i]))
                    base, state, scan = i, _BOGUS, i + 2
                else:
                    scan = i + 1  # "<" is ordinary text here
                continue

            if state == _TAG:
                end = -1
                needs_input = False
                while True:
                    if tag_mode == _M_QUOTED:
                        j = buf.find(quote, scan)
                        if j < 0:
                            scan, needs_input = n, True
                            break
                        scan, tag_mode = j + 1, _M_BETWEEN
                        continue
                    if tag_mode == _M_AFTER_EQ:
                        m = _NONWS_RE.search(buf, scan)
                        if m is None:
                            scan, needs_input = n, True
                            break
                        c = buf[m.start()]
                        if c in (0x22, 0x27):  # quote opens the value
                            tag_mode, quote, scan = _M_QUOTED, bytes((c,)), m.start() + 1
                        elif c == 0x3E:
                            end = m.start()
                            break
                        else:
                            tag_mode, scan = _M_UNQUOTED, m.start() + 1
                        continue
                    if tag_mode == _M_UNQUOTED:
                        m = _UNQUOTED_END_RE.search(buf, scan)
                        if m is None:
                            scan, needs_input = n, True
                            break
                        if buf[m.start()] == 0x3E:
                            end = m.start()
                            break
                        tag_mode, scan = _M_BETWEEN, m.start() + 1
                        continue
                    m = _BETWEEN_DELIM_RE.search(buf, scan)
                    if m is None:
                        scan, needs_input = n, True
                        break
                    if buf[m.start()] == 0x3E:
                        end = m.start()
                        break
                    tag_mode, scan = _M_AFTER_EQ, m.start() + 1
                if needs_input:
                    if eof:
                        out.append(Token(TEXT, buf[base:]))  # unterminated tag degrades
                        base = scan = n
                        break
                    break
                raw = buf[base : end + 1]
                name_b = _TAGNAME_RE.match(raw, 2 if tag_is_end else 1).group(0)
                name = _tag_name(name_b)
                if tag_is_end:
                    out.append(Token(END_TAG, raw, name))
                    state = _DATA
                else:
                    out.append(Token(START_TAG, raw, name))
                    lower = name_b.lower()
                    if lower in _RAWTEXT_SET:
                        state, raw_name = _RAWTEXT, lower
                    else:
                        state = _DATA
                base = scan = end + 1
                tag_mode = _M_BETWEEN
                continue

            if state == _COMMENT:
                j1 = buf.find(b"-->", scan)
                # "--!>" only matters if it closes the comment before "-->" does
                j2 = buf.find(b"--!>", scan, j1) if j1 >= 0 else buf.find(b"--!>", scan)
                if j1 >= 0 and (j2 < 0 or j1 < j2):
                    end, elen = j1, 3
                elif j2 >= 0:
                    end, elen = j2, 4
                else:
                    if eof:
                        out.append(Token(COMMENT, buf[base:]))
                        base = scan = n
                        break
                    scan = max(scan, n - 3)
                    break
                out.append(Token(COMMENT, buf[base : end + elen]))
                base = scan = end + elen
                state = _DATA
                continue

            if state == _BOGUS:
                j = buf.find(b">", scan)
                if j < 0:
                    if eof:
                        raw = buf[base:]
                        kind = DOCTYPE if raw[:9].lower() == b"<!doctype" else COMMENT
                        out.append(Token(kind, raw))
                        base = scan = n
                        break
                    scan = n
                    break
                raw = buf[base : j + 1]
                kind = DOCTYPE if raw[:9].lower() == b"<!doctype" else COMMENT
                out.append(Token(kind, raw))
                base = scan = j + 1
                state = _DATA
                continue

            # _RAWTEXT
            m = _RAW_END_RES[raw_name].search(buf, scan)
            if m is None:
                if eof:
                    if base < n:
                        out.append(Token(RAW_TEXT, buf[base:]))
                    base = scan = n
                    break
                scan = max(base, n - len(raw_name) - 2)
                break
            j = m.start()
            if j > base:
                out.append(Token(RAW_TEXT, buf[base:j]))
            if buf[m.end() - 1] == 0x3E:
                out.append(Token(END_TAG, buf[j : m.end()], raw_name.decode("ascii")))
                base = scan = m.end()
                state = _DATA
            else:
                base, state = j, _TAG
                tag_is_end, tag_mode, scan = True, _M_BETWEEN, m.end()
            continue

        self._buf = buf[base:]
        self._state = state
        self._scan = scan - base
        self._tag_is_end = tag_is_end
        self._tag_mode = tag_mode
        self._quote = quote
        self._raw_name = raw_name
        return out


def tokenize(data: bytes) -> list[Token]:
    """One-shot tokenization of a complete document."""
    t = HtmlTokenizer()
    out = t.feed(data)
    out.extend(t.finish())
    return out


@dataclass(frozen=True)
class RewriteFlags:
    strip_scripts: bool = False
    strip_images: bool = False
    strip_popup_targets: bool = False

    @classmethod
    def from_policy(cls, policies: PolicySet) -> "RewriteFlags":
        return cls(
            strip_scripts=policies.javascript is BinaryPolicy.BLOCK,
            strip_images=policies.images is BinaryPolicy.BLOCK,
            strip_popup_targets=policies.popups is BinaryPolicy.BLOCK,
        )

    @property
    def any_active(self) -> bool:
        return self.strip_scripts or self.strip_images or self.strip_popup_targets


_JS_SCHEME = b"javascript:"
_URL_ATTRS = (b"href", b"src", b"action")
_IMAGE_ELEMENTS = ("img", "picture", "source")


def _decoded(value: bytes) -> bytes:
    if b"&" not in value:
        return value
    try:
        return unescape(value.decode("latin-1")).encode("latin-1", "ignore")
    except Exception:
        return value


def _is_javascript_url(value: Optional[bytes]) -> bool:
    if not value:
        return False
    cleaned = bytes(b for b in _decoded(value) if b > 0x20 and b != 0x7F)
    return cleaned[:11].lower() == _JS_SCHEME


def _is_popup_target(value: Optional[bytes]) -> bool:
    if not value:
        return False
    return _decoded(value).lower() in (b"_blank", b"_new")


class HtmlRewriter:
    """Streaming rewriter: feed() octets in, filtered octets out.

    dropped_classes collects which filter categories acted on this document
    ("javascript", "images", "popups"), one entry per class regardless of how
    many constructs were removed.
    """

    def __init__(self, flags: RewriteFlags):
        self.flags = flags
        self.dropped_classes: set[str] = set()
        self._tok = HtmlTokenizer()
        self._skip_script = False
        self._suppress_depth = 0  # inside a stripped <picture> subtree

    def feed(self, chunk: bytes) -> bytes:
        return b"".join(self._render(t) for t in self._tok.feed(chunk))

    def finish(self) -> bytes:
        return b"".join(self._render(t) for t in self._tok.finish())

    def _render(self, t: Token) -> bytes:
        if self._suppress_depth:
            if t.kind == START_TAG and t.name == "picture" and not t.self_closing:
                self._suppress_depth += 1
            elif t.kind == END_TAG and t.name == "picture":
                self._suppress_depth -= 1
            return b""
        if self._skip_script:
            if t.kind == END_TAG and t.name == "script":
                self._skip_script = False
            return b""

        flags = self.flags
        if t.kind == START_TAG:
            if flags.strip_scripts and t.name == "script":
                self.dropped_classes.add("javascript")
                self._skip_script = True
                return b""
            if flags.strip_images and t.name in _IMAGE_ELEMENTS:
                self.dropped_classes.add("images")
                if t.name == "picture" and not t.self_closing:
                    self._suppress_depth = 1
                return b""
            if flags.strip_scripts or flags.strip_popup_targets:
                return self._filter_attrs(t)
            return t.raw
        if t.kind == END_TAG:
            if flags.strip_images and t.name in _IMAGE_ELEMENTS:
                self.dropped_classes.add("images")
                return b""
            return t.raw
        return t.raw

    def _filter_attrs(self, t: Token) -> bytes:
        kept: list[Attr] = []
        modified = False
        flags = self.flags
        for a in t.attrs:
            lname = a.name.lower()
            if flags.strip_scripts and lname.startswith(b"on"):
                self.dropped_classes.add("javascript")
                modified = True
                continue
            if flags.strip_popup_targets and lname == b"target" and _is_popup_target(a.value):
                self.dropped_classes.add("popups")
                modified = True
                continue
            if flags.strip_scripts and lname in _URL_ATTRS and _is_javascript_url(a.value):
                self.dropped_classes.add("javascript")
                kept.append(Attr(a.name, b"", a.name + b'=""'))
                modified = True
                continue
            kept.append(a)
        if not modified:
            return t.raw
        parts = [b"<", t.name_raw]
        for a in kept:
            parts.append(b" ")
            parts.append(a.raw)
        if t.self_closing:
            parts.append(b" />" if kept else b"/>")
        else:
            parts.append(b">")
        return b"".join(parts)


def rewrite_bytes(data: bytes, flags: RewriteFlags) -> tuple[bytes, set[str]]:
    """One-shot rewrite of a complete document; returns (output, dropped classes)."""
    rw = HtmlRewriter(flags)
    out = rw.feed(data) + rw.finish()
    return out, rw.dropped_classes
