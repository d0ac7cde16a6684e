"""Set-Cookie / Cookie header parsing and the three-state cookie policy."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .policy import CookiePolicy

# Attributes that make a cookie outlive the browser session.
_PERSISTENCE_ATTRS = {"expires", "max-age"}

_CTL = set(range(0x00, 0x20)) | {0x7F}


class CookieParseError(ValueError):
    pass


@dataclass
class SetCookieRecord:
    """One parsed Set-Cookie header; attribute order is preserved from input."""

    name: str
    value: str
    attributes: list[tuple[str, Optional[str]]] = field(default_factory=list)


def _valid_cookie_name(name: str) -> bool:
    if not name:
        return False
    for ch in name:
        if ch in "=;" or ch.isspace() or ord(ch) in _CTL:
            return False
    return True


def parse_set_cookie(header_value: str) -> SetCookieRecord:
    """Parse a Set-Cookie header value.

    The first "=" splits name from value; ";"-separated segments after that
    become attributes. Whitespace around names and values is trimmed and empty
    segments are dropped. Raises CookieParseError when no valid cookie-name
    can be extracted.
    """
    segments = header_value.split(";")
    first = segments[0]
    eq = first.find("=")
    if eq < 0:
        raise CookieParseError(f"Set-Cookie without '=': {header_value!r}")
    name = first[:eq].strip()
    value = first[eq + 1 :].strip()
    if not _valid_cookie_name(name):
        raise CookieParseError(f"invalid cookie name {name!r} in {header_value!r}")
    attributes: list[tuple[str, Optional[str]]] = []
    for segment in segments[1:]:
        segment = segment.strip()
        if not segment:
            continue
        eq = segment.find("=")
        if eq < 0:
            attributes.append((segment, None))
        else:
            attributes.append((segment[:eq].strip(), segment[eq + 1 :].strip()))
    return SetCookieRecord(name, value, attributes)


def serialize_set_cookie(rec: SetCookieRecord) -> str:
    parts = [f"{rec.name}={rec.value}"]
    for attr_name, attr_value in rec.attributes:
        parts.append(attr_name if attr_value is None else f"{attr_name}={attr_value}")
    return "; ".join(parts)


def strip_persistence(rec: SetCookieRecord) -> tuple[SetCookieRecord, bool]:
    """Drop Expires/Max-Age attributes (any letter case); returns (record, changed)."""
    kept = [(n, v) for n, v in rec.attributes if n.lower() not in _PERSISTENCE_ATTRS]
    if len(kept) == len(rec.attributes):
        return rec, False
    return SetCookieRecord(rec.name, rec.value, kept), True


@dataclass(frozen=True)
class CookieAction:
    """What the policy did to one header: action is "blocked" or "modified"."""

    action: str
    header_value: str
    reason: Optional[str] = None


def apply_cookie_policy(
    direction: str,
    headers: list[tuple[str, str]],
    policy: CookiePolicy,
) -> tuple[list[tuple[str, str]], list[CookieAction]]:
    """Apply the cookie policy to a message's ordered header list.

    direction is "request" (Cookie headers) or "response" (Set-Cookie headers).
    Allow passes everything through. Block removes the direction's cookie
    headers. SessionOnly strips persistence attributes from each response
    Set-Cookie and leaves requests untouched. Unparseable Set-Cookie headers
    are dropped (fail-closed) whenever the policy is not Allow. Surviving
    headers keep their order; no header is ever added.
    """
    if direction not in ("request", "response"):
        raise ValueError(f"direction must be 'request' or 'response', got {direction!r}")
    if policy is CookiePolicy.ALLOW:
        return headers, []

    target = "cookie" if direction == "request" else "set-cookie"
    out: list[tuple[str, str]] = []
    actions: list[CookieAction] = []
    for name, value in headers:
        if name.lower() != target:
            out.append((name, value))
            continue
        if policy is CookiePolicy.BLOCK:
            actions.append(CookieAction("blocked", value))
            continue
        # SessionOnly: requests pass through, responses lose persistence attrs.
        if direction == "request":
            out.append((name, value))
            continue
        try:
            rec = parse_set_cookie(value)
        except CookieParseError:
            actions.append(CookieAction("blocked", value, reason="unparseable"))
            continue
        rec, changed = strip_persistence(rec)
        if changed:
            new_value = serialize_set_cookie(rec)
            out.append((name, new_value))
            actions.append(CookieAction("modified", value))
        else:
            out.append((name, value))
    return out, actions
