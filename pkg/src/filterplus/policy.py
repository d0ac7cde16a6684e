"""Per-site filtering policies: enums, host patterns, rule precedence and storage."""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from enum import Enum
from typing import Optional
from urllib.parse import urlsplit


class CookiePolicy(Enum):
    ALLOW = "allow"
    SESSION_ONLY = "session-only"
    BLOCK = "block"


class BinaryPolicy(Enum):
    ALLOW = "allow"
    BLOCK = "block"


class NotificationPolicy(Enum):
    ALLOW = "allow"
    BLOCK = "block"
    ASK = "ask"


# Field name -> enum type, in canonical order.
POLICY_FIELDS = {
    "cookies": CookiePolicy,
    "images": BinaryPolicy,
    "javascript": BinaryPolicy,
    "popups": BinaryPolicy,
    "notifications": NotificationPolicy,
}

FIELD_NAMES = tuple(POLICY_FIELDS)


@dataclass(frozen=True)
class PolicySet:
    """Settings for the five filter categories; None means "inherit"."""

    cookies: Optional[CookiePolicy] = None
    images: Optional[BinaryPolicy] = None
    javascript: Optional[BinaryPolicy] = None
    popups: Optional[BinaryPolicy] = None
    notifications: Optional[NotificationPolicy] = None

    def merge(self, other: "PolicySet") -> "PolicySet":
        """Overlay other's set fields on top of self; never unsets a field."""
        updates = {f: v for f in FIELD_NAMES if (v := getattr(other, f)) is not None}
        return replace(self, **updates)

    def is_complete(self) -> bool:
        return all(getattr(self, f) is not None for f in FIELD_NAMES)

    def to_json(self) -> dict:
        return {f: v.value for f in FIELD_NAMES if (v := getattr(self, f)) is not None}


# An unconfigured browser allows everything and prompts for notifications.
BASELINE_DEFAULT = PolicySet(
    cookies=CookiePolicy.ALLOW,
    images=BinaryPolicy.ALLOW,
    javascript=BinaryPolicy.ALLOW,
    popups=BinaryPolicy.ALLOW,
    notifications=NotificationPolicy.ASK,
)


class PatternError(ValueError):
    """Raised for a site pattern that is not a valid host pattern."""


class PolicyValueError(ValueError):
    """Raised for an unknown policy field or policy name; message carries the locus."""


class RuleFileError(ValueError):
    """Raised when a rule file cannot be parsed; message carries the locus."""


def policy_set_from_json(obj: object, where: str = "policies", require_complete: bool = False) -> PolicySet:
    """Parse a policy object ({"cookies": "allow", ...}); closed enums, no silent defaults."""
    if not isinstance(obj, dict):
        raise PolicyValueError(f"{where}: expected an object, got {type(obj).__name__}")
    values = {}
    for key, raw in obj.items():
        enum_cls = POLICY_FIELDS.get(key)
        if enum_cls is None:
            raise PolicyValueError(f"{where}.{key}: unknown policy field")
        try:
            values[key] = enum_cls(raw)
        except ValueError:
            allowed = ", ".join(repr(m.value) for m in enum_cls)
            raise PolicyValueError(f"{where}.{key}: unknown policy name {raw!r} (allowed: {allowed})") from None
    if require_complete:
        for f in FIELD_NAMES:
            if f not in values:
                raise PolicyValueError(f"{where}.{f}: missing (a complete policy object is required)")
    return PolicySet(**values)


class PatternKind(Enum):
    EXACT_HOST = "exact"
    SUBDOMAIN_WILDCARD = "wildcard"
    GLOBAL_DEFAULT = "global"


def _normalize_host(host: str, where: str) -> str:
    """Lowercase a hostname and convert IDN labels to punycode; validate labels."""
    host = host.lower().rstrip(".")
    if not host:
        raise PatternError(f"{where}: empty host")
    if not host.isascii():
        try:
            host = host.encode("idna").decode("ascii")
        except UnicodeError as e:
            raise PatternError(f"{where}: cannot encode as IDN ({e})") from None
    if len(host) > 253:
        raise PatternError(f"{where}: host exceeds 253 characters")
    for label in host.split("."):
        if not label:
            raise PatternError(f"{where}: empty label in {host!r}")
        if len(label) > 63:
            raise PatternError(f"{where}: label {label!r} exceeds 63 characters")
        for c in label:
            if not (c.isalnum() or c == "-"):
                raise PatternError(f"{where}: invalid character {c!r} in label {label!r}")
        if label[0] == "-" or label[-1] == "-":
            raise PatternError(f"{where}: label {label!r} may not start or end with '-'")
    return host


@dataclass(frozen=True, order=True)
class SitePattern:
    """A host-matching pattern: exact host, "*.host" wildcard, or the global "*"."""

    text: str
    kind: PatternKind = PatternKind.EXACT_HOST

    @classmethod
    def parse(cls, text: str) -> "SitePattern":
        if not isinstance(text, str) or not text:
            raise PatternError("pattern: must be a non-empty string")
        for ch in text:
            if ch.isspace():
                raise PatternError(f"pattern {text!r}: whitespace character {ch!r} is not allowed")
        if "://" in text:
            raise PatternError(f"pattern {text!r}: URL scheme is not allowed")
        if "/" in text:
            raise PatternError(f"pattern {text!r}: path component is not allowed")
        if ":" in text:
            raise PatternError(f"pattern {text!r}: port is not allowed")
        if text == "*":
            return cls("*", PatternKind.GLOBAL_DEFAULT)
        if text.startswith("*."):
            host = text[2:]
            if "*" in host:
                raise PatternError(f"pattern {text!r}: wildcard is only allowed as the entire leftmost label")
            return cls("*." + _normalize_host(host, f"pattern {text!r}"), PatternKind.SUBDOMAIN_WILDCARD)
        if "*" in text:
            raise PatternError(f"pattern {text!r}: wildcard is only allowed as the entire leftmost label")
        return cls(_normalize_host(text, f"pattern {text!r}"), PatternKind.EXACT_HOST)


@dataclass(frozen=True)
class Rule:
    pattern: SitePattern
    policies: PolicySet
    modified_at: datetime  # UTC, seconds precision


def format_rfc3339(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_rfc3339(s: str, where: str = "timestamp") -> datetime:
    if not isinstance(s, str):
        raise RuleFileError(f"{where}: expected an RFC 3339 string")
    text = s
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    try:
        dt = datetime.fromisoformat(text)
    except ValueError:
        raise RuleFileError(f"{where}: not an RFC 3339 timestamp: {s!r}") from None
    if dt.tzinfo is None:
        raise RuleFileError(f"{where}: timestamp must carry a UTC offset: {s!r}")
    return dt.astimezone(timezone.utc).replace(microsecond=0)


def host_of_url(url: str) -> str:
    """Extract and normalize the host of an absolute URL; errors if there is none."""
    try:
        parts = urlsplit(url)
    except ValueError as e:
        raise ValueError(f"unparseable URL {url!r}: {e}") from None
    host = parts.hostname
    if not host:
        raise ValueError(f"URL {url!r} has no host component")
    host = host.rstrip(".")
    if not host.isascii():
        try:
            host = host.encode("idna").decode("ascii")
        except UnicodeError:
            pass  # match against the raw lowercased form
    return host.lower()


def _utc_now_seconds() -> datetime:
    return datetime.now(timezone.utc).replace(microsecond=0)


class RuleStore:
    """Rules keyed by pattern text plus the effective baseline policy.

    Readers take an immutable snapshot of the rule mapping; writers replace it
    atomically under a lock, so concurrent resolves never block each other and
    never observe a half-applied edit.
    """

    def __init__(self, default: PolicySet = BASELINE_DEFAULT):
        if not default.is_complete():
            raise ValueError("store default must be a complete policy set")
        self.default = default
        self._rules: dict[str, Rule] = {}
        self._write_lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._rules)

    def upsert(self, pattern: SitePattern | str, policies: PolicySet) -> Rule:
        """Create or merge-update the rule for pattern; set fields only ever accrue."""
        if isinstance(pattern, str):
            pattern = SitePattern.parse(pattern)
        with self._write_lock:
            existing = self._rules.get(pattern.text)
            merged = existing.policies.merge(policies) if existing else policies
            rule = Rule(pattern, merged, _utc_now_seconds())
            rules = dict(self._rules)
            rules[pattern.text] = rule
            self._rules = rules
        return rule

    def delete(self, pattern: SitePattern | str) -> bool:
        text = pattern.text if isinstance(pattern, SitePattern) else SitePattern.parse(pattern).text
        with self._write_lock:
            if text not in self._rules:
                return False
            rules = dict(self._rules)
            del rules[text]
            self._rules = rules
        return True

    def get(self, pattern_text: str) -> Optional[Rule]:
        return self._rules.get(pattern_text)

    def rules(self) -> list[Rule]:
        snapshot = self._rules
        return [snapshot[text] for text in sorted(snapshot)]

    def resolve(self, url: str, baseline: Optional[PolicySet] = None) -> tuple[PolicySet, dict[str, str]]:
        """Resolve the effective policy for a URL.

        Each field resolves independently: exact host beats the longest-suffix
        subdomain wildcard, which beats a global "*" rule, which beats the
        baseline. Returns the complete policy set and, per field, the pattern
        text that supplied it ("baseline" when no rule did).
        """
        base = baseline if baseline is not None else self.default
        if not base.is_complete():
            raise ValueError("baseline must be a complete policy set")
        host = host_of_url(url)
        snapshot = self._rules

        candidates: list[Rule] = []
        exact = snapshot.get(host)
        if exact is not None:
            candidates.append(exact)
        labels = host.split(".")
        for i in range(1, len(labels)):  # longest suffix first
            wild = snapshot.get("*." + ".".join(labels[i:]))
            if wild is not None:
                candidates.append(wild)
        glob = snapshot.get("*")
        if glob is not None:
            candidates.append(glob)

        effective = {}
        provenance = {}
        for field in FIELD_NAMES:
            for rule in candidates:
                value = getattr(rule.policies, field)
                if value is not None:
                    effective[field] = value
                    provenance[field] = rule.pattern.text
                    break
            else:
                effective[field] = getattr(base, field)
                provenance[field] = "baseline"
        return PolicySet(**effective), provenance

    # --- persistence ------------------------------------------------------

    def to_json(self) -> dict:
        return {
            "version": 1,
            "default": self.default.to_json(),
            "rules": [
                {
                    "pattern": r.pattern.text,
                    "policies": r.policies.to_json(),
                    "modified_at": format_rfc3339(r.modified_at),
                }
                for r in self.rules()
            ],
        }

    def save(self, path: str | os.PathLike) -> None:
        data = json.dumps(self.to_json(), indent=2) + "\n"
        tmp = f"{path}.tmp.{os.getpid()}"
        with open(tmp, "w", encoding="ascii") as f:
            f.write(data)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, path)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "RuleStore":
        with open(path, "r", encoding="utf-8") as f:
            raw = f.read()
        try:
            doc = json.loads(raw)
        except json.JSONDecodeError as e:
            raise RuleFileError(f"line {e.lineno}, column {e.colno}: {e.msg}") from None
        return cls.from_json(doc)

    @classmethod
    def from_json(cls, doc: object) -> "RuleStore":
        if not isinstance(doc, dict):
            raise RuleFileError("top level: expected an object")
        unknown = set(doc) - {"version", "default", "rules"}
        if unknown:
            raise RuleFileError(f"top level: unknown key {sorted(unknown)[0]!r}")
        if doc.get("version") != 1:
            raise RuleFileError(f"version: expected 1, got {doc.get('version')!r}")
        if "default" not in doc:
            raise RuleFileError("default: missing")
        store = cls(policy_set_from_json(doc["default"], where="default", require_complete=True))
        entries = doc.get("rules", [])
        if not isinstance(entries, list):
            raise RuleFileError("rules: expected a list")
        rules: dict[str, Rule] = {}
        for i, entry in enumerate(entries):
            where = f"rules[{i}]"
            if not isinstance(entry, dict):
                raise RuleFileError(f"{where}: expected an object")
            unknown = set(entry) - {"pattern", "policies", "modified_at"}
            if unknown:
                raise RuleFileError(f"{where}: unknown key {sorted(unknown)[0]!r}")
            try:
                pattern = SitePattern.parse(entry.get("pattern"))
            except PatternError as e:
                raise RuleFileError(f"{where}.pattern: {e}") from None
            if pattern.text in rules:
                raise RuleFileError(f"{where}.pattern: duplicate pattern {pattern.text!r}")
            policies = policy_set_from_json(entry.get("policies", {}), where=f"{where}.policies")
            modified_at = parse_rfc3339(entry.get("modified_at"), where=f"{where}.modified_at")
            rules[pattern.text] = Rule(pattern, policies, modified_at)
        store._rules = rules
        return store
