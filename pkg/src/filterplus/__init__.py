"""FilterPlus: a per-site content-filtering HTTP forward proxy.

Rules bind a host pattern to any of five category policies (cookies, images,
javascript, popups, notifications); the proxy resolves and enforces them per
request, and a control API drives rule edits and a live blocked-event feed.
"""

from .cookies import SetCookieRecord, apply_cookie_policy, parse_set_cookie, serialize_set_cookie
from .events import EventLog, FilterEvent
from .policy import (
    BASELINE_DEFAULT,
    BinaryPolicy,
    CookiePolicy,
    NotificationPolicy,
    PatternError,
    PolicySet,
    Rule,
    RuleFileError,
    RuleStore,
    SitePattern,
)
from .rewriter import HtmlRewriter, HtmlTokenizer, RewriteFlags, rewrite_bytes, tokenize

__version__ = "0.1.0"

__all__ = [
    "BASELINE_DEFAULT",
    "BinaryPolicy",
    "CookiePolicy",
    "EventLog",
    "FilterEvent",
    "HtmlRewriter",
    "HtmlTokenizer",
    "NotificationPolicy",
    "PatternError",
    "PolicySet",
    "RewriteFlags",
    "Rule",
    "RuleFileError",
    "RuleStore",
    "SetCookieRecord",
    "SitePattern",
    "apply_cookie_policy",
    "parse_set_cookie",
    "rewrite_bytes",
    "serialize_set_cookie",
    "tokenize",
    "__version__",
]
