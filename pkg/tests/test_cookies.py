import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from filterplus.cookies import (
    CookieParseError,
    SetCookieRecord,
    apply_cookie_policy,
    parse_set_cookie,
    serialize_set_cookie,
)
from filterplus.policy import CookiePolicy

from helpers import random_set_cookie


class TestParse:
    def test_basic(self):
        rec = parse_set_cookie("id=7; Path=/; Secure")
        assert rec.name == "id"
        assert rec.value == "7"
        assert rec.attributes == [("Path", "/"), ("Secure", None)]

    def test_split_on_first_equals_only(self):
        rec = parse_set_cookie("a=b=c")
        assert rec.name == "a"
        assert rec.value == "b=c"

    def test_empty_name_unparseable(self):
        with pytest.raises(CookieParseError):
            parse_set_cookie("; Path=/")

    def test_no_equals_unparseable(self):
        with pytest.raises(CookieParseError):
            parse_set_cookie("justtext")

    def test_whitespace_trimmed(self):
        rec = parse_set_cookie("  id = 7 ;  Path = / ")
        assert rec.name == "id"
        assert rec.value == "7"
        assert rec.attributes == [("Path", "/")]

    def test_empty_segments_dropped(self):
        rec = parse_set_cookie("id=7;; ;Secure")
        assert rec.attributes == [("Secure", None)]

    def test_name_with_inner_space_rejected(self):
        with pytest.raises(CookieParseError):
            parse_set_cookie("a b=c")


class TestSerialize:
    @pytest.mark.parametrize(
        "header",
        ["id=7; Path=/; Secure", "a=b=c", "x=; HttpOnly", "n=v"],
    )
    def test_round_trip(self, header):
        rec = parse_set_cookie(header)
        again = parse_set_cookie(serialize_set_cookie(rec))
        assert again == rec

    def test_canonical_output(self):
        rec = SetCookieRecord("id", "1", [("Path", "/"), ("Secure", None)])
        assert serialize_set_cookie(rec) == "id=1; Path=/; Secure"


class TestApplyPolicy:
    def test_session_only_strips_expires(self):
        headers = [("Set-Cookie", "id=1; Expires=Wed, 21 Oct 2026 07:28:00 GMT; Path=/")]
        out, actions = apply_cookie_policy("response", headers, CookiePolicy.SESSION_ONLY)
        assert out == [("Set-Cookie", "id=1; Path=/")]
        assert [a.action for a in actions] == ["modified"]

    def test_session_only_strips_max_age_any_case(self):
        headers = [("Set-Cookie", "id=1; MAX-AGE=60; secure")]
        out, _ = apply_cookie_policy("response", headers, CookiePolicy.SESSION_ONLY)
        assert out == [("Set-Cookie", "id=1; secure")]

    def test_block_removes_all_set_cookie(self):
        headers = [
            ("Content-Type", "text/html"),
            ("Set-Cookie", "a=1"),
            ("Set-Cookie", "b=2; Path=/"),
            ("Set-Cookie", "c=3"),
            ("X-Other", "kept"),
        ]
        out, actions = apply_cookie_policy("response", headers, CookiePolicy.BLOCK)
        assert out == [("Content-Type", "text/html"), ("X-Other", "kept")]
        assert len(actions) == 3
        assert all(a.action == "blocked" for a in actions)

    def test_allow_identity(self):
        headers = [("Cookie", "id=1")]
        out, actions = apply_cookie_policy("request", headers, CookiePolicy.ALLOW)
        assert out == headers
        assert actions == []

    def test_block_removes_request_cookie(self):
        headers = [("Host", "x.test"), ("Cookie", "id=1")]
        out, actions = apply_cookie_policy("request", headers, CookiePolicy.BLOCK)
        assert out == [("Host", "x.test")]
        assert [a.action for a in actions] == ["blocked"]

    def test_session_only_leaves_requests_alone(self):
        headers = [("Cookie", "id=1")]
        out, actions = apply_cookie_policy("request", headers, CookiePolicy.SESSION_ONLY)
        assert out == headers
        assert actions == []

    def test_unparseable_dropped_fail_closed(self):
        headers = [("Set-Cookie", "; Path=/")]
        out, actions = apply_cookie_policy("response", headers, CookiePolicy.SESSION_ONLY)
        assert out == []
        assert actions[0].reason == "unparseable"
        assert actions[0].action == "blocked"

    def test_unchanged_session_cookie_passes_byte_identical(self):
        headers = [("Set-Cookie", "sid=abc;  Path=/;HttpOnly")]
        out, actions = apply_cookie_policy("response", headers, CookiePolicy.SESSION_ONLY)
        assert out == headers
        assert actions == []

    def test_bad_direction(self):
        with pytest.raises(ValueError):
            apply_cookie_policy("sideways", [], CookiePolicy.ALLOW)


def _attr_names(headers):
    names = []
    for _, value in headers:
        rec = parse_set_cookie(value)
        names.extend(n.lower() for n, _ in rec.attributes)
    return names


class TestProperties:
    def test_session_only_idempotent_and_complete(self):
        rng = random.Random(2024)
        for _ in range(2000):
            headers = [("Set-Cookie", random_set_cookie(rng)) for _ in range(rng.randint(1, 4))]
            once, _ = apply_cookie_policy("response", headers, CookiePolicy.SESSION_ONLY)
            twice, actions = apply_cookie_policy("response", once, CookiePolicy.SESSION_ONLY)
            assert once == twice
            assert actions == []
            assert "expires" not in _attr_names(once)
            assert "max-age" not in _attr_names(once)

    def test_never_adds_or_reorders(self):
        rng = random.Random(99)
        for _ in range(500):
            headers = [("X-Pre", "1")]
            headers += [("Set-Cookie", random_set_cookie(rng)) for _ in range(rng.randint(0, 3))]
            headers += [("X-Post", "2")]
            for policy in CookiePolicy:
                out, _ = apply_cookie_policy("response", headers, policy)
                assert len(out) <= len(headers)
                survivors = [h for h in headers if h in out]
                # every surviving original header appears in its original relative order
                it = iter(out)
                assert all(any(h == o for o in it) for h in survivors)

    @given(st.text(min_size=0, max_size=60))
    def test_parse_never_crashes_unexpectedly(self, header):
        try:
            rec = parse_set_cookie(header)
        except CookieParseError:
            return
        assert rec.name
        again = parse_set_cookie(serialize_set_cookie(rec))
        assert again == rec
