"""Blocked/modified-action event log: bounded ring with long-poll reads."""

from __future__ import annotations

import threading
import time
from collections import deque
from dataclasses import dataclass
from datetime import datetime, timezone

from .policy import format_rfc3339

CATEGORIES = ("cookies", "images", "javascript", "popups", "notifications", "tunnel", "upstream")
ACTIONS = ("blocked", "modified", "would-ask", "bypassed")


@dataclass(frozen=True)
class FilterEvent:
    seq: int
    timestamp: datetime
    category: str
    action: str
    url: str
    matched_pattern: str

    def to_json(self) -> dict:
        return {
            "seq": self.seq,
            "timestamp": format_rfc3339(self.timestamp),
            "category": self.category,
            "action": self.action,
            "url": self.url,
            "matched_pattern": self.matched_pattern,
        }


class EventLog:
    """Bounded in-memory event ring; appends are linearizable in seq order.

    Readers long-poll with wait(): the call returns as soon as an event newer
    than their cursor exists, or when the timeout elapses.
    """

    def __init__(self, capacity: int = 1024):
        if capacity < 1:
            raise ValueError("log capacity must be >= 1")
        self.capacity = capacity
        self._events: deque[FilterEvent] = deque(maxlen=capacity)
        self._seq = 0
        self._cond = threading.Condition()

    def append(self, category: str, action: str, url: str, matched_pattern: str) -> FilterEvent:
        if category not in CATEGORIES:
            raise ValueError(f"unknown event category {category!r}")
        if action not in ACTIONS:
            raise ValueError(f"unknown event action {action!r}")
        with self._cond:
            self._seq += 1
            event = FilterEvent(
                seq=self._seq,
                timestamp=datetime.now(timezone.utc).replace(microsecond=0),
                category=category,
                action=action,
                url=url,
                matched_pattern=matched_pattern,
            )
            self._events.append(event)
            self._cond.notify_all()
        return event

    @property
    def latest_seq(self) -> int:
        return self._seq

    def since(self, seq: int) -> tuple[list[FilterEvent], int]:
        """Events with seq > given (oldest evicted first), plus the latest seq."""
        with self._cond:
            return [e for e in self._events if e.seq > seq], self._seq

    def wait(self, seq: int, timeout: float = 30.0) -> tuple[list[FilterEvent], int]:
        """Long-poll form of since(): blocks until news arrives or timeout elapses."""
        deadline = time.monotonic() + timeout
        with self._cond:
            while self._seq <= seq:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    break
                self._cond.wait(remaining)
            return [e for e in self._events if e.seq > seq], self._seq
