"""RFC-3339 timestamp parsing/formatting (UTC-normalized).

SQL emissions and the SQL oracle table use the fixed-width form so that
lexicographic text comparison agrees with temporal order.
"""

from __future__ import annotations

from datetime import datetime, timezone


def parse_rfc3339(text: str) -> datetime:
    """Parse an RFC-3339 timestamp; offset required; result is UTC."""
    if not isinstance(text, str) or not text:
        raise ValueError("timestamp must be a non-empty string")
    s = text.strip()
    if s.endswith(("Z", "z")):
        s = s[:-1] + "+00:00"
    try:
        dt = datetime.fromisoformat(s)
    except ValueError as e:
        raise ValueError(f"bad RFC-3339 timestamp {text!r}: {e}") from None
    if dt.tzinfo is None:
        raise ValueError(f"timestamp {text!r} lacks a UTC offset")
    return dt.astimezone(timezone.utc)


def format_rfc3339(dt: datetime) -> str:
    """Canonical display form: seconds, or microseconds when non-zero."""
    dt = dt.astimezone(timezone.utc)
    if dt.microsecond:
        return dt.strftime("%Y-%m-%dT%H:%M:%S.%fZ")
    return dt.strftime("%Y-%m-%dT%H:%M:%SZ")


def format_rfc3339_full(dt: datetime) -> str:
    """Fixed-width form (always 6 fractional digits); lexicographic == temporal."""
    return dt.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")
