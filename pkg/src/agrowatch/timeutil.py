from __future__ import annotations

from datetime import datetime, timezone


def iso(t: float) -> str:
    """UTC ISO-8601 text for POSIX seconds, microsecond resolution."""
    dt = datetime.fromtimestamp(round(t * 1e6) / 1e6, tz=timezone.utc)
    text = dt.strftime("%Y-%m-%dT%H:%M:%S")
    if dt.microsecond:
        text += f".{dt.microsecond:06d}"
    return text + "Z"


def parse_iso(text: str) -> float:
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()
