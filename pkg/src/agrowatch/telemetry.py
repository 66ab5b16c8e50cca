"""Validated telemetry records, the append-only store and windowed statistics.

The store keeps every accepted record in a local log (optionally mirrored to
a newline-delimited JSON file) and forwards records upstream only while the
uplink is connected. Records queued during an outage are sent in order on the
next flush after reconnecting.
"""

from __future__ import annotations

import bisect
import csv
import io
import json
import math
import os
import threading
from collections import deque
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ValidationError
from .sensornet import Publication, SensorKind
from .timeutil import iso, parse_iso


class Quality(str, Enum):
    Valid = "Valid"
    OutOfRange = "OutOfRange"
    Stale = "Stale"


# Inclusive plausibility bounds per kind.
BOUNDS: dict[SensorKind, tuple[float, float]] = {
    SensorKind.Temperature: (-40.0, 60.0),
    SensorKind.Humidity: (0.0, 100.0),
    SensorKind.WindSpeed: (0.0, 60.0),
    SensorKind.WindDirection: (0.0, 360.0),
    SensorKind.Pressure: (300.0, 1100.0),
    SensorKind.Rain: (0.0, 500.0),
    SensorKind.GasCO: (0.0, 1000.0),
    SensorKind.GasNH3: (0.0, 1000.0),
    SensorKind.GasNO2: (0.0, 1000.0),
    SensorKind.LightVisible: (0.0, 200.0),
    SensorKind.LightIR: (0.0, 200.0),
    SensorKind.UVIndex: (0.0, 15.0),
}


@dataclass(frozen=True)
class TelemetryRecord:
    node_id: int
    kind: SensorKind
    t: float
    value: float
    quality: Quality = Quality.Valid

    def to_json(self) -> str:
        return json.dumps({"node_id": self.node_id, "kind": self.kind.name, "t": iso(self.t),
                           "value": self.value, "quality": self.quality.value})

    @classmethod
    def from_json(cls, line: str) -> "TelemetryRecord":
        d = json.loads(line)
        return cls(int(d["node_id"]), SensorKind.parse(d["kind"]), parse_iso(d["t"]),
                   float(d["value"]), Quality(d["quality"]))


def classify(kind: SensorKind, value: float) -> Quality:
    lo, hi = BOUNDS[kind]
    if math.isfinite(value) and lo <= value <= hi:
        return Quality.Valid
    return Quality.OutOfRange


def validate(publication: Publication | str, *, received_at: float | None = None,
             max_age: float | None = None) -> list[TelemetryRecord]:
    """Turn one gateway publication into telemetry records.

    Implausible values are kept with ``OutOfRange`` quality. If both
    ``received_at`` and ``max_age`` are given, readings older than
    ``max_age`` seconds at receipt are marked ``Stale``. Any schema problem
    raises :class:`ValidationError`.
    """
    payload = publication.payload if isinstance(publication, Publication) else publication
    try:
        doc = json.loads(payload)
        node = doc["node"]
        t = parse_iso(doc["t"])
        readings = doc["readings"]
        if not isinstance(node, int) or isinstance(node, bool) or not isinstance(doc["seq"], int):
            raise TypeError("node and seq must be integers")
        if not isinstance(readings, list) or not readings:
            raise TypeError("readings must be a non-empty list")
        parsed = []
        for r in readings:
            value = r["value"]
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise TypeError(f"non-numeric value {value!r}")
            parsed.append((SensorKind.parse(r["kind"]), float(value)))
    except (ValueError, KeyError, TypeError, AttributeError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"malformed publication: {exc}") from exc
    stale = received_at is not None and max_age is not None and received_at - t > max_age
    out = []
    for kind, value in parsed:
        q = classify(kind, value)
        if q is Quality.Valid and stale:
            q = Quality.Stale
        out.append(TelemetryRecord(node, kind, t, value, q))
    return out


class TelemetryStore:
    """Append-only log with store-and-forward uplink semantics.

    One writer thread; readers call :meth:`snapshot` and get an immutable
    tuple they can scan without holding any lock.
    """

    def __init__(self, path: str | Path | None = None, *, connected: bool = True, fsync: bool = False):
        self._log: list[TelemetryRecord] = []
        self._queue: deque[TelemetryRecord] = deque()
        self._last_t: dict[int, float] = {}
        self._index: dict[SensorKind, tuple[list[float], list[float]]] = {}
        self._lock = threading.Lock()
        self.uplink_connected = connected
        self.sent: list[TelemetryRecord] = []
        self._path = Path(path) if path is not None else None
        self._fsync = fsync
        self._fh = None
        if self._path is not None:
            self._path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(self._path, "a", encoding="utf-8")

    @classmethod
    def open(cls, path: str | Path, **kw) -> "TelemetryStore":
        """Reload a persisted log; reloaded records are not re-queued."""
        store = cls(None, **kw)
        p = Path(path)
        if p.exists():
            for line in p.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    store._accept(TelemetryRecord.from_json(line))
        store._queue.clear()
        store._path = p
        store._fh = open(p, "a", encoding="utf-8")
        return store

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def __len__(self) -> int:
        return len(self._log)

    @property
    def local_log(self) -> tuple[TelemetryRecord, ...]:
        return self.snapshot()

    @property
    def uplink_queue(self) -> tuple[TelemetryRecord, ...]:
        return tuple(self._queue)

    def snapshot(self) -> tuple[TelemetryRecord, ...]:
        with self._lock:
            return tuple(self._log)

    def _accept(self, record: TelemetryRecord) -> None:
        last = self._last_t.get(record.node_id)
        if last is not None and record.t < last:
            raise ValidationError(
                f"timestamp regression for node {record.node_id}: {record.t} < {last}")
        self._last_t[record.node_id] = record.t
        with self._lock:
            self._log.append(record)
        self._queue.append(record)
        if record.quality is Quality.Valid:
            ts, vs = self._index.setdefault(record.kind, ([], []))
            i = bisect.bisect_right(ts, record.t)
            ts.insert(i, record.t)
            vs.insert(i, record.value)

    def append(self, record: TelemetryRecord) -> "TelemetryStore":
        self._accept(record)
        if self._fh is not None:
            self._fh.write(record.to_json() + "\n")
            self._fh.flush()
            if self._fsync:
                os.fsync(self._fh.fileno())
        return self

    def extend(self, records: Iterable[TelemetryRecord]) -> "TelemetryStore":
        for r in records:
            self.append(r)
        return self

    def set_uplink(self, connected: bool) -> "TelemetryStore":
        self.uplink_connected = bool(connected)
        return self

    def flush(self) -> list[TelemetryRecord]:
        """Send the pending backlog in order; a no-op while disconnected."""
        if not self.uplink_connected:
            return []
        batch = list(self._queue)
        self._queue.clear()
        self.sent.extend(batch)
        return batch

    def window_stat(self, kind: SensorKind, t_end: float, window: float,
                    stat: str = "mean") -> float | None:
        if not window > 0:
            raise ValidationError("window must be positive")
        ts, vs = self._index.get(kind, ([], []))
        lo = bisect.bisect_right(ts, t_end - window)
        hi = bisect.bisect_right(ts, t_end)
        return _reduce(vs[lo:hi], stat)

    def window_values(self, kind: SensorKind, t_end: float, window: float) -> list[float]:
        ts, vs = self._index.get(kind, ([], []))
        lo = bisect.bisect_right(ts, t_end - window)
        hi = bisect.bisect_right(ts, t_end)
        return vs[lo:hi]


def _reduce(values: Sequence[float], stat: str) -> float | None:
    if stat not in ("mean", "max", "min"):
        raise ValidationError(f"unknown statistic {stat!r}")
    if not values:
        return None
    if stat == "mean":
        return math.fsum(values) / len(values)
    return max(values) if stat == "max" else min(values)


def window_stat(log: TelemetryStore | Iterable[TelemetryRecord], kind: SensorKind, t_end: float,
                window: float, stat: str = "mean") -> float | None:
    """Statistic over Valid records of ``kind`` with t in (t_end - window, t_end]."""
    if isinstance(log, TelemetryStore):
        return log.window_stat(kind, t_end, window, stat)
    if not window > 0:
        raise ValidationError("window must be positive")
    values = [r.value for r in log
              if r.kind is kind and r.quality is Quality.Valid and t_end - window < r.t <= t_end]
    return _reduce(values, stat)


CSV_COLUMNS = ["t_iso8601", "node_id", "kind", "value", "quality"]


def _records(log) -> list[TelemetryRecord]:
    return list(log.snapshot() if isinstance(log, TelemetryStore) else log)


def export_csv(log, path: str | Path | None = None, *, kinds: Iterable[SensorKind] | None = None,
               nodes: Iterable[int] | None = None) -> str:
    """Write records sorted by (t, node_id, kind); returns the CSV text."""
    records = _records(log)
    if kinds is not None:
        wanted = {SensorKind.parse(k) for k in kinds}
        records = [r for r in records if r.kind in wanted]
    if nodes is not None:
        wanted_nodes = set(nodes)
        records = [r for r in records if r.node_id in wanted_nodes]
    records.sort(key=lambda r: (r.t, r.node_id, int(r.kind)))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        w.writerow([iso(r.t), r.node_id, r.kind.name, repr(r.value), r.quality.value])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def import_csv(source: str | Path) -> list[TelemetryRecord]:
    """Parse CSV produced by :func:`export_csv` (path or literal text)."""
    text = source
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
        text = Path(source).read_text(encoding="utf-8")
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != CSV_COLUMNS:
        raise ValidationError(f"unexpected CSV header {reader.fieldnames}")
    return [TelemetryRecord(int(row["node_id"]), SensorKind.parse(row["kind"]),
                            parse_iso(row["t_iso8601"]), float(row["value"]),
                            Quality(row["quality"]))
            for row in reader]


class Ingestor:
    """Broker subscriber that validates publications into a store."""

    def __init__(self, store: TelemetryStore, *, max_age: float | None = None):
        self.store = store
        self.max_age = max_age
        self.rejected: list[str] = []

    def __call__(self, topic: str, payload: str) -> None:
        try:
            records = validate(payload)
        except ValidationError as exc:
            self.rejected.append(f"{topic}: {exc}")
            return
        self.store.extend(records)

    def attach(self, broker, site: str = "+") -> int:
        return broker.subscribe(f"agro/v1/{site}/+/obs", self)


def mean_direction(store: TelemetryStore, t_end: float, window: float,
                   kind: SensorKind = SensorKind.WindDirection) -> float | None:
    """Circular mean of a bearing series, degrees in [0, 360)."""
    values = store.window_values(kind, t_end, window)
    if not values:
        return None
    s = math.fsum(math.sin(math.radians(v)) for v in values)
    c = math.fsum(math.cos(math.radians(v)) for v in values)
    if abs(s) < 1e-12 and abs(c) < 1e-12:
        return None
    return math.degrees(math.atan2(s, c)) % 360.0
