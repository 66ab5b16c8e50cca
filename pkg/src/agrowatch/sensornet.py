"""Simulated LoRa sensor nodes, the binary frame codec, gateway and topic bus.

Frame layout (all multi-byte fields little-endian)::

    offset  size  field
    0       1     sync = 0xA5
    1       1     node_id (u8)
    2       2     seq (u16)
    4       1     count (u8, >= 1)
    5       5*n   readings: kind (u8) + value (f32)
    5+5n    2     CRC-16/CCITT-FALSE over bytes 1 .. 4+5n

See docs/frame_format.md for the full description.
"""

from __future__ import annotations

import binascii
import heapq
import itertools
import json
import math
import struct
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from . import radio
from .errors import BadCrc, BadSync, FrameError, Truncated, UnknownKind, ValidationError
from .timeutil import iso

SYNC = 0xA5
HEADER_LEN = 5
READING_LEN = 5
CRC_LEN = 2
TOPIC_PREFIX = "agro/v1"


class SensorKind(IntEnum):
    Temperature = 1
    Humidity = 2
    WindSpeed = 3
    WindDirection = 4
    Pressure = 5
    Rain = 6
    GasCO = 7
    GasNH3 = 8
    GasNO2 = 9
    LightVisible = 10
    LightIR = 11
    UVIndex = 12

    @property
    def unit(self) -> str:
        return UNITS[self]

    @classmethod
    def parse(cls, name: str | int | "SensorKind") -> "SensorKind":
        if isinstance(name, SensorKind):
            return name
        if isinstance(name, int):
            return cls(name)
        try:
            return cls[name]
        except KeyError:
            raise ValidationError(f"unknown sensor kind {name!r}") from None


UNITS = {
    SensorKind.Temperature: "degC",
    SensorKind.Humidity: "%RH",
    SensorKind.WindSpeed: "m/s",
    SensorKind.WindDirection: "deg",
    SensorKind.Pressure: "hPa",
    SensorKind.Rain: "mm/h",
    SensorKind.GasCO: "ppm",
    SensorKind.GasNH3: "ppm",
    SensorKind.GasNO2: "ppm",
    SensorKind.LightVisible: "klx",
    SensorKind.LightIR: "klx",
    SensorKind.UVIndex: "index",
}


# ---------------------------------------------------------------- frame codec

@dataclass(frozen=True)
class SensorFrame:
    node_id: int
    seq: int
    readings: tuple[tuple[SensorKind, float], ...]

    def __post_init__(self):
        if not 0 <= self.node_id <= 0xFF:
            raise ValidationError(f"node_id {self.node_id} does not fit in u8")
        if not 0 <= self.seq <= 0xFFFF:
            raise ValidationError(f"seq {self.seq} does not fit in u16")
        readings = tuple((SensorKind.parse(k), float(v)) for k, v in self.readings)
        if not 1 <= len(readings) <= 0xFF:
            raise ValidationError("frame needs 1..255 readings")
        object.__setattr__(self, "readings", readings)


def crc16_ccitt_false(data: bytes) -> int:
    # binascii.crc_hqx is poly 0x1021, unreflected, no final xor
    return binascii.crc_hqx(data, 0xFFFF)


def frame_length(count: int) -> int:
    return HEADER_LEN + READING_LEN * count + CRC_LEN


def encode_frame(frame: SensorFrame) -> bytes:
    body = bytearray(struct.pack("<BHB", frame.node_id, frame.seq, len(frame.readings)))
    for kind, value in frame.readings:
        body += struct.pack("<Bf", int(kind), value)
    crc = crc16_ccitt_false(bytes(body))
    return bytes([SYNC]) + bytes(body) + struct.pack("<H", crc)


def decode_frame(buf: bytes) -> SensorFrame:
    """Parse and verify a frame.

    The CRC is checked before the count field is trusted, so any single
    corrupted byte surfaces as :class:`BadSync` or :class:`BadCrc`.
    """
    buf = bytes(buf)
    if len(buf) < frame_length(1):
        raise Truncated(f"{len(buf)} bytes is shorter than the smallest frame")
    if buf[0] != SYNC:
        raise BadSync(f"sync byte 0x{buf[0]:02X}")
    (crc,) = struct.unpack_from("<H", buf, len(buf) - CRC_LEN)
    if crc16_ccitt_false(buf[1:-CRC_LEN]) != crc:
        raise BadCrc("checksum mismatch")
    node_id, seq, count = struct.unpack_from("<BHB", buf, 1)
    if count == 0 or len(buf) != frame_length(count):
        raise Truncated(f"count {count} implies {frame_length(count)} bytes, got {len(buf)}")
    readings = []
    for i in range(count):
        code, value = struct.unpack_from("<Bf", buf, HEADER_LEN + READING_LEN * i)
        try:
            kind = SensorKind(code)
        except ValueError:
            raise UnknownKind(f"sensor kind code {code}") from None
        readings.append((kind, value))
    return SensorFrame(node_id, seq, tuple(readings))


# --------------------------------------------------------- environment script

@dataclass
class EnvironmentScript:
    """Piecewise-linear ground truth per sensor kind plus Gaussian noise.

    Times are seconds relative to the scenario start. Values hold constant
    outside the scripted range.
    """

    series: dict[SensorKind, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)
    noise: dict[SensorKind, float] = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for kind, (ts, vs) in self.series.items():
            ts = np.asarray(ts, dtype=float)
            vs = np.asarray(vs, dtype=float)
            if ts.ndim != 1 or ts.shape != vs.shape or ts.size == 0:
                raise ValidationError(f"bad series for {kind!r}")
            if np.any(np.diff(ts) <= 0):
                raise ValidationError(f"timestamps for {kind!r} must strictly increase")
            clean[SensorKind.parse(kind)] = (ts, vs)
        self.series = clean
        self.noise = {SensorKind.parse(k): float(v) for k, v in self.noise.items()}

    def has(self, kind: SensorKind) -> bool:
        return kind in self.series

    def value(self, kind: SensorKind, t: float) -> float:
        try:
            ts, vs = self.series[kind]
        except KeyError:
            raise ValidationError(f"environment has no script for {kind.name}") from None
        return float(np.interp(t, ts, vs))

    def sample(self, kind: SensorKind, t: float, rng: np.random.Generator | None) -> float:
        v = self.value(kind, t)
        sigma = self.noise.get(kind, 0.0)
        if sigma > 0 and rng is not None:
            v += rng.normal(0.0, sigma)
        return v

    def with_constant(self, kind: SensorKind, value: float) -> "EnvironmentScript":
        series = dict(self.series)
        series[kind] = (np.array([0.0]), np.array([float(value)]))
        return EnvironmentScript(series, dict(self.noise))

    @classmethod
    def from_dict(cls, doc: Mapping) -> "EnvironmentScript":
        series, noise = {}, {}
        for name, spec in doc.items():
            kind = SensorKind.parse(name)
            if isinstance(spec, (int, float)):
                spec = {"value": spec}
            if "points" in spec:
                pts = np.asarray(spec["points"], dtype=float)
                series[kind] = (pts[:, 0], pts[:, 1])
            else:
                series[kind] = (np.array([0.0]), np.array([float(spec["value"])]))
            noise[kind] = float(spec.get("sigma", 0.0))
        return cls(series, noise)

    def to_dict(self) -> dict:
        return {
            kind.name: {"points": [[float(t), float(v)] for t, v in zip(*self.series[kind])],
                        "sigma": self.noise.get(kind, 0.0)}
            for kind in sorted(self.series)
        }


# --------------------------------------------------------------------- nodes

@dataclass
class NodeSim:
    node_id: int
    position: tuple[float, float]
    kinds: Sequence[SensorKind]
    period: float
    environment: EnvironmentScript
    seq: int = 0
    next_due: float | None = None

    def __post_init__(self):
        if not self.period > 0:
            raise ValidationError("node period must be positive")
        if not 0 <= self.node_id <= 0xFF:
            raise ValidationError("node_id must fit in u8")
        self.kinds = [SensorKind.parse(k) for k in self.kinds]
        if not self.kinds:
            raise ValidationError("node needs at least one sensor kind")
        if self.next_due is None:
            self.next_due = self.period


def node_tick(node: NodeSim, t: float, rng: np.random.Generator | None = None) -> SensorFrame | None:
    """Emit a frame if ``t`` has reached the node's next period boundary."""
    if t < node.next_due:
        return None
    readings = tuple((k, node.environment.sample(k, t, rng)) for k in node.kinds)
    frame = SensorFrame(node.node_id, node.seq, readings)
    node.seq = (node.seq + 1) & 0xFFFF
    node.next_due = (math.floor(t / node.period) + 1) * node.period
    return frame


# ------------------------------------------------------------------- gateway

@dataclass(frozen=True)
class Publication:
    topic: str
    payload: str


@dataclass(frozen=True)
class Dropped:
    reason: str  # "OutOfRange" | "BadCrc"
    detail: str = ""


def obs_topic(site: str, node_id: int) -> str:
    return f"{TOPIC_PREFIX}/{site}/{node_id}/obs"


def frame_payload(frame: SensorFrame, t: float) -> str:
    return json.dumps({
        "node": frame.node_id,
        "seq": frame.seq,
        "t": iso(t),
        "readings": [{"kind": k.name, "value": v} for k, v in frame.readings],
    })


def gateway_receive(frame_bytes: bytes, node_pos: Sequence[float], gateway_pos: Sequence[float],
                    link: radio.LinkBudget, rng: np.random.Generator | None = None, *,
                    t: float = 0.0, site: str = "site1",
                    cfg: radio.LoraConfig | None = None) -> Publication | Dropped:
    distance = math.dist(node_pos, gateway_pos)
    if not radio.delivered(link, cfg or radio.LoraConfig(), distance, rng):
        return Dropped("OutOfRange", f"{distance:.1f} m")
    try:
        frame = decode_frame(frame_bytes)
    except FrameError as exc:
        return Dropped("BadCrc", f"{type(exc).__name__}: {exc}")
    return Publication(obs_topic(site, frame.node_id), frame_payload(frame, t))


# ----------------------------------------------------------------- topic bus

def topic_matches(pattern: str, topic: str) -> bool:
    pp = pattern.split("/")
    tt = topic.split("/")
    for i, p in enumerate(pp):
        if p == "#":
            return True
        if i >= len(tt):
            return False
        if p != "+" and p != tt[i]:
            return False
    return len(pp) == len(tt)


class Broker:
    """In-process MQTT-like bus with synchronous, in-order delivery."""

    def __init__(self):
        self._subs: list[tuple[int, str, Callable[[str, str], None]]] = []
        self._ids = itertools.count()

    def subscribe(self, pattern: str, callback: Callable[[str, str], None]) -> int:
        if not pattern:
            raise ValidationError("empty subscription pattern")
        handle = next(self._ids)
        self._subs.append((handle, pattern, callback))
        return handle

    def unsubscribe(self, handle: int) -> None:
        self._subs = [s for s in self._subs if s[0] != handle]

    def publish(self, topic: str, payload: str) -> int:
        if not topic or "+" in topic or "#" in topic:
            raise ValidationError(f"invalid publish topic {topic!r}")
        delivered = 0
        for _, pattern, callback in list(self._subs):
            if topic_matches(pattern, topic):
                callback(topic, payload)
                delivered += 1
        return delivered


def broker_publish(broker: Broker, topic: str, payload: str) -> int:
    return broker.publish(topic, payload)


def broker_subscribe(broker: Broker, pattern: str, callback: Callable[[str, str], None]) -> int:
    return broker.subscribe(pattern, callback)


# ---------------------------------------------------------- event scheduling

class EventLoop:
    """Single-owner discrete-event scheduler; ties break in insertion order."""

    def __init__(self, t0: float = 0.0):
        self.now = t0
        self._queue: list[tuple[float, int, Callable[[float], None]]] = []
        self._seq = itertools.count()

    def schedule(self, t: float, fn: Callable[[float], None]) -> None:
        if t < self.now:
            raise ValidationError("cannot schedule into the past")
        heapq.heappush(self._queue, (t, next(self._seq), fn))

    def run_until(self, t_end: float) -> None:
        while self._queue and self._queue[0][0] <= t_end:
            t, _, fn = heapq.heappop(self._queue)
            self.now = t
            fn(t)
        self.now = max(self.now, t_end)


@dataclass
class NetworkStats:
    frames_sent: dict[int, int] = field(default_factory=dict)
    published: dict[int, int] = field(default_factory=dict)
    dropped: dict[int, list[str]] = field(default_factory=dict)


class SensorNetwork:
    """Nodes, one gateway and a broker wired onto an :class:`EventLoop`."""

    def __init__(self, nodes: Iterable[NodeSim], gateway_pos: Sequence[float],
                 link: radio.LinkBudget, broker: Broker, rng: np.random.Generator, *,
                 site: str = "site1", epoch: float = 0.0, cfg: radio.LoraConfig | None = None,
                 bit_error_prob: float = 0.0):
        self.nodes = list(nodes)
        self.gateway_pos = tuple(gateway_pos)
        self.link = link
        self.broker = broker
        self.rng = rng
        self.site = site
        self.epoch = epoch
        self.cfg = cfg or radio.LoraConfig()
        self.bit_error_prob = bit_error_prob
        self.stats = NetworkStats()
        self.on_tick: list[Callable[[float], None]] = []

    def attach(self, loop: EventLoop) -> None:
        for node in self.nodes:
            loop.schedule(node.next_due, self._ticker(node, loop))

    def _ticker(self, node: NodeSim, loop: EventLoop):
        def fire(t: float) -> None:
            frame = node_tick(node, t, self.rng)
            if frame is not None:
                self._transmit(node, frame, t)
            for hook in self.on_tick:
                hook(t)
            loop.schedule(node.next_due, fire)
        return fire

    def _transmit(self, node: NodeSim, frame: SensorFrame, t: float) -> None:
        s = self.stats
        s.frames_sent[node.node_id] = s.frames_sent.get(node.node_id, 0) + 1
        buf = encode_frame(frame)
        if self.bit_error_prob > 0 and self.rng.random() < self.bit_error_prob:
            pos = int(self.rng.integers(len(buf) * 8))
            corrupted = bytearray(buf)
            corrupted[pos // 8] ^= 1 << (pos % 8)
            buf = bytes(corrupted)
        result = gateway_receive(buf, node.position, self.gateway_pos, self.link, self.rng,
                                 t=self.epoch + t, site=self.site, cfg=self.cfg)
        if isinstance(result, Publication):
            s.published[node.node_id] = s.published.get(node.node_id, 0) + 1
            self.broker.publish(result.topic, result.payload)
        else:
            s.dropped.setdefault(node.node_id, []).append(result.reason)

    def run(self, t_end: float, loop: EventLoop | None = None) -> EventLoop:
        loop = loop or EventLoop()
        self.attach(loop)
        loop.run_until(t_end)
        return loop
