"""Scan events, the JSONL event log, and sliding-window grouping."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence, Union

DeviceId = str


class IngestError(ValueError):
    """A raw record could not be turned into an event."""

    def __init__(self, index: int, reason: str):
        super().__init__(f"record {index}: {reason}")
        self.index = index


@dataclass(frozen=True)
class WifiScan:
    device: DeviceId
    t: float
    readings: Mapping[str, float]

    def __post_init__(self):
        if not self.device:
            raise ValueError("empty device id")
        if not math.isfinite(self.t):
            raise ValueError(f"non-finite timestamp {self.t}")
        if not self.readings:
            raise ValueError("wifi scan without readings")


@dataclass(frozen=True)
class BtSighting:
    observer: DeviceId
    observed: DeviceId
    t: float
    rss: float

    def __post_init__(self):
        if not self.observer or not self.observed:
            raise ValueError("empty device id")
        if self.observer == self.observed:
            raise ValueError(f"device {self.observer} sighting itself")
        if not math.isfinite(self.t):
            raise ValueError(f"non-finite timestamp {self.t}")
        if not math.isfinite(self.rss):
            raise ValueError(f"non-finite rss {self.rss}")

    @property
    def pair(self) -> tuple[DeviceId, DeviceId]:
        """Unordered pair key, smaller id first."""
        return tuple(sorted((self.observer, self.observed)))  # type: ignore[return-value]


Event = Union[WifiScan, BtSighting]


@dataclass(frozen=True)
class EventStream:
    events: tuple[Event, ...]
    participants: frozenset[DeviceId]
    duration_s: float | None = None
    dropped: int = 0

    def __len__(self):
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    @property
    def end_time(self) -> float:
        """Session end: the declared duration, or the last event time."""
        last = self.events[-1].t if self.events else 0.0
        if self.duration_s is None:
            return last
        return max(self.duration_s, last)

    def wifi(self) -> list[WifiScan]:
        return [e for e in self.events if isinstance(e, WifiScan)]

    def bluetooth(self) -> list[BtSighting]:
        return [e for e in self.events if isinstance(e, BtSighting)]

    def without_bluetooth(self) -> "EventStream":
        return EventStream(tuple(self.wifi()), self.participants, self.duration_s, self.dropped)


@dataclass(frozen=True)
class TimeWindow:
    start: float
    length: float

    def __post_init__(self):
        if not self.length > 0:
            raise ValueError(f"window length must be positive, got {self.length}")

    @property
    def end(self) -> float:
        return self.start + self.length

    @property
    def midpoint(self) -> float:
        return self.start + 0.5 * self.length

    def contains(self, t: float) -> bool:
        return self.start <= t < self.end


def _parse_record(index: int, rec) -> Event:
    if isinstance(rec, (WifiScan, BtSighting)):
        return rec
    if not isinstance(rec, Mapping):
        raise IngestError(index, f"expected a mapping, got {type(rec).__name__}")
    kind = rec.get("type")
    try:
        if kind == "wifi":
            readings = rec["readings"]
            if not isinstance(readings, Mapping):
                raise IngestError(index, "readings must be an object")
            return WifiScan(str(rec["device"]), float(rec["t"]),
                            {str(k): float(v) for k, v in readings.items()})
        if kind == "bt":
            return BtSighting(str(rec["observer"]), str(rec["observed"]),
                              float(rec["t"]), float(rec["rss"]))
    except KeyError as exc:
        raise IngestError(index, f"missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, IngestError):
            raise
        raise IngestError(index, str(exc)) from None
    raise IngestError(index, f"unknown record type {kind!r}")


def ingest(records: Iterable, participants: Iterable[DeviceId],
           duration_s: float | None = None) -> EventStream:
    """Validate raw records and build a time-sorted stream.

    Records may be parsed JSON objects or already-built events. Anything that
    references a device outside ``participants`` (headsets, mice, unknown
    phones) is dropped and counted in ``EventStream.dropped``.
    """
    members = frozenset(participants)
    events: list[Event] = []
    dropped = 0
    for i, rec in enumerate(records):
        ev = _parse_record(i, rec)
        if isinstance(ev, WifiScan):
            keep = ev.device in members
        else:
            keep = ev.observer in members and ev.observed in members
        if keep:
            events.append(ev)
        else:
            dropped += 1
    # stable sort keeps the input order of simultaneous events
    events.sort(key=lambda e: e.t)
    return EventStream(tuple(events), members, duration_s, dropped)


def window_events(stream: EventStream | Sequence[Event], window: TimeWindow
                  ) -> tuple[dict[DeviceId, list[WifiScan]], list[BtSighting]]:
    """Events with ``start <= t < start + length``, split by kind."""
    wifi: dict[DeviceId, list[WifiScan]] = {}
    bt: list[BtSighting] = []
    for ev in stream:
        if not window.contains(ev.t):
            continue
        if isinstance(ev, WifiScan):
            wifi.setdefault(ev.device, []).append(ev)
        else:
            bt.append(ev)
    return wifi, bt


def iter_windows(stream: EventStream, length: float) -> list[TimeWindow]:
    """Tumbling windows of ``length`` seconds covering the whole session."""
    end = stream.end_time
    n = max(1, math.ceil(end / length))
    if stream.events and stream.events[-1].t >= n * length:
        n += 1
    return [TimeWindow(i * length, length) for i in range(n)]


# -- JSONL ------------------------------------------------------------------

def _num(v: float) -> str:
    return json.dumps(float(v))


def event_to_json(ev: Event) -> str:
    if isinstance(ev, WifiScan):
        readings = ",".join(f"{json.dumps(k)}:{_num(v)}" for k, v in ev.readings.items())
        return (f'{{"type":"wifi","device":{json.dumps(ev.device)},'
                f'"t":{ev.t:.3f},"readings":{{{readings}}}}}')
    return (f'{{"type":"bt","observer":{json.dumps(ev.observer)},'
            f'"observed":{json.dumps(ev.observed)},"t":{ev.t:.3f},"rss":{_num(ev.rss)}}}')


def write_jsonl(stream: EventStream, path: str | Path) -> None:
    header = {"type": "session", "participants": sorted(stream.participants)}
    lines = []
    if stream.duration_s is not None:
        header["duration_s"] = float(stream.duration_s)
    lines.append(json.dumps(header, separators=(",", ":")))
    lines.extend(event_to_json(ev) for ev in stream.events)
    Path(path).write_text("\n".join(lines) + "\n")


def read_jsonl(path: str | Path, participants: Iterable[DeviceId] | None = None) -> EventStream:
    """Read an event log. The session header supplies participants unless given."""
    records = []
    header = None
    with open(path) as fh:
        for lineno, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise IngestError(lineno, f"bad JSON: {exc.msg}") from None
            if isinstance(rec, dict) and rec.get("type") == "session":
                header = rec
                continue
            records.append(rec)
    if participants is None:
        if header is None:
            raise IngestError(0, "no session header and no participant list given")
        participants = header["participants"]
    duration = header.get("duration_s") if header else None
    return ingest(records, participants, duration)
