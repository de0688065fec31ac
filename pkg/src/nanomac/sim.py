"""Deterministic discrete-event engine.

Virtual time is an integer number of femtoseconds. A 10-minute beacon
interval is 6e17 fs and experiment horizons reach 1e21 fs, so times are plain
Python ints guarded to the signed 128-bit range.

Randomness comes from SplitMix64 (Steele, Lea & Flood 2014), whose reference
sequence for seed 1234567 begins 6457827717110365317, 3203168211198807973.
Per-node streams are seeded by ``derive_seed(master, stream_id)``.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Callable, Iterable

import numpy as np

if TYPE_CHECKING:
    from .channel import PropagationModel
    from .mac import CoordinatorState, SensorState

FS_PER_PS = 10**3
FS_PER_S = 10**15
FS_PER_MIN = 60 * FS_PER_S
SIMTIME_MAX = 2**127 - 1

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


class PastEvent(ValueError):
    pass


def check_time(t: int) -> int:
    if not isinstance(t, int) or isinstance(t, bool):
        raise TypeError(f"simulation time must be an int, got {type(t).__name__}")
    if not 0 <= t <= SIMTIME_MAX:
        raise OverflowError(f"simulation time {t} outside [0, 2**127)")
    return t


def minutes(m: float) -> int:
    return check_time(round(m * FS_PER_MIN))


def seconds(s: float) -> int:
    return check_time(round(s * FS_PER_S))


class EventKind(Enum):
    BEACON_DUE = "BeaconDue"
    SLOT_BOUNDARY = "SlotBoundary"
    FRAME_ARRIVAL = "FrameArrival"
    HARVEST_SAMPLE = "HarvestSample"
    EXPERIMENT_CHECKPOINT = "ExperimentCheckpoint"


@dataclass(frozen=True, order=True)
class Event:
    at: int
    seq: int
    kind: EventKind = field(compare=False)
    target: int = field(compare=False, default=0)

    def trace_line(self) -> str:
        return f"{self.at},{self.seq},{self.kind.value},{self.target}"


Handler = Callable[["Engine", Event], None]


class Engine:
    """Event queue plus virtual clock.

    Handlers are registered per :class:`EventKind` up front; events carry data
    only, so a trace of ``(at, seq, kind, target)`` replays the run exactly.
    """

    def __init__(self, handlers: dict[EventKind, Handler] | None = None, trace: bool = False):
        self.now = 0
        self._queue: list[Event] = []
        self._seq = 0
        self.handlers: dict[EventKind, Handler] = dict(handlers or {})
        self.trace: list[str] | None = [] if trace else None
        self.dispatched = 0

    def __len__(self):
        return len(self._queue)

    def schedule(self, at: int, kind: EventKind, target: int = 0) -> Event:
        check_time(at)
        if at < self.now:
            raise PastEvent(f"event at {at} fs is before the clock ({self.now} fs)")
        event = Event(at, self._seq, kind, target)
        self._seq += 1
        heapq.heappush(self._queue, event)
        return event

    def peek(self) -> Event | None:
        return self._queue[0] if self._queue else None

    def run_until(self, horizon: int) -> int:
        """Dispatch events with ``at <= horizon`` in (at, seq) order.

        Returns the number of events dispatched. The clock ends at ``horizon``.
        """
        check_time(horizon)
        if horizon < self.now:
            raise PastEvent(f"horizon {horizon} fs is before the clock ({self.now} fs)")
        count = 0
        while self._queue and self._queue[0].at <= horizon:
            event = heapq.heappop(self._queue)
            self.now = event.at
            if self.trace is not None:
                self.trace.append(event.trace_line())
            handler = self.handlers.get(event.kind)
            if handler is not None:
                handler(self, event)
            count += 1
        self.now = horizon
        self.dispatched += count
        return count


def _mix64(z: int) -> int:
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return z ^ (z >> 31)


def derive_seed(master: int, stream_id: int) -> int:
    """Seed for stream ``stream_id`` under ``master``.

    Two rounds of the SplitMix64 finalizer over the master seed and the
    golden-ratio-scaled stream id; cheap, stateless and order independent.
    """
    return _mix64((_mix64(master & _MASK64) + (stream_id + 1) * _GAMMA) & _MASK64)


class RandomStream:
    """SplitMix64 generator. Output ``i`` is ``mix(seed + (i + 1) * gamma)``,
    which lets :meth:`raw_block` produce the same values with numpy."""

    def __init__(self, seed: int, stream_id: int | None = None):
        self.stream_id = stream_id
        self.state = (seed if stream_id is None else derive_seed(seed, stream_id)) & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + _GAMMA) & _MASK64
        return _mix64(self.state)

    def raw_block(self, size: int) -> np.ndarray:
        counters = np.arange(1, size + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(self.state) + counters * np.uint64(_GAMMA)
            z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        z ^= z >> np.uint64(31)
        self.state = (self.state + size * _GAMMA) & _MASK64
        return z

    def uniform_int(self, bound: int) -> int:
        """Unbiased integer in ``[0, bound)`` by rejection sampling."""
        if bound < 1:
            raise ValueError("bound must be at least 1")
        limit = (1 << 64) - (1 << 64) % bound
        while True:
            x = self.next_u64()
            if x < limit:
                return x % bound

    def uniform_ints(self, bound: int, size: int) -> np.ndarray:
        """``size`` consecutive :meth:`uniform_int` draws as an int64 array."""
        if bound < 1:
            raise ValueError("bound must be at least 1")
        limit = (1 << 64) - (1 << 64) % bound
        raw = self.raw_block(size)
        if limit < (1 << 64):
            kept = raw[raw < np.uint64(limit)]
            if kept.size < size:
                extra = []
                while kept.size + len(extra) < size:
                    x = self.next_u64()
                    if x < limit:
                        extra.append(x)
                raw = np.concatenate([kept, np.array(extra, dtype=np.uint64)])
        return (raw % np.uint64(bound)).astype(np.int64)

    def uniform_float(self) -> float:
        """Float in ``[0, 1)`` from the top 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform_floats(self, size: int) -> np.ndarray:
        return (self.raw_block(size) >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


def uniform_int(stream: RandomStream, bound: int) -> int:
    return stream.uniform_int(bound)


def node_streams(seed: int, node_ids: Iterable[int]) -> dict[int, RandomStream]:
    return {n: RandomStream(seed, n) for n in node_ids}


@dataclass
class Topology:
    """Star network: every sensor talks only to the coordinator."""

    coordinator: "CoordinatorState"
    sensors: list["SensorState"]
    propagation: "PropagationModel"

    def sensor(self, address: int) -> "SensorState":
        for s in self.sensors:
            if s.address == address:
                return s
        raise KeyError(address)
