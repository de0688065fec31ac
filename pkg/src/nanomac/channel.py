"""Physical channel at two resolutions.

The pulse model places TS-OOK pulses on the femtosecond clock: a 1 is a
``pulse_width`` pulse at ``start + delay + i * symbol_spacing``, a 0 is
silence. The slot model only reports how many nodes transmitted in a slot.
The channel is lossless; noise is not modelled.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .sim import FS_PER_S

DEFAULT_SYMBOL_SPACING = 100_000  # fs (100 ps)
DEFAULT_PULSE_WIDTH = 100  # fs
MAX_RANGE_MM = 10.0


@dataclass(frozen=True)
class PulseTrain:
    bits: tuple[int, ...]
    start: int = 0
    symbol_spacing: int = DEFAULT_SYMBOL_SPACING
    pulse_width: int = DEFAULT_PULSE_WIDTH

    def __post_init__(self):
        object.__setattr__(self, "bits", tuple(int(b) for b in self.bits))
        if any(b not in (0, 1) for b in self.bits):
            raise ValueError("bits must be 0 or 1")
        if self.pulse_width <= 0:
            raise ValueError("pulse_width must be positive")
        if self.symbol_spacing <= self.pulse_width:
            raise ValueError("symbol_spacing must exceed pulse_width")
        if self.start < 0:
            raise ValueError("start must be non-negative")

    @classmethod
    def from_string(cls, bits: str, **kwargs) -> "PulseTrain":
        return cls(tuple(int(c) for c in bits), **kwargs)

    @property
    def beta(self) -> float:
        return self.symbol_spacing / self.pulse_width


@dataclass(frozen=True)
class PropagationModel:
    distance: float = 10.0  # mm
    speed: float = 3.0e8  # m/s

    def __post_init__(self):
        if not 0.0 <= self.distance <= MAX_RANGE_MM:
            raise ValueError(f"distance must lie in [0, {MAX_RANGE_MM}] mm")
        if self.speed <= 0:
            raise ValueError("speed must be positive")


def propagation_delay(model: PropagationModel) -> int:
    """One-way delay in femtoseconds, rounded to the nearest fs."""
    return round(model.distance * 1e-3 / model.speed * FS_PER_S)


def pulse_arrival_times(train: PulseTrain, delay: int = 0) -> list[int]:
    base = train.start + delay
    return [base + i * train.symbol_spacing for i, bit in enumerate(train.bits) if bit]


def _pulses(trains: Sequence[tuple[PulseTrain, int]]) -> list[tuple[int, int, int]]:
    pulses = []
    for idx, (train, delay) in enumerate(trains):
        for t in pulse_arrival_times(train, delay):
            pulses.append((t, train.pulse_width, idx))
    pulses.sort()
    return pulses


def detect_collisions(trains: Sequence[tuple[PulseTrain, int] | PulseTrain]) -> int:
    """Count overlapping pulse pairs from distinct trains at one receiver.

    Each entry is ``(train, delay)`` or a bare train (zero delay). A pulse
    occupies ``[t, t + width)``; two pulses overlap when the later one starts
    strictly before the earlier one ends.
    """
    norm = [t if isinstance(t, tuple) else (t, 0) for t in trains]
    pulses = _pulses(norm)
    count = 0
    active: list[tuple[int, int]] = []  # (end, train index) of pulses still open
    for t, width, idx in pulses:
        active = [(end, j) for end, j in active if end > t]
        count += sum(1 for _, j in active if j != idx)
        active.append((t + width, idx))
    return count


def collision_pairs(trains: Sequence[tuple[PulseTrain, int]]) -> list[tuple[int, int, int, int]]:
    """Overlapping pulses as ``(train_a, time_a, train_b, time_b)`` tuples."""
    pulses = _pulses(trains)
    found = []
    active: list[tuple[int, int, int]] = []
    for t, width, idx in pulses:
        active = [a for a in active if a[0] > t]
        found.extend((j, start, idx, t) for end, j, start in active if j != idx)
        active.append((t + width, idx, t))
    return found


class SlotKind(Enum):
    IDLE = "idle"
    SUCCESS = "success"
    COLLISION = "collision"


@dataclass(frozen=True)
class SlotOutcome:
    kind: SlotKind
    winner: int | None = None
    contenders: int = 0

    def __post_init__(self):
        if self.kind is SlotKind.SUCCESS and (self.winner is None or self.contenders != 1):
            raise ValueError("a successful slot has exactly one winner")
        if self.kind is SlotKind.COLLISION and self.contenders < 2:
            raise ValueError("a collision needs at least two contenders")
        if self.kind is SlotKind.IDLE and (self.winner is not None or self.contenders):
            raise ValueError("an idle slot has no contenders")

    @classmethod
    def idle(cls) -> "SlotOutcome":
        return cls(SlotKind.IDLE)

    @classmethod
    def success(cls, winner: int) -> "SlotOutcome":
        return cls(SlotKind.SUCCESS, winner, 1)

    @classmethod
    def collision(cls, contenders: int) -> "SlotOutcome":
        return cls(SlotKind.COLLISION, None, contenders)

    @property
    def usable(self) -> bool:
        return self.kind is SlotKind.SUCCESS


IDLE = SlotOutcome.idle()


def slot_transmit(transmissions: Sequence[tuple[int, object]]) -> SlotOutcome:
    """Raw channel outcome of one slot given ``(node, frame)`` transmissions."""
    if not transmissions:
        return IDLE
    if len(transmissions) == 1:
        return SlotOutcome.success(transmissions[0][0])
    return SlotOutcome.collision(len(transmissions))


def figure2_scenario() -> list[tuple[PulseTrain, int]]:
    """Three transmitters sharing 100 ps symbol spacing, started 10 ps apart.

    With 100 fs pulses every inter-train gap is at least 10 ps, so the
    receiver sees no overlap.
    """
    delay = propagation_delay(PropagationModel())
    return [
        (PulseTrain.from_string("101001", start=0), delay),
        (PulseTrain.from_string("110001", start=10_000), delay),
        (PulseTrain.from_string("100101", start=20_000), delay),
    ]
