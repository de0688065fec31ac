"""Beacon-enabled superframe MAC: membership, data transfer, slot access.

A superframe is one beacon slot followed by 15 contention access slots.
The coordinator pre-commits to the worst case before sending a beacon: if its
store cannot cover the beacon plus a full data exchange with every active
sensor, the superframe is skipped and no energy is spent.

Nodes hold their own :class:`~nanomac.energy.EnergyStore`; every operation
here mutates state in place and debits integer femtojoules.
"""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from enum import Enum

from .channel import IDLE, SlotKind, SlotOutcome
from .energy import (
    DEFAULT_PARAMS,
    FJ_PER_PJ,
    EnergyStore,
    InsufficientEnergy,
    PulseEnergyParams,
    rx_energy_fj,
    tx_energy_fj,
)
from .frames import (
    ADDRESS_LIST_SLOTS,
    BASE_BITS,
    BROADCAST,
    BeaconPayload,
    CommandId,
    FrameKind,
    MacFrame,
    beacon_frame,
    command_frame,
    data_frame,
)
from .sim import RandomStream

TOTAL_SLOTS = 16
CAP_SLOTS = 15
MAX_MEMBERS = 0xFFFF


class TableFull(Exception):
    pass


class NotMember(Exception):
    pass


class ContentionLost(Exception):
    pass


class LifecycleError(Exception):
    """An operation was attempted from the wrong sensor phase."""


class Phase(Enum):
    UNASSOCIATED = "unassociated"
    AWAITING_ASSOCIATION = "awaiting_association"
    ASSOCIATED = "associated"
    AWAITING_SLOT = "awaiting_slot"
    TRANSMITTING = "transmitting"
    DISASSOCIATED = "disassociated"


_ALLOWED = {
    Phase.UNASSOCIATED: {Phase.AWAITING_ASSOCIATION},
    Phase.AWAITING_ASSOCIATION: {Phase.ASSOCIATED, Phase.UNASSOCIATED},
    Phase.ASSOCIATED: {Phase.AWAITING_SLOT, Phase.DISASSOCIATED},
    Phase.AWAITING_SLOT: {Phase.TRANSMITTING, Phase.ASSOCIATED},
    Phase.TRANSMITTING: {Phase.ASSOCIATED},
    Phase.DISASSOCIATED: {Phase.UNASSOCIATED},
}

_MEMBER_PHASES = {Phase.ASSOCIATED, Phase.AWAITING_SLOT, Phase.TRANSMITTING}


class Allocation(Enum):
    CSMA = "csma"  # slotted CSMA/CA contention in every CAP slot
    ASSIGNED = "assigned"  # one beacon-listed CAP slot per active sensor


@dataclass(frozen=True)
class SuperframeConfig:
    duration: float = 10.0  # minutes between beacons
    total_slots: int = TOTAL_SLOTS
    cap_slots: int = CAP_SLOTS
    packet_scale: float = 1.0

    def __post_init__(self):
        if self.total_slots != TOTAL_SLOTS or self.cap_slots != CAP_SLOTS:
            raise ValueError("a superframe has 16 slots, 15 of them in the CAP")
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        if not 0.5 <= self.packet_scale <= 1.0:
            raise ValueError("packet_scale must lie in [0.5, 1.0]")


@dataclass(frozen=True)
class BackoffConfig:
    backoff_exponent: int = 3

    def __post_init__(self):
        if not 1 <= self.backoff_exponent <= 8:
            raise ValueError("backoff_exponent must lie in [1, 8]")

    @property
    def window(self) -> int:
        return 1 << self.backoff_exponent


@dataclass
class SensorState:
    address: int
    energy: EnergyStore = field(default_factory=EnergyStore.sensor)
    phase: Phase = Phase.UNASSOCIATED
    pending_data: bytes | None = None
    sequence: int = 0
    received: list[bytes] = field(default_factory=list)

    def __post_init__(self):
        if not 0 <= self.address < BROADCAST:
            raise ValueError(f"sensor address must lie in [0, 0xFFFE], got {self.address}")

    def move(self, phase: Phase) -> None:
        if phase not in _ALLOWED[self.phase]:
            raise LifecycleError(f"sensor {self.address}: {self.phase.name} -> {phase.name}")
        self.phase = phase

    @property
    def is_member(self) -> bool:
        return self.phase in _MEMBER_PHASES

    def next_sequence(self) -> int:
        seq = self.sequence
        self.sequence = (seq + 1) & 0xFF
        return seq

    def send_data(self, coordinator_address: int) -> MacFrame:
        """Build the uplink data frame. Only associated sensors may send data."""
        if not self.is_member:
            raise LifecycleError(f"sensor {self.address} is not associated")
        payload = self.pending_data if self.pending_data is not None else bytes(4)
        return data_frame(self.address, coordinator_address, payload, self.next_sequence())


@dataclass
class CoordinatorState:
    address: int = 0
    energy: EnergyStore = field(default_factory=EnergyStore.coordinator)
    member_table: set[int] = field(default_factory=set)
    beacon_list: list[int] = field(default_factory=list)
    pending_frames: dict[int, bytes] = field(default_factory=dict)
    sequence: int = 0
    received: list[tuple[int, bytes]] = field(default_factory=list)

    def check(self) -> None:
        assert len(self.beacon_list) <= ADDRESS_LIST_SLOTS
        assert set(self.beacon_list) <= self.member_table

    def advertise(self, address: int) -> None:
        if address in self.beacon_list:
            return
        if len(self.beacon_list) >= ADDRESS_LIST_SLOTS:
            raise TableFull(f"beacon address list already holds {ADDRESS_LIST_SLOTS} entries")
        self.beacon_list.append(address)

    def queue_downlink(self, address: int, payload: bytes) -> None:
        if address not in self.member_table:
            raise NotMember(f"{address:#06x} is not a member")
        if len(payload) != 4:
            raise ValueError("downlink payload must be 4 octets")
        self.advertise(address)
        self.pending_frames[address] = payload


@dataclass
class SuperframeResult:
    index: int
    status: str  # "completed" or "skipped"
    slot_outcomes: tuple[SlotOutcome, ...]
    coordinator_spent_fj: int
    sensor_spent_fj: dict[int, int]
    budget_fj: int = 0
    m: int = 0
    coordinator_level_fj: int = 0
    carried_over: tuple[int, ...] = ()
    beacon: MacFrame | None = None

    @property
    def completed(self) -> bool:
        return self.status == "completed"

    @property
    def coordinator_energy_spent(self) -> float:
        return self.coordinator_spent_fj / FJ_PER_PJ

    @property
    def per_sensor_energy_spent(self) -> dict[int, float]:
        return {a: fj / FJ_PER_PJ for a, fj in self.sensor_spent_fj.items()}

    def count(self, kind: SlotKind) -> int:
        return sum(1 for o in self.slot_outcomes if o.kind is kind)

    def ledger_row(self) -> dict[str, object]:
        return {
            "superframe_index": self.index,
            "status": self.status,
            "m": self.m,
            "budget_pJ": self.budget_fj / FJ_PER_PJ,
            "coordinator_level_pJ": self.coordinator_level_fj / FJ_PER_PJ,
            "success_slots": self.count(SlotKind.SUCCESS),
            "collision_slots": self.count(SlotKind.COLLISION),
            "idle_slots": self.count(SlotKind.IDLE),
        }


LEDGER_COLUMNS = (
    "superframe_index", "status", "m", "budget_pJ", "coordinator_level_pJ",
    "success_slots", "collision_slots", "idle_slots",
)


@dataclass(frozen=True)
class FrameCosts:
    """Per-frame energies in fJ at one packet scale."""

    beacon_tx: int
    beacon_rx: int
    data_tx: int
    data_rx: int
    ack_tx: int
    ack_rx: int
    cmd_tx: int
    cmd_rx: int

    @classmethod
    def at(cls, scale: float = 1.0, params: PulseEnergyParams = DEFAULT_PARAMS) -> "FrameCosts":
        def pair(kind):
            bits = BASE_BITS[kind]
            return tx_energy_fj(bits, scale, params), rx_energy_fj(bits, scale, params)

        b, d, a, c = (pair(k) for k in FrameKind)
        return cls(*b, *d, *a, *c)

    @property
    def per_slot_coordinator(self) -> int:
        return self.data_rx + self.ack_tx

    @property
    def per_slot_sensor(self) -> int:
        return self.beacon_rx + self.data_tx + self.ack_rx

    def budget(self, m: int) -> int:
        """Coordinator's worst-case spend for a superframe with ``m`` active slots."""
        return self.beacon_tx + min(m, CAP_SLOTS) * self.per_slot_coordinator


def superframe_budget(m: int, scale: float = 1.0, params: PulseEnergyParams = DEFAULT_PARAMS) -> float:
    return FrameCosts.at(scale, params).budget(m) / FJ_PER_PJ


# -- beacon ------------------------------------------------------------------

def build_beacon(coordinator: CoordinatorState, config: SuperframeConfig | None = None) -> MacFrame:
    """Beacon advertising ``beacon_list``, entries with queued downlink first.

    The pending-address octet counts those leading entries; the superframe
    specification carries the final CAP slot in bits 8-11 and the PAN
    coordinator flag in bit 14.
    """
    config = config or SuperframeConfig()
    coordinator.check()
    pending = [a for a in coordinator.beacon_list if a in coordinator.pending_frames]
    rest = [a for a in coordinator.beacon_list if a not in coordinator.pending_frames]
    spec = (config.cap_slots << 8) | (1 << 14)
    frame = beacon_frame(
        coordinator.address, pending + rest, len(pending), coordinator.sequence, spec,
    )
    coordinator.sequence = (coordinator.sequence + 1) & 0xFF
    return frame


# -- contention --------------------------------------------------------------

def csma_contend(
    contenders: Iterable[int], rng: RandomStream, config: BackoffConfig = BackoffConfig()
) -> SlotOutcome:
    """Resolve one slot: each contender draws a backoff in ``[0, W)``.

    Draws happen in ascending address order. A unique minimum wins the slot;
    a shared minimum is a collision.
    """
    nodes = sorted(set(contenders))
    if not nodes:
        return IDLE
    w = config.window
    best = w
    winners: list[int] = []
    for node in nodes:
        draw = rng.uniform_int(w)
        if draw < best:
            best, winners = draw, [node]
        elif draw == best:
            winners.append(node)
    if len(winners) == 1:
        return SlotOutcome.success(winners[0])
    return SlotOutcome.collision(len(winners))


def allocate_slots(
    requesting: Sequence[int],
    rng: RandomStream,
    config: SuperframeConfig | None = None,
    backoff: BackoffConfig = BackoffConfig(),
) -> tuple[list[SlotOutcome], list[int]]:
    """Run contention over the CAP slots; return outcomes and carried-over nodes.

    A winner leaves the pool; after a collision every requester, colliders
    included, competes again in the next slot.
    """
    config = config or SuperframeConfig()
    pool = sorted(set(requesting))
    outcomes = []
    for _ in range(config.cap_slots):
        outcome = csma_contend(pool, rng, backoff)
        if outcome.kind is SlotKind.SUCCESS:
            pool.remove(outcome.winner)
        outcomes.append(outcome)
    return outcomes, pool


def assign_slots(
    requesting: Sequence[int], config: SuperframeConfig | None = None
) -> tuple[list[SlotOutcome], list[int]]:
    """Contention-free allocation: the i-th requester owns CAP slot i."""
    config = config or SuperframeConfig()
    owners = list(requesting)[: config.cap_slots]
    outcomes = [SlotOutcome.success(a) for a in owners]
    outcomes += [IDLE] * (config.cap_slots - len(owners))
    return outcomes, list(requesting)[config.cap_slots:]


def rr_slot_usable(slot_index: int, owners: Sequence[int], active) -> bool:
    """Round-robin slot ``slot_index`` (1-based) is usable iff its owner has data.

    ``owners`` is the cyclic ownership schedule and ``active`` maps a node to
    whether it has data this superframe (a callable or a container).
    """
    if not 1 <= slot_index <= CAP_SLOTS:
        raise ValueError("slot index must lie in 1..15")
    owner = owners[(slot_index - 1) % len(owners)]
    return bool(active(owner)) if callable(active) else owner in active


# -- superframe ---------------------------------------------------------------

def run_superframe(
    coordinator: CoordinatorState,
    active_sensors: Sequence[SensorState],
    config: SuperframeConfig | None = None,
    params: PulseEnergyParams = DEFAULT_PARAMS,
    rng: RandomStream | None = None,
    *,
    index: int = 0,
    backoff: BackoffConfig = BackoffConfig(),
    allocation: Allocation = Allocation.CSMA,
    costs: FrameCosts | None = None,
) -> SuperframeResult:
    """Run one beacon interval's active period.

    Skipped (nothing spent) when the coordinator cannot cover the beacon plus
    ``m`` data exchanges, ``m = min(len(active_sensors), 15)``. Otherwise the
    beacon is sent, slots are allocated, and each successful slot debits the
    coordinator ``data rx + ack tx`` and the sensor ``beacon rx + data tx +
    ack rx``. Sensors that cannot afford their share sit the round out.
    """
    config = config or SuperframeConfig()
    costs = costs or FrameCosts.at(config.packet_scale, params)
    m = min(len(active_sensors), config.cap_slots)
    budget = costs.budget(m)
    store = coordinator.energy

    if store.level_fj < budget:
        return SuperframeResult(
            index, "skipped", (), 0, {}, budget, m, store.level_fj,
            tuple(s.address for s in active_sensors),
        )

    for sensor in active_sensors:
        if sensor.address not in coordinator.member_table:
            raise NotMember(f"{sensor.address:#06x} is active but not a member")

    beacon = build_beacon(coordinator, config)
    store.consume(costs.beacon_tx)
    spent = costs.beacon_tx

    by_address = {s.address: s for s in active_sensors}
    requesting = [s.address for s in active_sensors if s.energy.can_afford(costs.per_slot_sensor)]
    for address in requesting:
        by_address[address].move(Phase.AWAITING_SLOT)

    if allocation is Allocation.ASSIGNED:
        outcomes, carried = assign_slots(requesting, config)
    else:
        if rng is None:
            raise ValueError("CSMA allocation needs a random stream")
        outcomes, carried = allocate_slots(requesting, rng, config, backoff)

    sensor_spent: dict[int, int] = {}
    for outcome in outcomes:
        if outcome.kind is not SlotKind.SUCCESS:
            continue
        sensor = by_address[outcome.winner]
        sensor.move(Phase.TRANSMITTING)
        frame = sensor.send_data(coordinator.address)
        sensor.energy.consume(costs.per_slot_sensor)
        store.consume(costs.per_slot_coordinator)
        spent += costs.per_slot_coordinator
        sensor_spent[sensor.address] = costs.per_slot_sensor
        coordinator.received.append((sensor.address, frame.payload))
        sensor.pending_data = None
        sensor.move(Phase.ASSOCIATED)
    for address in carried:
        by_address[address].move(Phase.ASSOCIATED)

    return SuperframeResult(
        index, "completed", tuple(outcomes), spent, sensor_spent, budget, m,
        store.level_fj, tuple(carried), beacon,
    )


# -- membership and indirect transfer ------------------------------------------

def associate(
    sensor: SensorState,
    coordinator: CoordinatorState,
    params: PulseEnergyParams = DEFAULT_PARAMS,
) -> MacFrame:
    """Send an association request; the coordinator lists the sensor in its
    next beacon, and :func:`observe_beacon` completes the join.

    Raises :class:`TableFull` when 15 addresses are already advertised and
    :class:`InsufficientEnergy` when the sensor cannot pay for the command.
    Both leave every state untouched.
    """
    if sensor.phase is not Phase.UNASSOCIATED:
        raise LifecycleError(f"sensor {sensor.address} is {sensor.phase.name}")
    if len(coordinator.beacon_list) >= ADDRESS_LIST_SLOTS:
        raise TableFull("association deferred: beacon address list is full")
    if len(coordinator.member_table) >= MAX_MEMBERS:
        raise TableFull("member table is full")
    costs = FrameCosts.at(1.0, params)
    if not sensor.energy.can_afford(costs.cmd_tx):
        raise InsufficientEnergy(costs.cmd_tx, sensor.energy.level_fj)
    if not coordinator.energy.can_afford(costs.cmd_rx):
        raise InsufficientEnergy(costs.cmd_rx, coordinator.energy.level_fj)

    frame = command_frame(
        CommandId.ASSOCIATION_REQUEST, sensor.address, coordinator.address,
        sequence=sensor.next_sequence(),
    )
    sensor.energy.consume(costs.cmd_tx)
    coordinator.energy.consume(costs.cmd_rx)
    coordinator.member_table.add(sensor.address)
    coordinator.advertise(sensor.address)
    sensor.move(Phase.AWAITING_ASSOCIATION)
    return frame


def observe_beacon(
    sensor: SensorState,
    beacon: MacFrame,
    params: PulseEnergyParams = DEFAULT_PARAMS,
) -> tuple[bool, bool]:
    """Receive a beacon. Returns ``(listed, data_pending)`` for this sensor.

    A sensor awaiting association becomes associated once it sees its
    address in the list.
    """
    if beacon.kind is not FrameKind.BEACON:
        raise ValueError("not a beacon")
    cost = FrameCosts.at(1.0, params).beacon_rx
    sensor.energy.consume(cost)
    payload = BeaconPayload.from_bytes(beacon.payload)
    listed = sensor.address in payload.addresses
    pending = listed and payload.addresses.index(sensor.address) < payload.pending_count
    if listed and sensor.phase is Phase.AWAITING_ASSOCIATION:
        sensor.move(Phase.ASSOCIATED)
    return listed, pending


def settle_beacon_list(coordinator: CoordinatorState, sensors: Iterable[SensorState]) -> None:
    """Drop advertised entries that are associated and have nothing pending."""
    done = {s.address for s in sensors if s.is_member}
    coordinator.beacon_list = [
        a for a in coordinator.beacon_list
        if a not in done or a in coordinator.pending_frames
    ]


def transfer_indirect(
    coordinator: CoordinatorState,
    sensor: SensorState,
    rng: RandomStream,
    params: PulseEnergyParams = DEFAULT_PARAMS,
    *,
    other_contenders: Iterable[int] = (),
    backoff: BackoffConfig = BackoffConfig(),
) -> bytes:
    """Deliver the coordinator's queued payload for ``sensor``.

    The sensor contends with a DataRequest command; on winning, the
    coordinator sends the data frame and the sensor acknowledges. Raises
    :class:`ContentionLost` (payload stays queued) if the request loses.
    """
    if sensor.address not in coordinator.pending_frames:
        raise ValueError(f"nothing queued for {sensor.address:#06x}")
    if not sensor.is_member:
        raise LifecycleError(f"sensor {sensor.address} is not associated")
    costs = FrameCosts.at(1.0, params)
    sensor_cost = costs.cmd_tx + costs.data_rx + costs.ack_tx
    coord_cost = costs.cmd_rx + costs.data_tx + costs.ack_rx
    if not sensor.energy.can_afford(sensor_cost):
        raise InsufficientEnergy(sensor_cost, sensor.energy.level_fj)
    if not coordinator.energy.can_afford(coord_cost):
        raise InsufficientEnergy(coord_cost, coordinator.energy.level_fj)

    outcome = csma_contend({sensor.address, *other_contenders}, rng, backoff)
    if outcome.winner != sensor.address:
        raise ContentionLost(f"DataRequest from {sensor.address:#06x}: {outcome.kind.value}")

    payload = coordinator.pending_frames.pop(sensor.address)
    sensor.energy.consume(sensor_cost)
    coordinator.energy.consume(coord_cost)
    if sensor.address in coordinator.beacon_list:
        coordinator.beacon_list.remove(sensor.address)
    sensor.received.append(payload)
    return payload


def disassociate(
    sensor: SensorState,
    coordinator: CoordinatorState,
    params: PulseEnergyParams = DEFAULT_PARAMS,
) -> MacFrame:
    if sensor.address not in coordinator.member_table:
        raise NotMember(f"{sensor.address:#06x} is not a member")
    if sensor.phase is not Phase.ASSOCIATED:
        raise LifecycleError(f"sensor {sensor.address} is {sensor.phase.name}")
    costs = FrameCosts.at(1.0, params)
    if not sensor.energy.can_afford(costs.cmd_tx):
        raise InsufficientEnergy(costs.cmd_tx, sensor.energy.level_fj)
    frame = command_frame(
        CommandId.DISASSOCIATION_NOTIFY, sensor.address, coordinator.address,
        sequence=sensor.next_sequence(),
    )
    sensor.energy.consume(costs.cmd_tx)
    if coordinator.energy.can_afford(costs.cmd_rx):
        coordinator.energy.consume(costs.cmd_rx)
    coordinator.member_table.discard(sensor.address)
    coordinator.pending_frames.pop(sensor.address, None)
    if sensor.address in coordinator.beacon_list:
        coordinator.beacon_list.remove(sensor.address)
    sensor.move(Phase.DISASSOCIATED)
    return frame


def rejoin(sensor: SensorState) -> None:
    sensor.move(Phase.UNASSOCIATED)
