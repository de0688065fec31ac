import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nanomac.channel import SlotKind
from nanomac.energy import EnergyStore, InsufficientEnergy
from nanomac.frames import BeaconPayload, FrameKind, decode_frame, encode_frame
from nanomac.mac import (
    Allocation,
    BackoffConfig,
    ContentionLost,
    CoordinatorState,
    FrameCosts,
    LifecycleError,
    NotMember,
    Phase,
    SensorState,
    SuperframeConfig,
    TableFull,
    allocate_slots,
    assign_slots,
    associate,
    build_beacon,
    csma_contend,
    disassociate,
    observe_beacon,
    rejoin,
    rr_slot_usable,
    run_superframe,
    settle_beacon_list,
    superframe_budget,
    transfer_indirect,
)
from nanomac.sim import RandomStream


def members(n, coordinator=None, phase=Phase.ASSOCIATED):
    coordinator = coordinator or CoordinatorState()
    sensors = [SensorState(a, phase=phase) for a in range(1, n + 1)]
    coordinator.member_table.update(s.address for s in sensors)
    return coordinator, sensors


def joined(coordinator, address):
    sensor = SensorState(address)
    associate(sensor, coordinator)
    observe_beacon(sensor, build_beacon(coordinator))
    return sensor


def test_budget_values():
    assert FrameCosts.at().budget(0) == 192_000
    assert FrameCosts.at().budget(15) == 192_000 + 15 * 45_520
    assert FrameCosts.at().budget(20) == FrameCosts.at().budget(15)
    assert superframe_budget(12, 0.5) == pytest.approx(0.5 * (192 + 12 * 45.52))


def test_config_validation():
    with pytest.raises(ValueError):
        SuperframeConfig(cap_slots=14)
    with pytest.raises(ValueError):
        SuperframeConfig(packet_scale=0.3)
    with pytest.raises(ValueError):
        BackoffConfig(0)
    assert BackoffConfig().window == 8


def test_superframe_skips_without_spending():
    coordinator, sensors = members(15)
    coordinator.energy = EnergyStore(1_600_000, 874_799)
    before = [s.energy.level_fj for s in sensors]
    result = run_superframe(coordinator, sensors, allocation=Allocation.ASSIGNED)
    assert result.status == "skipped"
    assert result.coordinator_spent_fj == 0
    assert coordinator.energy.level_fj == 874_799
    assert [s.energy.level_fj for s in sensors] == before
    assert coordinator.sequence == 0


def test_superframe_completes_at_exact_budget():
    coordinator, sensors = members(15)
    coordinator.energy = EnergyStore(1_600_000, 874_800)
    result = run_superframe(coordinator, sensors, allocation=Allocation.ASSIGNED)
    assert result.completed
    assert result.coordinator_spent_fj == 874_800
    assert coordinator.energy.level_fj == 0
    assert result.count(SlotKind.SUCCESS) == 15
    for s in sensors:
        # beacon rx + data tx + ack rx
        assert s.energy.level_fj == 800_000 - (3_840 + 76_000 + 880)
        assert s.phase is Phase.ASSOCIATED
    assert [a for a, _ in coordinator.received] == list(range(1, 16))


def test_superframe_beacon_lists_members():
    coordinator, sensors = members(3)
    coordinator.beacon_list = [1, 2, 3]
    result = run_superframe(coordinator, sensors, allocation=Allocation.ASSIGNED)
    beacon = decode_frame(encode_frame(result.beacon))
    assert BeaconPayload.from_bytes(beacon.payload).addresses == (1, 2, 3)


def test_superframe_rejects_non_members():
    coordinator = CoordinatorState()
    with pytest.raises(NotMember):
        run_superframe(coordinator, [SensorState(4, phase=Phase.ASSOCIATED)], allocation=Allocation.ASSIGNED)


def test_csma_superframe_spends_what_it_uses():
    coordinator, sensors = members(6)
    result = run_superframe(coordinator, sensors, rng=RandomStream(1))
    wins = result.count(SlotKind.SUCCESS)
    assert result.coordinator_spent_fj == 192_000 + wins * 45_520
    assert result.coordinator_spent_fj <= result.budget_fj
    assert wins + len(result.carried_over) == 6


def test_csma_requires_rng():
    coordinator, sensors = members(2)
    with pytest.raises(ValueError):
        run_superframe(coordinator, sensors)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**64 - 1), st.integers(1, 15), st.integers(0, 1_600_000))
def test_superframe_energy_invariants(seed, m, level):
    coordinator, sensors = members(m)
    coordinator.energy = EnergyStore(1_600_000, level)
    result = run_superframe(coordinator, sensors, rng=RandomStream(seed))
    assert 0 <= coordinator.energy.level_fj <= 1_600_000
    if result.completed:
        assert level >= result.budget_fj
        assert coordinator.energy.level_fj == level - result.coordinator_spent_fj
        assert len(result.slot_outcomes) == 15
    else:
        assert coordinator.energy.level_fj == level


def test_csma_contend_frozen():
    outcomes, carried = allocate_slots([1, 2, 3], RandomStream(0))
    assert [o.winner for o in outcomes[:3]] == [2, 3, 1]
    assert carried == []
    assert all(o.kind is SlotKind.IDLE for o in outcomes[3:])
    first, _ = allocate_slots([1, 2], RandomStream(21))
    assert first[0].kind is SlotKind.COLLISION


def test_csma_single_and_empty():
    assert csma_contend([], RandomStream(0)).kind is SlotKind.IDLE
    assert csma_contend([9], RandomStream(0)).winner == 9


@given(st.integers(0, 2**64 - 1), st.lists(st.integers(0, 0xFFFE), max_size=20))
def test_allocate_slots_conserves_requesters(seed, requesting):
    outcomes, carried = allocate_slots(requesting, RandomStream(seed))
    winners = [o.winner for o in outcomes if o.kind is SlotKind.SUCCESS]
    assert len(outcomes) == 15
    assert len(set(winners)) == len(winners)
    assert sorted(winners + carried) == sorted(set(requesting))


def test_assign_slots():
    outcomes, carried = assign_slots(list(range(20)))
    assert [o.winner for o in outcomes] == list(range(15))
    assert carried == list(range(15, 20))


def test_rr_slot_usable():
    owners = [10, 11, 12]
    assert rr_slot_usable(1, owners, {10})
    assert not rr_slot_usable(2, owners, {10})
    assert rr_slot_usable(4, owners, lambda n: n == 10)
    with pytest.raises(ValueError):
        rr_slot_usable(16, owners, set())


def test_build_beacon_orders_pending_first():
    coordinator, _ = members(4)
    coordinator.beacon_list = [1, 2, 3]
    coordinator.queue_downlink(3, b"abcd")
    beacon = build_beacon(coordinator)
    payload = BeaconPayload.from_bytes(beacon.payload)
    assert payload.addresses == (3, 1, 2)
    assert payload.pending_count == 1
    assert payload.superframe_spec == (15 << 8) | (1 << 14)
    assert coordinator.sequence == 1


def test_association_lifecycle():
    coordinator = CoordinatorState()
    sensor = SensorState(5)
    frame = associate(sensor, coordinator)
    assert frame.kind is FrameKind.MAC_COMMAND
    assert sensor.phase is Phase.AWAITING_ASSOCIATION
    assert sensor.energy.level_fj == 800_000 - 80_000
    assert coordinator.energy.level_fj == 1_600_000 - 1_600
    with pytest.raises(LifecycleError):
        sensor.send_data(coordinator.address)
    listed, pending = observe_beacon(sensor, build_beacon(coordinator))
    assert (listed, pending) == (True, False)
    assert sensor.phase is Phase.ASSOCIATED
    assert sensor.send_data(0).kind is FrameKind.DATA
    settle_beacon_list(coordinator, [sensor])
    assert coordinator.beacon_list == []

    disassociate(sensor, coordinator)
    assert sensor.phase is Phase.DISASSOCIATED
    assert 5 not in coordinator.member_table
    with pytest.raises(NotMember):
        disassociate(sensor, coordinator)
    rejoin(sensor)
    associate(sensor, coordinator)
    assert 5 in coordinator.member_table


def test_association_table_full_is_side_effect_free():
    coordinator = CoordinatorState()
    for a in range(1, 16):
        associate(SensorState(a), coordinator)
    late = SensorState(16)
    before = (late.energy.level_fj, coordinator.energy.level_fj)
    with pytest.raises(TableFull):
        associate(late, coordinator)
    assert (late.energy.level_fj, coordinator.energy.level_fj) == before
    assert late.phase is Phase.UNASSOCIATED
    assert 16 not in coordinator.member_table


def test_association_needs_energy():
    coordinator = CoordinatorState()
    poor = SensorState(2, EnergyStore(800_000, 79_999))
    with pytest.raises(InsufficientEnergy):
        associate(poor, coordinator)
    assert poor.energy.level_fj == 79_999
    assert poor.phase is Phase.UNASSOCIATED


def test_illegal_transitions():
    sensor = SensorState(1)
    with pytest.raises(LifecycleError):
        sensor.move(Phase.TRANSMITTING)
    coordinator, (member,) = members(1)
    member.phase = Phase.AWAITING_SLOT
    with pytest.raises(LifecycleError):
        disassociate(member, coordinator)


def test_indirect_transfer():
    coordinator = CoordinatorState()
    sensor = joined(coordinator, 7)
    coordinator.queue_downlink(7, b"\x01\x02\x03\x04")
    listed, pending = observe_beacon(sensor, build_beacon(coordinator))
    assert listed and pending
    c0, s0 = coordinator.energy.level_fj, sensor.energy.level_fj
    payload = transfer_indirect(coordinator, sensor, RandomStream(0))
    assert payload == b"\x01\x02\x03\x04"
    assert sensor.received == [payload]
    assert c0 - coordinator.energy.level_fj == 78_480
    assert s0 - sensor.energy.level_fj == 80_000 + 1_520 + 44_000
    assert 7 not in coordinator.pending_frames
    assert 7 not in coordinator.beacon_list


def test_indirect_transfer_lost_contention_keeps_payload():
    coordinator = CoordinatorState()
    sensor = joined(coordinator, 1)
    coordinator.queue_downlink(1, b"wxyz")
    rng = RandomStream(21)  # first two draws tie
    c0, s0 = coordinator.energy.level_fj, sensor.energy.level_fj
    with pytest.raises(ContentionLost):
        transfer_indirect(coordinator, sensor, rng, other_contenders=[2])
    assert coordinator.pending_frames[1] == b"wxyz"
    assert (coordinator.energy.level_fj, sensor.energy.level_fj) == (c0, s0)


def test_queue_downlink_requires_member():
    with pytest.raises(NotMember):
        CoordinatorState().queue_downlink(3, b"abcd")


@given(st.lists(st.sampled_from(["associate", "beacon", "leave", "rejoin"]), max_size=30))
def test_beacon_list_invariant_under_random_operations(ops):
    coordinator = CoordinatorState()
    sensors = [SensorState(a) for a in range(1, 21)]
    for op, sensor in zip(ops, itertools.cycle(sensors)):
        try:
            if op == "associate":
                associate(sensor, coordinator)
            elif op == "beacon":
                beacon = build_beacon(coordinator)
                for s in sensors:
                    if s.energy.can_afford(3_840):
                        observe_beacon(s, beacon)
                settle_beacon_list(coordinator, sensors)
            elif op == "leave":
                disassociate(sensor, coordinator)
            else:
                rejoin(sensor)
        except (TableFull, NotMember, LifecycleError, InsufficientEnergy):
            pass
        assert len(coordinator.beacon_list) <= 15
        assert set(coordinator.beacon_list) <= coordinator.member_table
        assert all(0 <= s.energy.level_fj <= 800_000 for s in sensors)
