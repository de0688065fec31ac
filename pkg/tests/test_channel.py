import itertools
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from nanomac.channel import (
    PropagationModel,
    PulseTrain,
    SlotKind,
    SlotOutcome,
    detect_collisions,
    figure2_scenario,
    propagation_delay,
    pulse_arrival_times,
    slot_transmit,
)


def brute_force_overlaps(trains):
    pulses = [
        (i, t, train.pulse_width)
        for i, (train, delay) in enumerate(trains)
        for t in pulse_arrival_times(train, delay)
    ]
    count = 0
    for (i, a, wa), (j, b, wb) in itertools.combinations(pulses, 2):
        if i != j and max(a, b) < min(a + wa, b + wb):
            count += 1
    return count


def random_trains(rng, n):
    out = []
    for _ in range(n):
        bits = [rng.randint(0, 1) for _ in range(rng.randint(1, 12))]
        width = rng.choice([100, 100, 250])
        train = PulseTrain(tuple(bits), start=rng.randrange(0, 3000), symbol_spacing=rng.choice([400, 1000, 100_000]), pulse_width=width)
        out.append((train, rng.randrange(0, 500)))
    return out


def test_propagation_delay():
    assert propagation_delay(PropagationModel(10.0)) == 33_333
    assert propagation_delay(PropagationModel(0.0)) == 0
    assert propagation_delay(PropagationModel(5.0)) == 16_667


def test_propagation_range():
    with pytest.raises(ValueError):
        PropagationModel(11.0)


def test_arrival_times():
    assert pulse_arrival_times(PulseTrain.from_string("101001"), 0) == [0, 200_000, 500_000]
    assert pulse_arrival_times(PulseTrain.from_string("0000"), 0) == []
    assert pulse_arrival_times(PulseTrain.from_string("1", start=7), 3) == [10]


def test_train_invariants():
    with pytest.raises(ValueError):
        PulseTrain((1, 0), symbol_spacing=100, pulse_width=100)
    assert PulseTrain((1,)).beta == 1000


def test_figure2_witness_has_no_overlap():
    scenario = figure2_scenario()
    assert [t.bits for t, _ in scenario] == [(1, 0, 1, 0, 0, 1), (1, 1, 0, 0, 0, 1), (1, 0, 0, 1, 0, 1)]
    assert detect_collisions(scenario) == 0
    assert brute_force_overlaps(scenario) == 0


def test_identical_trains_collide_per_pulse():
    t = PulseTrain.from_string("101")
    assert detect_collisions([(t, 0), (t, 0)]) == 2


def test_touching_pulses_do_not_collide():
    a = PulseTrain.from_string("1", start=0)
    b = PulseTrain.from_string("1", start=100)
    c = PulseTrain.from_string("1", start=99)
    assert detect_collisions([a, b]) == 0
    assert detect_collisions([a, c]) == 1


def test_sweep_matches_brute_force():
    rng = random.Random(7)
    for _ in range(200):
        trains = random_trains(rng, rng.randint(2, 4))
        assert detect_collisions(trains) == brute_force_overlaps(trains)


@given(st.randoms(use_true_random=False), st.integers(0, 10**6))
def test_permutation_and_translation_invariance(rnd, shift):
    trains = random_trains(rnd, 3)
    base = detect_collisions(trains)
    shuffled = list(trains)
    rnd.shuffle(shuffled)
    assert detect_collisions(shuffled) == base
    moved = [(PulseTrain(t.bits, t.start + shift, t.symbol_spacing, t.pulse_width), d) for t, d in trains]
    assert detect_collisions(moved) == base


@given(st.lists(st.integers(0, 1), min_size=1, max_size=30))
def test_single_train_never_collides(bits):
    assert detect_collisions([PulseTrain(tuple(bits))]) == 0


def test_slot_transmit():
    assert slot_transmit([]) == SlotOutcome.idle()
    assert slot_transmit([(5, "data")]) == SlotOutcome.success(5)
    out = slot_transmit([(3, "data"), (9, "data")])
    assert out.kind is SlotKind.COLLISION and out.contenders == 2


def test_slot_outcome_invariants():
    with pytest.raises(ValueError):
        SlotOutcome(SlotKind.COLLISION, contenders=1)
    with pytest.raises(ValueError):
        SlotOutcome(SlotKind.SUCCESS)
