"""End-to-end acceptance checks. Each test prints one PASS/FAIL line."""

import csv
import filecmp
import random
import time
from itertools import combinations

import numpy as np
import pytest

from nanomac.channel import detect_collisions, figure2_scenario
from nanomac.cli import main
from nanomac.energy import (
    EnergyStore,
    HarvestConfig,
    HarvestMode,
    harvested_energy,
    rx_energy_fj,
    time_to_fraction,
    tx_energy_fj,
)
from nanomac.experiments import (
    ContentionSpec,
    contention_compare,
    crossovers,
    rr_regression,
    simulate_point,
    unique_min_probability,
)
from nanomac.frames import (
    CommandId,
    ack_frame,
    beacon_frame,
    command_frame,
    data_frame,
    encode_frame,
    octets_to_bits,
)
from nanomac.mac import BackoffConfig, csma_contend
from nanomac.sim import RandomStream, minutes

from test_channel import brute_force_overlaps, random_trains

SEED = 20240917


@pytest.fixture
def verdict(capsys):
    def report(number, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {number:>2}] {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail

    return report


def read_rows(path):
    with open(path, newline="") as f:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(f)]


@pytest.fixture(scope="module")
def outdir(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


@pytest.fixture(scope="module")
def oracle_run(outdir):
    start = time.perf_counter()
    assert main(["oracle-check", "--seed", str(SEED), "--output-dir", str(outdir)]) == 0
    return time.perf_counter() - start, read_rows(outdir / f"oracle-check-{SEED}.csv")


def test_criterion_01_frame_lengths(verdict):
    lengths = {
        "beacon": len(octets_to_bits(encode_frame(beacon_frame(0, [1, 2, 3])))),
        "data": len(octets_to_bits(encode_frame(data_frame(1, 0, bytes(4))))),
        "ack": len(octets_to_bits(encode_frame(ack_frame(0)))),
        "command": len(octets_to_bits(encode_frame(command_frame(CommandId.ASSOCIATION_REQUEST, 1, 0)))),
    }
    expected = {"beacon": 384, "data": 152, "ack": 88, "command": 160}
    verdict(1, lengths == expected, f"encoded bit lengths {lengths}")


def test_criterion_02_energy_table(verdict):
    bits = [384, 152, 88, 160]
    tx = [tx_energy_fj(k) for k in bits]
    rx = [rx_energy_fj(k) for k in bits]
    ok = tx == [192_000, 76_000, 44_000, 80_000] and rx == [3_840, 1_520, 880, 1_600]
    verdict(2, ok, f"tx fJ {tx}, rx fJ {rx}")


def test_criterion_03_harvest_calibration(verdict):
    slow = HarvestConfig(HarvestMode.SATURATING_CURVE, cycle_frequency=1.0)
    fast = HarvestConfig(HarvestMode.SATURATING_CURVE, cycle_frequency=50.0)
    at_2419 = harvested_energy(2419, 0.0, slow, 800.0)
    t50 = time_to_fraction(0.95, fast)
    store = EnergyStore(800_000, 0)
    store.charge(minutes(10))
    ok = abs(at_2419 - 760) / 760 <= 1e-6 and 46 <= t50 <= 50 and store.level_fj == 299_430
    verdict(3, ok, f"1 Hz: {at_2419:.9f} pJ at 2419 s; 50 Hz: 760 pJ at {t50:.4f} s; "
                   f"linear 10 min: {store.level} pJ")


def test_criterion_04_headline(verdict):
    start = time.perf_counter()
    point = simulate_point(12, 0.5, 12, 1000, seed=SEED)
    elapsed = time.perf_counter() - start
    ok = 0.96 <= point.success_rate <= 0.99 and elapsed < 5
    verdict(4, ok, f"success rate {point.success_rate:.4f} over {point.total} superframes in {elapsed:.2f} s")


def test_criterion_05_oracle_agreement(verdict, oracle_run):
    elapsed, rows = oracle_run
    worst = max(r["abs_deviation"] for r in rows)
    ok = len(rows) == 270 and worst <= 0.02 and elapsed < 60
    verdict(5, ok, f"max |sim - analytic| = {worst:.5f} over {len(rows)} points in {elapsed:.1f} s")


def test_criterion_06_trends(verdict, outdir):
    assert main(["packet-size-sweep", "--seed", str(SEED), "--output-dir", str(outdir)]) == 0
    assert main(["duration-sweep", "--seed", str(SEED), "--output-dir", str(outdir)]) == 0
    grid = read_rows(outdir / f"packet-size-sweep-{SEED}.csv")
    by_key = {(r["duration_min"], r["scale"], r["m"]): r["success_rate"] for r in grid}
    durations = sorted({k[0] for k in by_key})
    scales = sorted({k[1] for k in by_key})
    slots = sorted({k[2] for k in by_key})
    broken = []
    for d in durations:
        for s in scales:
            for m0, m1 in zip(slots, slots[1:]):
                if by_key[d, s, m1] > by_key[d, s, m0]:
                    broken.append(("m", d, s, m0))
    for s in scales:
        for m in slots:
            for d0, d1 in zip(durations, durations[1:]):
                if by_key[d1, s, m] < by_key[d0, s, m]:
                    broken.append(("duration", d0, s, m))
    for d in durations:
        for m in slots:
            for s0, s1 in zip(scales, scales[1:]):
                if by_key[d, s1, m] > by_key[d, s0, m]:
                    broken.append(("scale", d, s0, m))
    dur_rows = read_rows(outdir / f"duration-sweep-{SEED}.csv")
    for d in durations:
        series = [r["success_rate"] for r in dur_rows if r["duration_min"] == d]
        broken += [("duration-sweep m", d) for a, b in zip(series, series[1:]) if b > a]
    verdict(6, not broken, f"{len(grid)} grid points, {len(broken)} ordering violations {broken[:3]}")


def test_criterion_07_contention(verdict, outdir):
    start = time.perf_counter()
    header, rows = contention_compare(ContentionSpec(seed=SEED))
    elapsed = time.perf_counter() - start
    slope, intercept = rr_regression(rows)
    csma = [r[1] for r in rows]
    worst_rise = max(b - a for a, b in combinations(csma, 2))
    cross = crossovers(rows)
    ok = (
        abs(slope - 1) <= 0.05
        and abs(intercept) <= 0.02
        and worst_rise <= 0.02
        and len(cross) == 1
        and 0.10 <= cross[0] <= 0.30
        and elapsed < 30
    )
    verdict(7, ok, f"RR slope {slope:.4f} intercept {intercept:+.4f}; CSMA worst rise {worst_rise:+.4f}; "
                   f"crossovers {[round(c, 4) for c in cross]}; {elapsed:.1f} s")


def test_criterion_08_contention_micro_oracle(verdict):
    trials = 100_000
    backoff = BackoffConfig()
    report = []
    ok = True
    for n in range(1, 7):
        rng = RandomStream(SEED, n)
        nodes = list(range(n))
        wins = sum(csma_contend(nodes, rng, backoff).usable for _ in range(trials))
        p = unique_min_probability(n, backoff.window)
        se = max(np.sqrt(p * (1 - p) / trials), 1e-12)
        z = abs(wins / trials - p) / se if p < 1 else (0.0 if wins == trials else np.inf)
        ok &= z <= 3
        report.append(f"n={n}: {wins / trials:.4f} vs {p:.4f} ({z:.2f} se)")
    verdict(8, ok, "; ".join(report))


def test_criterion_09_tsook(verdict):
    witness = detect_collisions(figure2_scenario())
    rng = random.Random(SEED)
    mismatches = 0
    for _ in range(200):
        trains = random_trains(rng, rng.randint(2, 5))
        mismatches += detect_collisions(trains) != brute_force_overlaps(trains)
    verdict(9, witness == 0 and mismatches == 0,
            f"witness overlaps {witness}; sweep vs brute force mismatches {mismatches}/200")


DETERMINISM_RUNS = {
    "harvest-curve": ["--horizon", "600", "--step", "5"],
    "duration-sweep": ["--seed", "11", "--slots", "1,8,15", "--superframes", "200", "--ledger", "--trace"],
    "packet-size-sweep": ["--seed", "11", "--slots", "1,15", "--superframes", "200", "--allocation", "csma"],
    "oracle-check": ["--seed", "11", "--slots", "5", "--superframes", "200"],
    "contention-compare": ["--seed", "11", "--trials", "500"],
    "tsook-trace": ["--seed", "11"],
    "frame": ["--kind", "beacon"],
}


def test_criterion_10_determinism(verdict, tmp_path, capsys):
    differing = []
    for sub, args in DETERMINISM_RUNS.items():
        outputs = []
        for run in ("a", "b"):
            out = tmp_path / run / sub
            out.mkdir(parents=True)
            assert main([sub, *args, "--output-dir", str(out)]) == 0
            (out / "stdout.txt").write_text(capsys.readouterr().out.replace(str(out), "<dir>"))
            outputs.append(out)
        names = sorted(p.name for p in outputs[0].iterdir())
        match, mismatch, errors = filecmp.cmpfiles(outputs[0], outputs[1], names, shallow=False)
        if mismatch or errors or (len(names) < 2 and sub != "frame"):
            differing.append(sub)
    verdict(10, not differing, f"{len(DETERMINISM_RUNS)} subcommands run twice; differing outputs: {differing or 'none'}")
