"""Scenario drivers for the harvest curve, the superframe sweeps and the
CSMA/CA versus round-robin comparison, plus their closed-form checks.

Every driver returns ``(header, rows)``; :func:`write_csv` renders them.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .energy import (
    DEFAULT_HARVEST_RATE,
    DEFAULT_PARAMS,
    SENSOR_CAPACITY_PJ,
    EnergyStore,
    HarvestConfig,
    HarvestMode,
    PulseEnergyParams,
    harvested_energy,
)
from .mac import (
    CAP_SLOTS,
    Allocation,
    BackoffConfig,
    CoordinatorState,
    FrameCosts,
    Phase,
    SensorState,
    SuperframeConfig,
    SuperframeResult,
    run_superframe,
)
from .sim import Engine, EventKind, RandomStream, derive_seed, minutes

# Coordinator per-superframe cost at full packet size, from the frame table:
# beacon tx 192 pJ, and per slot data rx 1.52 pJ + ack tx 44 pJ.
BEACON_TX_PJ = 192.0
PER_SLOT_PJ = 45.52


@dataclass(frozen=True)
class SweepSpec:
    durations: tuple[float, ...] = (8.0, 10.0, 12.0)
    concurrent_slots: tuple[int, ...] = tuple(range(1, 16))
    packet_scales: tuple[float, ...] = (1.0, 0.9, 0.8, 0.7, 0.6, 0.5)
    superframes_per_point: int = 1000
    seed: int = 0
    allocation: Allocation = Allocation.ASSIGNED
    harvest_rate: float = DEFAULT_HARVEST_RATE

    def __post_init__(self):
        for name in ("durations", "concurrent_slots", "packet_scales"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if not self.durations or any(d <= 0 for d in self.durations):
            raise ValueError("durations must be positive")
        if not self.concurrent_slots or any(not 1 <= m <= CAP_SLOTS for m in self.concurrent_slots):
            raise ValueError("concurrent_slots must lie in 1..15")
        if not self.packet_scales or any(not 0.5 <= s <= 1.0 for s in self.packet_scales):
            raise ValueError("packet_scales must lie in [0.5, 1.0]")
        if self.superframes_per_point < 1:
            raise ValueError("superframes_per_point must be at least 1")

    def grid(self) -> list[tuple[float, float, int]]:
        return [(d, s, m) for d in self.durations for s in self.packet_scales for m in self.concurrent_slots]


def _default_rates() -> tuple[float, ...]:
    return tuple(round(0.01 * i, 2) for i in range(1, 51))


@dataclass(frozen=True)
class ContentionSpec:
    population: int = 100
    request_rates: tuple[float, ...] = field(default_factory=_default_rates)
    trials_per_rate: int = 10_000
    backoff: BackoffConfig = BackoffConfig()
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "request_rates", tuple(self.request_rates))
        if self.population < 1:
            raise ValueError("population must be positive")
        if self.trials_per_rate < 1:
            raise ValueError("trials_per_rate must be positive")
        for p in self.request_rates:
            if not 0.0 < p <= 1.0:
                raise ValueError(f"request rate {p} outside (0, 1]")
            if contenders_for(p, self.population) < 1:
                raise ValueError(f"request rate {p} gives no contenders out of {self.population}")


def contenders_for(rate: float, population: int) -> int:
    exact = Decimal(str(rate)) * population
    return int(exact.quantize(Decimal(1), rounding=ROUND_HALF_UP))


# -- closed forms --------------------------------------------------------------

def analytic_success_rate(
    m: int, scale: float, duration: float, rate: float = DEFAULT_HARVEST_RATE
) -> float:
    """Long-run fraction of superframes the coordinator completes.

    The coordinator gains ``rate * duration`` per interval and spends
    ``scale * (192 + 45.52 m)`` pJ per completed superframe.
    """
    if not 1 <= m <= CAP_SLOTS:
        raise ValueError("m must lie in 1..15")
    if not 0.5 <= scale <= 1.0:
        raise ValueError("scale must lie in [0.5, 1.0]")
    budget = scale * (BEACON_TX_PJ + m * PER_SLOT_PJ)
    return min(1.0, rate * duration / budget)


def unique_min_probability(n: int, window: int) -> float:
    """P(exactly one of ``n`` uniform draws over ``window`` values is the minimum)."""
    if n == 0:
        return 0.0
    return sum(n / window * ((window - 1 - v) / window) ** (n - 1) for v in range(window))


# -- formatting -----------------------------------------------------------------

def fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def render_csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    return buf.getvalue()


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.write_text(render_csv(header, rows), encoding="utf-8")
    return path


# -- harvest curve ----------------------------------------------------------------

def harvest_curve_experiment(
    frequencies: Sequence[float] = (1.0, 50.0),
    horizon_s: float = 3000.0,
    sample_step_s: float = 1.0,
    capacity: float = SENSOR_CAPACITY_PJ,
) -> tuple[list[str], list[list[float]]]:
    """Charge an empty store under the saturating curve, one column per frequency."""
    if horizon_s <= 0 or sample_step_s <= 0:
        raise ValueError("horizon and step must be positive")
    configs = [HarvestConfig(HarvestMode.SATURATING_CURVE, cycle_frequency=f) for f in frequencies]
    header = ["time_s"] + [f"energy_pJ_{f:g}Hz" for f in frequencies]
    steps = int(round(horizon_s / sample_step_s))
    rows = []
    for i in range(steps + 1):
        t = min(i * sample_step_s, horizon_s)
        rows.append([float(t)] + [harvested_energy(t, 0.0, c, capacity) for c in configs])
    return header, rows


# -- superframe sweeps --------------------------------------------------------------

@dataclass
class PointResult:
    duration: float
    scale: float
    m: int
    completed: int
    total: int
    results: list[SuperframeResult] = field(default_factory=list)
    trace: list[str] = field(default_factory=list)

    @property
    def success_rate(self) -> float:
        return self.completed / self.total


def simulate_point(
    duration: float,
    scale: float,
    m: int,
    superframes: int,
    seed: int = 0,
    *,
    allocation: Allocation = Allocation.ASSIGNED,
    harvest_rate: float = DEFAULT_HARVEST_RATE,
    params: PulseEnergyParams = DEFAULT_PARAMS,
    backoff: BackoffConfig = BackoffConfig(),
    keep_results: bool = False,
    trace: bool = False,
) -> PointResult:
    """Run ``superframes`` beacon intervals of a coordinator with ``m`` active sensors.

    All nodes start fully charged and harvest linearly; a BeaconDue event at
    every interval boundary tops up the stores and runs one superframe.
    """
    harvest = HarvestConfig(HarvestMode.LINEAR_RATE, rate=harvest_rate)
    config = SuperframeConfig(duration=duration, packet_scale=scale)
    costs = FrameCosts.at(scale, params)
    coordinator = CoordinatorState(0, EnergyStore.coordinator(harvest))
    sensors = [SensorState(a, EnergyStore.sensor(harvest), Phase.ASSOCIATED) for a in range(1, m + 1)]
    coordinator.member_table.update(s.address for s in sensors)
    rng = RandomStream(seed)
    interval = minutes(duration)
    point = PointResult(duration, scale, m, 0, 0)
    last = [0]

    def on_beacon(engine: Engine, event) -> None:
        elapsed = engine.now - last[0]
        last[0] = engine.now
        if elapsed:
            coordinator.energy.charge(elapsed)
            for s in sensors:
                s.energy.charge(elapsed)
        result = run_superframe(
            coordinator, sensors, config, params, rng,
            index=point.total, backoff=backoff, allocation=allocation, costs=costs,
        )
        point.total += 1
        point.completed += result.completed
        if keep_results:
            point.results.append(result)
        if point.total < superframes:
            engine.schedule(engine.now + interval, EventKind.BEACON_DUE, coordinator.address)

    engine = Engine({EventKind.BEACON_DUE: on_beacon}, trace=trace)
    engine.schedule(0, EventKind.BEACON_DUE, coordinator.address)
    engine.run_until((superframes - 1) * interval)
    if trace:
        point.trace = engine.trace
    return point


def _run_point(args) -> PointResult:
    index, (duration, scale, m), spec, keep_results, trace = args
    return simulate_point(
        duration, scale, m, spec.superframes_per_point, derive_seed(spec.seed, index),
        allocation=spec.allocation, harvest_rate=spec.harvest_rate,
        keep_results=keep_results, trace=trace,
    )


def sweep_points(
    spec: SweepSpec, *, jobs: int = 1, keep_results: bool = False, trace: bool = False
) -> list[PointResult]:
    """Simulate every grid point; rows come back in grid order regardless of ``jobs``."""
    tasks = [(i, p, spec, keep_results, trace) for i, p in enumerate(spec.grid())]
    if jobs <= 1:
        return [_run_point(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_point, tasks, chunksize=8))


def duration_sweep(spec: SweepSpec, points: list[PointResult] | None = None, jobs: int = 1):
    """Success rate per (duration, m) at the first packet scale in ``spec``."""
    spec = SweepSpec(**{**spec.__dict__, "packet_scales": spec.packet_scales[:1]})
    points = points if points is not None else sweep_points(spec, jobs=jobs)
    header = ["duration_min", "m", "success_rate"]
    return header, [[p.duration, p.m, p.success_rate] for p in points]


def packet_size_sweep(spec: SweepSpec, points: list[PointResult] | None = None, jobs: int = 1):
    points = points if points is not None else sweep_points(spec, jobs=jobs)
    header = ["duration_min", "scale", "m", "success_rate"]
    return header, [[p.duration, p.scale, p.m, p.success_rate] for p in points]


def oracle_grid_check(spec: SweepSpec, points: list[PointResult] | None = None, jobs: int = 1):
    """Compare every simulated point with :func:`analytic_success_rate`.

    Returns ``(max_deviation, header, rows)``.
    """
    points = points if points is not None else sweep_points(spec, jobs=jobs)
    header = ["duration_min", "scale", "m", "simulated", "analytic", "abs_deviation"]
    rows = []
    worst = 0.0
    for p in points:
        expected = analytic_success_rate(p.m, p.scale, p.duration, spec.harvest_rate)
        dev = abs(p.success_rate - expected)
        worst = max(worst, dev)
        rows.append([p.duration, p.scale, p.m, p.success_rate, expected, dev])
    return worst, header, rows


# -- contention comparison ------------------------------------------------------------

def csma_usable_rates(n: int, trials: int, rng: RandomStream, backoff: BackoffConfig = BackoffConfig()) -> np.ndarray:
    """Per-trial usable rate of the 15-slot CSMA/CA competition with ``n`` requesters.

    Draw layout: one block of ``trials * 15 * n`` backoffs, indexed
    ``[trial, slot, node]``; draws belonging to nodes that already won are
    ignored. A trial's rate is usable slots over contested slots.
    """
    w = backoff.window
    draws = rng.uniform_ints(w, trials * CAP_SLOTS * n).reshape(trials, CAP_SLOTS, n)
    pending = np.ones((trials, n), dtype=bool)
    usable = np.zeros(trials, dtype=np.int64)
    contested = np.zeros(trials, dtype=np.int64)
    rows = np.arange(trials)
    for slot in range(CAP_SLOTS):
        d = np.where(pending, draws[:, slot, :], w)
        low = d.min(axis=1)
        ties = (d == low[:, None]).sum(axis=1)
        busy = low < w
        won = busy & (ties == 1)
        winner = d.argmin(axis=1)
        pending[rows[won], winner[won]] = False
        usable += won
        contested += busy
    return usable / contested


def rr_usable_rates(rate: float, population: int, trials: int, rng: RandomStream) -> np.ndarray:
    """Per-trial usable rate of round-robin slot ownership.

    Nodes are active independently with probability ``rate``; slot ``s`` of
    trial ``t`` belongs to node ``(15 t + s) mod population``.
    """
    active = rng.uniform_floats(trials * population).reshape(trials, population) < rate
    owners = (np.arange(trials)[:, None] * CAP_SLOTS + np.arange(CAP_SLOTS)[None, :]) % population
    used = np.take_along_axis(active, owners, axis=1)
    return used.sum(axis=1) / CAP_SLOTS


def contention_compare(spec: ContentionSpec):
    """Mean usable rate per request rate for CSMA/CA and round robin."""
    header = ["request_rate", "csma_usable_rate", "rr_usable_rate"]
    rows = []
    for i, p in enumerate(spec.request_rates):
        n = contenders_for(p, spec.population)
        csma = csma_usable_rates(n, spec.trials_per_rate, RandomStream(spec.seed, 2 * i), spec.backoff)
        rr = rr_usable_rates(p, spec.population, spec.trials_per_rate, RandomStream(spec.seed, 2 * i + 1))
        rows.append([p, float(csma.mean()), float(rr.mean())])
    return header, rows


def crossovers(rows: Sequence[Sequence[float]]) -> list[float]:
    """Request rates where CSMA minus RR changes sign, linearly interpolated."""
    found = []
    for (p0, c0, r0), (p1, c1, r1) in zip(rows, rows[1:]):
        d0, d1 = c0 - r0, c1 - r1
        if d0 == 0 and (not found or found[-1] != p0):
            found.append(p0)
        elif d0 * d1 < 0:
            found.append(p0 + (p1 - p0) * d0 / (d0 - d1))
    return found


def rr_regression(rows: Sequence[Sequence[float]]) -> tuple[float, float]:
    """Least-squares ``(slope, intercept)`` of the RR column against the rate."""
    p = np.array([r[0] for r in rows])
    y = np.array([r[2] for r in rows])
    slope, intercept = np.polyfit(p, y, 1)
    return float(slope), float(intercept)
