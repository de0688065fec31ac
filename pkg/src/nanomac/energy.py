"""Pulse-level energy accounting and nanocapacitor harvesting.

Energies that feed the superframe ledger are kept as integer femtojoules
(fJ) so the frame costs (e.g. 3.84 pJ = 3840 fJ) are exact. The picojoule
functions return ``fJ / 1000`` of the same exact value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from functools import lru_cache

FJ_PER_PJ = 1000

SENSOR_CAPACITY_PJ = 800.0
COORDINATOR_CAPACITY_PJ = 2 * SENSOR_CAPACITY_PJ

# 299.43 pJ per 10-minute superframe.
DEFAULT_HARVEST_RATE = 29.943  # pJ/min

# Per-cycle charge fraction of E(n) = Emax (1 - exp(-alpha n))^2, chosen so
# that 95% of capacity is reached after 2419 cycles (2419 s at 1 Hz).
DEFAULT_ALPHA = -math.log(1.0 - math.sqrt(0.95)) / 2419.0


class RxMode(Enum):
    TABLE_CALIBRATED = "table"  # 0.01 pJ per received bit
    EQUATION_TWO = "equation"  # e_tx_pulse / 10 per received bit


class HarvestMode(Enum):
    LINEAR_RATE = "linear"
    SATURATING_CURVE = "saturating"


class InsufficientEnergy(Exception):
    """The store cannot cover the requested debit; it was left unchanged."""

    def __init__(self, needed_fj: int, available_fj: int):
        super().__init__(
            f"needs {needed_fj / FJ_PER_PJ:g} pJ, has {available_fj / FJ_PER_PJ:g} pJ"
        )
        self.needed_fj = needed_fj
        self.available_fj = available_fj


@dataclass(frozen=True)
class PulseEnergyParams:
    e_tx_pulse: float = 1.0  # pJ per transmitted pulse
    rx_per_bit: float = 0.01  # pJ per received bit (table mode)
    w: float = 0.5  # probability that a symbol is a 1
    rx_mode: RxMode = RxMode.TABLE_CALIBRATED

    def __post_init__(self):
        if self.e_tx_pulse <= 0:
            raise ValueError("e_tx_pulse must be positive")
        if not 0.0 <= self.w <= 1.0:
            raise ValueError("w must lie in [0, 1]")
        if self.rx_per_bit <= 0:
            raise ValueError("rx_per_bit must be positive")

    @property
    def effective_rx_per_bit(self) -> float:
        if self.rx_mode is RxMode.EQUATION_TWO:
            return self.e_tx_pulse / 10
        return self.rx_per_bit


DEFAULT_PARAMS = PulseEnergyParams()


def _exact(x: float) -> Fraction:
    # decimal literal semantics: 0.01 means 1/100, not its binary neighbour
    return Fraction(str(x))


def _to_fj(pj: Fraction) -> int:
    return math.floor(pj * FJ_PER_PJ + Fraction(1, 2))


def _check(k: int, scale: float) -> None:
    if k < 0:
        raise ValueError(f"bit count must be non-negative, got {k}")
    if not 0.5 <= scale <= 1.0:
        raise ValueError(f"scale must lie in [0.5, 1.0], got {scale}")


def tx_energy_fj(k: int, scale: float = 1.0, params: PulseEnergyParams = DEFAULT_PARAMS) -> int:
    _check(k, scale)
    return _to_fj(_exact(scale) * k * _exact(params.w) * _exact(params.e_tx_pulse))


def rx_energy_fj(k: int, scale: float = 1.0, params: PulseEnergyParams = DEFAULT_PARAMS) -> int:
    _check(k, scale)
    if params.rx_mode is RxMode.EQUATION_TWO:
        per_bit = _exact(params.e_tx_pulse) / 10
    else:
        per_bit = _exact(params.rx_per_bit)
    return _to_fj(_exact(scale) * k * per_bit)


def tx_energy(k: int, scale: float = 1.0, params: PulseEnergyParams = DEFAULT_PARAMS) -> float:
    """Energy in pJ to transmit ``k`` bits: ``scale * k * w * e_tx_pulse``.

    Only 1-symbols emit a pulse, hence the ``w`` factor.
    """
    return tx_energy_fj(k, scale, params) / FJ_PER_PJ


def rx_energy(k: int, scale: float = 1.0, params: PulseEnergyParams = DEFAULT_PARAMS) -> float:
    """Energy in pJ to receive ``k`` bits under ``params.rx_mode``."""
    return rx_energy_fj(k, scale, params) / FJ_PER_PJ


@dataclass(frozen=True)
class HarvestConfig:
    mode: HarvestMode = HarvestMode.LINEAR_RATE
    rate: float = DEFAULT_HARVEST_RATE  # pJ per minute
    cycle_frequency: float = 1.0  # Hz
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError("harvest rate must be positive")
        if self.cycle_frequency <= 0:
            raise ValueError("cycle_frequency must be positive")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")


def harvested_energy(
    elapsed: float, starting_level: float, config: HarvestConfig, capacity: float
) -> float:
    """Store level in pJ after harvesting for ``elapsed`` seconds.

    The saturating curve is resumed from the cycle count that would have
    produced ``starting_level`` on a fresh store, so charging is additive in
    time.
    """
    if elapsed < 0:
        raise ValueError("elapsed time must be non-negative")
    if not 0.0 <= starting_level <= capacity:
        raise ValueError("starting level outside [0, capacity]")
    if elapsed == 0:
        return starting_level
    if config.mode is HarvestMode.LINEAR_RATE:
        return min(capacity, starting_level + config.rate * elapsed / 60.0)
    if starting_level >= capacity:
        return capacity
    n0 = -math.log1p(-math.sqrt(starting_level / capacity)) / config.alpha
    n = n0 + config.cycle_frequency * elapsed
    return capacity * (-math.expm1(-config.alpha * n)) ** 2


def time_to_fraction(fraction: float, config: HarvestConfig) -> float:
    """Seconds for an empty store to reach ``fraction`` of capacity."""
    if not 0.0 <= fraction < 1.0:
        raise ValueError("fraction must lie in [0, 1)")
    if config.mode is HarvestMode.LINEAR_RATE:
        raise ValueError("linear harvesting has no capacity-relative time")
    cycles = -math.log1p(-math.sqrt(fraction)) / config.alpha
    return cycles / config.cycle_frequency


@lru_cache(maxsize=256)
def _linear_gain_fj(rate: float, elapsed_fs: int) -> int:
    # rate [pJ/min] * t [fs] * 1000 fJ/pJ / (60e15 fs/min), floored to whole fJ
    return math.floor(_exact(rate) * elapsed_fs * FJ_PER_PJ / (60 * 10**15))


@dataclass
class EnergyStore:
    """A nanocapacitor holding an integer number of femtojoules."""

    capacity_fj: int
    level_fj: int
    harvest: HarvestConfig = field(default_factory=HarvestConfig)

    def __post_init__(self):
        if self.capacity_fj <= 0:
            raise ValueError("capacity must be positive")
        if not 0 <= self.level_fj <= self.capacity_fj:
            raise ValueError("level outside [0, capacity]")

    @classmethod
    def full(cls, capacity_pj: float, harvest: HarvestConfig | None = None) -> "EnergyStore":
        cap = _to_fj(_exact(capacity_pj))
        return cls(cap, cap, harvest or HarvestConfig())

    @classmethod
    def sensor(cls, harvest: HarvestConfig | None = None) -> "EnergyStore":
        return cls.full(SENSOR_CAPACITY_PJ, harvest)

    @classmethod
    def coordinator(cls, harvest: HarvestConfig | None = None) -> "EnergyStore":
        return cls.full(COORDINATOR_CAPACITY_PJ, harvest)

    @property
    def level(self) -> float:
        return self.level_fj / FJ_PER_PJ

    @property
    def capacity(self) -> float:
        return self.capacity_fj / FJ_PER_PJ

    def can_afford(self, amount_fj: int) -> bool:
        return 0 <= amount_fj <= self.level_fj

    def consume(self, amount_fj: int) -> None:
        if amount_fj < 0:
            raise ValueError("cannot consume a negative amount")
        if amount_fj > self.level_fj:
            raise InsufficientEnergy(amount_fj, self.level_fj)
        self.level_fj -= amount_fj

    def charge(self, elapsed_fs: int) -> int:
        """Harvest over ``elapsed_fs`` femtoseconds; returns the fJ gained."""
        if elapsed_fs < 0:
            raise ValueError("elapsed time must be non-negative")
        before = self.level_fj
        if self.harvest.mode is HarvestMode.LINEAR_RATE:
            self.level_fj = min(self.capacity_fj, before + _linear_gain_fj(self.harvest.rate, elapsed_fs))
        else:
            level = harvested_energy(
                elapsed_fs / 1e15, before / FJ_PER_PJ, self.harvest, self.capacity
            )
            self.level_fj = min(self.capacity_fj, max(before, round(level * FJ_PER_PJ)))
        return self.level_fj - before


def consume(store: EnergyStore, amount: float) -> EnergyStore:
    """Debit ``amount`` pJ from ``store`` in place.

    Raises :class:`InsufficientEnergy` (leaving the store untouched) when the
    level does not cover the amount.
    """
    store.consume(_to_fj(_exact(amount)))
    return store
