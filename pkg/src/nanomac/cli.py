"""Command-line entry point, one subcommand per experiment.

    harvest-curve       nanocapacitor charge over time
    duration-sweep      completion rate vs concurrent slots per duration
    packet-size-sweep   completion rate vs slots per packet scale
    contention-compare  slotted CSMA/CA vs round robin usable rate
    oracle-check        simulated vs closed-form completion rate over the grid
    tsook-trace         TS-OOK pulse arrivals and overlap report
    frame               hex dump of a canonical MAC frame

Settings merge as defaults <- JSON config (--config) <- flags. Sweeps
require --seed. Exit codes: 0 success, 1 runtime fault, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from . import experiments as ex
from .channel import (
    PropagationModel,
    PulseTrain,
    collision_pairs,
    detect_collisions,
    figure2_scenario,
    propagation_delay,
    pulse_arrival_times,
)
from .frames import CommandId, ack_frame, beacon_frame, command_frame, data_frame, encode_frame, hexdump
from .mac import LEDGER_COLUMNS, Allocation, BackoffConfig
from .svg import write_plot

SUBCOMMANDS = (
    "harvest-curve", "duration-sweep", "packet-size-sweep", "contention-compare",
    "oracle-check", "tsook-trace", "frame",
)
SWEEPS = {"duration-sweep", "packet-size-sweep", "oracle-check"}
SEEDED = SWEEPS | {"contention-compare"}

_SWEEP_KEYS = {"durations", "concurrent_slots", "packet_scales", "superframes_per_point", "allocation"}
_CONTENTION_KEYS = {"population", "request_rates", "trials_per_rate", "backoff", "backoff_exponent"}
_HARVEST_KEYS = {"frequencies", "horizon_s", "sample_step_s"}
_COMMON_KEYS = {"seed", "output_dir", "trace"}

# flag name for each option, used in diagnostics
_FLAG = {
    "durations": "--durations", "concurrent_slots": "--slots", "packet_scales": "--scales",
    "superframes_per_point": "--superframes", "allocation": "--allocation",
    "population": "--population", "request_rates": "--rates", "trials_per_rate": "--trials",
    "backoff_exponent": "--backoff-exponent", "frequencies": "--frequencies",
    "horizon_s": "--horizon", "sample_step_s": "--step", "seed": "--seed",
}


_PASSTHROUGH = ("train", "spacing", "width", "distance", "speed", "kind")


class UsageError(Exception):
    exit_code = 2


@dataclass
class CliConfig:
    subcommand: str
    config_path: Path | None = None
    seed: int | None = None
    output_dir: Path = Path(".")
    trace: bool = False
    svg: bool = False
    jobs: int = 1
    ledger: bool = False
    options: dict[str, Any] = field(default_factory=dict)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _floats(text: str) -> list[float]:
    if ":" in text:
        start, stop, step = (float(x) for x in text.split(":"))
        count = int(round((stop - start) / step)) + 1
        return [round(start + i * step, 10) for i in range(count)]
    return [float(x) for x in text.split(",") if x]


def _ints(text: str) -> list[int]:
    out: list[int] = []
    for part in text.split(","):
        if "-" in part:
            lo, hi = (int(x) for x in part.split("-"))
            out.extend(range(lo, hi + 1))
        elif part:
            out.append(int(part))
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="nanomac",
        description=__doc__.split("\n\n")[0],
        epilog=__doc__.split("\n\n", 1)[1],
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="subcommand", metavar="SUBCOMMAND", parser_class=_Parser)
    sub.required = True

    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON file keyed by option field names")
    common.add_argument("--seed", type=int, help="64-bit master seed (mandatory for sweeps)")
    common.add_argument("--output-dir", type=Path, help="where CSV/SVG files go (default: .)")
    common.add_argument("--trace", action="store_true", default=None, help="write an event trace log")
    common.add_argument("--svg", action="store_true", help="also write an SVG line plot")

    grid = _Parser(add_help=False)
    grid.add_argument("--durations", type=_floats, help="superframe durations in minutes, e.g. 8,10,12")
    grid.add_argument("--slots", type=_ints, dest="concurrent_slots", help="concurrent slots, e.g. 1-15")
    grid.add_argument("--scales", type=_floats, dest="packet_scales", help="packet scales in [0.5, 1]")
    grid.add_argument("--superframes", type=int, dest="superframes_per_point")
    grid.add_argument("--allocation", choices=[a.value for a in Allocation])
    grid.add_argument("--jobs", type=int, default=1, help="worker processes for grid points")
    grid.add_argument("--ledger", action="store_true", help="write the per-superframe ledger CSV")

    p = sub.add_parser("harvest-curve", parents=[common], help="nanocapacitor charge curves")
    p.add_argument("--frequencies", type=_floats)
    p.add_argument("--horizon", type=float, dest="horizon_s")
    p.add_argument("--step", type=float, dest="sample_step_s")

    for name, text in (
        ("duration-sweep", "completion rate by superframe duration"),
        ("packet-size-sweep", "completion rate by packet scale"),
        ("oracle-check", "simulation vs closed form"),
    ):
        sub.add_parser(name, parents=[common, grid], help=text)

    p = sub.add_parser("contention-compare", parents=[common], help="slotted CSMA/CA vs round robin")
    p.add_argument("--population", type=int)
    p.add_argument("--rates", type=_floats, dest="request_rates", help="e.g. 0.01:0.5:0.01")
    p.add_argument("--trials", type=int, dest="trials_per_rate")
    p.add_argument("--backoff-exponent", type=int)

    p = sub.add_parser("tsook-trace", parents=[common], help="TS-OOK pulse arrivals and overlaps")
    p.add_argument("--train", action="append", metavar="BITS@START_FS",
                   help="repeatable; default is the three-transmitter witness")
    p.add_argument("--spacing", type=int, default=100_000, help="symbol spacing in fs")
    p.add_argument("--width", type=int, default=100, help="pulse width in fs")
    p.add_argument("--distance", type=float, default=10.0, help="mm")
    p.add_argument("--speed", type=float, default=3.0e8, help="m/s")

    p = sub.add_parser("frame", parents=[common], help="hex dump of a canonical frame")
    p.add_argument("--kind", choices=["beacon", "data", "ack", "command"], default="beacon")
    return parser


def _load_config(path: Path, allowed: set[str]) -> dict[str, Any]:
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise UsageError(f"--config: cannot read {path}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise UsageError(f"--config: {path} is not valid JSON ({e.msg})") from None
    if not isinstance(data, dict):
        raise UsageError("--config: top level must be an object")
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise UsageError(f"--config: unknown field {unknown[0]!r}")
    if isinstance(data.get("backoff"), dict):
        data["backoff_exponent"] = data.pop("backoff").get("backoff_exponent", 3)
    elif "backoff" in data:
        data["backoff_exponent"] = data.pop("backoff")
    return data


def _validate(sub: str, opts: dict[str, Any]) -> None:
    def bad(key, why):
        raise UsageError(f"{_FLAG.get(key, key)}: {why}")

    for s in opts.get("packet_scales", ()):
        if not 0.5 <= s <= 1.0:
            bad("packet_scales", f"{s:g} is outside [0.5, 1.0]")
    for m in opts.get("concurrent_slots", ()):
        if not 1 <= m <= 15:
            bad("concurrent_slots", f"{m} is outside 1..15")
    for d in opts.get("durations", ()):
        if d <= 0:
            bad("durations", f"{d:g} is not positive")
    for key in ("superframes_per_point", "population", "trials_per_rate"):
        if key in opts and opts[key] < 1:
            bad(key, "must be at least 1")
    if "backoff_exponent" in opts and not 1 <= opts["backoff_exponent"] <= 8:
        bad("backoff_exponent", "must lie in 1..8")
    for p in opts.get("request_rates", ()):
        if not 0 < p <= 1:
            bad("request_rates", f"{p:g} is outside (0, 1]")
        if ex.contenders_for(p, opts.get("population", 100)) < 1:
            bad("request_rates", f"{p:g} gives no contenders")
    for f in opts.get("frequencies", ()):
        if f <= 0:
            bad("frequencies", f"{f:g} is not positive")
    for key in ("horizon_s", "sample_step_s"):
        if key in opts and opts[key] <= 0:
            bad(key, "must be positive")
    if "allocation" in opts and opts["allocation"] not in {a.value for a in Allocation}:
        bad("allocation", f"unknown mode {opts['allocation']!r}")
    seed = opts.get("seed")
    if seed is not None and not 0 <= seed < 2**64:
        bad("seed", "must be a 64-bit unsigned integer")
    if sub in SEEDED and seed is None:
        raise UsageError(f"--seed is required for {sub}")


def parse_args(argv: Sequence[str]) -> CliConfig:
    args = build_parser().parse_args(list(argv))
    sub = args.subcommand
    allowed = set(_COMMON_KEYS)
    if sub in SWEEPS:
        allowed |= _SWEEP_KEYS
    elif sub == "contention-compare":
        allowed |= _CONTENTION_KEYS
    elif sub == "harvest-curve":
        allowed |= _HARVEST_KEYS

    opts: dict[str, Any] = {}
    if args.config is not None:
        opts.update(_load_config(args.config, allowed))
    for key in allowed | {"output_dir"}:
        value = getattr(args, key, None)
        if value is not None:
            opts[key] = value
    _validate(sub, opts)

    return CliConfig(
        subcommand=sub,
        config_path=args.config,
        seed=opts.pop("seed", None),
        output_dir=Path(opts.pop("output_dir", ".")),
        trace=bool(opts.pop("trace", False)),
        svg=bool(args.svg),
        jobs=getattr(args, "jobs", 1),
        ledger=bool(getattr(args, "ledger", False)),
        options={**opts, **{k: getattr(args, k) for k in _PASSTHROUGH if hasattr(args, k)}},
    )


# -- dispatch ---------------------------------------------------------------------------

def _sweep_spec(cfg: CliConfig) -> ex.SweepSpec:
    kwargs = {k: v for k, v in cfg.options.items() if k in _SWEEP_KEYS}
    if "allocation" in kwargs:
        kwargs["allocation"] = Allocation(kwargs["allocation"])
    return ex.SweepSpec(seed=cfg.seed, **kwargs)


def _stem(cfg: CliConfig) -> str:
    return cfg.subcommand if cfg.seed is None else f"{cfg.subcommand}-{cfg.seed}"


def _write(cfg: CliConfig, header, rows, suffix: str = "") -> Path:
    path = ex.write_csv(cfg.output_dir / f"{_stem(cfg)}{suffix}.csv", header, rows)
    print(path)
    return path


def _svg(cfg: CliConfig, series, **labels) -> None:
    if cfg.svg:
        path = write_plot(cfg.output_dir / f"{_stem(cfg)}.svg", series, **labels)
        print(path)


def _write_extras(cfg: CliConfig, points: list[ex.PointResult]) -> None:
    if cfg.ledger:
        rows = [
            [p.duration, p.scale] + list(r.ledger_row().values())
            for p in points for r in p.results
        ]
        _write(cfg, ["duration_min", "packet_scale", *LEDGER_COLUMNS], rows, "-ledger")
    if cfg.trace:
        lines = ["time_fs,seq,kind,target"]
        for p in points:
            lines.append(f"# duration_min={p.duration:g} scale={p.scale:g} m={p.m}")
            lines.extend(p.trace)
        path = cfg.output_dir / f"{_stem(cfg)}-trace.log"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        print(path)


def _run_sweep(cfg: CliConfig) -> int:
    spec = _sweep_spec(cfg)
    if cfg.subcommand == "duration-sweep":
        spec = ex.SweepSpec(**{**spec.__dict__, "packet_scales": spec.packet_scales[:1]})
    points = ex.sweep_points(spec, jobs=cfg.jobs, keep_results=cfg.ledger, trace=cfg.trace)

    if cfg.subcommand == "duration-sweep":
        header, rows = ex.duration_sweep(spec, points)
        _write(cfg, header, rows)
        series = {f"{d:g} min": [(r[1], r[2]) for r in rows if r[0] == d] for d in spec.durations}
        _svg(cfg, series, title="Completion rate by duration", xlabel="concurrent slots", ylabel="success rate")
    elif cfg.subcommand == "packet-size-sweep":
        header, rows = ex.packet_size_sweep(spec, points)
        _write(cfg, header, rows)
        series = {
            f"{d:g} min, {s:g}": [(r[2], r[3]) for r in rows if r[0] == d and r[1] == s]
            for d in spec.durations for s in spec.packet_scales
        }
        _svg(cfg, series, title="Completion rate by packet scale", xlabel="concurrent slots", ylabel="success rate")
    else:
        worst, header, rows = ex.oracle_grid_check(spec, points)
        _write(cfg, header, rows)
        print(f"max deviation: {worst:.6g}")
    _write_extras(cfg, points)
    return 0


def _run_contention(cfg: CliConfig) -> int:
    o = cfg.options
    spec = ex.ContentionSpec(
        population=o.get("population", 100),
        request_rates=o.get("request_rates", ex._default_rates()),
        trials_per_rate=o.get("trials_per_rate", 10_000),
        backoff=BackoffConfig(o.get("backoff_exponent", 3)),
        seed=cfg.seed,
    )
    header, rows = ex.contention_compare(spec)
    _write(cfg, header, rows)
    cross = ex.crossovers(rows)
    print("crossover: " + (", ".join(f"{c:.4g}" for c in cross) if cross else "none"))
    _svg(
        cfg,
        {"slotted CSMA/CA": [(r[0], r[1]) for r in rows], "round robin": [(r[0], r[2]) for r in rows]},
        title="Possible slot usable rate", xlabel="slot request rate", ylabel="usable rate",
    )
    return 0


def _run_harvest(cfg: CliConfig) -> int:
    o = cfg.options
    freqs = o.get("frequencies", [1.0, 50.0])
    header, rows = ex.harvest_curve_experiment(freqs, o.get("horizon_s", 3000.0), o.get("sample_step_s", 1.0))
    _write(cfg, header, rows)
    series = {f"{f:g} Hz": [(r[0], r[i + 1]) for r in rows] for i, f in enumerate(freqs)}
    _svg(cfg, series, title="Nanocapacitor charge", xlabel="time (s)", ylabel="energy (pJ)")
    return 0


def _parse_train(text: str, spacing: int, width: int) -> PulseTrain:
    bits, _, start = text.partition("@")
    try:
        return PulseTrain.from_string(bits, start=int(start or 0), symbol_spacing=spacing, pulse_width=width)
    except ValueError as e:
        raise UsageError(f"--train: {text!r}: {e}") from None


def _run_tsook(cfg: CliConfig) -> int:
    o = cfg.options
    try:
        delay = propagation_delay(PropagationModel(o["distance"], o["speed"]))
    except ValueError as e:
        raise UsageError(f"--distance/--speed: {e}") from None
    if o.get("train"):
        trains = [(_parse_train(t, o["spacing"], o["width"]), delay) for t in o["train"]]
    else:
        trains = [(t, delay) for t, _ in figure2_scenario()]
    rows = []
    for i, (train, d) in enumerate(trains):
        ones = [k for k, b in enumerate(train.bits) if b]
        rows.extend([i, k, t] for k, t in zip(ones, pulse_arrival_times(train, d)))
    _write(cfg, ["train_id", "symbol_index", "arrival_fs"], rows)
    pairs = collision_pairs(trains)
    print(f"overlapping pulse pairs: {detect_collisions(trains)}")
    for a, ta, b, tb in pairs:
        print(f"  train {a} @ {ta} fs overlaps train {b} @ {tb} fs")
    return 0


def _canonical_frame(kind: str):
    if kind == "beacon":
        return beacon_frame(0x0000, [0x0001, 0x0002, 0x0003], superframe_spec=(15 << 8) | (1 << 14))
    if kind == "data":
        return data_frame(0x0001, 0x0000, b"\x01\x00\x00\x00")
    if kind == "ack":
        return ack_frame(0)
    return command_frame(CommandId.ASSOCIATION_REQUEST, 0x0001, 0x0000)


def _run_frame(cfg: CliConfig) -> int:
    octets = encode_frame(_canonical_frame(cfg.options["kind"]))
    print(f"# {cfg.options['kind']}: {len(octets)} octets, {len(octets) * 8} bits")
    print(hexdump(octets))
    return 0


def dispatch(cfg: CliConfig) -> int:
    if cfg.subcommand != "frame":
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
    if cfg.subcommand in SWEEPS:
        return _run_sweep(cfg)
    return {
        "contention-compare": _run_contention,
        "harvest-curve": _run_harvest,
        "tsook-trace": _run_tsook,
        "frame": _run_frame,
    }[cfg.subcommand](cfg)


def main(argv: Sequence[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        return dispatch(parse_args(argv))
    except UsageError as e:
        print(f"nanomac: error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"nanomac: error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # noqa: BLE001 - exit-code contract
        print(f"nanomac: internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
