"""Command-line entry point: ``qenergy <subcommand> ...``.

Every failure ends with a nonzero exit status and a single JSON object on
stderr of the form ``{"error": <class name>, "message": ..., ...}``.
Numbers are SI (W, s, ops/s, J/op) except the Movidius subcommand, which
reports mW.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .bundle import ModelBundle, records_digest
from .calibration.movidius import fit_movidius
from .calibration.pipeline import CalibrationConfig, calibrate, coverage_summary
from .constants import (
    MOVIDIUS_EXTENDED_BENCHMARKS,
    MYRIAD1_P_ACT,
    MYRIAD1_P_STAT,
    MYRIAD1_UNITS,
    QUEUE_FREQS_GHZ,
)
from .errors import QEnergyError
from .model import COMPONENTS, KINDS, MachineTopology, MovidiusModel, WorkloadPoint, movidius_power
from .records import parse_measurements, records_to_csv, write_measurements

TOPOLOGY_ENV = "QENERGY_TOPOLOGY"

EXIT_FAILURE = 1
EXIT_USAGE = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# --- helpers ---------------------------------------------------------------


def load_topology(path: str | None) -> MachineTopology:
    """Topology from ``path``, else from the file named by $QENERGY_TOPOLOGY, else 2x8."""
    path = path or os.environ.get(TOPOLOGY_ENV)
    if not path:
        return MachineTopology()
    d = json.loads(Path(path).read_text())
    return MachineTopology(int(d["sockets"]), int(d["cores_per_socket"]))


def parse_grid(spec: str) -> list[float]:
    """``start:stop:step`` (stop included when hit) or a comma-separated list."""
    if ":" in spec:
        parts = [float(p) for p in spec.split(":")]
        if len(parts) != 3 or parts[2] <= 0 or parts[1] < parts[0]:
            raise UsageError(f"bad grid {spec!r}: want start:stop:step with step > 0")
        start, stop, step = parts
        count = int(np.floor((stop - start) / step + 1e-9)) + 1
        return [start + i * step for i in range(count)]
    try:
        return [float(p) for p in spec.split(",") if p.strip()]
    except ValueError:
        raise UsageError(f"bad grid {spec!r}") from None


def parse_ints(spec: str) -> list[int]:
    return [int(round(v)) for v in parse_grid(spec)]


def _emit(text: str, dest: str | None) -> None:
    if dest in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(dest).write_text(text)


def _load_bundle(path: str | None, topo: MachineTopology) -> ModelBundle:
    if path:
        return ModelBundle.load(path)
    from .synth import default_plant, synth_dataset

    records = synth_dataset(default_plant())
    return calibrate(records, topo if topo != MachineTopology() else default_plant().topology)


# --- subcommands ---------------------------------------------------------


def cmd_bench(args) -> int:
    from .harness import BenchConfig, run_benchmark

    topo = load_topology(args.topology)
    cfg = BenchConfig(
        variant=args.variant,
        n=args.pairs,
        pw=args.pw,
        duration=args.duration,
        warmup=args.warmup,
        pinning=args.pinning,
        capacity=args.capacity,
        f=args.freq,
        topology=topo,
    )
    records = [run_benchmark(cfg) for _ in range(args.repeat)]
    if args.out in (None, "-"):
        buf = io.StringIO(newline="")
        write_measurements(records, buf, fmt=args.format or "csv")
        sys.stdout.write(buf.getvalue())
    else:
        write_measurements(records, args.out, fmt=args.format, append=True)
    for rec in records:
        for warning in rec.meta.get("warnings", []):
            print(f"warning: {warning}", file=sys.stderr)
    return 0


def cmd_calibrate(args) -> int:
    topo = load_topology(args.topology)
    records = []
    for path in args.records:
        records.extend(parse_measurements(path, args.format))
    config = CalibrationConfig(reference_impl=args.reference, f0=args.f0)
    bundle = calibrate(records, topo, config)
    if args.out:
        bundle.save(args.out)
    summary = {
        "measurement_budget": bundle.provenance.get("measurement_budget"),
        "coverage": coverage_summary(bundle),
        "n_records": len(records),
        "input_digest": records_digest(records),
        "bundle": args.out,
    }
    print(json.dumps(summary, indent=1, sort_keys=True))
    return 0


PREDICT_COLUMNS = (
    ("impl", "n", "f_ghz", "pw", "regime", "throughput_ops_per_s", "retry_ratio")
    + tuple(f"{k}_{c}_w" for k in KINDS for c in COMPONENTS)
    + ("power_w", "energy_per_op_j")
)


def _prediction_row(rep) -> list:
    p = rep.point
    cells = [rep.breakdown.cell(k, c) for k in KINDS for c in COMPONENTS]
    return [p.impl, p.n, p.f, p.pw, rep.regime.value, rep.throughput, rep.retry_ratio] + cells + [
        rep.breakdown.total,
        rep.energy_per_op,
    ]


def cmd_predict(args) -> int:
    topo = load_topology(args.topology)
    bundle = _load_bundle(args.bundle, topo)
    impls = args.impl or bundle.impls
    freqs = parse_grid(args.freq)
    pairs = parse_ints(args.pairs)
    pws = parse_grid(args.pw)
    reports = [
        bundle.predict(WorkloadPoint(impl, n, f, pw))
        for impl in impls
        for f in freqs
        for n in pairs
        for pw in pws
    ]
    buf = io.StringIO(newline="")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(PREDICT_COLUMNS)
    for rep in reports:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in _prediction_row(rep)])
    _emit(buf.getvalue(), args.out)
    if args.json:
        doc = {
            "bundle": args.bundle,
            "rows": [dict(zip(PREDICT_COLUMNS, _prediction_row(r))) for r in reports],
        }
        _emit(json.dumps(doc, indent=1, allow_nan=False) + "\n", args.json)
    return 0


def cmd_synth(args) -> int:
    from .synth import PlantedMachine, default_plant, synth_dataset

    machine = PlantedMachine.load(args.plant) if args.plant else default_plant()
    if args.sigma or args.quantum or args.width:
        machine = machine.with_noise(args.sigma, args.quantum, args.width)
    if args.save_plant:
        machine.save(args.save_plant)
    freqs = parse_grid(args.freq) if args.freq else QUEUE_FREQS_GHZ
    records = synth_dataset(machine, seed=args.seed, freqs=freqs)
    if args.out in (None, "-"):
        if (args.format or "csv") == "csv":
            sys.stdout.write(records_to_csv(records))
        else:
            buf = io.StringIO()
            write_measurements(records, buf, fmt="jsonl")
            sys.stdout.write(buf.getvalue())
    else:
        write_measurements(records, args.out, fmt=args.format)
    return 0


def _table_model() -> MovidiusModel:
    return MovidiusModel(MYRIAD1_P_STAT, MYRIAD1_P_ACT, MYRIAD1_UNITS)


def _read_movidius_runs(path: str) -> list[tuple[str, int, float]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"benchmark", "shaves", "power_mw"} - set(reader.fieldnames or ())
        if missing:
            raise UsageError(f"{path}: missing column(s) {sorted(missing)}")
        return [(row["benchmark"], int(row["shaves"]), float(row["power_mw"])) for row in reader]


def cmd_movidius(args) -> int:
    if args.fit:
        runs = _read_movidius_runs(args.fit)
        names = {b for b, _, _ in runs}
        benchmarks = {b: u for b, u in MOVIDIUS_EXTENDED_BENCHMARKS.items() if b in names}
        unknown = sorted(names - set(benchmarks))
        if unknown:
            raise UsageError(f"unknown benchmark(s) {unknown}; known: {sorted(MOVIDIUS_EXTENDED_BENCHMARKS)}")
        model, report = fit_movidius(runs, benchmarks=benchmarks, p_act=args.p_act)
        doc = {
            "p_stat_mw": model.p_stat,
            "p_act_mw": model.p_act,
            "units": {u: {"p_dyn_mw": p, "o_mw": o} for u, (p, o) in sorted(model.units.items())},
            "report": report.as_dict(),
        }
        print(json.dumps(doc, indent=1, sort_keys=True))
        return 0
    if not args.units:
        raise UsageError("movidius needs --units (or --fit)")
    units = [u for part in args.units for u in part.split(",") if u]
    print(f"{movidius_power(_table_model(), args.shaves, units):.10g} mW")
    return 0


def selftest_checks() -> dict[str, bool]:
    """Quick round trips: serialization, calibrate-predict and Movidius anchors."""
    from .synth import default_plant, synth_dataset
    from .model import predict_power_and_energy

    out = {}
    machine = default_plant()
    records = synth_dataset(machine)
    out["csv_round_trip"] = parse_measurements(io.StringIO(records_to_csv(records))) == records
    bundle = calibrate(records, machine.topology)
    out["bundle_json_round_trip"] = ModelBundle.from_json(bundle.to_json()).to_json() == bundle.to_json()
    worst = 0.0
    for impl in sorted(machine.throughput):
        for f in QUEUE_FREQS_GHZ:
            for n in (1, 4, 8):
                for pw in (0.0, 50.0, 500.0, 5000.0):
                    point = WorkloadPoint(impl, n, f, pw)
                    got = bundle.predict(point)
                    want = predict_power_and_energy(
                        point,
                        machine.throughput_model(impl),
                        machine.power_model(impl),
                        machine.cas,
                        machine.topology,
                    )
                    for a, b in ((got.throughput, want.throughput), (got.breakdown.total, want.breakdown.total)):
                        worst = max(worst, abs(a - b) / abs(b))
    out["calibrate_predict_round_trip"] = worst < 1e-9
    table = _table_model()
    out["movidius_anchor_saux8"] = round(movidius_power(table, 8, ["SauXor"]), 2) == 498.23
    out["movidius_anchor_saux_iaux1"] = round(movidius_power(table, 1, ["SauXor", "IauXor"]), 2) == 122.76
    return out


def cmd_selftest(args) -> int:
    t0 = time.perf_counter()
    checks = selftest_checks()
    doc = {"checks": checks, "ok": all(checks.values()), "seconds": round(time.perf_counter() - t0, 3)}
    print(json.dumps(doc, indent=1, sort_keys=True))
    return 0 if doc["ok"] else EXIT_FAILURE


# --- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qenergy", description="Throughput and energy model of lock-free queues.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def topology_arg(p):
        p.add_argument("--topology", help=f"JSON file with sockets and cores_per_socket (default: ${TOPOLOGY_ENV})")

    p = sub.add_parser("bench", help="run the queue benchmark and append records")
    p.add_argument("--variant", default="a0")
    p.add_argument("--pairs", type=int, default=1)
    p.add_argument("--pw", type=int, default=100)
    p.add_argument("--duration", type=float, default=1.0)
    p.add_argument("--warmup", type=float, default=0.2)
    p.add_argument("--pinning", choices=("dense", "none"), default="dense")
    p.add_argument("--capacity", type=int)
    p.add_argument("--freq", type=float, help="frequency tag in GHz (default: detected)")
    p.add_argument("--repeat", type=int, default=1)
    p.add_argument("--out", help="records file to append to (default: stdout)")
    p.add_argument("--format", choices=("csv", "jsonl"))
    topology_arg(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("calibrate", help="fit a model bundle from measurement records")
    p.add_argument("records", nargs="+")
    p.add_argument("--out", help="where to write the bundle JSON")
    p.add_argument("--reference", help="implementation used for lambda runs")
    p.add_argument("--f0", type=float, help="frequency (GHz) of the lambda runs")
    p.add_argument("--format", choices=("csv", "jsonl"))
    topology_arg(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("predict", help="evaluate a bundle over a workload grid")
    p.add_argument("--bundle", help="bundle JSON (default: calibrate the built-in synthetic machine)")
    p.add_argument("--impl", action="append")
    p.add_argument("--pairs", default="4", help="pair counts, list or start:stop:step")
    p.add_argument("--freq", default="3.4", help="frequencies in GHz, list or start:stop:step")
    p.add_argument("--pw", default="0:2000:50", help="parallel work grid")
    p.add_argument("--out", help="CSV destination (default: stdout)")
    p.add_argument("--json", help="also write the full report as JSON here ('-' for stdout)")
    topology_arg(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("synth", help="generate records from a planted machine")
    p.add_argument("--plant", help="planted machine JSON (default: built-in)")
    p.add_argument("--save-plant")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--quantum", type=float, default=0.0)
    p.add_argument("--width", type=float, default=0.0)
    p.add_argument("--freq", help="queue-run frequencies in GHz")
    p.add_argument("--out")
    p.add_argument("--format", choices=("csv", "jsonl"))
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("movidius", help="evaluate or fit the Myriad1 power model (mW)")
    p.add_argument("--units", action="append", help="functional unit(s), comma separated")
    p.add_argument("--shaves", type=int, default=8)
    p.add_argument("--fit", help="CSV with benchmark,shaves,power_mw columns")
    p.add_argument("--p-act", type=float, help="prior for P_act when the data cannot separate it")
    p.set_defaults(func=cmd_movidius)

    p = sub.add_parser("selftest", help="run the built-in round-trip checks")
    p.set_defaults(func=cmd_selftest)
    return parser


def _error_json(exc: BaseException) -> dict:
    doc = {"error": type(exc).__name__, "message": str(exc)}
    for attr in ("missing", "line", "column", "diagnostics"):
        value = getattr(exc, attr, None)
        if value:
            doc[attr] = list(value) if isinstance(value, tuple) else value
    return doc


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(json.dumps(_error_json(exc), default=str), file=sys.stderr)
        return EXIT_USAGE
    except (QEnergyError, OSError, ValueError, KeyError) as exc:
        print(json.dumps(_error_json(exc), default=str), file=sys.stderr)
        return EXIT_FAILURE


run_cli = main

if __name__ == "__main__":
    sys.exit(main())
