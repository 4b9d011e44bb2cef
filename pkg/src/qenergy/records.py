"""Measurement records and their CSV / JSON-lines interchange formats.

Besides queue benchmark runs, two kinds of micro-benchmark results travel in
the same record type:

* ``impl = "opreg:<op>"``: a register-only instruction loop used to separate
  static, active and dynamic power.  ``n`` counts thread *pairs* as for queue
  runs, so the loop ran on ``2n`` densely pinned threads.
* ``impl = "cas-latency"``: ``ops_ok`` compare-and-swap operations measured
  over ``duration`` seconds, with ``loc`` telling whether the cache line came
  from the same socket.
"""

from __future__ import annotations

import csv
import io
import json
import math
import unicodedata
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import IO, Iterable

from .errors import SchemaError
from .model import WorkloadPoint

OPREG_PREFIX = "opreg:"
CAS_LATENCY = "cas-latency"

PINNING_TAGS = ("dense", "custom", "unpinned")
LOC_TAGS = ("on", "off", "mixed")
SOURCES = ("bench", "synth", "external")
POWER_FIELDS = ("p_cpu", "p_mem", "p_unc")

COLUMNS = (
    "impl", "n", "f", "pw", "duration", "ops_ok", "sockets_active",
    "pinning", "loc", "p_cpu", "p_mem", "p_unc", "source",
)


@dataclass(frozen=True)
class MeasurementRecord:
    impl: str
    n: int
    f: float
    pw: float
    duration: float
    ops_ok: float
    sockets_active: int
    pinning: str = "dense"
    loc: str = "on"
    p_cpu: float | None = None
    p_mem: float | None = None
    p_unc: float | None = None
    source: str = "external"
    meta: dict = field(default_factory=dict, compare=False, hash=False, repr=False)

    def __post_init__(self):
        if not self.impl or any(unicodedata.category(c) in ("Cc", "Cs") for c in self.impl):
            raise SchemaError(f"invalid impl id {self.impl!r}", column="impl")
        if self.n < 1:
            raise SchemaError("n must be >= 1", column="n")
        if not (self.f > 0 and math.isfinite(self.f)):
            raise SchemaError("frequency must be a positive number", column="f")
        if self.pw < 0:
            raise SchemaError("pw must be >= 0", column="pw")
        if not self.duration > 0:
            raise SchemaError("duration must be > 0", column="duration")
        if not self.ops_ok >= 0:
            raise SchemaError("ops_ok must be >= 0", column="ops_ok")
        if self.sockets_active < 1:
            raise SchemaError("sockets_active must be >= 1", column="sockets_active")
        if self.pinning not in PINNING_TAGS:
            raise SchemaError(f"pinning must be one of {PINNING_TAGS}", column="pinning")
        if self.loc not in LOC_TAGS:
            raise SchemaError(f"loc must be one of {LOC_TAGS}", column="loc")
        if self.source not in SOURCES:
            raise SchemaError(f"source must be one of {SOURCES}", column="source")
        present = [getattr(self, p) is not None for p in POWER_FIELDS]
        if any(present) and not all(present):
            raise SchemaError("power columns must be all present or all absent", column="p_cpu")

    @property
    def throughput(self) -> float:
        return self.ops_ok / self.duration

    @property
    def threads(self) -> int:
        return 2 * self.n

    @property
    def has_power(self) -> bool:
        return self.p_cpu is not None

    @property
    def point(self) -> WorkloadPoint:
        return WorkloadPoint(self.impl, self.n, self.f, self.pw)


_INT_FIELDS = {"n", "sockets_active"}
_FLOAT_FIELDS = {"f", "pw", "duration", "ops_ok"}
_STR_FIELDS = {"impl", "pinning", "loc", "source"}


def _format(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _coerce(name: str, raw):
    if name in POWER_FIELDS:
        if raw is None or raw == "":
            return None
        return float(raw)
    if raw is None or raw == "":
        raise ValueError(f"column {name!r} is empty")
    if name in _INT_FIELDS:
        if isinstance(raw, float):
            raise ValueError(f"column {name!r} must be an integer")
        return int(raw)
    if name in _FLOAT_FIELDS:
        if isinstance(raw, bool):
            raise ValueError(f"column {name!r} must be a number")
        return float(raw)
    if not isinstance(raw, str):
        raise ValueError(f"column {name!r} must be a string")
    return raw


def _build(row: dict, line: int) -> MeasurementRecord:
    kwargs = {}
    for name in COLUMNS:
        try:
            kwargs[name] = _coerce(name, row.get(name))
        except (TypeError, ValueError) as exc:
            raise SchemaError(str(exc), line=line, column=name) from None
    try:
        return MeasurementRecord(**kwargs)
    except SchemaError as exc:
        raise SchemaError(str(exc), line=line, column=exc.column) from None


def _check_header(header: Iterable[str]) -> None:
    header = list(header)
    missing = [c for c in COLUMNS if c not in header]
    if missing:
        raise SchemaError(f"missing column(s): {', '.join(missing)}", line=1, column=missing[0])
    unknown = [c for c in header if c not in COLUMNS]
    if unknown:
        raise SchemaError(f"unknown column(s): {', '.join(unknown)}", line=1, column=unknown[0])


def _open(source, mode):
    if isinstance(source, (str, Path)):
        return open(source, mode, encoding="utf-8", newline=""), True
    return source, False


def _guess_format(source, fmt):
    if fmt is not None:
        return fmt
    if isinstance(source, (str, Path)) and str(source).endswith((".jsonl", ".ndjson")):
        return "jsonl"
    return "csv"


def parse_measurements(source: str | Path | IO[str], fmt: str | None = None) -> list[MeasurementRecord]:
    """Read records from a path or text stream.

    Either every row parses or :class:`SchemaError` is raised listing every
    malformed row by line number.
    """
    fmt = _guess_format(source, fmt)
    stream, owned = _open(source, "r")
    try:
        text = stream.read()
    finally:
        if owned:
            stream.close()

    records, errors = [], []
    if fmt == "csv":
        reader = csv.DictReader(io.StringIO(text, newline=""))
        if reader.fieldnames is None:
            raise SchemaError("empty file: header row is mandatory", line=1)
        _check_header(reader.fieldnames)
        for row in reader:
            line = reader.line_num
            if None in row or any(v is None for v in row.values()):
                errors.append(SchemaError("wrong number of fields", line=line))
                continue
            try:
                records.append(_build(row, line))
            except SchemaError as exc:
                errors.append(exc)
    elif fmt == "jsonl":
        for line, raw in enumerate(text.splitlines(), start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
                if not isinstance(obj, dict):
                    raise SchemaError("each line must hold a JSON object", line=line)
                meta = obj.pop("meta", {})
                _check_header(obj.keys())
                rec = _build(obj, line)
                if meta:
                    rec.meta.update(meta)
                records.append(rec)
            except json.JSONDecodeError as exc:
                errors.append(SchemaError(f"invalid JSON: {exc.msg}", line=line))
            except SchemaError as exc:
                errors.append(exc if exc.line is not None else SchemaError(str(exc), line=line, column=exc.column))
    else:
        raise SchemaError(f"unknown format {fmt!r}")

    if errors:
        first = errors[0]
        summary = "; ".join(str(e) for e in errors[:10])
        raise SchemaError(f"{len(errors)} malformed row(s): {summary}", column=first.column)
    return records


def write_measurements(
    records: Iterable[MeasurementRecord],
    dest: str | Path | IO[str],
    fmt: str | None = None,
    append: bool = False,
) -> None:
    fmt = _guess_format(dest, fmt)
    write_header = True
    if append and isinstance(dest, (str, Path)) and Path(dest).exists() and Path(dest).stat().st_size:
        write_header = False
    stream, owned = _open(dest, "a" if append else "w")
    try:
        if fmt == "csv":
            writer = csv.writer(stream, lineterminator="\n")
            if write_header:
                writer.writerow(COLUMNS)
            for rec in records:
                writer.writerow([_format(getattr(rec, c)) for c in COLUMNS])
        elif fmt == "jsonl":
            for rec in records:
                obj = {c: getattr(rec, c) for c in COLUMNS}
                if rec.meta:
                    obj["meta"] = rec.meta
                stream.write(json.dumps(obj, sort_keys=True) + "\n")
        else:
            raise SchemaError(f"unknown format {fmt!r}")
    finally:
        if owned:
            stream.close()


def records_to_csv(records: Iterable[MeasurementRecord]) -> str:
    buf = io.StringIO(newline="")
    write_measurements(records, buf, fmt="csv")
    return buf.getvalue()


def record_fields() -> tuple[str, ...]:
    return tuple(f.name for f in fields(MeasurementRecord) if f.name != "meta")
