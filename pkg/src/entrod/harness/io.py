"""Sequence input and record output."""

from __future__ import annotations

import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List

import numpy as np

from entrod.core import Sequence
from entrod.harness.config import ConfigError

MAGIC = b"ENTROD-F64-SEQ\0\0"
FIELDS = ("spec_hash", "replicate", "n", "metric", "value", "flag")


@dataclass(frozen=True)
class RunRecord:
    spec_hash: str
    replicate: int
    n: int
    metric: str
    value: float
    flag: str = ""
    wall_clock: float = field(default=0.0, compare=False)  # seconds; never written

    def row(self) -> dict:
        return {
            "spec_hash": self.spec_hash,
            "replicate": self.replicate,
            "n": self.n,
            "metric": self.metric,
            "value": format_value(self.value),
            "flag": self.flag,
        }


def format_value(v: float) -> str:
    # repr round-trips doubles and is platform independent
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


def canonical(records: Iterable[RunRecord]) -> List[RunRecord]:
    """Stable order by ``(replicate, n)``; metric order within a point is kept."""
    return sorted(records, key=lambda r: (r.replicate, r.n))


def render(records: Iterable[RunRecord], fmt: str) -> bytes:
    rows = [r.row() for r in records]
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=FIELDS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
        return buf.getvalue().encode()
    if fmt == "jsonl":
        out = []
        for r in rows:
            r = dict(r, value=_json_value(r["value"]))
            out.append(json.dumps(r, separators=(",", ":")))
        return ("\n".join(out) + ("\n" if out else "")).encode()
    raise ConfigError(f"unknown format {fmt!r}")


def _json_value(s: str):
    v = float(s)
    return v if math.isfinite(v) else s


def write_records(records, path, fmt: str) -> None:
    data = render(records, fmt)
    if path is None or str(path) == "-":
        sys.stdout.buffer.write(data)
        sys.stdout.flush()
    else:
        Path(path).write_bytes(data)


def read_sequence(path) -> Sequence:
    """Binary float64 with the magic header, else one number per line.

    Text files whose entries are all nonnegative integers are symbolic.
    """
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise ConfigError(f"cannot read input {path}: {e}") from e
    if data.startswith(MAGIC):
        body = data[len(MAGIC):]
        if len(body) % 8:
            raise ConfigError(f"{path}: binary payload is not a whole number of float64 values")
        return Sequence.real(np.frombuffer(body, dtype="<f8").astype(np.float64))
    try:
        tokens = [ln.strip() for ln in data.decode("utf-8").splitlines()]
    except UnicodeDecodeError as e:
        raise ConfigError(f"{path}: neither text nor a recognized binary sequence") from e
    tokens = [t for t in tokens if t and not t.startswith("#")]
    if not tokens:
        raise ConfigError(f"{path}: empty sequence")
    if all(t.isdigit() for t in tokens):
        return Sequence.symbolic(np.array([int(t) for t in tokens], dtype=np.int64))
    try:
        return Sequence.real(np.array([float(t) for t in tokens]))
    except ValueError as e:
        raise ConfigError(f"{path}: {e}") from e


def write_binary_sequence(values, path) -> None:
    Path(path).write_bytes(MAGIC + np.asarray(values, dtype="<f8").tobytes())
