"""
One ResultRecord per (point, backend, method); CSV and JSON carry exactly the same fields.
"""
import csv
import json
import math
import os
from typing import Iterable, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator

N_EIGS = 9
EIG_FIELDS = [f"eig{i}" for i in range(1, N_EIGS + 1)]
HEADER = ["d", "gamma", "alpha", "V", "N", "p", "backend", "method", "M", "gap",
          *EIG_FIELDS, "zeros", "t_asm", "t_eig"]
_INT_FIELDS = {"d", "N", "p", "M", "zeros"}
_STR_FIELDS = {"backend", "method"}

PointKey = Tuple[int, float, float, float, int, int, str, str]


class ResultRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    d: int
    gamma: float
    alpha: float
    V: float
    N: int
    p: int
    backend: Literal["grad", "direct"]
    method: Literal["nullspace", "corrected"]
    M: int
    gap: float
    eigs: Tuple[float, ...] = Field(default=(), description="smallest eigenvalues, NaN padded to nine")
    zeros: int = 0
    t_asm: float = 0.0
    t_eig: float = 0.0

    @field_validator("eigs", mode="before")
    @classmethod
    def _pad(cls, v):
        vals = [float("nan") if x is None else float(x) for x in list(v)[:N_EIGS]]
        return tuple(vals + [float("nan")] * (N_EIGS - len(vals)))

    def key(self) -> PointKey:
        return (self.d, self.gamma, self.alpha, self.V, self.N, self.p, self.backend, self.method)

    def row(self) -> dict:
        out = self.model_dump(exclude={"eigs"})
        out.update(zip(EIG_FIELDS, self.eigs))
        return {k: out[k] for k in HEADER}

    @classmethod
    def from_row(cls, row: dict) -> "ResultRecord":
        vals = {}
        for k in HEADER:
            if k not in row:
                raise ValueError(f"record is missing field {k!r}")
            vals[k] = _parse(k, row[k])
        vals["eigs"] = [vals.pop(k) for k in EIG_FIELDS]
        return cls(**vals)


def point_key(d: int, gamma: float, alpha: float, V: float, N: int, p: int, backend: str, method: str) -> PointKey:
    return (int(d), float(gamma), float(alpha), float(V), int(N), int(p), backend, method)


def point_label(d: int, gamma: float, alpha: float, V: float, N: int, p: int, backend: str) -> str:
    """File-name-safe label of a (point, backend) pair."""
    return f"d{d}_g{gamma:g}_a{alpha:g}_V{V:g}_N{N}_p{p}_{backend}"


def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, int) and not isinstance(value, bool):
        return str(value)
    x = float(value)
    return "nan" if math.isnan(x) else "%.17g" % x


def _parse(name: str, raw):
    if name in _STR_FIELDS:
        return str(raw)
    if name in _INT_FIELDS:
        return int(raw)
    if raw is None or raw == "":
        return float("nan")
    return float(raw)


def _json_value(value):
    if isinstance(value, float) and math.isnan(value):
        return None
    return value


# ------------------------------------------------------------------------------
# Emit / load
# ------------------------------------------------------------------------------
def detect_format(path: str, fmt: Optional[str] = None) -> str:
    if fmt:
        return fmt
    return "json" if path.lower().endswith(".json") else "csv"


def emit(records: Iterable[ResultRecord], fmt: str, path: str, allow_empty: bool = False) -> str:
    """Write all records to path (replacing it); the file is swapped in whole."""
    records = list(records)
    if not records and not allow_empty:
        raise ValueError("no records to emit")
    fmt = detect_format(path, fmt)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="") as fh:
        if fmt == "csv":
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(HEADER)
            for r in records:
                w.writerow([_fmt(v) for v in r.row().values()])
        elif fmt == "json":
            rows = [{k: _json_value(v) for k, v in r.row().items()} for r in records]
            json.dump(rows, fh, indent=2)
            fh.write("\n")
        else:
            raise ValueError(f"unknown format {fmt!r}")
    os.replace(tmp, path)
    return path


def load(path: str, fmt: Optional[str] = None) -> List[ResultRecord]:
    if not os.path.isfile(path):
        return []
    fmt = detect_format(path, fmt)
    with open(path, "r", newline="") as fh:
        if fmt == "csv":
            reader = csv.DictReader(fh)
            if reader.fieldnames is not None and list(reader.fieldnames) != HEADER:
                raise ValueError(f"{path}: unexpected CSV header {reader.fieldnames}")
            rows = list(reader)
        else:
            text = fh.read().strip()
            rows = json.loads(text) if text else []
    return [ResultRecord.from_row(r) for r in rows]
