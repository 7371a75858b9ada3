"""Snapshot files and time series.

A snapshot is a directory holding one raw file per field (little-endian
float64, x1 varying fastest) and ``header.txt``::

    format fdmlayer-snapshot 1
    dims <n1> <n2>
    spacing <dx> <dy>
    step <k>
    t <float>
    eps13 <float>
    scalar <name> <float>           (any number of lines)
    field <name> <file> <sha256>    (one line per field)

Floats are written with ``repr`` so the header round-trips exactly.
"""
from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FORMAT_LINE = "format fdmlayer-snapshot 1"
HEADER = "header.txt"


class ChecksumError(ValueError):
    """Payload does not match its header (size or digest)."""


@dataclass
class Snapshot:
    step: int
    t: float
    eps13: float
    spacing: tuple[float, float]
    fields: dict[str, np.ndarray]
    scalars: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        shapes = {np.shape(v) for v in self.fields.values()}
        if len(shapes) > 1:
            raise ValueError(f"snapshot fields disagree in shape: {sorted(shapes)}")
        if any(np.ndim(v) != 2 for v in self.fields.values()):
            raise ValueError("snapshot fields must be 2D (n1, n2)")
        for name, value in [("t", self.t), ("eps13", self.eps13), *self.scalars.items()]:
            if not math.isfinite(value):
                raise ValueError(f"snapshot scalar {name} is not finite")
        for name in self.fields:
            if not name.replace("_", "").isalnum():
                raise ValueError(f"invalid field name {name!r}")

    @property
    def dims(self) -> tuple[int, int]:
        return next(iter(self.fields.values())).shape if self.fields else (0, 0)


def encode_field(a: np.ndarray) -> bytes:
    return np.asarray(a, dtype="<f8").tobytes(order="F")


def decode_field(data: bytes, dims: tuple[int, int]) -> np.ndarray:
    n = dims[0] * dims[1]
    if len(data) != 8 * n:
        raise ChecksumError(f"payload holds {len(data) // 8} values, header dims need {n}")
    return np.frombuffer(data, dtype="<f8").reshape(dims, order="F").astype(float)


def write_snapshot(directory, snap: Snapshot) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    n1, n2 = snap.dims
    lines = [FORMAT_LINE, f"dims {n1} {n2}", f"spacing {snap.spacing[0]!r} {snap.spacing[1]!r}",
             f"step {snap.step}", f"t {float(snap.t)!r}", f"eps13 {float(snap.eps13)!r}"]
    lines += [f"scalar {k} {float(v)!r}" for k, v in snap.scalars.items()]
    for name, a in snap.fields.items():
        payload = encode_field(a)
        fname = f"{name}.f64"
        (d / fname).write_bytes(payload)
        lines.append(f"field {name} {fname} {hashlib.sha256(payload).hexdigest()}")
    (d / HEADER).write_text("\n".join(lines) + "\n")
    return d


def _parse_header(text: str) -> dict:
    lines = text.splitlines()
    if not lines or lines[0].strip() != FORMAT_LINE:
        raise ValueError("not a snapshot header")
    out = {"scalars": {}, "fields": []}
    for line in lines[1:]:
        parts = line.split()
        if not parts:
            continue
        key = parts[0]
        try:
            if key == "dims":
                out["dims"] = (int(parts[1]), int(parts[2]))
            elif key == "spacing":
                out["spacing"] = (float(parts[1]), float(parts[2]))
            elif key == "step":
                out["step"] = int(parts[1])
            elif key in ("t", "eps13"):
                out[key] = float(parts[1])
            elif key == "scalar":
                out["scalars"][parts[1]] = float(parts[2])
            elif key == "field":
                out["fields"].append((parts[1], parts[2], parts[3]))
            else:
                raise ValueError(f"unknown header key {key!r}")
        except IndexError:
            raise ValueError(f"truncated header line: {line!r}") from None
    missing = {"dims", "spacing", "step", "t", "eps13"} - out.keys()
    if missing:
        raise ValueError(f"header lacks {sorted(missing)}")
    return out


def read_snapshot(directory) -> Snapshot:
    """Read a snapshot, checking sizes and digests of every payload."""
    d = Path(directory)
    h = _parse_header((d / HEADER).read_text())
    fields = {}
    for name, fname, digest in h["fields"]:
        payload = (d / fname).read_bytes()
        if hashlib.sha256(payload).hexdigest() != digest:
            raise ChecksumError(f"checksum mismatch for field {name}")
        fields[name] = decode_field(payload, h["dims"])
    return Snapshot(h["step"], h["t"], h["eps13"], h["spacing"], fields, h["scalars"])


def write_series(path, columns, rows) -> Path:
    """CSV with a header row; floats written with ``repr`` (exact round trip)."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return p


def read_series(path) -> dict[str, np.ndarray]:
    with Path(path).open(newline="") as fh:
        r = csv.reader(fh)
        columns = next(r)
        data = np.array([[float(v) for v in row] for row in r], dtype=float).reshape(-1, len(columns))
    return {c: data[:, i] for i, c in enumerate(columns)}
