"""Writers and readers for ledgers, snapshots and summaries.

Floats are written with ``repr`` so that every file reads back bit for bit.
"""

from __future__ import annotations

import csv
import os
from pathlib import Path

import numpy as np

from .grid import Domain, Field


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return str(v)


def _parse(s: str):
    if s == "true":
        return True
    if s == "false":
        return False
    if s == "":
        return None
    # keep the text unless it is exactly what the writer emits for a number,
    # so hex digests such as "12e4..." stay strings
    for conv in (int, float):
        try:
            v = conv(s)
        except ValueError:
            continue
        if _fmt(v) == s:
            return v
    return s


def write_table(path, rows: list[dict], columns: list[str] | None = None) -> Path:
    """CSV with a header row; columns default to the keys of the first row."""
    path = Path(path)
    if columns is None:
        columns = list(rows[0]) if rows else []
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row.get(c)) for c in columns])
    return path


def read_table(path, text_columns: tuple[str, ...] = ()) -> list[dict]:
    """Rows as dicts; values in ``text_columns`` are kept as strings."""
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = next(r)
        return [{h: (x if h in text_columns else _parse(x)) for h, x in zip(header, row)} for row in r]


write_ledger = write_table


def read_ledger(path) -> list[dict]:
    return read_table(path, text_columns=("rho_digest",))


def _header(domain: Domain, time: float) -> str:
    cells = "x".join(str(c) for c in domain.cells)
    extent = "x".join(repr(e) for e in domain.extent)
    return f"dim={domain.dim} cells={cells} extent={extent} time={time!r}"


def _parse_header(line: str) -> tuple[int, tuple[int, ...], tuple[float, ...], float]:
    kv = dict(item.split("=", 1) for item in line.strip().lstrip("#").split())
    cells = tuple(int(c) for c in kv["cells"].split("x"))
    extent = tuple(float(e) for e in kv["extent"].split("x")) if "extent" in kv else (1.0,) * len(cells)
    return int(kv["dim"]), cells, extent, float(kv["time"])


def write_snapshot_bin(path, field: Field, time: float) -> Path:
    """One text header line, then little-endian float64 values in C order."""
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write((_header(field.domain, time) + "\n").encode("ascii"))
        fh.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())
    return path


def read_snapshot_bin(path) -> tuple[np.ndarray, dict]:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii")
        data = fh.read()
    dim, cells, extent, time = _parse_header(header)
    values = np.frombuffer(data, dtype="<f8").reshape(cells)
    return values, {"dim": dim, "cells": cells, "extent": extent, "time": time}


def write_snapshot_csv(path, field: Field, time: float) -> Path:
    """Header comment, then one row per cell: center coordinates and value."""
    path = Path(path)
    d = field.domain
    coords = [c.ravel() for c in d.centers()]
    names = ["x", "y", "z"][: d.dim]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("# " + _header(d, time) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names + ["value"])
        for i, v in enumerate(field.values.ravel()):
            w.writerow([repr(float(c[i])) for c in coords] + [repr(float(v))])
    return path


def read_snapshot_csv(path) -> tuple[np.ndarray, dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        header = fh.readline()
        r = csv.reader(fh)
        next(r)
        vals = [float(row[-1]) for row in r]
    dim, cells, extent, time = _parse_header(header)
    return np.array(vals).reshape(cells), {"dim": dim, "cells": cells, "extent": extent, "time": time}


def write_summary(path, items: dict) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for k, v in items.items():
            fh.write(f"{k} = {_fmt(v)}\n")
    return path


def read_summary(path) -> dict:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if "=" in line:
                k, v = line.rstrip("\n").split(" = ", 1)
                out[k] = _parse(v)
    return out


def ensure_dir(path) -> Path:
    os.makedirs(path, exist_ok=True)
    return Path(path)
