"""File formats: trace CSV, summary CSV, sinogram CSV, binary PGM images.

Floats are written with repr() so values round-trip exactly; empty cells
stand for NaN (unrecorded diagnostics).
"""

from __future__ import annotations

import csv
import math
import os

import numpy as np

from .solver import IterationTrace

__all__ = [
    "TRACE_COLUMNS",
    "write_trace_csv",
    "read_trace_csv",
    "write_pgm",
    "read_pgm",
    "write_sinogram_csv",
    "write_summary_csv",
]

TRACE_COLUMNS = ["k", "epoch", "i", "tau", "sigma", "ratio", "v", "d", "w",
                 "dx_norm", "objective"]

_INT_COLUMNS = {"k", "epoch", "i"}


def _format_cell(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    value = float(value)
    if math.isnan(value):
        return ""
    return repr(value)


def write_trace_csv(path, trace: IterationTrace) -> None:
    """Write one row per iteration with the columns in TRACE_COLUMNS."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_COLUMNS)
        for idx in range(len(trace)):
            writer.writerow([_format_cell(getattr(trace, name)[idx])
                             for name in TRACE_COLUMNS])


def read_trace_csv(path) -> IterationTrace:
    """Read a trace written by write_trace_csv.

    The block count is inferred from the rows sharing the first epoch index,
    which is exact for any complete run.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != TRACE_COLUMNS:
            raise ValueError(f"unexpected trace header {header!r}")
        rows = [row for row in reader if row]
    cols: dict[str, list] = {name: [] for name in TRACE_COLUMNS}
    for row in rows:
        if len(row) != len(TRACE_COLUMNS):
            raise ValueError(f"malformed trace row {row!r}")
        for name, cell in zip(TRACE_COLUMNS, row):
            if name in _INT_COLUMNS:
                cols[name].append(int(cell))
            else:
                cols[name].append(float(cell) if cell else float("nan"))
    epochs = np.asarray(cols["epoch"], dtype=int)
    n_blocks = int((epochs == epochs[0]).sum()) if len(epochs) else 1
    return IterationTrace(
        k=np.asarray(cols["k"], dtype=int),
        epoch=epochs,
        i=np.asarray(cols["i"], dtype=int),
        tau=np.asarray(cols["tau"], dtype=float),
        sigma=np.asarray(cols["sigma"], dtype=float),
        ratio=np.asarray(cols["ratio"], dtype=float),
        v=np.asarray(cols["v"], dtype=float),
        d=np.asarray(cols["d"], dtype=float),
        w=np.asarray(cols["w"], dtype=float),
        dx_norm=np.asarray(cols["dx_norm"], dtype=float),
        objective=np.asarray(cols["objective"], dtype=float),
        n_blocks=n_blocks,
    )


def write_pgm(path, image) -> None:
    """Write a 2-D array in [0, 1] as a binary (P5) PGM, maxval 255.

    Values outside [0, 1] are clipped.
    """
    image = np.asarray(image, dtype=float)
    if image.ndim != 2:
        raise ValueError(f"expected a 2-D image, got shape {image.shape}")
    levels = np.rint(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    height, width = levels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        fh.write(levels.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read a binary (P5) PGM back to a float array in [0, 1]."""
    with open(path, "rb") as fh:
        raw = fh.read()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos])
    pos += 1  # single whitespace byte after maxval
    if tokens[0] != b"P5":
        raise ValueError(f"not a binary PGM: magic {tokens[0]!r}")
    width, height, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise ValueError(f"unsupported maxval {maxval}")
    data = np.frombuffer(raw, dtype=np.uint8, count=width * height, offset=pos)
    return data.reshape(height, width).astype(float) / 255.0


def write_sinogram_csv(path, sino, n_angles: int) -> None:
    """Write a flat sinogram as CSV with one row per projection angle."""
    sino = np.asarray(sino, dtype=float)
    if n_angles <= 0 or sino.size % n_angles:
        raise ValueError(
            f"sinogram of size {sino.size} does not split into {n_angles} rows")
    grid = sino.reshape(n_angles, -1)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in grid:
            writer.writerow([_format_cell(val) for val in row])


def write_summary_csv(path, rows: list[dict]) -> None:
    """Write per-run summary dicts; the header is the first row's key order."""
    if not rows:
        raise ValueError("no summary rows to write")
    header = list(rows[0])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            if set(row) != set(header):
                raise ValueError("summary rows have inconsistent keys")
            writer.writerow([
                _format_cell(row[name]) if isinstance(row[name], (int, float, np.floating, np.integer))
                else str(row[name])
                for name in header
            ])
