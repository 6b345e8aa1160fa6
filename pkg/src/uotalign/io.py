"""File formats: headerless CSV matrices, P2 PGM heatmaps and JSON arrays."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import InputFormatError


def format_float(x: float) -> str:
    # repr round-trips exactly, which keeps CSV output byte-stable
    return repr(float(x))


def write_matrix_csv(path, values) -> None:
    arr = np.atleast_2d(np.asarray(values, dtype=float))
    with open(path, "w", newline="") as fh:
        for row in arr:
            fh.write(",".join(format_float(x) for x in row))
            fh.write("\n")


def read_matrix_csv(path) -> np.ndarray:
    """Read a headerless CSV of decimal reals into a 2-D float array.

    Errors name the file and the 1-based row that failed to parse.
    """
    path = Path(path)
    rows = []
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise InputFormatError(f"{path}: cannot open ({exc.strerror})") from exc
    with fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                vals = [float(cell) for cell in row]
            except ValueError:
                raise InputFormatError(f"{path}: row {lineno}: non-numeric value in {row!r}") from None
            if not all(np.isfinite(vals)):
                raise InputFormatError(f"{path}: row {lineno}: non-finite value")
            if rows and len(vals) != len(rows[0]):
                raise InputFormatError(
                    f"{path}: row {lineno}: expected {len(rows[0])} columns, found {len(vals)}"
                )
            rows.append(vals)
    if not rows:
        raise InputFormatError(f"{path}: no data rows")
    return np.array(rows, dtype=float)


def pgm_pixels(values) -> np.ndarray:
    """Scale a nonnegative matrix linearly so its maximum maps to 255."""
    arr = np.atleast_2d(np.asarray(values, dtype=float))
    top = arr.max() if arr.size else 0.0
    if top <= 0:
        return np.zeros(arr.shape, dtype=int)
    return np.rint(np.clip(arr, 0.0, None) / top * 255.0).astype(int)


def write_pgm(path, values) -> None:
    """Write a plain (P2) PGM, one matrix row per image row."""
    pix = pgm_pixels(values)
    height, width = pix.shape
    lines = ["P2", f"{width} {height}", "255"]
    lines += [" ".join(str(p) for p in row) for row in pix]
    Path(path).write_text("\n".join(lines) + "\n")


def read_pgm(path) -> np.ndarray:
    tokens = []
    for line in Path(path).read_text().splitlines():
        tokens += line.split("#", 1)[0].split()
    if not tokens or tokens[0] != "P2":
        raise InputFormatError(f"{path}: not a P2 PGM file")
    width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    pix = np.array([int(t) for t in tokens[4:]], dtype=int)
    if pix.size != width * height or np.any(pix > maxval) or np.any(pix < 0):
        raise InputFormatError(f"{path}: pixel data does not match the {width}x{height} header")
    return pix.reshape(height, width)


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=False) + "\n")


def read_json(path):
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except OSError as exc:
        raise InputFormatError(f"{path}: cannot open ({exc.strerror})") from exc
    except json.JSONDecodeError as exc:
        raise InputFormatError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc


def arrays_to_json(arrays: dict) -> dict:
    """Named arrays to ``{name: {"shape": [...], "data": [flat values]}}``."""
    return {
        name: {"shape": list(np.shape(a)), "data": np.asarray(a, dtype=float).ravel().tolist()}
        for name, a in arrays.items()
    }


def arrays_from_json(obj: dict) -> dict:
    out = {}
    for name, entry in obj.items():
        try:
            shape = tuple(int(s) for s in entry["shape"])
            out[name] = np.asarray(entry["data"], dtype=float).reshape(shape)
        except (KeyError, TypeError, ValueError) as exc:
            raise InputFormatError(f"parameter {name!r}: bad shaped-array entry ({exc})") from exc
    return out
