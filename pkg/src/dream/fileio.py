"""Atomic file writes, round-trip float formatting, and PGM export.

All real numbers in CSV output use 17 significant digits so that
parse(print(x)) == x for 64-bit floats. Every write lands in a temp file
in the target directory first and is renamed into place.
"""

from __future__ import annotations

import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .tensor import Tensor


def fmt_float(x: float) -> str:
    return format(float(x), ".17g")


def fmt_cell(value) -> str:
    if value is None or value == "":
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, str):
        return value
    return fmt_float(value)


def write_bytes_atomic(path: Path, payload: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_text_atomic(path: Path, text: str) -> None:
    write_bytes_atomic(path, text.encode("utf-8"))


def write_csv(path: Path, header: str, rows: Iterable[Sequence]) -> None:
    lines = [header]
    lines.extend(",".join(fmt_cell(cell) for cell in row) for row in rows)
    write_text_atomic(path, "\n".join(lines) + "\n")


def write_pgm(path: Path, image: Tensor | np.ndarray) -> None:
    """8-bit binary PGM; pixel p in [-1, 1] maps to round((p+1)/2 * 255)."""
    arr = image.data if isinstance(image, Tensor) else np.asarray(image)
    if arr.ndim != 2:
        raise ValueError(f"write_pgm: expected a 2-d image, got shape {list(arr.shape)}")
    levels = np.rint((np.clip(arr, -1.0, 1.0) + 1.0) / 2.0 * 255.0).astype(np.uint8)
    h, w = levels.shape
    write_bytes_atomic(path, f"P5\n{w} {h}\n255\n".encode("ascii") + levels.tobytes())


def read_pgm(path: Path) -> np.ndarray:
    """Inverse of write_pgm, returning float pixels in [-1, 1]."""
    raw = Path(path).read_bytes()
    fields: list[bytes] = []
    pos = 0
    while len(fields) < 4:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        fields.append(raw[start:pos])
    if fields[0] != b"P5":
        raise ValueError(f"read_pgm: not a binary PGM: {path}")
    w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 255:
        raise ValueError(f"read_pgm: expected maxval 255, got {maxval}")
    pos += 1
    levels = np.frombuffer(raw, dtype=np.uint8, count=w * h, offset=pos).reshape(h, w)
    return levels.astype(np.float64) / 255.0 * 2.0 - 1.0


def export_pair(pair, basename: Path) -> list[Path]:
    """Dump one conditioning/target pair as '<basename>_lr.pgm' and
    '<basename>_hr.pgm' for visual inspection."""
    basename = Path(basename)
    paths = [basename.with_name(basename.name + "_lr.pgm"),
             basename.with_name(basename.name + "_hr.pgm")]
    write_pgm(paths[0], pair.x0)
    write_pgm(paths[1], pair.y0)
    return paths
