"""Reading and writing matrices as CSV or PMAT1 binary.

CSV: one matrix row per line, comma separated decimal values, no header.

PMAT1: the 5 ASCII bytes ``PMAT1``, then ``rows`` and ``cols`` as unsigned
64-bit little-endian integers, then ``rows * cols`` IEEE-754 float64
little-endian values in column-major order.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .exceptions import MatrixFormatError, ValidationError

MAGIC = b"PMAT1"
_HEADER = struct.Struct("<QQ")


def _is_binary(path: Path) -> bool:
    if path.suffix.lower() == ".csv":
        return False
    if path.suffix.lower() == ".pmat":
        return True
    with open(path, "rb") as fh:
        return fh.read(len(MAGIC)) == MAGIC


def _check_finite(a: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(a)):
        bad = np.argwhere(~np.isfinite(a))[0]
        raise ValidationError(f"non-finite value at row {bad[0] + 1}, column {bad[1] + 1}")
    return a


def read_csv(path) -> np.ndarray:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = [float(tok) for tok in line.split(",")]
            except ValueError as exc:
                raise MatrixFormatError(f"unparseable value: {exc}", f"line {lineno}") from None
            if rows and len(row) != len(rows[0]):
                raise MatrixFormatError(
                    f"row has {len(row)} values, expected {len(rows[0])}", f"line {lineno}"
                )
            rows.append(row)
    if not rows:
        raise MatrixFormatError("empty matrix file", "line 1")
    return _check_finite(np.asarray(rows, dtype=np.float64))


def write_csv(path, a) -> None:
    a = np.asarray(a, dtype=np.float64)
    with open(path, "w", encoding="utf-8") as fh:
        for row in a:
            fh.write(",".join(repr(float(x)) for x in row))
            fh.write("\n")


def read_pmat(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < len(MAGIC) or data[: len(MAGIC)] != MAGIC:
        raise MatrixFormatError("missing PMAT1 magic", "offset 0")
    if len(data) < len(MAGIC) + _HEADER.size:
        raise MatrixFormatError("truncated header", f"offset {len(data)}")
    rows, cols = _HEADER.unpack_from(data, len(MAGIC))
    start = len(MAGIC) + _HEADER.size
    if rows == 0 or cols == 0:
        raise MatrixFormatError(f"invalid shape {rows}x{cols}", f"offset {len(MAGIC)}")
    expected = start + 8 * rows * cols
    if len(data) != expected:
        raise MatrixFormatError(
            f"payload size mismatch: expected {expected} bytes, found {len(data)}", f"offset {start}"
        )
    values = np.frombuffer(data, dtype="<f8", offset=start, count=rows * cols)
    a = values.reshape((rows, cols), order="F").astype(np.float64)
    return _check_finite(a)


def write_pmat(path, a) -> None:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError("matrix must be 2-D")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_HEADER.pack(*a.shape))
        fh.write(np.asfortranarray(a).astype("<f8").tobytes(order="F"))


def load_matrix(path) -> np.ndarray:
    """Load a matrix; the format is chosen by extension, then by magic bytes."""
    path = Path(path)
    return read_pmat(path) if _is_binary(path) else read_csv(path)


def save_matrix(path, a) -> None:
    """Save as CSV for ``.csv`` paths, PMAT1 otherwise."""
    path = Path(path)
    _check_finite(np.asarray(a, dtype=np.float64))
    if path.suffix.lower() == ".csv":
        write_csv(path, a)
    else:
        write_pmat(path, a)
