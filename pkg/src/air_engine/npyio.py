"""Strict NPY v1.0 reader/writer for float32 arrays.

Only the exact on-disk dialect the engine emits is accepted back:
magic ``\\x93NUMPY``, version (1, 0), little-endian u16 header length, and a
header dict with ``descr`` '<f4', ``fortran_order`` False, and an explicit
shape tuple of one or two dimensions. Anything else is rejected rather than
coerced, so files round-trip bit-exactly.
"""
from __future__ import annotations

import ast
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import DomainError, FormatError

MAGIC = b"\x93NUMPY"
VERSION = (1, 0)

__all__ = ["read_npy", "write_npy"]


def _parse_header(raw: bytes) -> dict:
    try:
        header = ast.literal_eval(raw.decode("latin1"))
    except (ValueError, SyntaxError) as exc:
        raise FormatError(f"unparseable NPY header: {exc}") from None
    if not isinstance(header, dict):
        raise FormatError("NPY header is not a dict literal")
    return header


def read_npy(path) -> np.ndarray:
    """Read a strict NPY v1.0 file into a finite float32 array (1-D or 2-D)."""
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from None

    if len(blob) < 10 or blob[:6] != MAGIC:
        raise FormatError(f"{path}: bad NPY magic")
    if (blob[6], blob[7]) != VERSION:
        raise FormatError(f"{path}: unsupported NPY version {(blob[6], blob[7])}")
    header_len = int.from_bytes(blob[8:10], "little")
    if len(blob) < 10 + header_len:
        raise FormatError(f"{path}: truncated NPY header")
    header = _parse_header(blob[10 : 10 + header_len])

    if header.get("descr") != "<f4":
        raise FormatError(f"{path}: descr must be '<f4', got {header.get('descr')!r}")
    if header.get("fortran_order") is not False:
        raise FormatError(f"{path}: fortran_order must be False")
    shape = header.get("shape")
    if (
        not isinstance(shape, tuple)
        or not 1 <= len(shape) <= 2
        or not all(isinstance(s, int) and s >= 0 for s in shape)
    ):
        raise FormatError(f"{path}: shape must be a 1-D or 2-D tuple, got {shape!r}")

    count = 1
    for s in shape:
        count *= s
    data = blob[10 + header_len :]
    if len(data) != count * 4:
        raise FormatError(
            f"{path}: payload holds {len(data)} bytes, expected {count * 4}"
        )
    arr = np.frombuffer(data, dtype="<f4").reshape(shape)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{path}: contains non-finite entries")
    return np.ascontiguousarray(arr)


def write_npy(path, arr: np.ndarray) -> None:
    """Write a float32 array as strict NPY v1.0, atomically (temp file + rename)."""
    path = Path(path)
    arr = np.ascontiguousarray(np.asarray(arr, dtype="<f4"))
    if arr.ndim not in (1, 2):
        raise FormatError(f"only 1-D or 2-D arrays are written, got {arr.ndim}-D")

    shape_repr = f"({arr.shape[0]},)" if arr.ndim == 1 else str(arr.shape)
    header = f"{{'descr': '<f4', 'fortran_order': False, 'shape': {shape_repr}, }}"
    # pad so magic + version + length field + header is a multiple of 64 bytes
    unpadded = len(MAGIC) + 2 + 2 + len(header) + 1
    header = header + " " * (-unpadded % 64) + "\n"

    blob = (
        MAGIC
        + bytes(VERSION)
        + len(header).to_bytes(2, "little")
        + header.encode("latin1")
        + arr.tobytes(order="C")
    )
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
