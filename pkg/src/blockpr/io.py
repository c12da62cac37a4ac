"""BPR1 binary interchange format plus a debugging CSV form.

BPR1 layout: magic bytes ``BPR1``, u32 little-endian rows, u32 cols, u8
kind flag (0 = vector, 1 = dense, 2 = krbd). A krbd payload continues with
u32 K and K per-block (u32 rows, u32 cols) headers. Entries follow as
float64 little-endian interleaved (re, im) pairs, row-major, blocks in
order for krbd.

The CSV form writes entries as ``a+bi`` text, one matrix row per line
(vectors: one entry per line). It exists for eyeballing small problems;
BPR1 is the canonical format.
"""

from __future__ import annotations

import re
import struct
from pathlib import Path
from typing import Union

import numpy as np

from .core import BlockPartition, KRBDMatrix, as_complex_vector, as_dense_matrix

__all__ = ["load_bpr1", "load_csv", "save_bpr1", "save_csv"]

_MAGIC = b"BPR1"
_KIND_VECTOR = 0
_KIND_DENSE = 1
_KIND_KRBD = 2

Saveable = Union[np.ndarray, KRBDMatrix]


def _entry_bytes(a: np.ndarray) -> bytes:
    # complex128 is exactly interleaved (re, im) float64 pairs
    return np.ascontiguousarray(a, dtype="<c16").tobytes()


def save_bpr1(path: str | Path, obj: Saveable) -> None:
    """Write a vector, dense matrix, or KRBD matrix in BPR1 format."""
    path = Path(path)
    if isinstance(obj, KRBDMatrix):
        rows, cols = obj.shape
        head = [_MAGIC, struct.pack("<IIB", rows, cols, _KIND_KRBD)]
        head.append(struct.pack("<I", obj.n_blocks))
        for b in obj.blocks:
            head.append(struct.pack("<II", b.shape[0], b.shape[1]))
        payload = b"".join(head) + b"".join(_entry_bytes(b) for b in obj.blocks)
    else:
        a = np.asarray(obj, dtype=np.complex128)
        if a.ndim == 1:
            head = _MAGIC + struct.pack("<IIB", len(a), 1, _KIND_VECTOR)
        elif a.ndim == 2:
            head = _MAGIC + struct.pack("<IIB", a.shape[0], a.shape[1], _KIND_DENSE)
        else:
            raise ValueError(f"cannot save array of shape {a.shape}")
        payload = head + _entry_bytes(a)
    path.write_bytes(payload)


def _read_exact(buf: bytes, offset: int, n: int) -> tuple[bytes, int]:
    if offset + n > len(buf):
        raise ValueError("truncated BPR1 file")
    return buf[offset : offset + n], offset + n


def load_bpr1(path: str | Path) -> Saveable:
    """Read a BPR1 file; returns ndarray (1-D or 2-D) or KRBDMatrix."""
    buf = Path(path).read_bytes()
    magic, off = _read_exact(buf, 0, 4)
    if magic != _MAGIC:
        raise ValueError(f"bad magic {magic!r}, expected {_MAGIC!r}")
    head, off = _read_exact(buf, off, 9)
    rows, cols, kind = struct.unpack("<IIB", head)
    if kind == _KIND_VECTOR:
        if cols != 1:
            raise ValueError("vector payload must have cols == 1")
        data, off = _read_exact(buf, off, rows * 16)
        return np.frombuffer(data, dtype="<c16").astype(np.complex128)
    if kind == _KIND_DENSE:
        data, off = _read_exact(buf, off, rows * cols * 16)
        return np.frombuffer(data, dtype="<c16").astype(np.complex128).reshape(rows, cols)
    if kind == _KIND_KRBD:
        kbytes, off = _read_exact(buf, off, 4)
        k = struct.unpack("<I", kbytes)[0]
        shapes = []
        for _ in range(k):
            h, off = _read_exact(buf, off, 8)
            shapes.append(struct.unpack("<II", h))
        blocks = []
        for (br, bc) in shapes:
            data, off = _read_exact(buf, off, br * bc * 16)
            blocks.append(np.frombuffer(data, dtype="<c16").astype(np.complex128).reshape(br, bc))
        part = BlockPartition(tuple(s[0] for s in shapes), tuple(s[1] for s in shapes))
        if (part.total_rows, part.total_cols) != (rows, cols):
            raise ValueError("block headers inconsistent with overall shape")
        return KRBDMatrix(part, tuple(blocks))
    raise ValueError(f"unknown BPR1 kind flag {kind}")


def _fmt_entry(z: complex) -> str:
    re_, im_ = float(np.real(z)), float(np.imag(z))
    sign = "+" if im_ >= 0 or np.isnan(im_) else "-"
    return f"{re_!r}{sign}{abs(im_)!r}i"


_FLOAT = r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
_ENTRY_RE = re.compile(rf"^\s*({_FLOAT})\s*([+-]\s*(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)i\s*$")


def _parse_entry(s: str) -> complex:
    m = _ENTRY_RE.match(s)
    if m is None:
        raise ValueError(f"cannot parse complex entry {s!r}")
    return complex(float(m.group(1)), float(m.group(2).replace(" ", "")))


def save_csv(path: str | Path, obj: np.ndarray) -> None:
    """Write a vector (one entry per line) or dense matrix as a+bi text."""
    a = np.asarray(obj, dtype=np.complex128)
    if a.ndim == 1:
        lines = [_fmt_entry(z) for z in a]
    elif a.ndim == 2:
        lines = [",".join(_fmt_entry(z) for z in row) for row in a]
    else:
        raise ValueError(f"cannot save array of shape {a.shape}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_csv(path: str | Path) -> np.ndarray:
    """Read a+bi text; single-column files come back as 1-D vectors."""
    rows = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        rows.append([_parse_entry(tok) for tok in line.split(",")])
    if not rows:
        raise ValueError("empty CSV file")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ValueError("ragged CSV rows")
    a = np.array(rows, dtype=np.complex128)
    if width == 1:
        vec = a[:, 0]
        return as_complex_vector(vec, check_finite=False)
    return as_dense_matrix(a, check_finite=False)
