"""Domain types for block-structured phase retrieval problems.

Vectors and dense matrices are plain numpy arrays (complex128, i.e. two
64-bit floats per entry); the validators :func:`as_complex_vector` and
:func:`as_dense_matrix` enforce the shape/finiteness contracts at
construction boundaries. Structured containers (:class:`BlockPartition`,
:class:`KRBDMatrix`, :class:`PRInstance`, :class:`BlockPRInstance`) are
frozen dataclasses whose stored arrays are marked read-only, so every type
here is immutable after construction and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence, Union

import numpy as np

MeasurementKind = Literal["magnitude", "intensity"]

__all__ = [
    "BlockPRInstance",
    "BlockPartition",
    "KRBDMatrix",
    "MeasurementKind",
    "OffBlockMass",
    "PRInstance",
    "as_complex_vector",
    "as_dense_matrix",
    "concat_blocks",
    "krbd_from_dense",
    "make_krbd",
    "split_signal",
]


class OffBlockMass(ValueError):
    """A dense matrix has mass outside the diagonal blocks.

    Reports the offending entry with the largest modulus.
    """

    def __init__(self, row: int, col: int, modulus: float, tol: float):
        self.row = row
        self.col = col
        self.modulus = modulus
        self.tol = tol
        super().__init__(
            f"off-block entry at ({row}, {col}) has modulus {modulus:.6g} > tol {tol:.6g}"
        )


def _frozen(a: np.ndarray) -> np.ndarray:
    if (
        isinstance(a, np.ndarray)
        and a.dtype == np.complex128
        and a.flags.c_contiguous
        and not a.flags.writeable
    ):
        return a
    a = np.array(a, dtype=np.complex128, order="C")
    a.setflags(write=False)
    return a


def as_complex_vector(x, *, check_finite: bool = True) -> np.ndarray:
    """Coerce to a 1-D complex128 array, rejecting NaN/Inf components."""
    a = np.asarray(x, dtype=np.complex128)
    if a.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got shape {a.shape}")
    if check_finite and not np.all(np.isfinite(a)):
        raise ValueError("vector has non-finite entries")
    return a


def as_dense_matrix(a, *, check_finite: bool = True) -> np.ndarray:
    """Coerce to a 2-D complex128 array with positive dimensions."""
    m = np.asarray(a, dtype=np.complex128)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {m.shape}")
    if m.shape[0] == 0 or m.shape[1] == 0:
        raise ValueError(f"matrix has a zero dimension: shape {m.shape}")
    if check_finite and not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


@dataclass(frozen=True)
class BlockPartition:
    """Row/column sizes of the K diagonal blocks of a block matrix.

    ``row_sizes[i] x col_sizes[i]`` is the shape of block i; the blocks
    tile the diagonal of an M x N matrix with M = sum(row_sizes) and
    N = sum(col_sizes).
    """

    row_sizes: tuple[int, ...]
    col_sizes: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "row_sizes", tuple(int(m) for m in self.row_sizes))
        object.__setattr__(self, "col_sizes", tuple(int(n) for n in self.col_sizes))
        if len(self.row_sizes) != len(self.col_sizes):
            raise ValueError("row_sizes and col_sizes must have equal length")
        if len(self.row_sizes) == 0:
            raise ValueError("partition needs at least one block")
        if any(m <= 0 for m in self.row_sizes) or any(n <= 0 for n in self.col_sizes):
            raise ValueError("block sizes must be positive")

    @classmethod
    def equal_blocks(cls, rows: int, cols: int, k: int) -> "BlockPartition":
        """Equal-size partition; requires k to divide both dimensions exactly."""
        if k < 1:
            raise ValueError("k must be >= 1")
        if rows % k or cols % k:
            raise ValueError(f"{rows}x{cols} is not divisible into {k} equal blocks")
        return cls((rows // k,) * k, (cols // k,) * k)

    @property
    def n_blocks(self) -> int:
        return len(self.row_sizes)

    @property
    def total_rows(self) -> int:
        return sum(self.row_sizes)

    @property
    def total_cols(self) -> int:
        return sum(self.col_sizes)

    def row_offsets(self) -> list[int]:
        return [0] + list(np.cumsum(self.row_sizes))

    def col_offsets(self) -> list[int]:
        return [0] + list(np.cumsum(self.col_sizes))

    def row_slices(self) -> list[slice]:
        off = self.row_offsets()
        return [slice(off[i], off[i + 1]) for i in range(self.n_blocks)]

    def col_slices(self) -> list[slice]:
        off = self.col_offsets()
        return [slice(off[i], off[i + 1]) for i in range(self.n_blocks)]


@dataclass(frozen=True)
class KRBDMatrix:
    """K-rectangular-block-diagonal matrix: only the diagonal blocks are stored.

    The logical full matrix is zero outside the blocks; those zeros are
    never materialized except by an explicit :meth:`to_dense`.
    """

    partition: BlockPartition
    blocks: tuple[np.ndarray, ...]

    def __post_init__(self):
        blocks = tuple(_frozen(as_dense_matrix(b)) for b in self.blocks)
        object.__setattr__(self, "blocks", blocks)
        if len(blocks) != self.partition.n_blocks:
            raise ValueError("number of blocks does not match partition")
        for i, b in enumerate(blocks):
            want = (self.partition.row_sizes[i], self.partition.col_sizes[i])
            if b.shape != want:
                raise ValueError(f"block {i} has shape {b.shape}, expected {want}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.partition.total_rows, self.partition.total_cols)

    @property
    def n_blocks(self) -> int:
        return self.partition.n_blocks

    def to_dense(self) -> np.ndarray:
        """Materialize the full matrix, zeros included."""
        full = np.zeros(self.shape, dtype=np.complex128)
        for b, rs, cs in zip(self.blocks, self.partition.row_slices(), self.partition.col_slices()):
            full[rs, cs] = b
        return full


Operator = Union[np.ndarray, KRBDMatrix]


def make_krbd(blocks: Sequence[np.ndarray]) -> KRBDMatrix:
    """Assemble a block-diagonal matrix from its diagonal blocks.

    The partition is derived from the block shapes; off-block zeros are
    never stored.
    """
    blocks = list(blocks)
    if not blocks:
        raise ValueError("need at least one block")
    mats = [as_dense_matrix(b) for b in blocks]
    part = BlockPartition(
        tuple(m.shape[0] for m in mats),
        tuple(m.shape[1] for m in mats),
    )
    return KRBDMatrix(part, tuple(mats))


def krbd_from_dense(full: np.ndarray, partition: BlockPartition, tol: float = 0.0) -> KRBDMatrix:
    """Extract block form from a dense matrix, verifying off-block entries.

    Succeeds iff every entry outside the diagonal blocks has modulus <= tol
    (default 0: exact). Raises :class:`OffBlockMass` pointing at the largest
    offender otherwise. Extracted blocks equal the dense sub-blocks exactly.
    """
    full = as_dense_matrix(full)
    if full.shape != (partition.total_rows, partition.total_cols):
        raise ValueError(
            f"matrix shape {full.shape} does not match partition "
            f"({partition.total_rows}, {partition.total_cols})"
        )
    mask = np.ones(full.shape, dtype=bool)
    blocks = []
    for rs, cs in zip(partition.row_slices(), partition.col_slices()):
        blocks.append(full[rs, cs].copy())
        mask[rs, cs] = False
    off = np.abs(full) * mask
    worst = np.unravel_index(int(np.argmax(off)), off.shape)
    worst_mod = float(off[worst])
    if worst_mod > tol:
        raise OffBlockMass(int(worst[0]), int(worst[1]), worst_mod, tol)
    return KRBDMatrix(partition, tuple(blocks))


def split_signal(x: np.ndarray, partition: BlockPartition) -> list[np.ndarray]:
    """Split a signal into contiguous per-block sub-vectors.

    Inverse of :func:`concat_blocks`: the round trip is bitwise exact.
    """
    x = as_complex_vector(x, check_finite=False)
    if len(x) != partition.total_cols:
        raise ValueError(
            f"signal length {len(x)} does not match partition columns {partition.total_cols}"
        )
    return [x[cs].copy() for cs in partition.col_slices()]


def concat_blocks(parts: Sequence[np.ndarray]) -> np.ndarray:
    """Concatenate per-block sub-vectors in index order."""
    parts = list(parts)
    if not parts:
        raise ValueError("need at least one part")
    return np.concatenate([as_complex_vector(p, check_finite=False) for p in parts])


@dataclass(frozen=True)
class PRInstance:
    """A phase retrieval measurement problem.

    ``measurements`` holds |op @ x| (kind="magnitude") or |op @ x|^2
    (kind="intensity") for the unknown signal x; ``snr_db`` is noise
    metadata only (math.inf or None means noiseless).
    """

    operator: Operator
    measurements: np.ndarray
    kind: MeasurementKind
    snr_db: float | None = None

    def __post_init__(self):
        meas = np.asarray(self.measurements, dtype=np.float64)
        if meas.ndim != 1:
            raise ValueError("measurements must be a 1-D real vector")
        if not np.all(np.isfinite(meas)):
            raise ValueError("measurements have non-finite entries")
        if np.any(meas < 0):
            raise ValueError("measurements must be nonnegative")
        meas = meas.copy()
        meas.setflags(write=False)
        object.__setattr__(self, "measurements", meas)
        if self.kind not in ("magnitude", "intensity"):
            raise ValueError(f"unknown measurement kind {self.kind!r}")
        if isinstance(self.operator, KRBDMatrix):
            rows = self.operator.shape[0]
        else:
            object.__setattr__(self, "operator", _frozen(as_dense_matrix(self.operator)))
            rows = self.operator.shape[0]
        if len(meas) != rows:
            raise ValueError(f"got {len(meas)} measurements for {rows} operator rows")

    @property
    def shape(self) -> tuple[int, int]:
        return self.operator.shape


@dataclass(frozen=True)
class BlockPRInstance:
    """A block-diagonal PR problem plus the global phase-tuning measurements.

    The L = round(beta * K) tuning rows are extra measurements stored
    separately from the base problem; ``tuning_measurements`` uses the same
    measurement kind as ``base``. beta >= 4 is recommended for reliable
    tuning but smaller values are accepted (useful for failure studies).
    """

    base: PRInstance
    tuning_matrix: np.ndarray
    tuning_measurements: np.ndarray
    beta: float

    def __post_init__(self):
        if not isinstance(self.base.operator, KRBDMatrix):
            raise ValueError("base operator must be a KRBDMatrix")
        tm = _frozen(as_dense_matrix(self.tuning_matrix))
        object.__setattr__(self, "tuning_matrix", tm)
        ty = np.asarray(self.tuning_measurements, dtype=np.float64)
        if ty.ndim != 1 or np.any(ty < 0) or not np.all(np.isfinite(ty)):
            raise ValueError("tuning measurements must be a finite nonnegative 1-D vector")
        ty = ty.copy()
        ty.setflags(write=False)
        object.__setattr__(self, "tuning_measurements", ty)
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        n = self.base.operator.shape[1]
        if tm.shape[1] != n:
            raise ValueError(f"tuning matrix has {tm.shape[1]} columns, expected {n}")
        if len(ty) != tm.shape[0]:
            raise ValueError("tuning measurement length does not match tuning matrix rows")
        k = self.base.operator.n_blocks
        if round(self.beta * k) != tm.shape[0]:
            raise ValueError(
                f"L = {tm.shape[0]} tuning rows inconsistent with beta*K = {self.beta}*{k}"
            )

    @property
    def partition(self) -> BlockPartition:
        return self.base.operator.partition

    @property
    def n_tuning_rows(self) -> int:
        return self.tuning_matrix.shape[0]
