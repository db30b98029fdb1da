"""Row-wise block streaming of delimited files.

A :class:`BlockStream` reads the file with pandas' C parser in bounded raw
chunks, drops (or rejects, in strict mode) rows with missing or non-numeric
values, and re-slices the surviving rows into blocks of exactly
``block_size`` rows (the last block may be shorter).

Sources are zero-argument callables returning a fresh iterable of blocks.
Multi-pass algorithms (robust variances, GLMs) call them once per pass.
"""

from __future__ import annotations

import os
from collections import deque
from collections.abc import Callable, Iterable, Iterator, Sequence
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from . import rng
from .errors import EmptyFile, IoError, MissingColumn, ParseError, UsageError

INTERCEPT = "_cons"
FOLD_STREAM = 0xF01D


@dataclass(frozen=True)
class Schema:
    dependent: str
    covariates: tuple[str, ...]
    weights: str | None = None
    instruments: tuple[str, ...] | None = None
    group: str | None = None
    second_group: str | None = None
    add_intercept: bool = True
    folds: int | None = None
    fold_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "covariates", tuple(self.covariates))
        if self.instruments is not None:
            object.__setattr__(self, "instruments", tuple(self.instruments))
        if not self.covariates:
            raise UsageError("at least one covariate is required")
        cols = self.columns
        if len(set(cols)) != len(cols):
            raise UsageError(f"column names must be unique across roles: {cols}")
        if self.folds is not None and self.folds < 2:
            raise UsageError("folds must be at least 2")

    @property
    def columns(self) -> list[str]:
        cols = [self.dependent, *self.covariates]
        if self.weights:
            cols.append(self.weights)
        if self.instruments:
            # instruments may repeat covariates (exogenous regressors instrument themselves)
            cols.extend(z for z in self.instruments if z not in self.covariates)
        cols.extend(c for c in (self.group, self.second_group) if c)
        return cols

    @property
    def numeric_columns(self) -> list[str]:
        return [c for c in self.columns if c not in (self.group, self.second_group)]

    @property
    def x_names(self) -> list[str]:
        return ([INTERCEPT] if self.add_intercept else []) + list(self.covariates)

    @property
    def z_names(self) -> list[str] | None:
        if not self.instruments:
            return None
        return ([INTERCEPT] if self.add_intercept else []) + list(self.instruments)


@dataclass(frozen=True)
class BlockStreamConfig:
    path: str | os.PathLike
    block_size: int = 65536
    delimiter: str = ","
    header: bool = True
    strict: bool = False
    # raw parser chunk; bounds the working set independently of block_size
    io_rows: int = 8192

    def __post_init__(self):
        if self.block_size < 1:
            raise UsageError("block size must be >= 1")
        if not self.header:
            raise UsageError("files without a header row are not supported")
        if len(self.delimiter) != 1:
            raise UsageError("delimiter must be a single character")


@dataclass(frozen=True, eq=False)
class Block:
    y: np.ndarray
    X: np.ndarray
    w: np.ndarray | None = None
    Z: np.ndarray | None = None
    g: np.ndarray | None = None
    t: np.ndarray | None = None
    fold: np.ndarray | None = None
    row_offset: int = 0

    def __post_init__(self):
        for name in ("y", "X", "w", "Z", "g", "t", "fold"):
            a = getattr(self, name)
            if isinstance(a, np.ndarray) and a.flags.writeable:
                a = a.view()
                a.flags.writeable = False
                object.__setattr__(self, name, a)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    def slice(self, lo: int, hi: int) -> Block:
        """Rows ``lo:hi`` as a new block sharing (read-only) memory with this one."""

        def sl(a):
            return None if a is None else a[lo:hi]

        return Block(
            y=self.y[lo:hi],
            X=self.X[lo:hi],
            w=sl(self.w),
            Z=sl(self.Z),
            g=sl(self.g),
            t=sl(self.t),
            fold=sl(self.fold),
            row_offset=self.row_offset + lo,
        )

    def keys(self, by: str) -> np.ndarray:
        keys = getattr(self, by)
        if keys is None:
            raise UsageError(f"block carries no {by!r} keys")
        return keys


def _assemble(schema: Schema, frame: dict[str, np.ndarray], offset: int) -> Block:
    n = frame[schema.dependent].shape[0]
    ones = [np.ones(n)] if schema.add_intercept else []
    X = np.column_stack(ones + [frame[c] for c in schema.covariates])
    Z = None
    if schema.instruments:
        Z = np.column_stack(ones + [frame[c] for c in schema.instruments])
    fold = None
    if schema.folds:
        fold = rng.categories(schema.fold_seed, FOLD_STREAM, np.arange(offset, offset + n), schema.folds)
    return Block(
        y=frame[schema.dependent],
        X=X,
        w=frame[schema.weights] if schema.weights else None,
        Z=Z,
        g=frame[schema.group] if schema.group else None,
        t=frame[schema.second_group] if schema.second_group else None,
        fold=fold,
        row_offset=offset,
    )


class BlockStream:
    """Single-consumer iterator of :class:`Block` values over one file."""

    def __init__(self, config: BlockStreamConfig, schema: Schema):
        self.config = config
        self.schema = schema
        self.skipped_rows = 0
        self.rows_emitted = 0
        self.blocks_emitted = 0
        self._done = False
        path = os.fspath(config.path)
        try:
            header = pd.read_csv(path, sep=config.delimiter, nrows=0)
        except FileNotFoundError as exc:
            raise IoError(f"no such file: {path}") from exc
        except pd.errors.EmptyDataError as exc:
            raise EmptyFile(f"{path} is empty") from exc
        except OSError as exc:
            raise IoError(str(exc)) from exc
        missing = [c for c in schema.columns if c not in header.columns]
        if missing:
            raise MissingColumn(f"columns not found in header: {missing}")
        dtype = {c: str for c in (schema.group, schema.second_group) if c}
        self._reader = pd.read_csv(
            path,
            sep=config.delimiter,
            usecols=schema.columns,
            dtype=dtype,
            chunksize=max(config.io_rows, 1),
        )
        self._raw_rows = 0
        self._pending: dict[str, np.ndarray] | None = None
        self._queue: deque[Block] = deque()
        self._first_chunk = next(self._reader, None)
        if self._first_chunk is None or len(self._first_chunk) == 0:
            self._reader.close()
            raise EmptyFile(f"{path} has no data rows")

    def __iter__(self) -> Iterator[Block]:
        while (block := self.next_block()) is not None:
            yield block

    def next_block(self) -> Block | None:
        while not self._queue and not self._done:
            self._fill()
        if self._queue:
            return self._queue.popleft()
        return None

    def close(self):
        self._done = True
        self._queue.clear()
        self._reader.close()

    def _fill(self):
        if self._first_chunk is not None:
            chunk, self._first_chunk = self._first_chunk, None
        else:
            chunk = next(self._reader, None)
        if chunk is None:
            self._done = True
            self._reader.close()
            if self._pending is not None and self._pending[self.schema.dependent].shape[0]:
                self._emit(self._pending, 0, self._pending[self.schema.dependent].shape[0])
            self._pending = None
            return
        frame = self._clean(chunk)
        if self._pending is not None:
            frame = {c: np.concatenate([self._pending[c], frame[c]]) for c in frame}
        n = frame[self.schema.dependent].shape[0]
        b = self.config.block_size
        full = n - n % b
        if full:
            self._emit({c: a[:full] for c, a in frame.items()}, 0, full)
        self._pending = {c: a[full:].copy() for c, a in frame.items()}

    def _emit(self, frame: dict[str, np.ndarray], lo: int, hi: int):
        """Assemble rows ``lo:hi`` once, then queue read-only slices of ``block_size`` rows."""
        part = {c: a[lo:hi] for c, a in frame.items()}
        whole = _assemble(self.schema, part, self.rows_emitted)
        b = self.config.block_size
        for start in range(0, hi - lo, b):
            self._queue.append(whole.slice(start, start + b))
            self.blocks_emitted += 1
        self.rows_emitted += hi - lo

    def _clean(self, chunk: pd.DataFrame) -> dict[str, np.ndarray]:
        schema = self.schema
        first_row = self._raw_rows + 1
        self._raw_rows += len(chunk)
        bad = np.zeros(len(chunk), dtype=bool)
        out: dict[str, np.ndarray] = {}
        for c in schema.numeric_columns:
            col = chunk[c]
            if col.dtype.kind in "fiub":
                vals = col.to_numpy(dtype=float)
            else:
                vals = pd.to_numeric(col, errors="coerce").to_numpy(dtype=float)
            col_bad = ~np.isfinite(vals)
            if self.config.strict and col_bad.any():
                i = int(np.argmax(col_bad))
                raise ParseError(first_row + i, c, col.iloc[i])
            bad |= col_bad
            out[c] = vals
        for c in (schema.group, schema.second_group):
            if not c:
                continue
            col = chunk[c]
            col_bad = col.isna().to_numpy() | (col.fillna("").str.len() == 0).to_numpy()
            if self.config.strict and col_bad.any():
                i = int(np.argmax(col_bad))
                raise ParseError(first_row + i, c, col.iloc[i])
            bad |= col_bad
            out[c] = col.to_numpy(dtype=object)
        if bad.any():
            self.skipped_rows += int(bad.sum())
            keep = ~bad
            out = {c: a[keep] for c, a in out.items()}
        return out


def open_stream(config: BlockStreamConfig, schema: Schema) -> BlockStream:
    return BlockStream(config, schema)


def next_block(stream: BlockStream) -> Block | None:
    return stream.next_block()


Source = Callable[[], Iterable[Block]]


@dataclass
class FileSource:
    """Re-openable file source that counts how many passes were made."""

    config: BlockStreamConfig
    schema: Schema
    passes: int = 0
    skipped_rows: int = 0
    last: BlockStream | None = field(default=None, repr=False)

    def __call__(self) -> Iterator[Block]:
        self.passes += 1
        stream = open_stream(self.config, self.schema)
        self.last = stream
        for block in stream:
            yield block
        self.skipped_rows = stream.skipped_rows


@dataclass
class ArraySource:
    """In-memory source yielding row blocks of given arrays.

    ``X`` is used as-is (no intercept is added). Group keys may be any
    hashable values.
    """

    y: np.ndarray
    X: np.ndarray
    block_size: int = 65536
    w: np.ndarray | None = None
    Z: np.ndarray | None = None
    g: Sequence | None = None
    t: Sequence | None = None
    fold: Sequence | None = None
    order: np.ndarray | None = None
    passes: int = 0

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        self.X = np.asarray(self.X, dtype=float)
        if self.X.ndim == 1:
            self.X = self.X[:, None]
        for name in ("w", "Z"):
            a = getattr(self, name)
            if a is not None:
                a = np.asarray(a, dtype=float)
                setattr(self, name, a[:, None] if a.ndim == 1 else a)
        if self.w is not None:
            self.w = self.w[:, 0]
        for name in ("g", "t", "fold"):
            a = getattr(self, name)
            if a is not None:
                setattr(self, name, np.asarray(a, dtype=object if name != "fold" else np.int64))

    def __call__(self) -> Iterator[Block]:
        self.passes += 1
        n = self.y.shape[0]
        idx = np.arange(n) if self.order is None else np.asarray(self.order)
        b = self.block_size
        for start in range(0, n, b):
            sel = idx[start : start + b]
            yield Block(
                y=self.y[sel],
                X=self.X[sel],
                w=None if self.w is None else self.w[sel],
                Z=None if self.Z is None else self.Z[sel],
                g=None if self.g is None else self.g[sel],
                t=None if self.t is None else self.t[sel],
                fold=None if self.fold is None else self.fold[sel],
                row_offset=start,
            )
