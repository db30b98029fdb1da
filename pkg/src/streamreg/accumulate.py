"""Sufficient statistics for row-additive estimation.

Every estimator in the package is a function of cross-product sums that can
be built one block of rows at a time and merged by plain addition:

    sigma   = sum_i w_i x_i x_i'        upsilon = sum_i w_i x_i y_i
    psi     = sum_i w_i y_i^2           (plus X'Z, Z'Z, Z'y, counts and sums)

With weights absent every ``w_i`` is 1.
"""

from __future__ import annotations

import json
import os
from collections.abc import Hashable, Iterable, Iterator
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import pandas as pd

from .errors import DimensionMismatch, NegativeWeight, TooManyGroups, UnknownGroup, UsageError
from .ingest import Block, Source

DEFAULT_MAX_GROUPS = 1_000_000


@lru_cache(maxsize=64)
def _lower_index(k: int):
    return np.tril_indices(k, -1)


def _mirror_upper(S: np.ndarray) -> np.ndarray:
    """Copy the upper triangle onto the lower one (in place), making S exactly symmetric."""
    if S.shape[0] > 1:
        lo = _lower_index(S.shape[0])
        S[lo] = S.T[lo]
    return S


@dataclass(eq=False)
class CrossProducts:
    k: int
    l: int
    sigma: np.ndarray
    upsilon: np.ndarray
    psi: float = 0.0
    xz: np.ndarray | None = None
    zz: np.ndarray | None = None
    zy: np.ndarray | None = None
    n: int = 0
    sum_y: float = 0.0
    sum_x: np.ndarray | None = None
    sum_w: float = 0.0
    names: list[str] | None = None
    z_names: list[str] | None = None
    intercept: bool = False

    @classmethod
    def zeros(cls, k: int, l: int = 0, names=None, z_names=None, intercept: bool = False) -> CrossProducts:
        return cls(
            k=k,
            l=l,
            sigma=np.zeros((k, k)),
            upsilon=np.zeros(k),
            xz=np.zeros((k, l)) if l else None,
            zz=np.zeros((l, l)) if l else None,
            zy=np.zeros(l) if l else None,
            sum_x=np.zeros(k),
            names=list(names) if names is not None else None,
            z_names=list(z_names) if z_names is not None else None,
            intercept=intercept,
        )

    def like(self) -> CrossProducts:
        """Zero state with the same shape and labels."""
        return CrossProducts.zeros(self.k, self.l, self.names, self.z_names, self.intercept)

    def copy(self) -> CrossProducts:
        out = self.like()
        out.iadd(self)
        return out

    @property
    def weighted(self) -> bool:
        return self.sum_w != self.n

    # -- in-place updates (single owner) ---------------------------------

    def absorb(self, block: Block) -> CrossProducts:
        """Add one block's contribution in place."""
        X, y, w, Z = block.X, block.y, block.w, block.Z
        if X.ndim != 2 or X.shape[1] != self.k:
            raise DimensionMismatch(f"block has {X.shape[1]} covariates, state expects {self.k}")
        if (Z is None) != (self.l == 0) or (Z is not None and Z.shape[1] != self.l):
            raise DimensionMismatch("instrument arity of block does not match state")
        n = y.shape[0]
        if w is None:
            Xw, yw, sw = X, y, float(n)
        else:
            if np.any(w < 0):
                raise NegativeWeight(f"negative weight in block at row offset {block.row_offset}")
            Xw, yw, sw = X * w[:, None], y * w, float(w.sum())
        self.sigma += _mirror_upper(Xw.T @ X)
        self.upsilon += Xw.T @ y
        self.psi += float(yw @ y)
        self.sum_y += float(yw.sum())
        self.sum_x += Xw.sum(axis=0)
        self.sum_w += sw
        self.n += n
        if Z is not None:
            self.xz += Xw.T @ Z
            Zw = Z if w is None else Z * w[:, None]
            self.zz += _mirror_upper(Zw.T @ Z)
            self.zy += Zw.T @ y
        return self

    def iadd(self, other: CrossProducts) -> CrossProducts:
        _check_compatible(self, other)
        self.sigma += other.sigma
        self.upsilon += other.upsilon
        self.psi += other.psi
        self.sum_y += other.sum_y
        self.sum_x += other.sum_x
        self.sum_w += other.sum_w
        self.n += other.n
        if self.l:
            self.xz += other.xz
            self.zz += other.zz
            self.zy += other.zy
        return self

    def __add__(self, other: CrossProducts) -> CrossProducts:
        return merge(self, other)

    # -- accounting and persistence ----------------------------------------

    def arrays(self) -> list[np.ndarray]:
        return [a for a in (self.sigma, self.upsilon, self.xz, self.zz, self.zy, self.sum_x) if a is not None]

    def state_entries(self) -> int:
        """Number of stored numeric entries (matrices, vectors and scalars)."""
        return sum(a.size for a in self.arrays()) + 4

    @property
    def nbytes(self) -> int:
        return 8 * self.state_entries()

    def to_dict(self) -> dict:
        def mat(a):
            return None if a is None else a.tolist()

        return {
            "k": self.k,
            "l": self.l,
            "names": self.names,
            "z_names": self.z_names,
            "intercept": self.intercept,
            "n": self.n,
            "sum_w": self.sum_w,
            "sum_y": self.sum_y,
            "psi": self.psi,
            "sum_x": mat(self.sum_x),
            "sigma": mat(self.sigma),
            "upsilon": mat(self.upsilon),
            "xz": mat(self.xz),
            "zz": mat(self.zz),
            "zy": mat(self.zy),
        }

    @classmethod
    def from_dict(cls, d: dict) -> CrossProducts:
        def arr(v, shape):
            return np.zeros(shape) if v is None else np.asarray(v, dtype=float).reshape(shape)

        k, l = int(d["k"]), int(d["l"])
        return cls(
            k=k,
            l=l,
            sigma=arr(d["sigma"], (k, k)),
            upsilon=arr(d["upsilon"], (k,)),
            psi=float(d["psi"]),
            xz=arr(d.get("xz"), (k, l)) if l else None,
            zz=arr(d.get("zz"), (l, l)) if l else None,
            zy=arr(d.get("zy"), (l,)) if l else None,
            n=int(d["n"]),
            sum_y=float(d["sum_y"]),
            sum_x=arr(d["sum_x"], (k,)),
            sum_w=float(d["sum_w"]),
            names=d.get("names"),
            z_names=d.get("z_names"),
            intercept=bool(d.get("intercept", False)),
        )


def _check_compatible(a: CrossProducts, b: CrossProducts):
    if a.k != b.k or a.l != b.l:
        raise DimensionMismatch(f"cannot combine statistics of shape (k={a.k}, l={a.l}) and (k={b.k}, l={b.l})")


def accumulate_block(state: CrossProducts, block: Block) -> CrossProducts:
    """Return ``state`` plus the contribution of ``block`` (``state`` is untouched)."""
    return state.copy().absorb(block)


def merge(a: CrossProducts, b: CrossProducts) -> CrossProducts:
    _check_compatible(a, b)
    return a.copy().iadd(b)


def block_statistics(block: Block, names=None, z_names=None, intercept: bool = False) -> CrossProducts:
    l = 0 if block.Z is None else block.Z.shape[1]
    return CrossProducts.zeros(block.X.shape[1], l, names, z_names, intercept).absorb(block)


def accumulate_source(
    source: Source,
    names=None,
    z_names=None,
    intercept: bool = False,
    threads: int = 1,
) -> CrossProducts:
    """Fold every block of one pass over ``source`` into a :class:`CrossProducts`.

    With ``threads > 1`` per-block statistics are computed by a thread pool
    and merged in block order, so the result does not depend on scheduling.
    """
    blocks = iter(source())
    first = next(blocks, None)
    if first is None:
        raise UsageError("source produced no rows")
    state = block_statistics(first, names, z_names, intercept)
    if threads <= 1:
        for block in blocks:
            state.absorb(block)
        return state
    for part in _parallel_map(lambda b: block_statistics(b), blocks, threads):
        state.iadd(part)
    return state


def _parallel_map(fn, items: Iterator, threads: int) -> Iterator:
    window = 2 * threads
    with ThreadPoolExecutor(max_workers=threads) as pool:
        pending = []
        for item in items:
            pending.append(pool.submit(fn, item))
            if len(pending) >= window:
                yield pending.pop(0).result()
        for fut in pending:
            yield fut.result()


@dataclass(eq=False)
class GroupedAccumulator:
    """Per-group cross products plus their global total.

    Group labels are kept in first-appearance order; ``ids`` gives the dense
    integer id of each label.
    """

    template: CrossProducts
    by: str = "g"
    second_by: str | None = None
    groups: dict = field(default_factory=dict)
    second_groups: dict = field(default_factory=dict)
    cells: dict = field(default_factory=dict)
    total: CrossProducts | None = None
    max_groups: int = DEFAULT_MAX_GROUPS

    def __post_init__(self):
        self.template = self.template.like()
        if self.total is None:
            self.total = self.template.like()

    @property
    def labels(self) -> list:
        return list(self.groups)

    @property
    def ids(self) -> dict:
        return {g: i for i, g in enumerate(self.groups)}

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    def absorb(self, block: Block) -> GroupedAccumulator:
        self.total.absorb(block)
        self._absorb_keys(block, block.keys(self.by), self.groups)
        if self.second_by is not None:
            tkeys = block.keys(self.second_by)
            self._absorb_keys(block, tkeys, self.second_groups)
            cell_counts = pd.Series(1, index=pd.MultiIndex.from_arrays([block.keys(self.by), tkeys])).groupby(level=[0, 1]).sum()
            for key, count in cell_counts.items():
                self.cells[key] = self.cells.get(key, 0) + int(count)
        return self

    def _absorb_keys(self, block: Block, keys: np.ndarray, table: dict):
        codes, uniques = pd.factorize(np.asarray(keys), sort=False)
        if len(uniques) == 1:
            parts = [(uniques[0], None)]
        else:
            order = np.argsort(codes, kind="stable")
            bounds = np.concatenate([[0], np.cumsum(np.bincount(codes, minlength=len(uniques)))])
            parts = [(uniques[i], order[bounds[i] : bounds[i + 1]]) for i in range(len(uniques))]
        for label, rows in parts:
            label = label.item() if isinstance(label, np.generic) else label
            cp = table.get(label)
            if cp is None:
                if len(table) >= self.max_groups:
                    raise TooManyGroups(f"more than {self.max_groups} groups")
                cp = table[label] = self.template.like()
            cp.absorb(block if rows is None else _take(block, rows))

    def merged(self, keep: Iterable[Hashable] | None = None) -> CrossProducts:
        """Sum of the per-group statistics over ``keep`` (all groups when None)."""
        labels = self.labels if keep is None else list(keep)
        if not labels:
            raise UnknownGroup("no groups selected")
        out = self.template.like()
        for g in labels:
            if g not in self.groups:
                raise UnknownGroup(f"unknown group {g!r}")
            out.iadd(self.groups[g])
        return out

    def state_entries(self) -> int:
        total = self.total.state_entries()
        total += sum(cp.state_entries() for cp in self.groups.values())
        total += sum(cp.state_entries() for cp in self.second_groups.values())
        return total + len(self.cells)

    @property
    def nbytes(self) -> int:
        return 8 * self.state_entries()

    def to_dict(self) -> dict:
        return {
            "by": self.by,
            "second_by": self.second_by,
            "global": self.total.to_dict(),
            "groups": [{"key": _key_out(g), "stats": cp.to_dict()} for g, cp in self.groups.items()],
            "second_groups": [{"key": _key_out(t), "stats": cp.to_dict()} for t, cp in self.second_groups.items()],
            "cells": [[_key_out(g), _key_out(t), c] for (g, t), c in self.cells.items()],
        }

    @classmethod
    def from_dict(cls, d: dict) -> GroupedAccumulator:
        total = CrossProducts.from_dict(d["global"])
        ga = cls(template=total, by=d.get("by", "g"), second_by=d.get("second_by"), total=total)
        ga.groups = {e["key"]: CrossProducts.from_dict(e["stats"]) for e in d["groups"]}
        ga.second_groups = {e["key"]: CrossProducts.from_dict(e["stats"]) for e in d.get("second_groups", [])}
        ga.cells = {(g, t): int(c) for g, t, c in d.get("cells", [])}
        return ga


def _key_out(key):
    if isinstance(key, (str, int, float, bool)) or key is None:
        return key
    return str(key)


def _take(block: Block, rows: np.ndarray) -> Block:
    def sel(a):
        return None if a is None else a[rows]

    return Block(y=block.y[rows], X=block.X[rows], w=sel(block.w), Z=sel(block.Z), row_offset=block.row_offset)


def accumulate_grouped(state: GroupedAccumulator, block: Block) -> GroupedAccumulator:
    """Route each row of ``block`` to its group's statistics; updates ``state`` in place."""
    return state.absorb(block)


def accumulate_grouped_source(
    source: Source,
    by: str = "g",
    second_by: str | None = None,
    names=None,
    z_names=None,
    intercept: bool = False,
    max_groups: int = DEFAULT_MAX_GROUPS,
) -> GroupedAccumulator:
    blocks = iter(source())
    first = next(blocks, None)
    if first is None:
        raise UsageError("source produced no rows")
    l = 0 if first.Z is None else first.Z.shape[1]
    template = CrossProducts.zeros(first.X.shape[1], l, names, z_names, intercept)
    ga = GroupedAccumulator(template=template, by=by, second_by=second_by, max_groups=max_groups)
    ga.absorb(first)
    for block in blocks:
        ga.absorb(block)
    return ga


def save_json(obj: CrossProducts | GroupedAccumulator, path: str | os.PathLike):
    kind = "grouped" if isinstance(obj, GroupedAccumulator) else "cross_products"
    with open(path, "w") as fh:
        json.dump({"schema": 1, "kind": kind, "data": obj.to_dict()}, fh)


def load_json(path: str | os.PathLike) -> CrossProducts | GroupedAccumulator:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("kind") == "grouped":
        return GroupedAccumulator.from_dict(doc["data"])
    return CrossProducts.from_dict(doc["data"])
