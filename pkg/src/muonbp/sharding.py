"""Block partitions, model-parallel shard layouts, and gather/scatter.

Device ids are dense integers in row-major block order: the block in grid
position (i, j) lives on device ``i * c + j``.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Callable, Iterator, Mapping

import numpy as np

from muonbp._validation import as_matrix

LAYOUT_KINDS = ("none", "column_parallel", "row_parallel", "grid", "dim0")


@dataclass(frozen=True)
class BlockPartition:
    """Row and column cut points tiling a ``rows x cols`` matrix.

    ``row_cuts`` includes both endpoints, e.g. ``(0, 4, 8)`` for two row
    blocks of height 4.
    """

    row_cuts: tuple
    col_cuts: tuple

    def __post_init__(self):
        for name, cuts in (("row_cuts", self.row_cuts), ("col_cuts", self.col_cuts)):
            if len(cuts) < 2 or cuts[0] != 0:
                raise ValueError(f"{name} must start at 0 and contain at least one block: {cuts}")
            if any(b <= a for a, b in zip(cuts, cuts[1:])):
                raise ValueError(f"{name} must be strictly increasing: {cuts}")
        object.__setattr__(self, "row_cuts", tuple(int(c) for c in self.row_cuts))
        object.__setattr__(self, "col_cuts", tuple(int(c) for c in self.col_cuts))

    @classmethod
    def uniform(cls, shape, r: int = 1, c: int = 1) -> "BlockPartition":
        rows, cols = shape
        if r < 1 or c < 1:
            raise ValueError(f"block counts must be >= 1, got r={r}, c={c}")
        if rows % r:
            raise ValueError(f"rows axis: {rows} is not divisible by {r}")
        if cols % c:
            raise ValueError(f"cols axis: {cols} is not divisible by {c}")
        return cls(tuple(range(0, rows + 1, rows // r)), tuple(range(0, cols + 1, cols // c)))

    @property
    def shape(self):
        return (self.row_cuts[-1], self.col_cuts[-1])

    @property
    def r(self) -> int:
        return len(self.row_cuts) - 1

    @property
    def c(self) -> int:
        return len(self.col_cuts) - 1

    @property
    def n_blocks(self) -> int:
        return self.r * self.c

    def block_shapes(self) -> list:
        return [(r1 - r0, c1 - c0)
                for r0, r1 in zip(self.row_cuts, self.row_cuts[1:])
                for c0, c1 in zip(self.col_cuts, self.col_cuts[1:])]

    def slices(self) -> Iterator[tuple]:
        for r0, r1 in zip(self.row_cuts, self.row_cuts[1:]):
            for c0, c1 in zip(self.col_cuts, self.col_cuts[1:]):
                yield slice(r0, r1), slice(c0, c1)

    def blocks(self, x) -> list:
        if tuple(x.shape) != self.shape:
            raise ValueError(f"partition covers {self.shape} but matrix is {tuple(x.shape)}")
        return [np.ascontiguousarray(x[rs, cs]) for rs, cs in self.slices()]


def as_partition(part, shape) -> BlockPartition:
    """Accept a BlockPartition, a ShardLayout, or an ``(r, c)`` tuple."""
    if isinstance(part, BlockPartition):
        if part.shape != tuple(shape):
            raise ValueError(f"partition covers {part.shape} but matrix is {tuple(shape)}")
        return part
    if isinstance(part, ShardLayout):
        return induced_partition(part, shape)
    r, c = part
    return BlockPartition.uniform(shape, r, c)


@dataclass(frozen=True)
class ShardLayout:
    """How a tensor is split over virtual devices.

    ``degrees`` is ``()`` for none, ``(c,)`` for column_parallel, ``(r,)`` for
    row_parallel and dim0, ``(r, c)`` for grid.
    """

    kind: str = "none"
    degrees: tuple = ()

    def __post_init__(self):
        if self.kind not in LAYOUT_KINDS:
            raise ValueError(f"unknown layout kind {self.kind!r}; expected one of {LAYOUT_KINDS}")
        degrees = tuple(int(d) for d in self.degrees)
        expected = {"none": 0, "column_parallel": 1, "row_parallel": 1, "dim0": 1, "grid": 2}[self.kind]
        if len(degrees) != expected:
            raise ValueError(f"{self.kind} takes {expected} degree(s), got {degrees}")
        if any(d < 1 for d in degrees):
            raise ValueError(f"degrees must be >= 1, got {degrees}")
        object.__setattr__(self, "degrees", degrees)

    @classmethod
    def none(cls):
        return cls("none")

    @classmethod
    def column_parallel(cls, c: int):
        return cls("column_parallel", (c,))

    @classmethod
    def row_parallel(cls, r: int):
        return cls("row_parallel", (r,))

    @classmethod
    def grid(cls, r: int, c: int):
        return cls("grid", (r, c))

    @classmethod
    def dim0(cls, r: int):
        return cls("dim0", (r,))

    @classmethod
    def parse(cls, text: str) -> "ShardLayout":
        """Parse ``none``, ``column_parallel(4)``, ``grid(2,2)`` and friends."""
        text = text.strip().replace(" ", "")
        if text == "none":
            return cls.none()
        if "(" not in text or not text.endswith(")"):
            raise ValueError(f"cannot parse layout {text!r}")
        kind, args = text[:-1].split("(", 1)
        return cls(kind, tuple(int(a) for a in args.split(",") if a))

    def __str__(self):
        if self.kind == "none":
            return "none"
        return f"{self.kind}({','.join(str(d) for d in self.degrees)})"

    @property
    def grid_shape(self):
        if self.kind == "none":
            return (1, 1)
        if self.kind == "column_parallel":
            return (1, self.degrees[0])
        if self.kind == "grid":
            return self.degrees
        return (self.degrees[0], 1)

    @property
    def world_size(self) -> int:
        r, c = self.grid_shape
        return r * c


def induced_partition(layout: ShardLayout, shape) -> BlockPartition:
    r, c = layout.grid_shape
    return BlockPartition.uniform(tuple(shape), r, c)


@dataclass(frozen=True)
class ShardedTensor:
    """Device-resident shards of one matrix; ``shards[d]`` is device d's block."""

    layout: ShardLayout
    shape: tuple
    shards: Mapping = field(repr=False)

    def __post_init__(self):
        part = self.partition
        expected = part.block_shapes()
        if sorted(self.shards) != list(range(len(expected))):
            raise ValueError(f"expected device ids 0..{len(expected) - 1}, got {sorted(self.shards)}")
        for d, want in enumerate(expected):
            got = tuple(self.shards[d].shape)
            if got != want:
                raise ValueError(f"device {d}: shard shape {got} does not match layout block {want}")

    @property
    def partition(self) -> BlockPartition:
        return induced_partition(self.layout, self.shape)

    @property
    def world_size(self) -> int:
        return self.layout.world_size

    def __iter__(self):
        return iter(self.shards[d] for d in range(self.world_size))


def scatter(x, layout: ShardLayout) -> ShardedTensor:
    x = as_matrix(x, name="x")
    part = induced_partition(layout, x.shape)
    shards = {d: block for d, block in enumerate(part.blocks(x))}
    return ShardedTensor(layout, tuple(x.shape), shards)


def gather(s: ShardedTensor) -> np.ndarray:
    out = np.empty(s.shape, dtype=np.float64)
    for d, (rs, cs) in enumerate(s.partition.slices()):
        out[rs, cs] = s.shards[d]
    return out


def per_shard_map(s: ShardedTensor, f: Callable, order=None) -> ShardedTensor:
    """Apply ``f`` to every shard independently.

    ``order`` is the device visiting order: None (forward), "reverse",
    "shuffle", or an explicit sequence. Results do not depend on it.
    """
    devices = list(range(s.world_size))
    if order == "reverse":
        devices.reverse()
    elif order == "shuffle":
        random.Random(0).shuffle(devices)
    elif order is not None:
        devices = list(order)
    out = {}
    for d in devices:
        y = np.asarray(f(s.shards[d]), dtype=np.float64)
        if y.shape != s.shards[d].shape:
            raise ValueError(f"device {d}: shard function changed shape {s.shards[d].shape} -> {y.shape}")
        out[d] = y
    return ShardedTensor(s.layout, s.shape, out)


def zip_map(f: Callable, *tensors: ShardedTensor) -> ShardedTensor:
    """Shard-local elementwise combination of tensors sharing a layout."""
    first = tensors[0]
    for t in tensors[1:]:
        if t.layout != first.layout or t.shape != first.shape:
            raise ValueError("sharded tensors disagree on layout or shape")
    out = {d: np.asarray(f(*(t.shards[d] for t in tensors)), dtype=np.float64)
           for d in range(first.world_size)}
    return ShardedTensor(first.layout, first.shape, out)
