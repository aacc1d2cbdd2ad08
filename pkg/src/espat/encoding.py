"""Spatial encodings: grid quantization, Gray-coded octree paths, KD trees.

A point is first quantized to an integer cell index on a 2^m x 2^m x 2^m grid.
For the octree scheme the cell becomes a depth-m path of 3-bit symbols, one
Gray bit per axis per level (x, y, z order, most significant bit first), so a
parent's path is always a prefix of its children's paths.  For the KD scheme
the point becomes a sequence of left/right branch decisions down a public,
immutable KD tree.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Sequence

Coord = tuple[float, float, float]


class OutOfBoundsError(ValueError):
    """Point falls outside the grid's half-open bounding box."""


class WidthOverflowError(ValueError):
    """Value does not fit in the requested bit width."""


class DepthExceededError(ValueError):
    """A tree walk ended before reaching the requested depth."""


class EmptyInputError(ValueError):
    """No construction points supplied."""


@dataclass(frozen=True)
class SpatialPoint:
    lat: float
    lon: float
    alt: float = 0.0
    timestamp: float = 0.0
    client_id: str = ""

    @property
    def coords(self) -> Coord:
        return (self.lat, self.lon, self.alt)


@dataclass(frozen=True)
class GridConfig:
    """Axis bounds plus bits-per-axis; boxes are half-open [min, max)."""

    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float
    alt_min: float
    alt_max: float
    bits_per_axis: int

    def __post_init__(self) -> None:
        for lo, hi, name in self._axes():
            if not (lo < hi):
                raise ValueError(f"{name}: min must be < max ({lo} >= {hi})")
        if self.bits_per_axis < 1:
            raise ValueError("bits_per_axis must be >= 1")

    def _axes(self) -> list[tuple[float, float, str]]:
        return [
            (self.lat_min, self.lat_max, "lat"),
            (self.lon_min, self.lon_max, "lon"),
            (self.alt_min, self.alt_max, "alt"),
        ]

    @property
    def depth(self) -> int:
        return self.bits_per_axis

    @property
    def cells_per_axis(self) -> int:
        return 1 << self.bits_per_axis

    def contains(self, p: SpatialPoint) -> bool:
        return all(lo <= c < hi for c, (lo, hi, _) in zip(p.coords, self._axes()))

    @classmethod
    def from_file(cls, path: str) -> "GridConfig":
        """Read a plain key=value config file (lines starting with # ignored)."""
        values: dict[str, str] = {}
        with open(path, "r", encoding="utf-8") as fh:
            for raw in fh:
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ValueError(f"bad config line: {line!r}")
                key, val = line.split("=", 1)
                values[key.strip()] = val.strip()
        try:
            return cls(
                lat_min=float(values["lat_min"]),
                lat_max=float(values["lat_max"]),
                lon_min=float(values["lon_min"]),
                lon_max=float(values["lon_max"]),
                alt_min=float(values["alt_min"]),
                alt_max=float(values["alt_max"]),
                bits_per_axis=int(values["bits_per_axis"]),
            )
        except KeyError as exc:
            raise ValueError(f"config missing key {exc.args[0]}") from exc


def quantize(p: SpatialPoint, grid: GridConfig) -> tuple[int, int, int]:
    """Map a point to its integer cell index; raises OutOfBoundsError."""
    cells = grid.cells_per_axis
    out = []
    for c, (lo, hi, name) in zip(p.coords, grid._axes()):
        if not (lo <= c < hi):
            raise OutOfBoundsError(f"{name}={c} outside [{lo}, {hi})")
        idx = int((c - lo) / (hi - lo) * cells)
        out.append(min(idx, cells - 1))
    return tuple(out)


def binary_to_gray(v: int, m: int) -> int:
    if v < 0 or v >> m:
        raise WidthOverflowError(f"{v} does not fit in {m} bits")
    return v ^ (v >> 1)


def gray_to_binary(g: int, m: int) -> int:
    if g < 0 or g >> m:
        raise WidthOverflowError(f"{g} does not fit in {m} bits")
    v = g
    shift = 1
    while shift < m:
        v ^= v >> shift
        shift <<= 1
    return v


def cell_to_octree_path(cell: tuple[int, int, int], grid: GridConfig) -> tuple[int, ...]:
    """Gray-code each axis, then interleave one bit per axis per level.

    Level l's symbol is g_x[l] g_y[l] g_z[l] (x high bit, MSB-first), so the
    path of a parent cell is a strict prefix of every descendant's path.
    """
    m = grid.bits_per_axis
    for c in cell:
        if c < 0 or c >> m:
            raise WidthOverflowError(f"cell component {c} out of range for m={m}")
    gx, gy, gz = (binary_to_gray(c, m) for c in cell)
    path = []
    for level in range(m - 1, -1, -1):
        sym = (((gx >> level) & 1) << 2) | (((gy >> level) & 1) << 1) | ((gz >> level) & 1)
        path.append(sym)
    return tuple(path)


def octree_path_to_cell(path: Sequence[int], grid: GridConfig) -> tuple[int, int, int]:
    """Inverse of cell_to_octree_path for full-depth paths."""
    m = grid.bits_per_axis
    if len(path) != m:
        raise ValueError(f"path length {len(path)} != grid depth {m}")
    gx = gy = gz = 0
    for sym in path:
        if sym < 0 or sym > 7:
            raise ValueError(f"bad octree symbol {sym}")
        gx = (gx << 1) | ((sym >> 2) & 1)
        gy = (gy << 1) | ((sym >> 1) & 1)
        gz = (gz << 1) | (sym & 1)
    return (gray_to_binary(gx, m), gray_to_binary(gy, m), gray_to_binary(gz, m))


def point_to_octree_path(p: SpatialPoint, grid: GridConfig) -> tuple[int, ...]:
    return cell_to_octree_path(quantize(p, grid), grid)


# ---------------------------------------------------------------------------
# KD tree
# ---------------------------------------------------------------------------

_KD_MAGIC = b"EKDT"
_KD_VERSION = 1
_NODE = struct.Struct("<Bddd")
_NULL_AXIS = 0xFF


@dataclass
class KdNode:
    axis: int
    point: Coord
    left: "KdNode | None" = None
    right: "KdNode | None" = None


@dataclass
class KdTree:
    """Public, static space partition; immutable once built."""

    root: KdNode | None
    depth: int

    def to_bytes(self) -> bytes:
        out = [_KD_MAGIC, struct.pack("<BH", _KD_VERSION, self.depth)]

        def walk(node: KdNode | None) -> None:
            if node is None:
                out.append(_NODE.pack(_NULL_AXIS, 0.0, 0.0, 0.0))
                return
            out.append(_NODE.pack(node.axis, *node.point))
            walk(node.left)
            walk(node.right)

        walk(self.root)
        return b"".join(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> "KdTree":
        if data[:4] != _KD_MAGIC:
            raise ValueError("bad KD tree magic")
        version, depth = struct.unpack_from("<BH", data, 4)
        if version != _KD_VERSION:
            raise ValueError(f"unsupported KD tree version {version}")
        pos = 7

        def read() -> KdNode | None:
            nonlocal pos
            axis, x, y, z = _NODE.unpack_from(data, pos)
            pos += _NODE.size
            if axis == _NULL_AXIS:
                return None
            node = KdNode(axis, (x, y, z))
            node.left = read()
            node.right = read()
            return node

        root = read()
        if pos != len(data):
            raise ValueError("trailing bytes in KD tree serialization")
        return cls(root, depth)


def build_kdtree(points: Sequence[Coord], max_depth: int) -> KdTree:
    """Median-split construction: axis cycles x, y, z; the median point itself
    becomes the node, the strict left slice goes left, the rest go right.

    Sorting is stable with a fixed secondary ordering so duplicate coordinates
    always produce the same tree.
    """
    if not points:
        raise EmptyInputError("no construction points")
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    indexed = [(tuple(p), i) for i, p in enumerate(points)]

    def build(items: list[tuple[Coord, int]], depth: int) -> KdNode | None:
        if not items or depth >= max_depth:
            return None
        axis = depth % 3
        items = sorted(items, key=lambda it: (it[0][axis], it[0][1], it[0][2], it[1]))
        median = len(items) // 2
        node = KdNode(axis, items[median][0])
        node.left = build(items[:median], depth + 1)
        node.right = build(items[median + 1 :], depth + 1)
        return node

    return KdTree(build(indexed, 0), max_depth)


def uniform_kdtree(grid: GridConfig, depth: int | None = None) -> KdTree:
    """Complete KD tree splitting the grid box at midpoints, axis cycling
    x, y, z.  Depth 3*m makes the leaves coincide with the grid cells."""
    if depth is None:
        depth = 3 * grid.bits_per_axis
    if depth < 1:
        raise ValueError("depth must be >= 1")
    bounds = [(lo, hi) for lo, hi, _ in grid._axes()]

    def build(box: list[tuple[float, float]], d: int) -> KdNode | None:
        if d >= depth:
            return None
        axis = d % 3
        mid = tuple((lo + hi) / 2.0 for lo, hi in box)
        node = KdNode(axis, mid)
        lo, hi = box[axis]
        left_box = list(box)
        left_box[axis] = (lo, mid[axis])
        right_box = list(box)
        right_box[axis] = (mid[axis], hi)
        node.left = build(left_box, d + 1)
        node.right = build(right_box, d + 1)
        return node

    return KdTree(build(bounds, 0), depth)


def point_to_prefix(p: SpatialPoint, tree: KdTree, depth: int) -> tuple[int, ...]:
    """Branch decisions from the root: 0 when the coordinate is strictly below
    the split, 1 otherwise (ties go right)."""
    if depth > tree.depth:
        raise DepthExceededError(f"depth {depth} exceeds tree depth {tree.depth}")
    coords = p.coords
    bits = []
    node = tree.root
    for _ in range(depth):
        if node is None:
            raise DepthExceededError(f"tree path ends before depth {depth}")
        bit = 0 if coords[node.axis] < node.point[node.axis] else 1
        bits.append(bit)
        node = node.right if bit else node.left
    return tuple(bits)
