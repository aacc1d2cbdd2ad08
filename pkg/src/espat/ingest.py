"""Trajectory CSV parsing, synthetic point clouds and the plaintext oracle.

The oracle counts by direct membership testing on the same encodings the
protocol uses, so protocol results can be compared against it with zero
tolerance.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import datetime
from random import Random
from typing import Iterable, Sequence

import numpy as np

from .encoding import (
    GridConfig,
    KdTree,
    SpatialPoint,
    point_to_octree_path,
    point_to_prefix,
)

FEET_TO_METERS = 0.3048
_PLT_HEADER_LINES = 6


def _parse_timestamp(raw: str) -> float:
    raw = raw.strip()
    try:
        return float(raw)
    except ValueError:
        return datetime.fromisoformat(raw).timestamp()


def _check_latlon(lat: float, lon: float) -> None:
    if not (math.isfinite(lat) and -90.0 <= lat <= 90.0):
        raise ValueError(f"latitude {lat} out of range")
    if not (math.isfinite(lon) and -180.0 <= lon <= 180.0):
        raise ValueError(f"longitude {lon} out of range")


def parse_csv(lines: Iterable[str]) -> tuple[list[SpatialPoint], list[tuple[int, str]]]:
    """Parse `client_id,timestamp,lat,lon[,alt]` rows.

    A header row is skipped silently; malformed rows are skipped and reported
    as (line number, reason) pairs.  Nothing here is fatal.
    """
    points: list[SpatialPoint] = []
    errors: list[tuple[int, str]] = []
    reader = csv.reader(lines)
    for lineno, row in enumerate(reader, start=1):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if lineno == 1 and row and row[0].strip().lower() in ("client_id", "client", "id"):
            continue
        try:
            if len(row) < 4:
                raise ValueError(f"expected at least 4 fields, got {len(row)}")
            client_id = row[0].strip()
            ts = _parse_timestamp(row[1])
            lat = float(row[2])
            lon = float(row[3])
            alt = float(row[4]) if len(row) > 4 and row[4].strip() else 0.0
            if not math.isfinite(alt):
                raise ValueError(f"altitude {alt} not finite")
            _check_latlon(lat, lon)
        except ValueError as exc:
            errors.append((lineno, str(exc)))
            continue
        points.append(SpatialPoint(lat, lon, alt, ts, client_id))
    return points, errors


def parse_plt(
    lines: Iterable[str], client_id: str
) -> tuple[list[SpatialPoint], list[tuple[int, str]]]:
    """Parse Geolife PLT trajectories: 6 header lines, then
    lat,lon,0,alt_feet,days,date,time rows (altitude converted to meters)."""
    points: list[SpatialPoint] = []
    errors: list[tuple[int, str]] = []
    for lineno, raw in enumerate(lines, start=1):
        if lineno <= _PLT_HEADER_LINES:
            continue
        row = raw.strip().split(",")
        if len(row) == 1 and not row[0]:
            continue
        try:
            if len(row) < 5:
                raise ValueError(f"expected at least 5 fields, got {len(row)}")
            lat = float(row[0])
            lon = float(row[1])
            alt_feet = float(row[3])
            days = float(row[4])
            _check_latlon(lat, lon)
            alt = 0.0 if alt_feet == -777 else alt_feet * FEET_TO_METERS
        except ValueError as exc:
            errors.append((lineno, str(exc)))
            continue
        points.append(SpatialPoint(lat, lon, alt, days * 86400.0, client_id))
    return points, errors


def points_to_csv(points: Sequence[SpatialPoint]) -> str:
    rows = ["client_id,timestamp,lat,lon,alt"]
    for p in points:
        rows.append(f"{p.client_id},{p.timestamp!r},{p.lat!r},{p.lon!r},{p.alt!r}")
    return "\n".join(rows) + "\n"


# ---------------------------------------------------------------------------
# Plaintext oracle
# ---------------------------------------------------------------------------


@dataclass
class OracleResult:
    counts: dict[tuple[int, ...], int]
    out_of_bounds: int


def _encode_all(
    points: Sequence[SpatialPoint],
    scheme: str,
    grid: GridConfig,
    tree: KdTree | None,
    depth: int,
) -> tuple[list[tuple[int, ...]], int]:
    encoded = []
    oob = 0
    for p in points:
        if not grid.contains(p):
            oob += 1
            continue
        if scheme == "b":
            encoded.append(point_to_octree_path(p, grid))
        else:
            assert tree is not None
            encoded.append(point_to_prefix(p, tree, depth))
    return encoded, oob


def oracle_count(
    points: Sequence[SpatialPoint],
    regions: Sequence[tuple[int, ...]],
    *,
    scheme: str,
    grid: GridConfig,
    tree: KdTree | None = None,
) -> OracleResult:
    """Exact plaintext counts per region by direct membership testing."""
    depth = grid.depth if scheme == "b" else (tree.depth if tree else 0)
    encoded, oob = _encode_all(points, scheme, grid, tree, depth)
    counts = {tuple(r): 0 for r in regions}
    for code in encoded:
        for r in counts:
            if code[: len(r)] == r:
                counts[r] += 1
    return OracleResult(counts, oob)


def oracle_histogram(
    points: Sequence[SpatialPoint],
    *,
    scheme: str,
    grid: GridConfig,
    tree: KdTree | None = None,
) -> tuple[np.ndarray, int]:
    """Exact full-cell histogram; index = path/prefix read as an integer."""
    if scheme == "b":
        depth = grid.depth
        size = 8**depth
        radix = 8
    else:
        assert tree is not None
        depth = tree.depth
        size = 1 << depth
        radix = 2
    encoded, oob = _encode_all(points, scheme, grid, tree, depth)
    hist = np.zeros(size, dtype=np.uint64)
    for code in encoded:
        idx = 0
        for d in code:
            idx = idx * radix + d
        hist[idx] += np.uint64(1)
    return hist, oob


# ---------------------------------------------------------------------------
# Synthetic point clouds (no external downloads needed for tests)
# ---------------------------------------------------------------------------


def synthetic_uniform(count: int, grid: GridConfig, rng: Random) -> list[SpatialPoint]:
    points = []
    for i in range(count):
        points.append(
            SpatialPoint(
                lat=rng.uniform(grid.lat_min, grid.lat_max),
                lon=rng.uniform(grid.lon_min, grid.lon_max),
                alt=rng.uniform(grid.alt_min, grid.alt_max),
                timestamp=float(i),
                client_id=f"c{i:05d}",
            )
        )
    return points


def synthetic_clusters(
    count: int, grid: GridConfig, rng: Random, clusters: int = 5
) -> list[SpatialPoint]:
    """Gaussian blobs around uniformly drawn centers, resampled into bounds."""
    axes = [
        (grid.lat_min, grid.lat_max),
        (grid.lon_min, grid.lon_max),
        (grid.alt_min, grid.alt_max),
    ]
    centers = [tuple(rng.uniform(lo, hi) for lo, hi in axes) for _ in range(clusters)]
    sigmas = [0.05 * (hi - lo) for lo, hi in axes]
    points = []
    for i in range(count):
        center = centers[rng.randrange(clusters)]
        coords = []
        for (lo, hi), mu, sigma in zip(axes, center, sigmas):
            c = rng.gauss(mu, sigma)
            while not (lo <= c < hi):
                c = rng.gauss(mu, sigma)
            coords.append(c)
        points.append(SpatialPoint(coords[0], coords[1], coords[2], float(i), f"c{i:05d}"))
    return points


def filter_in_bounds(
    points: Sequence[SpatialPoint], grid: GridConfig
) -> tuple[list[SpatialPoint], list[SpatialPoint]]:
    """Split points into (inside, outside) the grid box."""
    inside, outside = [], []
    for p in points:
        (inside if grid.contains(p) else outside).append(p)
    return inside, outside
