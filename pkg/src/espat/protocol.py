"""In-process simulation of the client / two-server / requester workflow.

The two servers are isolated state machines: every message between roles is a
serialized byte string, each server deserializes only its own payload plus
the public blob, and byte counters are incremented from actual message
lengths.  Aggregation is streaming: servers evaluate each incoming share
against a requester-declared region set (or the full cell histogram) and fold
it into per-region accumulators.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from random import Random
from typing import Sequence

import numpy as np

from . import espat_b, espat_plus
from .encoding import (
    GridConfig,
    KdTree,
    OutOfBoundsError,
    SpatialPoint,
    binary_to_gray,
    point_to_octree_path,
    point_to_prefix,
    uniform_kdtree,
)
from .prg import DEFAULT_LAMBDA, GROUP_MASK

Region = tuple[int, ...]

NEGATIVE_THRESHOLD = 1 << 63


class SchemeMismatchError(ValueError):
    """Submission scheme does not match the server's scheme."""


class RegionSetMismatchError(ValueError):
    """The two servers reported shares for different region sets."""


class NegativeCountError(ValueError):
    """A combined count decodes as negative: update keys were lost or
    applied twice."""


class UnalignedBoxError(ValueError):
    """Box query is not a union of whole grid cells."""


class UnknownPointError(KeyError):
    """Update references a client with no previously submitted point."""


@dataclass(frozen=True)
class ClientSubmission:
    """One client upload: distinct serialized shares per server plus a public
    blob (correction words) that goes to both verbatim."""

    client_id: str
    scheme: str
    kind: str  # "point" or "move"
    share0: bytes
    share1: bytes
    public: bytes = b""

    def share_for(self, party: int) -> bytes:
        return self.share1 if party else self.share0

    def bytes_for(self, party: int) -> int:
        return len(self.share_for(party)) + len(self.public)


def encode_point(p: SpatialPoint, scheme: str, grid: GridConfig, tree: KdTree | None) -> Region:
    if not grid.contains(p):
        raise OutOfBoundsError(f"point {p.coords} outside grid")
    if scheme == "b":
        return point_to_octree_path(p, grid)
    assert tree is not None
    return point_to_prefix(p, tree, tree.depth)


def build_point_submission(
    p: SpatialPoint,
    scheme: str,
    grid: GridConfig,
    tree: KdTree | None = None,
    *,
    beta: int = 1,
    lam: int = DEFAULT_LAMBDA,
    rng: Random | None = None,
) -> ClientSubmission:
    """Encode a point and generate the key shares carrying payload `beta`."""
    code = encode_point(p, scheme, grid, tree)
    if scheme == "b":
        k0, k1 = espat_b.keygen_b(code, beta & GROUP_MASK, lam=lam, rng=rng)
        return ClientSubmission(p.client_id, "b", "point", k0.to_bytes(), k1.to_bytes())
    res = espat_plus.keygen_plus(code, [beta & GROUP_MASK] * len(code), lam=lam, rng=rng)
    return ClientSubmission(
        p.client_id, "plus", "point",
        res.key0.to_bytes(), res.key1.to_bytes(), res.pp.to_bytes(),
    )


def build_move_submission(
    client_id: str,
    old_code: Region,
    new_code: Region,
    *,
    lam: int = DEFAULT_LAMBDA,
    rng: Random | None = None,
) -> ClientSubmission:
    """Move bundle for two paths sharing a nonempty proper prefix."""
    m = common_prefix_len(old_code, new_code)
    if not 1 <= m < len(old_code):
        raise ValueError(f"move bundle needs 1 <= m < n, got m={m}")
    bundle = espat_plus.move_gen(
        old_code[:m], old_code[m:], new_code[m:], lam=lam, rng=rng
    )
    return ClientSubmission(
        client_id, "plus", "move",
        bundle.key0.to_bytes(), bundle.key1.to_bytes(), bundle.public.to_bytes(),
    )


def common_prefix_len(a: Region, b: Region) -> int:
    m = 0
    for x, y in zip(a, b):
        if x != y:
            break
        m += 1
    return m


class ServerState:
    """One server's streaming aggregation state.

    Holds either an explicit region list or a full-histogram accumulator;
    never sees the other server's payloads.
    """

    def __init__(
        self,
        party: int,
        scheme: str,
        depth: int,
        *,
        regions: Sequence[Region] | None = None,
        histogram: bool = False,
        lam: int = DEFAULT_LAMBDA,
    ) -> None:
        if scheme not in ("b", "plus"):
            raise ValueError(f"unknown scheme {scheme!r}")
        if histogram == (regions is not None):
            raise ValueError("exactly one of regions / histogram must be given")
        self.party = party
        self.scheme = scheme
        self.depth = depth
        self.lam = lam
        self.histogram = histogram
        self.regions: tuple[Region, ...] = tuple(tuple(r) for r in regions or ())
        if histogram:
            size = 8**depth if scheme == "b" else 1 << depth
            self.hist = np.zeros(size, dtype=np.uint64)
        self.accum: list[int] = [0] * len(self.regions)
        self.bytes_received = 0
        self.bytes_sent = 0
        self.submissions = 0

    def ingest(self, sub: ClientSubmission) -> None:
        if sub.scheme != self.scheme:
            raise SchemeMismatchError(f"server speaks {self.scheme!r}, got {sub.scheme!r}")
        self.bytes_received += sub.bytes_for(self.party)
        self.submissions += 1
        share = sub.share_for(self.party)
        if self.scheme == "b":
            key = espat_b.KeyB.from_bytes(share)
            if key.depth != self.depth:
                raise ValueError(f"key depth {key.depth} != server depth {self.depth}")
            if self.histogram:
                self.hist += espat_b.full_eval_b(key)
            else:
                for i, region in enumerate(self.regions):
                    self.accum[i] = (self.accum[i] + espat_b.eval_region_b(key, region)) & GROUP_MASK
            return
        key = espat_plus.KeyPlus.from_bytes(share)
        if sub.kind == "move":
            public = espat_plus.MovePublic.from_bytes(sub.public)
            if public.depth != self.depth:
                raise ValueError(f"bundle depth {public.depth} != server depth {self.depth}")
            if self.histogram:
                self.hist += espat_plus.full_eval_move(key, public)
            else:
                m = public.split
                for i, region in enumerate(self.regions):
                    y = espat_plus.move_eval(
                        key, public, region[:m], region[m:], region[m:]
                    )
                    self.accum[i] = (self.accum[i] + y) & GROUP_MASK
            return
        pp = espat_plus.PublicParams.from_bytes(sub.public)
        if pp.depth != self.depth:
            raise ValueError(f"pp depth {pp.depth} != server depth {self.depth}")
        if self.histogram:
            self.hist += espat_plus.full_eval_plus(key, pp)
        else:
            for i, region in enumerate(self.regions):
                self.accum[i] = (self.accum[i] + espat_plus.eval_prefix(key, pp, region)) & GROUP_MASK

    def report(self) -> bytes:
        """Serialized aggregate shares sent to the requester."""
        if self.histogram:
            payload = struct.pack("<I", len(self.hist)) + self.hist.tobytes()
        else:
            payload = struct.pack("<I", len(self.accum)) + b"".join(
                v.to_bytes(8, "little") for v in self.accum
            )
        self.bytes_sent += len(payload)
        return payload


def _parse_report(data: bytes) -> np.ndarray:
    (count,) = struct.unpack_from("<I", data, 0)
    vals = np.frombuffer(data, dtype="<u8", offset=4)
    if len(vals) != count:
        raise ValueError("report length mismatch")
    return vals


@dataclass
class RequesterResult:
    """Combined per-region counts (region -> count) or the full histogram."""

    counts: dict[Region, int] | None
    histogram: np.ndarray | None

    def total(self) -> int:
        if self.histogram is not None:
            return int(self.histogram.sum(dtype=np.uint64))
        assert self.counts is not None
        return sum(self.counts.values())


def requester_combine(
    report0: bytes,
    report1: bytes,
    regions: Sequence[Region] | None = None,
) -> RequesterResult:
    """Add the two servers' share vectors; flags negative-looking counts."""
    y0 = _parse_report(report0)
    y1 = _parse_report(report1)
    if len(y0) != len(y1):
        raise RegionSetMismatchError(f"share counts differ: {len(y0)} vs {len(y1)}")
    if regions is not None and len(regions) != len(y0):
        raise RegionSetMismatchError("region list does not match share count")
    combined = y0 + y1
    bad = np.nonzero(combined >= np.uint64(NEGATIVE_THRESHOLD))[0]
    if len(bad):
        raise NegativeCountError(
            f"{len(bad)} region(s) decode as negative (first at index {int(bad[0])})"
        )
    if regions is None:
        return RequesterResult(counts=None, histogram=combined)
    return RequesterResult(
        counts={tuple(r): int(c) for r, c in zip(regions, combined)}, histogram=None
    )


# ---------------------------------------------------------------------------
# Region queries
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RegionQuery:
    """Either an axis-aligned half-open box in grid cell coordinates, or an
    explicit list of octree paths / KD prefixes."""

    box: tuple[tuple[int, int], tuple[int, int], tuple[int, int]] | None = None
    regions: tuple[Region, ...] | None = None

    @classmethod
    def whole_grid(cls, grid: GridConfig) -> "RegionQuery":
        s = grid.cells_per_axis
        return cls(box=((0, s), (0, s), (0, s)))


def _check_box(box, grid: GridConfig) -> None:
    s = grid.cells_per_axis
    for lo, hi in box:
        if not (isinstance(lo, int) and isinstance(hi, int)):
            raise UnalignedBoxError(f"box bounds must be integers, got ({lo}, {hi})")
        if not (0 <= lo < hi <= s):
            raise UnalignedBoxError(f"box range ({lo}, {hi}) outside [0, {s}]")


def _gray_path(vals: tuple[int, int, int], depth: int) -> Region:
    gx, gy, gz = (binary_to_gray(v, depth) for v in vals)
    path = []
    for level in range(depth - 1, -1, -1):
        sym = (((gx >> level) & 1) << 2) | (((gy >> level) & 1) << 1) | ((gz >> level) & 1)
        path.append(sym)
    return tuple(path)


def decompose_region(
    query: RegionQuery,
    grid: GridConfig,
    scheme: str,
    kd_depth: int | None = None,
) -> list[Region]:
    """Minimal cover of a box by maximal aligned octree cells / KD prefixes.

    Emitted regions are disjoint and their union equals the box exactly.  KD
    covers assume the uniform midpoint tree over the grid (axis cycling
    x, y, z one bit per level).
    """
    if query.regions is not None:
        return [tuple(r) for r in query.regions]
    if query.box is None:
        raise ValueError("query has neither box nor explicit regions")
    _check_box(query.box, grid)
    m = grid.bits_per_axis
    (x0, x1), (y0, y1), (z0, z1) = query.box
    out: list[Region] = []

    if scheme == "b":

        def rec(d: int, bx: int, by: int, bz: int) -> None:
            size = 1 << (m - d)
            lox, loy, loz = bx * size, by * size, bz * size
            if lox >= x1 or lox + size <= x0 or loy >= y1 or loy + size <= y0 \
                    or loz >= z1 or loz + size <= z0:
                return
            if x0 <= lox and lox + size <= x1 and y0 <= loy and loy + size <= y1 \
                    and z0 <= loz and loz + size <= z1:
                out.append(_gray_path((bx, by, bz), d))
                return
            for child in range(8):
                rec(d + 1, bx * 2 + (child >> 2), by * 2 + ((child >> 1) & 1), bz * 2 + (child & 1))

        rec(0, 0, 0, 0)
        return out

    depth = kd_depth if kd_depth is not None else 3 * m

    def rec_kd(level: int, vals: list[int], bits: list[int], prefix: Region) -> None:
        ranges = []
        for a in range(3):
            size = 1 << (m - bits[a])
            ranges.append((vals[a] * size, vals[a] * size + size))
        lims = ((x0, x1), (y0, y1), (z0, z1))
        if any(lo >= lim[1] or hi <= lim[0] for (lo, hi), lim in zip(ranges, lims)):
            return
        contained = all(lim[0] <= lo and hi <= lim[1] for (lo, hi), lim in zip(ranges, lims))
        if contained and level >= 1:
            out.append(prefix)
            return
        if level == depth:
            return
        axis = level % 3
        for bit in (0, 1):
            nv = list(vals)
            nb = list(bits)
            nv[axis] = vals[axis] * 2 + bit
            nb[axis] = bits[axis] + 1
            rec_kd(level + 1, nv, nb, prefix + (bit,))

    rec_kd(0, [0, 0, 0], [0, 0, 0], ())
    return out


# ---------------------------------------------------------------------------
# End-to-end simulation
# ---------------------------------------------------------------------------


@dataclass
class CommReport:
    """Byte-exact traffic accounting per role."""

    scheme: str
    submissions: int
    client_to_server: tuple[int, int]
    server_to_requester: tuple[int, int]

    def rows(self) -> list[tuple[str, str, int]]:
        return [
            ("client", "server0", self.client_to_server[0]),
            ("client", "server1", self.client_to_server[1]),
            ("server0", "requester", self.server_to_requester[0]),
            ("server1", "requester", self.server_to_requester[1]),
        ]

    def as_csv(self) -> str:
        lines = ["scheme,sender,receiver,bytes"]
        for sender, receiver, nbytes in self.rows():
            lines.append(f"{self.scheme},{sender},{receiver},{nbytes}")
        return "\n".join(lines) + "\n"


class Simulation:
    """Wires clients, the two isolated servers and the requester together."""

    def __init__(
        self,
        scheme: str,
        grid: GridConfig,
        *,
        regions: Sequence[Region] | None = None,
        histogram: bool = False,
        lam: int = DEFAULT_LAMBDA,
        rng: Random | None = None,
        tree: KdTree | None = None,
    ) -> None:
        self.scheme = scheme
        self.grid = grid
        self.lam = lam
        self.rng = rng
        self.tree = tree if tree is not None else (
            uniform_kdtree(grid) if scheme == "plus" else None
        )
        self.depth = grid.depth if scheme == "b" else self.tree.depth
        self.servers = (
            ServerState(0, scheme, self.depth, regions=regions, histogram=histogram, lam=lam),
            ServerState(1, scheme, self.depth, regions=regions, histogram=histogram, lam=lam),
        )
        self.regions = None if histogram else tuple(tuple(r) for r in regions)
        self.positions: dict[str, SpatialPoint] = {}
        self.client_bytes = [0, 0]
        self.transcript: list[tuple[str, str, int, str]] = []

    def encode(self, p: SpatialPoint) -> Region:
        return encode_point(p, self.scheme, self.grid, self.tree)

    def deliver(self, sub: ClientSubmission) -> None:
        for party in (0, 1):
            self.client_bytes[party] += sub.bytes_for(party)
            self.servers[party].ingest(sub)
            self.transcript.append(
                (f"submit:{sub.kind}", f"server{party}", sub.bytes_for(party), sub.client_id)
            )

    def submit_point(self, p: SpatialPoint) -> ClientSubmission:
        sub = build_point_submission(
            p, self.scheme, self.grid, self.tree, lam=self.lam, rng=self.rng
        )
        self.deliver(sub)
        self.positions[p.client_id] = p
        return sub

    def apply_update(self, client_id: str, new_point: SpatialPoint) -> list[ClientSubmission]:
        """Replace a client's registered point: cancel + insert for the octree
        scheme, a move bundle for the KD scheme whenever the paths share a
        usable prefix (plain re-keying otherwise)."""
        if client_id not in self.positions:
            raise UnknownPointError(client_id)
        old_point = self.positions[client_id]
        old_code = self.encode(old_point)
        new_code = self.encode(new_point)
        subs: list[ClientSubmission] = []
        if old_code == new_code:
            self.positions[client_id] = new_point
            return subs
        if self.scheme == "b":
            cancel = build_point_submission(
                old_point, "b", self.grid, None, beta=-1, lam=self.lam, rng=self.rng
            )
            insert = build_point_submission(
                new_point, "b", self.grid, None, beta=1, lam=self.lam, rng=self.rng
            )
            subs = [cancel, insert]
        else:
            m = common_prefix_len(old_code, new_code)
            if 1 <= m < len(old_code):
                subs = [build_move_submission(client_id, old_code, new_code, lam=self.lam, rng=self.rng)]
            else:
                cancel = build_point_submission(
                    old_point, "plus", self.grid, self.tree, beta=-1, lam=self.lam, rng=self.rng
                )
                insert = build_point_submission(
                    new_point, "plus", self.grid, self.tree, beta=1, lam=self.lam, rng=self.rng
                )
                subs = [cancel, insert]
        for sub in subs:
            self.deliver(sub)
        self.positions[client_id] = new_point
        return subs

    def combine(self) -> RequesterResult:
        r0 = self.servers[0].report()
        r1 = self.servers[1].report()
        region_tag = "histogram" if self.regions is None else f"{len(self.regions)} regions"
        self.transcript.append(("report", "requester", len(r0), region_tag))
        self.transcript.append(("report", "requester", len(r1), region_tag))
        return requester_combine(r0, r1, self.regions)

    def transcript_lines(self) -> list[str]:
        """Line-delimited audit records: event, receiving role, bytes, detail."""
        return [f"{event} {role} {nbytes} {detail}" for event, role, nbytes, detail in self.transcript]

    def comm_report(self) -> CommReport:
        return CommReport(
            scheme=self.scheme,
            submissions=self.servers[0].submissions,
            client_to_server=(self.servers[0].bytes_received, self.servers[1].bytes_received),
            server_to_requester=(self.servers[0].bytes_sent, self.servers[1].bytes_sent),
        )
