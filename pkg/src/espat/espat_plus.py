"""Incremental DPF over KD-tree prefixes, with move-optimized updates.

Every prefix of the target branch-decision string carries its own payload:
evaluating a length-l prefix yields shares of beta_l when the prefix lies on
the target path and shares of zero otherwise.  A key is a single seed; all
per-level correction words live in a public parameter blob shared verbatim by
both servers.

A move bundle re-keys only the tail of a path: one segment of correction
words covers the unchanged shared prefix (payload 0), one cancels the old
tail (payload -1 per level) and one inserts the new tail (payload +1), all
chained off the same internal states so a single seed pair serves the whole
bundle.
"""

from __future__ import annotations

import secrets
import struct
from dataclasses import dataclass
from random import Random
from typing import NamedTuple, Sequence

import numpy as np

from . import prg
from .prg import DEFAULT_LAMBDA, GROUP_MASK

_MAGIC = b"ESPP"
_VERSION = 1
_KIND_KEY = 0
_KIND_PP = 1
_KIND_BUNDLE = 2

_KEY_HEADER = struct.Struct("<4sBBBHH")
_PP_HEADER = struct.Struct("<4sBBHH")
_BUNDLE_HEADER = struct.Struct("<4sBBHHH")

MAX_FULL_EVAL_BITS = 24


class PrefixTooLongError(ValueError):
    """Query prefix is longer than the published correction words."""


class DepthMismatchError(ValueError):
    """Decision sequences do not line up with the bundle's segment depths."""


class BadSplitError(ValueError):
    """Move split point must satisfy 1 <= m < n."""


class MismatchedTailsError(ValueError):
    """Old and new tails must have equal, nonzero length."""


@dataclass(frozen=True)
class KeyPlus:
    """One party's key share: just the root seed (the control bit is the
    party index)."""

    party: int
    lam: int
    depth: int
    seed: bytes

    def to_bytes(self) -> bytes:
        return _KEY_HEADER.pack(_MAGIC, _VERSION, _KIND_KEY, self.party, self.lam, self.depth) + self.seed

    @classmethod
    def from_bytes(cls, data: bytes) -> "KeyPlus":
        magic, version, kind, party, lam, depth = _KEY_HEADER.unpack_from(data, 0)
        if magic != _MAGIC or kind != _KIND_KEY:
            raise ValueError("bad key magic/kind")
        if version != _VERSION:
            raise ValueError(f"unsupported version {version}")
        lb = lam // 8
        if len(data) != _KEY_HEADER.size + lb:
            raise ValueError("bad key length")
        return cls(party, lam, depth, data[_KEY_HEADER.size :])


class CwPlus(NamedTuple):
    seed_cw: int
    t_left: int
    t_right: int
    w_cw: int


@dataclass(frozen=True)
class PublicParams:
    """Per-level correction words, held identically by both servers."""

    lam: int
    cws: tuple[CwPlus, ...]

    @property
    def depth(self) -> int:
        return len(self.cws)

    def to_bytes(self) -> bytes:
        out = [_PP_HEADER.pack(_MAGIC, _VERSION, _KIND_PP, self.lam, self.depth)]
        out.append(_pack_cws(self.cws, self.lam // 8))
        return b"".join(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> "PublicParams":
        magic, version, kind, lam, depth = _PP_HEADER.unpack_from(data, 0)
        if magic != _MAGIC or kind != _KIND_PP:
            raise ValueError("bad pp magic/kind")
        if version != _VERSION:
            raise ValueError(f"unsupported version {version}")
        lb = lam // 8
        cws = _unpack_cws(data, _PP_HEADER.size, depth, lb)
        if len(data) != _PP_HEADER.size + depth * (lb + 9):
            raise ValueError("bad pp length")
        return cls(lam, cws)


def _pack_cws(cws: Sequence[CwPlus], lb: int) -> bytes:
    out = []
    for cw in cws:
        out.append(cw.seed_cw.to_bytes(lb, "little"))
        out.append(bytes([cw.t_left | (cw.t_right << 1)]))
        out.append(cw.w_cw.to_bytes(8, "little"))
    return b"".join(out)


def _unpack_cws(data: bytes, pos: int, count: int, lb: int) -> tuple[CwPlus, ...]:
    cws = []
    for _ in range(count):
        seed_cw = int.from_bytes(data[pos : pos + lb], "little")
        tb = data[pos + lb]
        w = int.from_bytes(data[pos + lb + 1 : pos + lb + 9], "little")
        cws.append(CwPlus(seed_cw, tb & 1, (tb >> 1) & 1, w))
        pos += lb + 9
    return tuple(cws)


class SegmentState(NamedTuple):
    """Both parties' internal (seed, control bit) state after a generation
    segment; feeds the next segment of a chained move bundle."""

    s0: int
    t0: int
    s1: int
    t1: int


class KeygenResult(NamedTuple):
    key0: KeyPlus
    key1: KeyPlus
    pp: PublicParams
    state: SegmentState


class EvalState(NamedTuple):
    party: int
    lam: int
    seed: int
    t: int
    level: int


def _gen_segment(
    decisions: Sequence[int], betas: Sequence[int], st: SegmentState, lb: int
) -> tuple[list[CwPlus], SegmentState]:
    s0, t0, s1, t1 = st
    cws = []
    for keep, beta in zip(decisions, betas):
        sl0, tl0, sr0, tr0, sl1, tl1, sr1, tr1 = prg.expand2_pair_ints(s0, s1, lb)
        if keep:
            s_cw = sl0 ^ sl1
            t_cw_l = tl0 ^ tl1
            t_cw_r = tr0 ^ tr1 ^ 1
            k0s, k0t, k1s, k1t, t_keep = sr0, tr0, sr1, tr1, t_cw_r
        else:
            s_cw = sr0 ^ sr1
            t_cw_l = tl0 ^ tl1 ^ 1
            t_cw_r = tr0 ^ tr1
            k0s, k0t, k1s, k1t, t_keep = sl0, tl0, sl1, tl1, t_cw_l
        nt0 = k0t ^ (t0 & t_keep)
        nt1 = k1t ^ (t1 & t_keep)
        stilde0 = k0s ^ s_cw if t0 else k0s
        stilde1 = k1s ^ s_cw if t1 else k1s
        s0, w0, s1, w1 = prg.convert_pair_ints2(stilde0, stilde1, lb)
        w_cw = (beta - w0 + w1) & GROUP_MASK
        if nt1:
            w_cw = (-w_cw) & GROUP_MASK
        t0, t1 = nt0, nt1
        cws.append(CwPlus(s_cw, t_cw_l, t_cw_r, w_cw))
    return cws, SegmentState(s0, t0, s1, t1)


def _rand_seed(lb: int, rng: Random | None) -> int:
    if rng is None:
        return int.from_bytes(secrets.token_bytes(lb), "little")
    return int.from_bytes(rng.randbytes(lb), "little")


def _check_bits(bits: Sequence[int]) -> None:
    for b in bits:
        if b not in (0, 1):
            raise ValueError(f"branch decision must be 0 or 1, got {b}")


def keygen_plus(
    target: Sequence[int],
    betas: Sequence[int] | None = None,
    *,
    lam: int = DEFAULT_LAMBDA,
    rng: Random | None = None,
) -> KeygenResult:
    """Keys plus public correction words for a depth-n target prefix.

    `betas` gives the payload published at each prefix length (default: all
    ones, i.e. plain counting).  The final internal states are returned so
    move generation can chain further segments off the same keys.
    """
    n = len(target)
    if n < 1:
        raise ValueError("target must have at least one decision")
    _check_bits(target)
    if betas is None:
        betas = [1] * n
    if len(betas) != n:
        raise ValueError(f"need {n} payloads, got {len(betas)}")
    lb = lam // 8
    s0 = _rand_seed(lb, rng)
    s1 = _rand_seed(lb, rng)
    cws, state = _gen_segment(target, betas, SegmentState(s0, 0, s1, 1), lb)
    k0 = KeyPlus(0, lam, n, s0.to_bytes(lb, "little"))
    k1 = KeyPlus(1, lam, n, s1.to_bytes(lb, "little"))
    return KeygenResult(k0, k1, PublicParams(lam, tuple(cws)), state)


def init_state(key: KeyPlus) -> EvalState:
    return EvalState(key.party, key.lam, int.from_bytes(key.seed, "little"), key.party, 0)


def eval_next(state: EvalState, cw: CwPlus, decision: int) -> tuple[EvalState, int]:
    """Advance one level along `decision` (0 left, 1 right), returning the
    new state and this level's output share."""
    if decision not in (0, 1):
        raise ValueError(f"branch decision must be 0 or 1, got {decision}")
    lb = state.lam // 8
    cs, ct = prg.expand2_one_int(state.seed, lb, decision)
    if state.t:
        cs ^= cw.seed_cw
        ct ^= cw.t_right if decision else cw.t_left
    seed, w = prg.convert_pair_int(cs, lb)
    y = (w + cw.w_cw) & GROUP_MASK if ct else w
    if state.party:
        y = (-y) & GROUP_MASK
    return EvalState(state.party, state.lam, seed, ct, state.level + 1), y


def eval_prefix(key: KeyPlus, pp: PublicParams, query: Sequence[int]) -> int:
    """One party's share at a length-l prefix (shares across parties sum to
    beta_l on the target path, 0 elsewhere)."""
    l = len(query)
    if l < 1:
        raise ValueError("query prefix must be nonempty")
    if l > pp.depth:
        raise PrefixTooLongError(f"prefix length {l} exceeds pp depth {pp.depth}")
    _check_bits(query)
    state = init_state(key)
    y = 0
    for bit, cw in zip(query, pp.cws):
        state, y = eval_next(state, cw, bit)
    return y


@dataclass(frozen=True)
class MovePublic:
    """The three chained correction-word segments of a move, shared verbatim
    with both servers: the unchanged prefix, the cancelled old tail and the
    inserted new tail."""

    pp_common: PublicParams
    pp_old: PublicParams
    pp_new: PublicParams

    @property
    def split(self) -> int:
        return self.pp_common.depth

    @property
    def depth(self) -> int:
        return self.pp_common.depth + self.pp_old.depth

    def to_bytes(self) -> bytes:
        lam = self.pp_common.lam
        lb = lam // 8
        head = _BUNDLE_HEADER.pack(_MAGIC, _VERSION, _KIND_BUNDLE, lam, self.split, self.depth)
        return head + b"".join(
            _pack_cws(pp.cws, lb) for pp in (self.pp_common, self.pp_old, self.pp_new)
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "MovePublic":
        magic, version, kind, lam, m, n = _BUNDLE_HEADER.unpack_from(data, 0)
        if magic != _MAGIC or kind != _KIND_BUNDLE:
            raise ValueError("bad bundle magic/kind")
        if version != _VERSION:
            raise ValueError(f"unsupported version {version}")
        lb = lam // 8
        rec = lb + 9
        expect = _BUNDLE_HEADER.size + rec * (m + 2 * (n - m))
        if len(data) != expect:
            raise ValueError("bad bundle length")
        pos = _BUNDLE_HEADER.size
        common = _unpack_cws(data, pos, m, lb)
        pos += rec * m
        old = _unpack_cws(data, pos, n - m, lb)
        pos += rec * (n - m)
        new = _unpack_cws(data, pos, n - m, lb)
        return cls(
            PublicParams(lam, common),
            PublicParams(lam, old),
            PublicParams(lam, new),
        )


@dataclass(frozen=True)
class MoveBundle:
    """Key pair plus the public segments of a move."""

    key0: KeyPlus
    key1: KeyPlus
    public: MovePublic

    @property
    def split(self) -> int:
        return self.public.split

    @property
    def depth(self) -> int:
        return self.public.depth


def move_gen(
    common: Sequence[int],
    old_tail: Sequence[int],
    new_tail: Sequence[int],
    *,
    lam: int = DEFAULT_LAMBDA,
    rng: Random | None = None,
) -> MoveBundle:
    """Bundle moving one unit of count from common+old_tail to common+new_tail.

    The shared-prefix segment carries zero payloads (those levels' counts are
    unchanged by a move); the old tail cancels with -1 per level and the new
    tail inserts with +1 per level.
    """
    m = len(common)
    n = m + len(old_tail)
    if m < 1 or m >= n:
        raise BadSplitError(f"need 1 <= m < n, got m={m}, n={n}")
    if len(old_tail) != len(new_tail) or not old_tail:
        raise MismatchedTailsError("old and new tails must be nonempty and equal length")
    _check_bits(common)
    _check_bits(old_tail)
    _check_bits(new_tail)
    lb = lam // 8
    s0 = _rand_seed(lb, rng)
    s1 = _rand_seed(lb, rng)
    cws_common, fork = _gen_segment(common, [0] * m, SegmentState(s0, 0, s1, 1), lb)
    minus_one = GROUP_MASK  # -1 mod 2^64
    cws_old, _ = _gen_segment(old_tail, [minus_one] * (n - m), fork, lb)
    cws_new, _ = _gen_segment(new_tail, [1] * (n - m), fork, lb)
    k0 = KeyPlus(0, lam, n, s0.to_bytes(lb, "little"))
    k1 = KeyPlus(1, lam, n, s1.to_bytes(lb, "little"))
    public = MovePublic(
        PublicParams(lam, tuple(cws_common)),
        PublicParams(lam, tuple(cws_old)),
        PublicParams(lam, tuple(cws_new)),
    )
    return MoveBundle(k0, k1, public)


def move_eval(
    key: KeyPlus,
    public: MovePublic,
    common: Sequence[int],
    old: Sequence[int],
    new: Sequence[int],
) -> int:
    """One party's share of a move at a query prefix, split into its
    common-segment decisions and the (equal-length) decisions fed to the old
    and new tail segments.

    For queries no deeper than the split only the common walk runs; deeper
    queries fork the state and return the sum of the two tail shares.
    """
    m = public.split
    if old or new:
        if len(common) != m:
            raise DepthMismatchError(f"need all {m} common decisions before the tails")
        if len(old) != len(new):
            raise DepthMismatchError("old/new tail decisions must have equal length")
        if len(old) > public.pp_old.depth:
            raise DepthMismatchError("tail decisions exceed bundle depth")
    else:
        if len(common) < 1:
            raise ValueError("query prefix must be nonempty")
        if len(common) > m:
            raise DepthMismatchError(f"common decisions exceed split {m}")
    _check_bits(common)
    _check_bits(old)
    _check_bits(new)
    state = init_state(key)
    y = 0
    for bit, cw in zip(common, public.pp_common.cws):
        state, y = eval_next(state, cw, bit)
    if not old:
        return y
    st_old = st_new = state
    y_old = y_new = 0
    for i, (bo, bn) in enumerate(zip(old, new)):
        st_old, y_old = eval_next(st_old, public.pp_old.cws[i], bo)
        st_new, y_new = eval_next(st_new, public.pp_new.cws[i], bn)
    return (y_old + y_new) & GROUP_MASK


# ---------------------------------------------------------------------------
# Batched full-domain walks
# ---------------------------------------------------------------------------


def _descend_levels(
    seeds: np.ndarray, ts: np.ndarray, cws: Sequence[CwPlus], lb: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Expand a frontier through the given levels (children in 0,1 order);
    returns final seeds, control bits and last-level converted values."""
    w = np.zeros(len(ts), dtype=np.uint64)
    for cw in cws:
        child, bits = prg.expand2_batch(seeds)
        cw_arr = np.frombuffer(cw.seed_cw.to_bytes(lb, "little"), dtype=np.uint8)
        mask = ts[:, None, None]
        child = child ^ (cw_arr[None, None, :] * mask)
        bits = bits ^ (np.array([cw.t_left, cw.t_right], dtype=np.uint8)[None, :] * ts[:, None])
        stilde = child.reshape(-1, lb)
        ts = bits.reshape(-1)
        seeds, w = prg.convert_pair_batch(stilde)
        w = w + ts.astype(np.uint64) * np.uint64(cw.w_cw)
    return seeds, ts, w


def full_eval_plus(key: KeyPlus, pp: PublicParams, depth: int | None = None) -> np.ndarray:
    """Shares at every depth-`depth` prefix (default: pp depth); index = the
    prefix read MSB-first as an integer."""
    if depth is None:
        depth = pp.depth
    if depth < 1 or depth > pp.depth:
        raise PrefixTooLongError(f"depth {depth} out of range 1..{pp.depth}")
    if depth > MAX_FULL_EVAL_BITS:
        raise ValueError(f"refusing full evaluation of 2^{depth} prefixes")
    lb = key.lam // 8
    seeds = np.frombuffer(key.seed, dtype=np.uint8).reshape(1, lb).copy()
    ts = np.array([key.party], dtype=np.uint8)
    _, _, w = _descend_levels(seeds, ts, pp.cws[:depth], lb)
    if key.party:
        w = np.uint64(0) - w
    return w


def full_eval_move(key: KeyPlus, public: MovePublic) -> np.ndarray:
    """Leaf-level shares of a move bundle over all 2^n prefixes."""
    n = public.depth
    if n > MAX_FULL_EVAL_BITS:
        raise ValueError(f"refusing full evaluation of 2^{n} prefixes")
    lb = key.lam // 8
    seeds = np.frombuffer(key.seed, dtype=np.uint8).reshape(1, lb).copy()
    ts = np.array([key.party], dtype=np.uint8)
    seeds, ts, _ = _descend_levels(seeds, ts, public.pp_common.cws, lb)
    _, _, w_old = _descend_levels(seeds, ts, public.pp_old.cws, lb)
    _, _, w_new = _descend_levels(seeds, ts, public.pp_new.cws, lb)
    out = w_old + w_new  # leaf order matches full_eval_plus (prefix MSB-first)
    if key.party:
        out = np.uint64(0) - out
    return out
