"""Octree DPF over Gray-coded cell paths, with cancel/insert updates.

The domain is the set of depth-n octree paths, one 3-bit Gray symbol per
level.  Key generation walks the target path, expanding both parties' seeds
into 8 children per level and emitting one correction word per level with a
per-child slot layout: the on-path child's slot holds the XOR of the seven
off-path corrections, every off-path child's slot holds its own correction.
Evaluation selects the slot named by the input symbol, so the two parties'
states collapse to equality the moment an input diverges from the target.
"""

from __future__ import annotations

import secrets
import struct
from dataclasses import dataclass
from random import Random
from typing import Sequence

import numpy as np

from . import prg
from .prg import DEFAULT_LAMBDA, GROUP_MASK

_MAGIC = b"ESPB"
_VERSION = 1
_HEADER = struct.Struct("<4sBBHH")

MAX_FULL_EVAL_CELLS = 1 << 24

# Octree symbols are 3-bit Gray codewords; the expansion slot of a symbol is
# its rank in the reflected-Gray sequence, matching the canonical child order
# LLL, LLR, LRL, LRR, RLL, RLR, RRL, RRR.
GRAY_SLOT = (0, 1, 3, 2, 7, 6, 4, 5)


class EmptyPathError(ValueError):
    """Target path must have at least one symbol."""


class DepthMismatchError(ValueError):
    """Evaluation input length does not match the key depth."""


class DomainTooLargeError(ValueError):
    """Full-domain evaluation would exceed the memory guard."""


def _check_path(path: Sequence[int]) -> None:
    for sym in path:
        if not 0 <= sym <= 7:
            raise ValueError(f"bad octree symbol {sym}")


@dataclass(frozen=True)
class KeyB:
    """One party's key: root seed/control bit, n slot-layout correction words
    (8 seed corrections + 8 control-bit corrections each), final group word."""

    party: int
    lam: int
    depth: int
    seed: bytes
    cws: tuple[tuple[tuple[int, ...], int], ...]  # ((8 seed cws), control byte)
    final_cw: int

    def to_bytes(self) -> bytes:
        lb = self.lam // 8
        out = [_HEADER.pack(_MAGIC, _VERSION, self.party, self.lam, self.depth)]
        out.append(self.seed)
        out.append(bytes([self.party]))
        for seeds, tbits in self.cws:
            for s in seeds:
                out.append(s.to_bytes(lb, "little"))
            out.append(bytes([tbits]))
        out.append(self.final_cw.to_bytes(8, "little"))
        return b"".join(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> "KeyB":
        magic, version, party, lam, depth = _HEADER.unpack_from(data, 0)
        if magic != _MAGIC:
            raise ValueError("bad key magic")
        if version != _VERSION:
            raise ValueError(f"unsupported key version {version}")
        lb = lam // 8
        expect = _HEADER.size + lb + 1 + depth * (8 * lb + 1) + 8
        if len(data) != expect:
            raise ValueError(f"key length {len(data)} != expected {expect}")
        pos = _HEADER.size
        seed = data[pos : pos + lb]
        pos += lb
        if data[pos] != party:
            raise ValueError("control bit does not match party")
        pos += 1
        cws = []
        for _ in range(depth):
            seeds = tuple(
                int.from_bytes(data[pos + i * lb : pos + (i + 1) * lb], "little")
                for i in range(8)
            )
            pos += 8 * lb
            cws.append((seeds, data[pos]))
            pos += 1
        final_cw = int.from_bytes(data[pos : pos + 8], "little")
        return cls(party, lam, depth, seed, tuple(cws), final_cw)


@dataclass(frozen=True)
class UpdatePairB:
    """Cancellation keys (payload -1 at the old path) plus insertion keys
    (payload +1 at the new path)."""

    cancel: tuple[KeyB, KeyB]
    insert: tuple[KeyB, KeyB]


def _rand_seed(lb: int, rng: Random | None) -> int:
    if rng is None:
        return int.from_bytes(secrets.token_bytes(lb), "little")
    return int.from_bytes(rng.randbytes(lb), "little")


def keygen_b(
    alpha: Sequence[int],
    beta: int,
    *,
    lam: int = DEFAULT_LAMBDA,
    rng: Random | None = None,
) -> tuple[KeyB, KeyB]:
    """Key shares summing to beta at the target path and 0 at every other."""
    if len(alpha) == 0:
        raise EmptyPathError("target path is empty")
    _check_path(alpha)
    lb = lam // 8
    s0 = _rand_seed(lb, rng)
    s1 = _rand_seed(lb, rng)
    root0, root1 = s0, s1
    t0, t1 = 0, 1
    cws = []
    for sym in alpha:
        keep = GRAY_SLOT[sym]
        seeds0, bits0, seeds1, bits1 = prg.expand8_pair_ints(s0, s1, lb)
        slot_cw = [a ^ b for a, b in zip(seeds0, seeds1)]
        keep_cw = 0
        tbits = 0
        for i in range(8):
            if i == keep:
                continue
            keep_cw ^= slot_cw[i]
            tbits |= (((bits0 >> i) ^ (bits1 >> i)) & 1) << i
        slot_cw[keep] = keep_cw
        t_keep = ((bits0 >> keep) ^ (bits1 >> keep) ^ 1) & 1
        tbits |= t_keep << keep
        s0 = seeds0[keep] ^ keep_cw if t0 else seeds0[keep]
        s1 = seeds1[keep] ^ keep_cw if t1 else seeds1[keep]
        t0 = ((bits0 >> keep) & 1) ^ (t0 & t_keep)
        t1 = ((bits1 >> keep) & 1) ^ (t1 & t_keep)
        cws.append((tuple(slot_cw), tbits))
    final = (beta - prg.convert_int(s0) + prg.convert_int(s1)) & GROUP_MASK
    if t1:
        final = (-final) & GROUP_MASK
    n = len(alpha)
    k0 = KeyB(0, lam, n, root0.to_bytes(lb, "little"), tuple(cws), final)
    k1 = KeyB(1, lam, n, root1.to_bytes(lb, "little"), tuple(cws), final)
    return k0, k1


def eval_b(key: KeyB, x: Sequence[int]) -> int:
    """One party's additive share at the given depth-n path."""
    if len(x) != key.depth:
        raise DepthMismatchError(f"path length {len(x)} != key depth {key.depth}")
    _check_path(x)
    lb = key.lam // 8
    s = int.from_bytes(key.seed, "little")
    t = key.party
    for sym, (slot_cw, tbits) in zip(x, key.cws):
        slot = GRAY_SLOT[sym]
        cs, ct = prg.expand8_one_int(s, lb, slot)
        if t:
            cs ^= slot_cw[slot]
            ct ^= (tbits >> slot) & 1
        s, t = cs, ct
    y = (prg.convert_int(s) + (key.final_cw if t else 0)) & GROUP_MASK
    return (-y) & GROUP_MASK if key.party else y


# Permutation taking expansion-slot order to symbol order.
_SYMBOL_PERM = np.array(GRAY_SLOT, dtype=np.intp)


def _descend_all(key: KeyB, seeds: np.ndarray, ts: np.ndarray, start: int) -> tuple[np.ndarray, np.ndarray]:
    """Expand a frontier down to the leaves, children ordered by symbol."""
    lb = key.lam // 8
    for slot_cw, tbits in key.cws[start:]:
        child, bits = prg.expand8_batch(seeds)
        cw_arr = np.frombuffer(
            b"".join(s.to_bytes(lb, "little") for s in slot_cw), dtype=np.uint8
        ).reshape(8, lb)
        tb_arr = np.array([(tbits >> i) & 1 for i in range(8)], dtype=np.uint8)
        mask = ts[:, None, None]
        child = child ^ (cw_arr[None, :, :] * mask)
        bits = bits ^ (tb_arr[None, :] * ts[:, None])
        seeds = child[:, _SYMBOL_PERM, :].reshape(-1, lb)
        ts = bits[:, _SYMBOL_PERM].reshape(-1)
    return seeds, ts


def _leaf_shares(key: KeyB, seeds: np.ndarray, ts: np.ndarray) -> np.ndarray:
    y = prg.convert_batch(seeds) + ts.astype(np.uint64) * np.uint64(key.final_cw)
    if key.party:
        y = np.uint64(0) - y
    return y


def full_eval_b(key: KeyB) -> np.ndarray:
    """All 8^n shares in one traversal; index = path read as base-8 digits."""
    if 8 ** key.depth > MAX_FULL_EVAL_CELLS:
        raise DomainTooLargeError(f"refusing full evaluation of 8^{key.depth} cells")
    lb = key.lam // 8
    seeds = np.frombuffer(key.seed, dtype=np.uint8).reshape(1, lb).copy()
    ts = np.array([key.party], dtype=np.uint8)
    seeds, ts = _descend_all(key, seeds, ts, 0)
    return _leaf_shares(key, seeds, ts)


def eval_region_b(key: KeyB, prefix: Sequence[int]) -> int:
    """Share of the total count inside the subtree rooted at `prefix`
    (sum of the leaf shares under it)."""
    depth = len(prefix)
    if depth > key.depth:
        raise DepthMismatchError(f"prefix length {depth} exceeds key depth {key.depth}")
    _check_path(prefix)
    if 8 ** (key.depth - depth) > MAX_FULL_EVAL_CELLS:
        raise DomainTooLargeError("subtree too large")
    lb = key.lam // 8
    s = int.from_bytes(key.seed, "little")
    t = key.party
    for sym, (slot_cw, tbits) in zip(prefix, key.cws[:depth]):
        slot = GRAY_SLOT[sym]
        cs, ct = prg.expand8_one_int(s, lb, slot)
        if t:
            cs ^= slot_cw[slot]
            ct ^= (tbits >> slot) & 1
        s, t = cs, ct
    seeds = np.frombuffer(s.to_bytes(lb, "little"), dtype=np.uint8).reshape(1, lb).copy()
    ts = np.array([t], dtype=np.uint8)
    seeds, ts = _descend_all(key, seeds, ts, depth)
    return int(_leaf_shares(key, seeds, ts).sum(dtype=np.uint64))


def gen_update_b(
    alpha_old: Sequence[int],
    alpha_new: Sequence[int],
    *,
    lam: int = DEFAULT_LAMBDA,
    rng: Random | None = None,
) -> UpdatePairB:
    """Move one unit of count from the old path to the new one."""
    if len(alpha_old) != len(alpha_new):
        raise DepthMismatchError("old and new paths must have the same depth")
    cancel = keygen_b(alpha_old, GROUP_MASK, lam=lam, rng=rng)  # -1 mod 2^64
    insert = keygen_b(alpha_new, 1, lam=lam, rng=rng)
    return UpdatePairB(cancel, insert)
