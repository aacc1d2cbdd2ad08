"""Two-party binary-tree DPF over Z_{2^64} payloads.

Shares a point function f(x) = beta * [x == alpha] between two keys: each key
expands a seed down a depth-n binary tree, applying a public per-level
correction word whenever its control bit is set.  The two parties' states
coincide everywhere except along the path to alpha, so their outputs cancel
off-path and sum to beta at alpha.

Also serves as the correctness oracle for the shared seed-expansion machinery:
it is built from the same expand2/convert primitives as the KD-prefix scheme.
"""

from __future__ import annotations

import secrets
import struct
from dataclasses import dataclass
from random import Random

import numpy as np

from . import prg
from .prg import DEFAULT_LAMBDA, GROUP_MASK

_MAGIC = b"EDPF"
_VERSION = 1
_HEADER = struct.Struct("<4sBBHH")

MAX_FULL_EVAL_BITS = 24


class LengthMismatchError(ValueError):
    """Evaluation input does not match the key's domain bit length."""


class DomainTooLargeError(ValueError):
    """Full-domain evaluation would exceed the memory guard."""


@dataclass(frozen=True)
class BinaryDpfKey:
    party: int
    lam: int
    depth: int
    seed: bytes
    cws: tuple[tuple[int, int, int], ...]  # (seed_cw, t_cw_left, t_cw_right)
    final_cw: int

    def to_bytes(self) -> bytes:
        lb = self.lam // 8
        out = [_HEADER.pack(_MAGIC, _VERSION, self.party, self.lam, self.depth)]
        out.append(self.seed)
        out.append(bytes([self.party]))
        for s_cw, t_l, t_r in self.cws:
            out.append(s_cw.to_bytes(lb, "little"))
            out.append(bytes([t_l | (t_r << 1)]))
        out.append(self.final_cw.to_bytes(8, "little"))
        return b"".join(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> "BinaryDpfKey":
        magic, version, party, lam, depth = _HEADER.unpack_from(data, 0)
        if magic != _MAGIC:
            raise ValueError("bad key magic")
        if version != _VERSION:
            raise ValueError(f"unsupported key version {version}")
        lb = lam // 8
        expect = _HEADER.size + lb + 1 + depth * (lb + 1) + 8
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
            s_cw = int.from_bytes(data[pos : pos + lb], "little")
            tb = data[pos + lb]
            cws.append((s_cw, tb & 1, (tb >> 1) & 1))
            pos += lb + 1
        final_cw = int.from_bytes(data[pos : pos + 8], "little")
        return cls(party, lam, depth, seed, tuple(cws), final_cw)


def _rand_seed(lb: int, rng: Random | None) -> int:
    if rng is None:
        return int.from_bytes(secrets.token_bytes(lb), "little")
    return int.from_bytes(rng.randbytes(lb), "little")


def dpf_gen(
    alpha: int,
    nbits: int,
    beta: int,
    *,
    lam: int = DEFAULT_LAMBDA,
    rng: Random | None = None,
) -> tuple[BinaryDpfKey, BinaryDpfKey]:
    """Produce the two key shares of f(x) = beta * [x == alpha] on n-bit x."""
    if nbits < 1:
        raise ValueError("domain must have at least 1 bit")
    if alpha < 0 or alpha >> nbits:
        raise ValueError(f"alpha {alpha} does not fit in {nbits} bits")
    lb = lam // 8
    s0 = _rand_seed(lb, rng)
    s1 = _rand_seed(lb, rng)
    root0, root1 = s0, s1
    t0, t1 = 0, 1
    cws = []
    for level in range(nbits):
        a = (alpha >> (nbits - 1 - level)) & 1
        sl0, tl0, sr0, tr0, sl1, tl1, sr1, tr1 = prg.expand2_pair_ints(s0, s1, lb)
        if a:
            s_cw = sl0 ^ sl1
            t_cw_l = tl0 ^ tl1
            t_cw_r = tr0 ^ tr1 ^ 1
            k0s, k0t, k1s, k1t, t_keep = sr0, tr0, sr1, tr1, t_cw_r
        else:
            s_cw = sr0 ^ sr1
            t_cw_l = tl0 ^ tl1 ^ 1
            t_cw_r = tr0 ^ tr1
            k0s, k0t, k1s, k1t, t_keep = sl0, tl0, sl1, tl1, t_cw_l
        s0 = k0s ^ s_cw if t0 else k0s
        s1 = k1s ^ s_cw if t1 else k1s
        t0 = k0t ^ (t0 & t_keep)
        t1 = k1t ^ (t1 & t_keep)
        cws.append((s_cw, t_cw_l, t_cw_r))
    final = (beta - prg.convert_int(s0) + prg.convert_int(s1)) & GROUP_MASK
    if t1:
        final = (-final) & GROUP_MASK
    k0 = BinaryDpfKey(0, lam, nbits, root0.to_bytes(lb, "little"), tuple(cws), final)
    k1 = BinaryDpfKey(1, lam, nbits, root1.to_bytes(lb, "little"), tuple(cws), final)
    return k0, k1


def dpf_eval(key: BinaryDpfKey, x: int) -> int:
    """One party's additive share at point x."""
    if x < 0 or x >> key.depth:
        raise LengthMismatchError(f"x {x} does not fit in {key.depth} bits")
    lb = key.lam // 8
    s = int.from_bytes(key.seed, "little")
    t = key.party
    for level, (s_cw, t_l, t_r) in enumerate(key.cws):
        bit = (x >> (key.depth - 1 - level)) & 1
        cs, ct = prg.expand2_one_int(s, lb, bit)
        if t:
            cs ^= s_cw
            ct ^= t_r if bit else t_l
        s, t = cs, ct
    y = (prg.convert_int(s) + (key.final_cw if t else 0)) & GROUP_MASK
    return (-y) & GROUP_MASK if key.party else y


def dpf_full_eval(key: BinaryDpfKey) -> np.ndarray:
    """All 2^n shares in one tree traversal, index = input value."""
    if key.depth > MAX_FULL_EVAL_BITS:
        raise DomainTooLargeError(f"refusing full evaluation of 2^{key.depth} leaves")
    lb = key.lam // 8
    seeds = np.frombuffer(key.seed, dtype=np.uint8).reshape(1, lb).copy()
    ts = np.array([key.party], dtype=np.uint8)
    for s_cw, t_l, t_r in key.cws:
        child, bits = prg.expand2_batch(seeds)
        cw_arr = np.frombuffer(s_cw.to_bytes(lb, "little"), dtype=np.uint8)
        mask = ts[:, None, None]
        child = child ^ (cw_arr[None, None, :] * mask)
        bits = bits ^ (np.array([t_l, t_r], dtype=np.uint8)[None, :] * ts[:, None])
        seeds = child.reshape(-1, lb)
        ts = bits.reshape(-1)
    y = prg.convert_batch(seeds)
    y = y + ts.astype(np.uint64) * np.uint64(key.final_cw)
    if key.party:
        y = np.uint64(0) - y
    return y
