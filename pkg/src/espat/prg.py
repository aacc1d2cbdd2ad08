"""Deterministic seed expansion and seed-to-group conversion primitives.

Everything below is derived from a single fixed-key AES-128 block permutation
used as a one-way compression function: for a seed ``s`` and a counter ``i``,

    block(s, i) = E(pad16(s) ^ ctr(i)) ^ pad16(s) ^ ctr(i)

where ``E`` is AES-128 under a public constant key and ``ctr(i)`` is the
16-byte little-endian encoding of ``i``.  Distinct counter constants give
domain separation between child seeds, control bits and group conversions, so
each derived quantity comes from its own block and never steals bits from a
sibling.

Group arithmetic lives in Z_{2^64}: values are plain ints reduced modulo 2^64,
which gives exact counting and cheap negation for cancellation payloads.
"""

from __future__ import annotations

import threading
from typing import NamedTuple

import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

DEFAULT_LAMBDA = 128

GROUP_BITS = 64
GROUP_MOD = 1 << GROUP_BITS
GROUP_MASK = GROUP_MOD - 1

# First 16 bytes of the hex expansion of pi: a nothing-up-my-sleeve AES key.
_AES_KEY = bytes.fromhex("243f6a8885a308d313198a2e03707344")
_CIPHER = Cipher(algorithms.AES(_AES_KEY), modes.ECB())

# Counter layout.  Children occupy the low counters, the control-bit block
# sits right after them, and conversions use a reserved high range so they can
# never collide with an expansion block of the same seed.
CTR_CONTROL8 = 8
CTR_CONTROL2 = 2
CTR_CONVERT = 16
CTR_PAIR_SEED = 17
CTR_PAIR_VALUE = 18

_BLOCK = 16

# ECB contexts are cheap to reuse but not safe to share across threads.
_tls = threading.local()


def _encrypt(data: bytes) -> bytes:
    update = getattr(_tls, "update", None)
    if update is None:
        update = _tls.update = _CIPHER.encryptor().update
    return update(data)


def _check_seed(seed: bytes) -> int:
    if len(seed) not in (8, 16):
        raise ValueError(f"seed must be 8 or 16 bytes, got {len(seed)}")
    return len(seed)


def _blocks(seed: bytes, counters: range) -> bytes:
    """Concatenated output blocks for the given counters (16 bytes each)."""
    s = int.from_bytes(seed, "little")
    pts = [(s ^ c).to_bytes(_BLOCK, "little") for c in counters]
    pt = b"".join(pts)
    ct = _encrypt(pt)
    out = int.from_bytes(ct, "little") ^ int.from_bytes(pt, "little")
    return out.to_bytes(len(pt), "little")


class Expanded8(NamedTuple):
    """Eight (seed, control bit) children in canonical order LLL..RRR."""

    seeds: tuple[bytes, ...]
    bits: tuple[int, ...]


class Expanded2(NamedTuple):
    """Two (seed, control bit) children in order L, R."""

    seeds: tuple[bytes, ...]
    bits: tuple[int, ...]


def expand8(seed: bytes) -> Expanded8:
    """Expand one seed into 8 child seeds plus 8 control bits (8λ+8 bits).

    Child i's seed comes from counter i; all 8 control bits come from the
    dedicated block at counter 8 (bit i = low bit of byte i), so seeds keep
    their full entropy.
    """
    lb = _check_seed(seed)
    raw = _blocks(seed, range(CTR_CONTROL8 + 1))
    seeds = tuple(raw[i * _BLOCK : i * _BLOCK + lb] for i in range(8))
    ctrl = raw[CTR_CONTROL8 * _BLOCK :]
    bits = tuple(ctrl[i] & 1 for i in range(8))
    return Expanded8(seeds, bits)


def expand2(seed: bytes) -> Expanded2:
    """Expand one seed into 2 child seeds plus 2 control bits (2λ+2 bits)."""
    lb = _check_seed(seed)
    raw = _blocks(seed, range(CTR_CONTROL2 + 1))
    seeds = (raw[0:lb], raw[_BLOCK : _BLOCK + lb])
    ctrl = raw[CTR_CONTROL2 * _BLOCK :]
    return Expanded2(seeds, (ctrl[0] & 1, ctrl[1] & 1))


def convert(seed: bytes) -> int:
    """Map a seed to a group element (low 64 bits of its reserved block)."""
    _check_seed(seed)
    s = int.from_bytes(seed, "little")
    pt = (s ^ CTR_CONVERT).to_bytes(_BLOCK, "little")
    ct = _encrypt(pt)
    return (int.from_bytes(ct[:8], "little") ^ int.from_bytes(pt[:8], "little")) & GROUP_MASK


def convert_pair(seed: bytes) -> tuple[bytes, int]:
    """Map a seed to a fresh seed plus a group element, via disjoint counters."""
    lb = _check_seed(seed)
    raw = _blocks(seed, range(CTR_PAIR_SEED, CTR_PAIR_VALUE + 1))
    return raw[:lb], int.from_bytes(raw[_BLOCK : _BLOCK + 8], "little")


def g_add(a: int, b: int) -> int:
    return (a + b) & GROUP_MASK


def g_sub(a: int, b: int) -> int:
    return (a - b) & GROUP_MASK


def g_neg(a: int) -> int:
    return (-a) & GROUP_MASK


# ---------------------------------------------------------------------------
# Integer fast paths.  Seeds travel as little-endian ints through the key
# generation and evaluation loops; bytes only appear at the AES boundary.
# ---------------------------------------------------------------------------


def expand8_ints(s: int, lb: int) -> tuple[list[int], int]:
    """Like expand8 but on int seeds; returns (child seeds, control byte)."""
    pt = b"".join((s ^ c).to_bytes(_BLOCK, "little") for c in range(9))
    ct = _encrypt(pt)
    mask = (1 << (lb * 8)) - 1
    out = int.from_bytes(ct, "little") ^ int.from_bytes(pt, "little")
    seeds = [(out >> (128 * i)) & mask for i in range(8)]
    ctrl = out >> (128 * 8)
    bits = 0
    for i in range(8):
        bits |= ((ctrl >> (8 * i)) & 1) << i
    return seeds, bits


def expand2_ints(s: int, lb: int) -> tuple[int, int, int, int]:
    """Like expand2 on int seeds; returns (sL, tL, sR, tR)."""
    pt = b"".join((s ^ c).to_bytes(_BLOCK, "little") for c in range(3))
    ct = _encrypt(pt)
    mask = (1 << (lb * 8)) - 1
    out = int.from_bytes(ct, "little") ^ int.from_bytes(pt, "little")
    ctrl = out >> 256
    return (out & mask, ctrl & 1, (out >> 128) & mask, (ctrl >> 8) & 1)


def convert_int(s: int) -> int:
    pt = (s ^ CTR_CONVERT).to_bytes(_BLOCK, "little")
    ct = _encrypt(pt)
    return (int.from_bytes(ct[:8], "little") ^ (s ^ CTR_CONVERT)) & GROUP_MASK


def convert_pair_int(s: int, lb: int) -> tuple[int, int]:
    pt = ((s ^ CTR_PAIR_SEED).to_bytes(_BLOCK, "little")
          + (s ^ CTR_PAIR_VALUE).to_bytes(_BLOCK, "little"))
    ct = _encrypt(pt)
    out = int.from_bytes(ct, "little") ^ int.from_bytes(pt, "little")
    return out & ((1 << (lb * 8)) - 1), (out >> 128) & GROUP_MASK


def expand2_one_int(s: int, lb: int, side: int) -> tuple[int, int]:
    """One child of expand2: only the chosen seed block and the control block
    go through the cipher.  Identical output to expand2's child `side`."""
    pt = (s ^ side).to_bytes(_BLOCK, "little") + (s ^ CTR_CONTROL2).to_bytes(_BLOCK, "little")
    ct = _encrypt(pt)
    out = int.from_bytes(ct, "little") ^ int.from_bytes(pt, "little")
    return out & ((1 << (lb * 8)) - 1), (out >> (128 + 8 * side)) & 1


def expand8_one_int(s: int, lb: int, slot: int) -> tuple[int, int]:
    """One child of expand8; identical output to expand8's child `slot`."""
    pt = (s ^ slot).to_bytes(_BLOCK, "little") + (s ^ CTR_CONTROL8).to_bytes(_BLOCK, "little")
    ct = _encrypt(pt)
    out = int.from_bytes(ct, "little") ^ int.from_bytes(pt, "little")
    return out & ((1 << (lb * 8)) - 1), (out >> (128 + 8 * slot)) & 1


def expand2_pair_ints(s0: int, s1: int, lb: int) -> tuple[int, int, int, int, int, int, int, int]:
    """expand2 of two seeds in one pass: (sL0, tL0, sR0, tR0, sL1, tL1, sR1, tR1)."""
    pt = (s0.to_bytes(_BLOCK, "little") + (s0 ^ 1).to_bytes(_BLOCK, "little")
          + (s0 ^ 2).to_bytes(_BLOCK, "little") + s1.to_bytes(_BLOCK, "little")
          + (s1 ^ 1).to_bytes(_BLOCK, "little") + (s1 ^ 2).to_bytes(_BLOCK, "little"))
    ct = _encrypt(pt)
    mask = (1 << (lb * 8)) - 1
    out = int.from_bytes(ct, "little") ^ int.from_bytes(pt, "little")
    a, b = out & ((1 << 384) - 1), out >> 384
    ca, cb = a >> 256, b >> 256
    return (a & mask, ca & 1, (a >> 128) & mask, (ca >> 8) & 1,
            b & mask, cb & 1, (b >> 128) & mask, (cb >> 8) & 1)


def convert_pair_ints2(s0: int, s1: int, lb: int) -> tuple[int, int, int, int]:
    """convert_pair of two seeds in one pass: (seed0, w0, seed1, w1)."""
    pt = ((s0 ^ CTR_PAIR_SEED).to_bytes(_BLOCK, "little")
          + (s0 ^ CTR_PAIR_VALUE).to_bytes(_BLOCK, "little")
          + (s1 ^ CTR_PAIR_SEED).to_bytes(_BLOCK, "little")
          + (s1 ^ CTR_PAIR_VALUE).to_bytes(_BLOCK, "little"))
    ct = _encrypt(pt)
    mask = (1 << (lb * 8)) - 1
    out = int.from_bytes(ct, "little") ^ int.from_bytes(pt, "little")
    return (out & mask, (out >> 128) & GROUP_MASK,
            (out >> 256) & mask, (out >> 384) & GROUP_MASK)


def expand8_pair_ints(s0: int, s1: int, lb: int) -> tuple[list[int], int, list[int], int]:
    """expand8 of two seeds in one pass: (seeds0, bits0, seeds1, bits1)."""
    pt = b"".join([(s ^ c).to_bytes(_BLOCK, "little") for s in (s0, s1) for c in range(9)])
    ct = _encrypt(pt)
    mask = (1 << (lb * 8)) - 1
    out = int.from_bytes(ct, "little") ^ int.from_bytes(pt, "little")
    res = []
    for half in (out & ((1 << 1152) - 1), out >> 1152):
        seeds = [(half >> (128 * i)) & mask for i in range(8)]
        ctrl = half >> 1024
        bits = 0
        for i in range(8):
            bits |= ((ctrl >> (8 * i)) & 1) << i
        res.append((seeds, bits))
    return res[0][0], res[0][1], res[1][0], res[1][1]


# ---------------------------------------------------------------------------
# Batched paths for full-domain tree walks.  Seeds are (N, lb) uint8 arrays;
# the whole frontier of a tree level goes through AES in one call.
# ---------------------------------------------------------------------------


def _ctr_array(counters: list[int]) -> np.ndarray:
    arr = np.zeros((len(counters), _BLOCK), dtype=np.uint8)
    for i, c in enumerate(counters):
        arr[i] = np.frombuffer(c.to_bytes(_BLOCK, "little"), dtype=np.uint8)
    return arr


_CTR8 = _ctr_array(list(range(9)))
_CTR2 = _ctr_array(list(range(3)))
_CTR_CONV = _ctr_array([CTR_CONVERT])
_CTR_PAIR = _ctr_array([CTR_PAIR_SEED, CTR_PAIR_VALUE])


def _blocks_batch(seeds: np.ndarray, ctrs: np.ndarray) -> np.ndarray:
    n, lb = seeds.shape
    k = ctrs.shape[0]
    pt = np.zeros((n, k, _BLOCK), dtype=np.uint8)
    pt[:, :, :lb] = seeds[:, None, :]
    pt ^= ctrs[None, :, :]
    ct = np.frombuffer(_encrypt(pt.tobytes()), dtype=np.uint8).reshape(n, k, _BLOCK)
    return ct ^ pt


def expand8_batch(seeds: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batch expand8: (N, lb) seeds -> ((N, 8, lb) child seeds, (N, 8) bits)."""
    lb = seeds.shape[1]
    out = _blocks_batch(seeds, _CTR8)
    return out[:, :8, :lb], out[:, 8, :8] & 1


def expand2_batch(seeds: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batch expand2: (N, lb) seeds -> ((N, 2, lb) child seeds, (N, 2) bits)."""
    lb = seeds.shape[1]
    out = _blocks_batch(seeds, _CTR2)
    return out[:, :2, :lb], out[:, 2, :2] & 1


def convert_batch(seeds: np.ndarray) -> np.ndarray:
    """Batch convert: (N, lb) seeds -> (N,) uint64 group values."""
    out = _blocks_batch(seeds, _CTR_CONV)
    return out[:, 0, :8].copy().view("<u8").reshape(-1)


def convert_pair_batch(seeds: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batch convert_pair: (N, lb) -> ((N, lb) fresh seeds, (N,) uint64)."""
    lb = seeds.shape[1]
    out = _blocks_batch(seeds, _CTR_PAIR)
    return out[:, 0, :lb], out[:, 1, :8].copy().view("<u8").reshape(-1)
