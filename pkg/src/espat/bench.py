"""Timing and size sweeps for key generation, evaluation, updates and
requester-side statistics.

Timings use a monotonic clock, single-threaded, and report the median of
warm repeats; raw samples are kept alongside so the CSV output never hides
variance.  Byte columns come from the actual serialized message sizes.
"""

from __future__ import annotations

import struct
import time
from dataclasses import dataclass, field
from random import Random

import numpy as np

from . import dpf, espat_b, espat_plus
from .prg import DEFAULT_LAMBDA

STRING_LENGTH_SWEEP = (16, 32, 64, 96, 128)
RECORD_SWEEP = (100, 200, 300, 400, 500)
MIN_REPEATS = 5


def octree_depth(bits: int) -> int:
    """String length in bits -> octree depth (3 bits per level)."""
    return (bits + 2) // 3


@dataclass
class BenchRecord:
    scheme: str
    operation: str
    param_kind: str  # "bits" or "records"
    param: int
    median_ms: float
    bytes_out: int
    samples_ms: list[float] = field(default_factory=list)

    def csv_row(self) -> str:
        samples = "|".join(f"{s:.4f}" for s in self.samples_ms)
        return (
            f"{self.scheme},{self.operation},{self.param_kind},{self.param},"
            f"{self.median_ms:.4f},{self.bytes_out},{samples}"
        )


CSV_HEADER = "scheme,operation,param_kind,param,median_ms,bytes,samples_ms"


def _time_op(fn, repeats: int) -> tuple[float, list[float]]:
    samples = []
    fn()  # warm-up, not recorded
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        samples.append((time.perf_counter() - t0) * 1e3)
    return float(np.median(samples)), samples


def _rand_path(depth: int, rng: Random) -> tuple[int, ...]:
    return tuple(rng.randrange(8) for _ in range(depth))


def _rand_bits(depth: int, rng: Random) -> tuple[int, ...]:
    return tuple(rng.randrange(2) for _ in range(depth))


def bench_keygen_b(bits: int, rng: Random, repeats: int, lam: int = DEFAULT_LAMBDA) -> BenchRecord:
    n = octree_depth(bits)
    alpha = _rand_path(n, rng)

    upload = []

    def op() -> None:
        k0, k1 = espat_b.keygen_b(alpha, 1, lam=lam, rng=rng)
        upload[:] = [len(k0.to_bytes()) + len(k1.to_bytes())]

    med, samples = _time_op(op, repeats)
    return BenchRecord("b", "keygen", "bits", bits, med, upload[0], samples)


def bench_keygen_plus(bits: int, rng: Random, repeats: int, lam: int = DEFAULT_LAMBDA) -> BenchRecord:
    target = _rand_bits(bits, rng)

    upload = []

    def op() -> None:
        res = espat_plus.keygen_plus(target, lam=lam, rng=rng)
        upload[:] = [
            len(res.key0.to_bytes()) + len(res.key1.to_bytes()) + 2 * len(res.pp.to_bytes())
        ]

    med, samples = _time_op(op, repeats)
    return BenchRecord("plus", "keygen", "bits", bits, med, upload[0], samples)


def bench_keygen_dpf(bits: int, rng: Random, repeats: int, lam: int = DEFAULT_LAMBDA) -> BenchRecord:
    alpha = rng.getrandbits(bits)

    upload = []

    def op() -> None:
        k0, k1 = dpf.dpf_gen(alpha, bits, 1, lam=lam, rng=rng)
        upload[:] = [len(k0.to_bytes()) + len(k1.to_bytes())]

    med, samples = _time_op(op, repeats)
    return BenchRecord("dpf", "keygen", "bits", bits, med, upload[0], samples)


def bench_eval_b(bits: int, rng: Random, repeats: int, lam: int = DEFAULT_LAMBDA) -> BenchRecord:
    n = octree_depth(bits)
    alpha = _rand_path(n, rng)
    k0, _ = espat_b.keygen_b(alpha, 1, lam=lam, rng=rng)
    x = _rand_path(n, rng)
    med, samples = _time_op(lambda: espat_b.eval_b(k0, x), repeats)
    return BenchRecord("b", "eval", "bits", bits, med, 8, samples)


def bench_eval_plus(bits: int, rng: Random, repeats: int, lam: int = DEFAULT_LAMBDA) -> BenchRecord:
    target = _rand_bits(bits, rng)
    res = espat_plus.keygen_plus(target, lam=lam, rng=rng)
    query = target[: max(1, bits // 4)]  # prefix query: cost scales with l, not n
    med, samples = _time_op(lambda: espat_plus.eval_prefix(res.key0, res.pp, query), repeats)
    return BenchRecord("plus", "eval", "bits", bits, med, 8, samples)


def bench_update_b(bits: int, rng: Random, repeats: int, lam: int = DEFAULT_LAMBDA) -> BenchRecord:
    n = octree_depth(bits)
    old = _rand_path(n, rng)
    new = old[: n - 1] + (((old[-1] + 1) % 8),)

    upload = []

    def op() -> None:
        pair = espat_b.gen_update_b(old, new, lam=lam, rng=rng)
        upload[:] = [
            sum(len(k.to_bytes()) for k in pair.cancel) + sum(len(k.to_bytes()) for k in pair.insert)
        ]

    med, samples = _time_op(op, repeats)
    return BenchRecord("b", "update", "bits", bits, med, upload[0], samples)


def bench_update_plus(bits: int, rng: Random, repeats: int, lam: int = DEFAULT_LAMBDA) -> BenchRecord:
    n = bits
    m = max(1, n // 2)
    common = _rand_bits(m, rng)
    old_tail = _rand_bits(n - m, rng)
    new_tail = old_tail[:-1] + (1 - old_tail[-1],)

    upload = []

    def op() -> None:
        bundle = espat_plus.move_gen(common, old_tail, new_tail, lam=lam, rng=rng)
        upload[:] = [
            len(bundle.key0.to_bytes()) + len(bundle.key1.to_bytes())
            + 2 * len(bundle.public.to_bytes())
        ]

    med, samples = _time_op(op, repeats)
    return BenchRecord("plus", "update", "bits", bits, med, upload[0], samples)


def bench_statistics(scheme: str, records: int, rng: Random, repeats: int, regions: int = 64) -> BenchRecord:
    """Requester-side combine: adds two share vectors; the record count only
    affects what happened upstream, so this should be flat."""
    y0 = np.array([rng.getrandbits(64) for _ in range(regions)], dtype=np.uint64)
    y1 = np.uint64(0) - y0  # shares of zero: combine stays in range
    r0 = struct.pack("<I", regions) + y0.tobytes()
    r1 = struct.pack("<I", regions) + y1.tobytes()

    from .protocol import requester_combine

    med, samples = _time_op(lambda: requester_combine(r0, r1), repeats)
    return BenchRecord(scheme, "statistics", "records", records, med, len(r0) + len(r1), samples)


def bench_keygen_records(
    scheme: str, records: int, bits: int, rng: Random, repeats: int, lam: int = DEFAULT_LAMBDA
) -> BenchRecord:
    if scheme == "b":
        n = octree_depth(bits)
        paths = [_rand_path(n, rng) for _ in range(records)]

        def op() -> None:
            for p in paths:
                espat_b.keygen_b(p, 1, lam=lam, rng=rng)

    else:
        targets = [_rand_bits(bits, rng) for _ in range(records)]

        def op() -> None:
            for t in targets:
                espat_plus.keygen_plus(t, lam=lam, rng=rng)

    med, samples = _time_op(op, repeats)
    return BenchRecord(scheme, "keygen", "records", records, med, 0, samples)


def run_bench(
    *,
    seed: int = 0,
    repeats: int = MIN_REPEATS,
    bits_sweep: tuple[int, ...] = STRING_LENGTH_SWEEP,
    record_sweep: tuple[int, ...] = RECORD_SWEEP,
    record_bits: int = 48,
    lam: int = DEFAULT_LAMBDA,
) -> list[BenchRecord]:
    if repeats < MIN_REPEATS:
        raise ValueError(f"need at least {MIN_REPEATS} repeats")
    rng = Random(seed)
    out: list[BenchRecord] = []
    for bits in bits_sweep:
        out.append(bench_keygen_dpf(bits, rng, repeats, lam))
        out.append(bench_keygen_b(bits, rng, repeats, lam))
        out.append(bench_keygen_plus(bits, rng, repeats, lam))
        out.append(bench_eval_b(bits, rng, repeats, lam))
        out.append(bench_eval_plus(bits, rng, repeats, lam))
        out.append(bench_update_b(bits, rng, repeats, lam))
        out.append(bench_update_plus(bits, rng, repeats, lam))
    for records in record_sweep:
        out.append(bench_keygen_records("b", records, record_bits, rng, repeats, lam))
        out.append(bench_keygen_records("plus", records, record_bits, rng, repeats, lam))
        out.append(bench_statistics("b", records, rng, repeats))
        out.append(bench_statistics("plus", records, rng, repeats))
    return out


def records_to_csv(records: list[BenchRecord]) -> str:
    return "\n".join([CSV_HEADER] + [r.csv_row() for r in records]) + "\n"


def records_to_table(records: list[BenchRecord]) -> str:
    header = f"{'scheme':<6} {'operation':<11} {'param':<12} {'median_ms':>10} {'bytes':>10}"
    lines = [header, "-" * len(header)]
    for r in records:
        param = f"{r.param_kind}={r.param}"
        lines.append(
            f"{r.scheme:<6} {r.operation:<11} {param:<12} {r.median_ms:>10.3f} {r.bytes_out:>10}"
        )
    return "\n".join(lines) + "\n"
