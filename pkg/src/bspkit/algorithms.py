"""Teaching algorithms written against the bsml/sgl primitives.

Each algorithm is paired with a plain sequential oracle used by the check and
acceptance suites, and each is addressable by name from the CLI through
``ALGORITHMS``.  Floating-point reductions use a fixed left-balanced tree
order and the n-body force loop a fixed ascending-index summation order, so
results are bit-identical across backends and processor counts.
"""

from __future__ import annotations

import heapq
import math
import random
from bisect import bisect_left
from dataclasses import dataclass
from hashlib import blake2b
from itertools import chain
from typing import Any, Callable, Iterable, Sequence

from .bsml import apply, mkpar, nprocs, proj, put
from .errors import UsageError, ValidationError
from .library import split_blocks
from .model import ParVec
from .sgl import gather, lmap, scatter


def _papply(f: Callable[[int, Any], Any], pv: ParVec, work: Any = 1) -> ParVec:
    """apply with the pid passed alongside the element."""
    fv = mkpar(lambda i: (lambda v, i=i: f(i, v)), work=0)
    return apply(fv, pv, work=work)


def _block_work(blk) -> int:
    return max(len(blk), 1)


# --- distributed arrays -----------------------------------------------------


@dataclass(frozen=True)
class DistArray:
    """Block-distributed sequence: ParVec of local blocks, global order by pid."""

    blocks: ParVec

    def to_list(self) -> list:
        return [x for blk in self.blocks for x in blk]

    def sizes(self) -> tuple[int, ...]:
        return tuple(len(blk) for blk in self.blocks)

    def total(self) -> int:
        return sum(self.sizes())


def distribute(xs: Sequence) -> DistArray:
    """Materialize a sequence as near-equal contiguous blocks (sizes differ <= 1)."""
    blocks = split_blocks(xs, nprocs())
    return DistArray(mkpar(lambda i: blocks[i], work=0))


# --- elementary collectives -------------------------------------------------


def broadcast(root: int, value) -> ParVec:
    """All pids end up holding value; one superstep, h = (p-1) * size(value)."""
    p = nprocs()
    return scatter(root, [value] * p)


def total_exchange(n: int) -> ParVec:
    """Every pid sends an n-word payload to every other pid; one superstep.

    The payload from s to d is n copies of 10*s + d, so receptions are
    checkable by inspection.
    """
    p = nprocs()
    plans = mkpar(lambda s: {d: tuple([10 * s + d] * n) for d in range(p) if d != s}, work=0)
    return put(plans)


def ring_shift(n: int) -> ParVec:
    """Each pid sends an n-word payload to (pid+1) mod p; one superstep."""
    p = nprocs()
    plans = mkpar(lambda s: {(s + 1) % p: tuple([s] * n)}, work=0)
    return put(plans)


# --- reduce / scan ----------------------------------------------------------


def tree_fold(op: Callable, values: Sequence):
    """Fold in a fixed left-balanced binary tree order: ((a.b),(c.d))..."""
    items = list(values)
    if not items:
        raise UsageError("tree_fold needs at least one value")
    while len(items) > 1:
        items = [op(items[i], items[i + 1]) if i + 1 < len(items) else items[i] for i in range(0, len(items), 2)]
    return items[0]


def reduce(op: Callable, pv: ParVec):
    """Combine the p per-pid values in fixed tree order; one superstep."""
    return tree_fold(op, gather(0, pv))


def scan(op: Callable, pv: ParVec) -> ParVec:
    """Inclusive prefix over pids: result[i] = fold of pv[0..i]; two supersteps."""
    values = gather(0, pv)
    prefix = []
    acc = None
    for i, v in enumerate(values):
        acc = v if i == 0 else op(acc, v)
        prefix.append(acc)
    return scatter(0, prefix)


# --- parallel sample sort ----------------------------------------------------


def sample_sort(d: DistArray) -> DistArray:
    """Sort by regular sampling; exactly 3 data-bearing supersteps.

    Ties are broken by (key, origin pid, origin index), which makes the
    element order total and the redistribution deterministic; with
    oversampling factor p no output block exceeds 2n/p + p elements.
    """
    p = nprocs()

    tagged = _papply(
        lambda i, blk: tuple(sorted((k, i, j) for j, k in enumerate(blk))),
        d.blocks,
        work=_block_work,
    )

    def local_samples(blk):
        m = len(blk)
        if m == 0:
            return ()
        positions = sorted({(j * m) // p for j in range(p)})
        return tuple(blk[t] for t in positions)

    sample_plans = _papply(lambda i, blk: {0: local_samples(blk)}, tagged, work=1)
    at_root = put(sample_plans)  # superstep 1: sample gather

    def pick_splitters(rows):
        samples = sorted(chain.from_iterable(r for r in rows if r))
        m = len(samples)
        if m == 0 or p == 1:
            return ()
        return tuple(samples[min((k * m) // p, m - 1)] for k in range(1, p))

    splitter_plans = _papply(
        lambda i, rows: {d_: pick_splitters(rows) for d_ in range(p)} if i == 0 else {},
        at_root,
        work=lambda rows: sum(len(r) for r in rows if r) or 1,
    )
    with_splitters = put(splitter_plans)  # superstep 2: splitter broadcast

    bucket_fns = _papply(
        lambda i, rows: (lambda blk, sp=rows[0]: _partition(blk, sp, p)),
        with_splitters,
        work=0,
    )
    bucket_plans = apply(bucket_fns, tagged, work=_block_work)
    exchanged = put(bucket_plans)  # superstep 3: all-to-all redistribution

    merged = _papply(
        lambda i, rows: tuple(k for (k, _s, _j) in heapq.merge(*(r for r in rows if r))),
        exchanged,
        work=lambda rows: sum(len(r) for r in rows if r) or 1,
    )
    return DistArray(merged)


def _partition(blk, splitters, p: int) -> dict[int, tuple]:
    """Split a sorted tagged block into per-destination runs."""
    if not splitters:
        return {0: blk} if blk else {}
    bounds = [bisect_left(blk, sp) for sp in splitters]
    out: dict[int, tuple] = {}
    start = 0
    for dest, end in enumerate(bounds + [len(blk)]):
        if end > start:
            out[dest] = blk[start:end]
        start = end
    return out


def seq_sort(xs: Sequence) -> list:
    """Oracle: plain sequential sort."""
    return sorted(xs)


# --- n-body -----------------------------------------------------------------


@dataclass(frozen=True)
class Body:
    """Point mass in the plane."""

    pos: tuple[float, float]
    vel: tuple[float, float]
    mass: float


def _check_bodies(bodies: Iterable[Body]) -> None:
    for i, b in enumerate(bodies):
        values = (*b.pos, *b.vel, b.mass)
        if not all(math.isfinite(v) for v in values):
            raise ValidationError(f"body {i} has a non-finite component: {b}")
        if not b.mass > 0:
            raise ValidationError(f"body {i} has non-positive mass {b.mass}")


def _accel(i: int, positions: Sequence[tuple[float, float]], masses: Sequence[float], g_const: float, eps: float) -> tuple[float, float]:
    """Softened all-pairs acceleration on body i, summed in ascending j order."""
    ax = 0.0
    ay = 0.0
    xi, yi = positions[i]
    for j in range(len(positions)):
        if j == i:
            continue
        dx = positions[j][0] - xi
        dy = positions[j][1] - yi
        r2 = dx * dx + dy * dy + eps * eps
        w = g_const * masses[j] / (r2 * math.sqrt(r2))
        ax += w * dx
        ay += w * dy
    return ax, ay


def nbody_step(d: DistArray, dt: float, *, g_const: float = 1.0, softening: float = 0.01) -> DistArray:
    """One kick-drift-kick leapfrog step over all-pairs gravity.

    The full body list is replicated twice (before each force evaluation), so
    one step carries exactly two communication supersteps regardless of n or
    p; the final kick's local work is closed by the next barrier.
    """
    if not dt > 0:
        raise ValidationError(f"dt must be > 0, got {dt!r}")
    if not softening > 0:
        raise ValidationError(f"softening must be > 0, got {softening!r}")
    _check_bodies(d.to_list())

    half_dt = dt * 0.5
    offsets = []
    acc = 0
    for size in d.sizes():
        offsets.append(acc)
        acc += size

    snapshot = proj(d.blocks)  # superstep 1: replicate current state
    flat = [b for blk in snapshot for b in blk]
    positions = [b.pos for b in flat]
    masses = [b.mass for b in flat]

    def kick_drift(off):
        def step(blk):
            out = []
            for j, b in enumerate(blk):
                ax, ay = _accel(off + j, positions, masses, g_const, softening)
                vx = b.vel[0] + ax * half_dt
                vy = b.vel[1] + ay * half_dt
                out.append(Body(pos=(b.pos[0] + vx * dt, b.pos[1] + vy * dt), vel=(vx, vy), mass=b.mass))
            return tuple(out)

        return step

    moved = apply(mkpar(lambda i: kick_drift(offsets[i]), work=0), d.blocks, work=_nbody_work(len(flat)))

    snapshot2 = proj(moved)  # superstep 2: replicate drifted positions
    flat2 = [b for blk in snapshot2 for b in blk]
    positions2 = [b.pos for b in flat2]
    masses2 = [b.mass for b in flat2]

    def final_kick(off):
        def step(blk):
            out = []
            for j, b in enumerate(blk):
                ax, ay = _accel(off + j, positions2, masses2, g_const, softening)
                out.append(Body(pos=b.pos, vel=(b.vel[0] + ax * half_dt, b.vel[1] + ay * half_dt), mass=b.mass))
            return tuple(out)

        return step

    final = apply(mkpar(lambda i: final_kick(offsets[i]), work=0), moved, work=_nbody_work(len(flat)))
    return DistArray(final)


def _nbody_work(n: int):
    return lambda blk: max(len(blk) * max(n - 1, 1), 1)


def seq_nbody_step(bodies: Sequence[Body], dt: float, *, g_const: float = 1.0, softening: float = 0.01) -> list[Body]:
    """Oracle: one leapfrog step computed by a direct sequential loop.

    Mirrors the parallel step's arithmetic (same expressions, same ascending
    summation order) so equality is bit-exact.
    """
    _check_bodies(bodies)
    half_dt = dt * 0.5
    positions = [b.pos for b in bodies]
    masses = [b.mass for b in bodies]
    moved = []
    for i, b in enumerate(bodies):
        ax, ay = _accel(i, positions, masses, g_const, softening)
        vx = b.vel[0] + ax * half_dt
        vy = b.vel[1] + ay * half_dt
        moved.append(Body(pos=(b.pos[0] + vx * dt, b.pos[1] + vy * dt), vel=(vx, vy), mass=b.mass))
    positions2 = [b.pos for b in moved]
    masses2 = [b.mass for b in moved]
    out = []
    for i, b in enumerate(moved):
        ax, ay = _accel(i, positions2, masses2, g_const, softening)
        out.append(Body(pos=b.pos, vel=(b.vel[0] + ax * half_dt, b.vel[1] + ay * half_dt), mass=b.mass))
    return out


# --- balanced parallel hashing ------------------------------------------------


class _Absent:
    """Singleton marker for keys not present in a DistHash."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "ABSENT"


ABSENT = _Absent()

DEFAULT_HASH_SEED = 0x5EED

_M64 = (1 << 64) - 1


def mix64(x: int) -> int:
    """splitmix64 finalizer: a fixed 64-bit mixing function."""
    z = (x + 0x9E3779B97F4A7C15) & _M64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return z ^ (z >> 31)


def key_hash(key, seed: int) -> int:
    """Deterministic 64-bit key hash, independent of interpreter salting."""
    if isinstance(key, int):
        return mix64((key & _M64) ^ mix64(seed & _M64))
    if isinstance(key, str):
        data = key.encode("utf-8")
    elif isinstance(key, bytes):
        data = key
    else:
        data = repr(key).encode("utf-8")
    digest = blake2b(data, digest_size=8, key=(seed & _M64).to_bytes(8, "little")).digest()
    return int.from_bytes(digest, "little")


def key_owner(key, seed: int, p: int) -> int:
    return key_hash(key, seed) % p


@dataclass(frozen=True)
class DistHash:
    """Distributed hash table: pair (k, v) lives at pid hash(k) mod p."""

    table: ParVec  # of dict
    seed: int


def hash_build(pairs: Iterable[tuple], *, seed: int = DEFAULT_HASH_SEED) -> DistHash:
    """Bucket pairs by key hash and distribute from the root; one superstep."""
    p = nprocs()
    buckets: list[list] = [[] for _ in range(p)]
    for k, v in pairs:
        buckets[key_owner(k, seed, p)].append((k, v))
    pv = scatter(0, [tuple(b) for b in buckets])
    table = lmap(dict, pv, work=_block_work)
    return DistHash(table=table, seed=seed)


def hash_lookup(table: DistHash, queries: DistArray) -> DistArray:
    """Resolve a distributed batch of keys; exactly 2 supersteps per batch.

    Each pid routes its queries to the owning pids, owners answer, and the
    results come back aligned with the query blocks; missing keys map to
    ABSENT.
    """
    p = nprocs()
    seed = table.seed
    block_sizes = queries.sizes()

    def route(i, qblk):
        per_owner: dict[int, list] = {}
        for j, k in enumerate(qblk):
            per_owner.setdefault(key_owner(k, seed, p), []).append((j, k))
        return {d: tuple(v) for d, v in per_owner.items()}

    question_plans = _papply(route, queries.blocks, work=_block_work)
    questions = put(question_plans)  # superstep 1: queries to owners

    answer_fns = _papply(
        lambda i, local: (
            lambda rows, local=local: {
                s: tuple((j, local.get(k, ABSENT)) for j, k in rows[s]) for s in range(p) if rows[s]
            }
        ),
        table.table,
        work=0,
    )
    answer_plans = apply(answer_fns, questions, work=lambda rows: sum(len(r) for r in rows if r) or 1)
    answers = put(answer_plans)  # superstep 2: answers back

    def assemble(i, rows):
        out: list = [ABSENT] * block_sizes[i]
        for r in rows:
            if r:
                for j, val in r:
                    out[j] = val
        return tuple(out)

    return DistArray(_papply(assemble, answers, work=lambda rows: sum(len(r) for r in rows if r) or 1))


def seq_lookup(pairs: Iterable[tuple], keys: Sequence) -> list:
    """Oracle: dict lookup with the same absent marker."""
    d = dict(pairs)
    return [d.get(k, ABSENT) for k in keys]


# --- input generators and the CLI registry ------------------------------------

DISTRIBUTIONS = ("uniform", "sorted", "reverse", "equal")


def gen_keys(n: int, seed: int, distribution: str = "uniform") -> list[int]:
    rng = random.Random(seed)
    if distribution == "uniform":
        return [rng.getrandbits(32) for _ in range(n)]
    if distribution == "sorted":
        return sorted(rng.getrandbits(32) for _ in range(n))
    if distribution == "reverse":
        return sorted((rng.getrandbits(32) for _ in range(n)), reverse=True)
    if distribution == "equal":
        return [42] * n
    raise UsageError(f"unknown distribution {distribution!r}; expected one of {DISTRIBUTIONS}")


def gen_bodies(n: int, seed: int) -> list[Body]:
    rng = random.Random(seed)
    return [
        Body(
            pos=(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)),
            vel=(rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1)),
            mass=rng.uniform(0.5, 2.0),
        )
        for _ in range(n)
    ]


def _prog_broadcast(n, seed, distribution):
    payload = tuple(gen_keys(n, seed, distribution))

    def program():
        return broadcast(0, payload)

    return program


def _prog_total_exchange(n, seed, distribution):
    def program():
        return total_exchange(n)

    return program


def _prog_ring_shift(n, seed, distribution):
    def program():
        return ring_shift(n)

    return program


def _prog_reduce(n, seed, distribution):
    xs = gen_keys(n, seed, distribution)

    def program():
        d = distribute(xs)
        partial = lmap(sum, d.blocks, work=_block_work)
        return reduce(lambda a, b: a + b, partial)

    return program


def _prog_scan(n, seed, distribution):
    xs = gen_keys(n, seed, distribution)

    def program():
        d = distribute(xs)
        partial = lmap(sum, d.blocks, work=_block_work)
        return scan(lambda a, b: a + b, partial)

    return program


def _prog_samplesort(n, seed, distribution):
    xs = gen_keys(n, seed, distribution)

    def program():
        return sample_sort(distribute(xs))

    return program


def _prog_nbody(n, seed, distribution):
    bodies = gen_bodies(n, seed)

    def program():
        return nbody_step(distribute(bodies), dt=0.01)

    return program


def _prog_hashlookup(n, seed, distribution):
    rng = random.Random(seed ^ 0xA5A5)
    pairs = [(k, k * 3 + 1) for k in gen_keys(n, seed, distribution)]
    present = [k for k, _v in pairs]
    keys = [rng.choice(present) if present and rng.random() < 0.8 else rng.getrandbits(34) for _ in range(max(n // 2, 1))]

    def program():
        table = hash_build(pairs)
        return hash_lookup(table, distribute(keys))

    return program


def _prog_empty(n, seed, distribution):
    def program():
        return None

    return program


#: name -> builder(n, seed, distribution) -> zero-argument program
ALGORITHMS: dict[str, Callable] = {
    "broadcast": _prog_broadcast,
    "total-exchange": _prog_total_exchange,
    "ring-shift": _prog_ring_shift,
    "reduce": _prog_reduce,
    "scan": _prog_scan,
    "samplesort": _prog_samplesort,
    "nbody": _prog_nbody,
    "hashlookup": _prog_hashlookup,
    "empty": _prog_empty,
}


def build_program(name: str, n: int, seed: int, distribution: str = "uniform"):
    if name not in ALGORITHMS:
        raise UsageError(f"unknown algorithm {name!r}; known: {', '.join(sorted(ALGORITHMS))}")
    return ALGORITHMS[name](n, seed, distribution)
