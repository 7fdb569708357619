"""
Single-process map/shuffle/reduce executor over matrix rows.

Instruments the two MapReduce complexity measures: shuffle size (number of
map emissions) and reduce-key complexity (largest group under one key).
Each row gets its own counter-based RNG stream, so the map phase gives the
same emissions in any order and under any thread count.
"""
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Optional, Tuple

import numpy as np

from src import logs
from src.config import CHUNKS_PER_THREAD
from src.errors import JobError, ParameterError

# ==========================================
# 🎲 SPLITTABLE RANDOM STREAMS
# ==========================================
# SplitMix64: row stream key = mix(seed + (row+1)*GOLDEN); draw c of that row
# is mix(key + (c+1)*GOLDEN). Counter-based, so any draw can be computed
# directly and a whole matrix's draws can be produced in one vectorized call.
MASK64 = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MUL1 = np.uint64(0xBF58476D1CE4E5B9)
_MUL2 = np.uint64(0x94D049BB133111EB)
_SEED_SALT = np.uint64(0xD1B54A32D192ED03)
_TO_UNIT = 2.0 ** -53


def _mix64(z):
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _MUL1
        z = (z ^ (z >> np.uint64(27))) * _MUL2
        return z ^ (z >> np.uint64(31))


def _row_keys(master_seed, row_indices):
    rows = np.asarray(row_indices, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _mix64(np.uint64(int(master_seed) & MASK64) + _GOLDEN * (rows + np.uint64(1)))


def uniform_draws(master_seed, row_indices, counters):
    """
    Draw number ``counters[t]`` of row ``row_indices[t]``'s stream, for every t.
    Values are uniform on [0, 1) with 53 random bits.
    """
    keys = _row_keys(master_seed, row_indices)
    with np.errstate(over="ignore"):
        state = keys + _GOLDEN * (np.asarray(counters, dtype=np.uint64) + np.uint64(1))
    return (_mix64(state) >> np.uint64(11)).astype(np.float64) * _TO_UNIT


def derive_seed(master_seed, index):
    """Deterministic sub-seed (e.g. one per Monte Carlo trial)."""
    return int(_mix64(_row_keys(master_seed, [index]) ^ _SEED_SALT)[0])


class RngStream:
    """Per-row uniform stream; the same (master_seed, row_index) always yields the same sequence."""

    def __init__(self, master_seed, row_index):
        self.master_seed = int(master_seed) & MASK64
        self.row_index = int(row_index)
        self._counter = 0

    @property
    def consumed(self):
        return self._counter

    def random(self, size=None):
        count = 1 if size is None else int(size)
        counters = np.arange(self._counter, self._counter + count, dtype=np.uint64)
        self._counter += count
        draws = uniform_draws(self.master_seed, np.full(count, self.row_index, dtype=np.uint64), counters)
        return float(draws[0]) if size is None else draws


def derive_row_rng(master_seed, row_index):
    return RngStream(master_seed, row_index)


# ==========================================
# 📦 JOB TYPES
# ==========================================
class Emission(NamedTuple):
    key: Tuple[int, int]
    value: float


@dataclass
class RunStats:
    shuffle_size: int
    reduce_key_max: int
    reduce_key_mean: float
    distinct_keys: int
    map_tasks: int
    wall_time_s: float = field(default=0.0, compare=False)
    key_order: str = "canonical j<=k, diagonal included"
    metrics: dict = field(default_factory=dict)

    @classmethod
    def from_key_counts(cls, counts, map_tasks, wall_time_s=0.0):
        counts = np.asarray(counts, dtype=np.int64)
        counts = counts[counts > 0]
        shuffle = int(counts.sum())
        distinct = int(counts.shape[0])
        return cls(
            shuffle_size=shuffle,
            reduce_key_max=int(counts.max()) if distinct else 0,
            reduce_key_mean=shuffle / distinct if distinct else 0.0,
            distinct_keys=distinct,
            map_tasks=int(map_tasks),
            wall_time_s=wall_time_s,
        )

    def to_dict(self):
        flat = asdict(self)
        flat.update(flat.pop("metrics"))
        return flat


@dataclass
class JobResult:
    output: dict
    stats: RunStats
    log: Optional[list] = None


# ==========================================
# ⚙️ ENGINE
# ==========================================
class MapReduceEngine:
    def __init__(self, threads=1, chunks_per_thread=CHUNKS_PER_THREAD):
        if threads < 1:
            raise ParameterError(f"threads must be >= 1, got {threads}")
        self.threads = int(threads)
        self.chunks_per_thread = int(chunks_per_thread)

    def _split(self, count):
        parts = 1 if self.threads == 1 else min(count, self.threads * self.chunks_per_thread)
        bounds = np.linspace(0, count, max(parts, 1) + 1).astype(int)
        return [(int(lo), int(hi)) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]

    def _run_parts(self, func, parts):
        if self.threads == 1 or len(parts) <= 1:
            return [func(part) for part in parts]
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            return list(pool.map(func, parts))

    @staticmethod
    def _map_range(A, mapper, master_seed, lo, hi):
        n = A.n_cols
        emitted = []
        for i in range(lo, hi):
            try:
                out = mapper(A.row(i), i, derive_row_rng(master_seed, i))
            except Exception as e:
                raise JobError(f"mapper failed on row {i}: {e}") from e
            for key, value in out:
                j, k = int(key[0]), int(key[1])
                if j > k:
                    j, k = k, j
                if j < 0 or k >= n:
                    raise JobError(f"row {i} emitted key ({j}, {k}) outside [0, {n})")
                emitted.append(Emission((j, k), float(value)))
        return emitted

    @staticmethod
    def _reduce_keys(reducer, groups, keys):
        reduced = []
        for key in keys:
            try:
                result = reducer(key, groups[key])
            except Exception as e:
                raise JobError(f"reducer failed on key {key}: {e}") from e
            if result is not None:
                out_key, value = result
                reduced.append((tuple(out_key), float(value)))
        return reduced

    def run_job(self, A, mapper, reducer, master_seed=0, keep_log=False):
        """
        Run mapper over every row, group emissions by exact key, reduce each group once.
        :param mapper: f(row, row_index, rng) -> iterable of Emission / (key, value)
        :param reducer: f(key, values) -> (key, value) or None to drop the key
        """
        started = time.perf_counter()

        chunks = self._run_parts(lambda span: self._map_range(A, mapper, master_seed, *span),
                                 self._split(A.n_rows))

        groups = {}
        log = [] if keep_log else None
        for chunk in chunks:
            for emission in chunk:
                groups.setdefault(emission.key, []).append(emission.value)
            if keep_log:
                log.extend(chunk)

        keys = sorted(groups)
        key_spans = self._split(len(keys))
        reduced = self._run_parts(lambda span: self._reduce_keys(reducer, groups, keys[span[0]:span[1]]),
                                  key_spans)
        output = {key: value for part in reduced for key, value in part}

        stats = RunStats.from_key_counts([len(groups[k]) for k in keys], map_tasks=A.n_rows,
                                         wall_time_s=time.perf_counter() - started)
        logs.debug(f"Job finished: shuffle={stats.shuffle_size} keys={stats.distinct_keys} "
                   f"reduce_key_max={stats.reduce_key_max} ({stats.wall_time_s:.3f}s)")
        return JobResult(output, stats, log)


def run_job(A, mapper, reducer, master_seed=0, threads=1, keep_log=False):
    return MapReduceEngine(threads=threads).run_job(A, mapper, reducer, master_seed, keep_log)
