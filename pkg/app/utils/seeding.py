"""
Seed derivation for parallel Monte Carlo work.

Every chunk of trials and every group of trajectories draws from its own
generator, derived from (master seed, stream, index). Work units are fixed
by configuration, never by the number of threads.
"""
import hashlib
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

import numpy as np

T = TypeVar('T')

SEED_MASK = (1 << 64) - 1


def stream_key(stream: str) -> int:
    """Stable 32-bit key for a named random stream."""
    return int.from_bytes(hashlib.sha256(stream.encode('utf-8')).digest()[:4], 'big')


def derive_rng(seed: int, stream: str, index: int = 0) -> np.random.Generator:
    """
    Build the generator for one work unit.

    Args:
        seed: Master seed (unsigned 64-bit)
        stream: Name of the random stream (e.g. 'escape', 'trajectory')
        index: Work unit index inside the stream

    Returns:
        PCG64-backed numpy Generator
    """
    sequence = np.random.SeedSequence(
        entropy=int(seed) & SEED_MASK,
        spawn_key=(stream_key(stream), int(index))
    )
    return np.random.Generator(np.random.PCG64(sequence))


def chunk_sizes(total: int, chunk: int) -> List[int]:
    """Split `total` items into consecutive chunks of at most `chunk`."""
    if total <= 0:
        return []
    full, rest = divmod(int(total), int(chunk))
    return [int(chunk)] * full + ([rest] if rest else [])


def run_ordered(func: Callable[..., T], jobs: Iterable[tuple], threads: Optional[int] = None) -> List[T]:
    """
    Execute independent jobs and return their results in submission order.

    Args:
        func: Job function
        jobs: Argument tuples, one per job
        threads: Worker cap; 1 or None runs inline

    Returns:
        Results ordered like `jobs`
    """
    jobs = list(jobs)
    if not threads or threads <= 1 or len(jobs) <= 1:
        return [func(*args) for args in jobs]
    with ThreadPoolExecutor(max_workers=int(threads)) as pool:
        return list(pool.map(lambda args: func(*args), jobs))
