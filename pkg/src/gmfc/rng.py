"""Counter-based random streams.

Every draw is addressed by ``(seed, tag, replication, step)``: the Philox key
comes from ``(seed, tag)`` and the counter's high words hold ``(step, rep)``.
Streams therefore do not depend on scheduling order or worker count.
"""
import zlib

import numpy as np

_KEY_CACHE = {}


def _tag_code(tag):
    return zlib.crc32(tag.encode("utf-8"))


def stream_key(seed, tag):
    k = (int(seed), tag)
    key = _KEY_CACHE.get(k)
    if key is None:
        ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, _tag_code(tag)])
        key = ss.generate_state(2, dtype=np.uint64)
        _KEY_CACHE[k] = key
    return key


def stream(seed, tag, rep=0, step=0):
    """Return a fresh generator for one addressed block of draws."""
    counter = np.array([0, 0, int(step), int(rep)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=stream_key(seed, tag), counter=counter))


def lattice_index(n, lattice):
    """0-based lattice rows owned by agents with labels i/n on a grid of ``lattice`` labels."""
    if lattice % n:
        raise ValueError(f"lattice size {lattice} is not a multiple of n={n}")
    return np.arange(1, n + 1) * (lattice // n) - 1
