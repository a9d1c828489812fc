"""Counter-based random streams keyed by (seed, stream_id, *path).

Every stream is a Philox generator seeded from a SeedSequence whose spawn key
is the stream path, so a given key always yields the same numbers no matter
how work is split across threads.
"""
import numpy as np

RNG_IDENTITY = f"numpy-{np.__version__}/Philox4x64/SeedSequence(seed, spawn_key=(stream, *path))"

# Rows generated per independent shard stream.
SHARD_ROWS = 1 << 15

_MASK64 = (1 << 64) - 1


def stream(seed, stream_id, *path):
    """Return a Generator for the given key. All parts must be nonnegative ints."""
    key = (int(stream_id) & _MASK64,) + tuple(int(x) & _MASK64 for x in path)
    ss = np.random.SeedSequence(entropy=int(seed) & _MASK64, spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))


def shard_bounds(count, shard_rows=SHARD_ROWS):
    """Split ``count`` rows into fixed-size shards: list of (index, start, stop)."""
    return [
        (i, start, min(count, start + shard_rows))
        for i, start in enumerate(range(0, count, shard_rows))
    ]


def tag(name):
    """Stable small integer for a string label, used as a stream path element."""
    h = 0
    for ch in name.encode():
        h = (h * 131 + ch) & 0xFFFFFFFF
    return h
