"""Constants shared by the numba and numpy kernel backends.

Both backends hash lattice coordinates with the same splitmix64-style mixer,
so a weight field is a pure function of (stream key, point) whichever
backend produced it.
"""

GAUSSIAN = 0
UNIFORM = 1
GAMMA = 2
GEOMETRIC = 3
BERNOULLI = 4
POINTMASS = 5

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB
COORD_MUL = 0xD6E8FEB86659FD93
COORD_ADD = 0x2545F4914F6CDD1D

# coordinates are offset before hashing so the cast to uint64 never sees a
# negative number; boxes are limited to |coord| < 2**31
COORD_BIAS = 1 << 32

# draw 0 feeds every inverse-CDF transform; gamma rejection uses 1, 2, ...
MAX_GAMMA_ROUNDS = 10_000


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * MIX1) & MASK64
    z = ((z ^ (z >> 27)) * MIX2) & MASK64
    return z ^ (z >> 31)


def stream_key(master_seed: int, experiment_id: int, sample_index: int, stream: int = 0) -> int:
    """Fold the seed tuple into one 64-bit key (pure Python, backend independent)."""
    k = mix64(master_seed + GOLDEN)
    for part in (experiment_id, sample_index, stream):
        k = mix64((k ^ (part & MASK64)) + GOLDEN)
    return k
