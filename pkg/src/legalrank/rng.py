"""Deterministic, platform-independent randomness.

Every sampling step that must reproduce across runs, machines and
thread counts goes through a SplitMix64 stream derived from
(global seed, stream key), so results never depend on processing
order.  Nothing here touches global RNG state.
"""

from .errors import ParameterError

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def mix64(x: int) -> int:
    """SplitMix64 finalizer: a bijective avalanche mix of a 64-bit value."""
    x &= _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def derive_stream_seed(seed: int, key: str) -> int:
    """Fold a string key (e.g. a question id) into a global seed.

    Each UTF-8 byte of the key is absorbed through the mixer, so
    distinct keys yield statistically independent streams and the
    result does not depend on how many other keys were processed.
    """
    h = seed & _MASK
    for b in key.encode("utf-8"):
        h = mix64(h ^ b)
    return h


class SplitMix64:
    """Tiny seeded generator with an explicitly documented algorithm."""

    def __init__(self, seed: int):
        self._state = seed & _MASK

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK
        return mix64(self._state)

    def randbelow(self, n: int) -> int:
        """Uniform integer in [0, n), modulo-bias free via rejection."""
        if n <= 0:
            raise ParameterError("randbelow requires n >= 1")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            v = self.next_u64()
            if v < limit:
                return v % n

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]


def sample_without_replacement(items, n: int, rng: SplitMix64) -> list:
    """First ``min(n, len(items))`` outputs of a Fisher-Yates shuffle.

    ``items`` only needs ``__len__`` and ``__getitem__``; it is never
    copied or mutated (swaps live in an overlay dict), so sampling a few
    elements from a large virtual sequence stays cheap.
    """
    size = len(items)
    take = min(n, size)
    overlay: dict[int, object] = {}
    out = []
    for i in range(take):
        j = i + rng.randbelow(size - i)
        out.append(overlay.get(j, items[j]))
        overlay[j] = overlay.get(i, items[i])
    return out
