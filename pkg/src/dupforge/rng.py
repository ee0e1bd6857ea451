"""Keyed, order-independent random streams.

Every stochastic decision draws from a stream keyed by (seed, source,
entity, ...) plus a decision index, so the outcome of a decision never
depends on how many other decisions were made before it or on which worker
made them.
"""

from __future__ import annotations

import hashlib
import math

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_INV53 = 1.0 / 9007199254740992.0


def mix64(z: int) -> int:
    """splitmix64 finalizer; a bijection on 64-bit integers."""
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_key(*parts) -> int:
    h = hashlib.blake2b(repr(parts).encode("utf-8"), digest_size=8)
    return int.from_bytes(h.digest(), "little")


def scramble64(x: int, key: int) -> int:
    """Keyed bijection on 64-bit integers (used for opaque record ids)."""
    return mix64(mix64((x ^ key) & MASK64) ^ (key >> 1))


class Stream:
    """Sequential generator over a 64-bit key.

    Offers the small subset of the ``random.Random`` API used by the
    generators (``random``, ``randrange``, ``randint``, ``choice``,
    ``shuffle``) at a fraction of the seeding cost.
    """

    __slots__ = ("_state",)

    def __init__(self, key: int):
        self._state = key & MASK64

    def random(self) -> float:
        # mix64 inlined; this is the hottest call in the engine
        z = self._state = (self._state + GOLDEN) & MASK64
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return ((z ^ (z >> 31)) >> 11) * _INV53

    def randrange(self, start: int, stop: int | None = None) -> int:
        if stop is None:
            start, stop = 0, start
        n = stop - start
        if n <= 0:
            raise ValueError("empty range for randrange")
        return start + int(self.random() * n)

    def randint(self, a: int, b: int) -> int:
        return self.randrange(a, b + 1)

    def choice(self, seq):
        if not seq:
            raise IndexError("cannot choose from an empty sequence")
        return seq[int(self.random() * len(seq))]

    def shuffle(self, seq) -> None:
        for i in range(len(seq) - 1, 0, -1):
            j = int(self.random() * (i + 1))
            seq[i], seq[j] = seq[j], seq[i]

    def weighted(self, items, weights):
        total = sum(weights)
        r = self.random() * total
        acc = 0.0
        for item, w in zip(items, weights):
            acc += w
            if r < acc:
                return item
        return items[-1]

    def poisson(self, mean: float) -> int:
        if mean <= 0:
            return 0
        if mean > 30:
            # normal approximation, rounded and clipped at zero
            u1, u2 = self.random() or _INV53, self.random()
            z = math.sqrt(-2.0 * math.log(u1)) * math.cos(2 * math.pi * u2)
            return max(0, int(round(mean + z * math.sqrt(mean))))
        limit = math.exp(-mean)
        k, p = 0, self.random()
        while p > limit:
            k += 1
            p *= self.random()
        return k

    def expovariate(self, rate: float) -> float:
        return -math.log(1.0 - self.random()) / rate


class Keyed:
    """Indexed uniform draws: ``u(i)`` is a pure function of (key, i)."""

    __slots__ = ("key",)

    def __init__(self, key: int):
        self.key = key

    @classmethod
    def of(cls, *parts) -> "Keyed":
        return cls(derive_key(*parts))

    def u(self, index: int) -> float:
        return (mix64((self.key + (index + 1) * GOLDEN) & MASK64) >> 11) * _INV53

    def stream(self, index: int) -> Stream:
        return Stream(mix64((self.key ^ ((index + 7) * 0xD1B54A32D192ED03)) & MASK64))
