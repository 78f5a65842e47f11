"""Entropy streams that drive every stochastic component.

All randomness in the package is injected explicitly through one of these
objects so the same network code can be driven by a seeded pseudo-random
generator or by a recorded buffer of uniforms.
"""

from __future__ import annotations

import numpy as np
from scipy import special, stats


class EntropyExhausted(RuntimeError):
    """Raised when a finite entropy stream has no draws left."""


class EntropyStream:
    """Seeded generator-backed stream with an optional draw budget.

    ``limit`` caps the total number of variates handed out; exceeding it
    raises :class:`EntropyExhausted`. Each variate (uniform, normal,
    binomial, poisson) counts as one draw.
    """

    def __init__(self, seed=None, *, limit: int | None = None):
        if isinstance(seed, np.random.Generator):
            self._gen = seed
            self._seq = None
        else:
            self._seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
            self._gen = np.random.default_rng(self._seq)
        self.limit = limit
        self.drawn = 0

    def _take(self, size) -> None:
        count = int(np.prod(size)) if size is not None else 1
        if self.limit is not None and self.drawn + count > self.limit:
            raise EntropyExhausted(
                f"entropy stream exhausted: requested {count}, {self.limit - self.drawn} left"
            )
        self.drawn += count

    def uniform(self, size=None):
        self._take(size)
        return self._gen.random(size)

    def normal(self, size=None):
        self._take(size)
        return self._gen.standard_normal(size)

    def binomial(self, n, p, size=None):
        shape = size if size is not None else np.broadcast(np.asarray(n), np.asarray(p)).shape
        self._take(shape or None)
        return self._gen.binomial(n, p, size)

    def poisson(self, lam, size=None):
        shape = size if size is not None else np.shape(lam)
        self._take(shape or None)
        return self._gen.poisson(lam, size)

    def multinomial(self, n, pvals, size=None):
        shape = size if size is not None else np.shape(n)
        self._take(shape or None)
        return self._gen.multinomial(n, pvals, size)

    def gamma(self, shape_k, scale, size=None):
        self._take(size)
        return self._gen.gamma(shape_k, scale, size)

    def spawn(self, count: int) -> list["EntropyStream"]:
        """Independent child streams (one per physical source or replica)."""
        if self._seq is None:
            seeds = self._gen.integers(0, 2**63, size=count)
            return [EntropyStream(int(s)) for s in seeds]
        return [EntropyStream(child) for child in self._seq.spawn(count)]

    def spawn_shared(self, count: int) -> list["EntropyStream"]:
        """``count`` streams that all replay the same child sequence (fault injection only)."""
        child = self.spawn(1)[0]
        return [EntropyStream(child._seq) if child._seq is not None else child for _ in range(count)]


class UniformBuffer:
    """Finite stream backed by a caller-supplied array of U[0,1) values.

    Non-uniform variates are produced by inverse transform, so every draw
    consumes exactly one buffered uniform.
    """

    def __init__(self, uniforms):
        self._buf = np.asarray(uniforms, dtype=float).ravel()
        if np.any((self._buf < 0) | (self._buf >= 1)):
            raise ValueError("uniform buffer values must lie in [0, 1)")
        self.drawn = 0

    @property
    def remaining(self) -> int:
        return self._buf.size - self.drawn

    def uniform(self, size=None):
        count = int(np.prod(size)) if size is not None else 1
        if count > self.remaining:
            raise EntropyExhausted(f"uniform buffer exhausted: requested {count}, {self.remaining} left")
        out = self._buf[self.drawn:self.drawn + count]
        self.drawn += count
        return out.reshape(size) if size is not None else float(out[0])

    def normal(self, size=None):
        u = self.uniform(size)
        # avoid u == 0 mapping to -inf
        return special.ndtri(np.maximum(u, 1e-300))

    def binomial(self, n, p, size=None):
        shape = size if size is not None else np.broadcast(np.asarray(n), np.asarray(p)).shape
        u = self.uniform(shape or None)
        return stats.binom.ppf(u, n, p).astype(np.int64)

    def poisson(self, lam, size=None):
        shape = size if size is not None else np.shape(lam)
        u = self.uniform(shape or None)
        return stats.poisson.ppf(u, lam).astype(np.int64)


def as_stream(entropy) -> EntropyStream | UniformBuffer:
    """Coerce a seed, generator, array of uniforms or stream into a stream."""
    if isinstance(entropy, (EntropyStream, UniformBuffer)):
        return entropy
    if isinstance(entropy, np.ndarray) and entropy.dtype.kind == "f":
        return UniformBuffer(entropy)
    return EntropyStream(entropy)
