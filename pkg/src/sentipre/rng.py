"""Seeded random number generation.

All randomness in the package flows through :class:`Rng`, a thin wrapper
around numpy's counter-based Philox bit generator. Identical seeds produce
identical draw sequences across runs and platforms, which the test suite
relies on for bit-reproducible training.
"""

from __future__ import annotations

import numpy as np

ALGORITHM = "philox4x64/seedsequence"


class Rng:
    """Deterministic random stream identified by a 64-bit seed.

    Substreams are derived with :meth:`stream`, so independent consumers
    (per-sentence masking, sampling, init, shuffling) never share state.
    """

    def __init__(self, seed: int, _spawn_key: tuple[int, ...] = ()):
        self.seed = int(seed)
        self._spawn_key = _spawn_key
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=_spawn_key)
        self._gen = np.random.Generator(np.random.Philox(ss))

    def stream(self, *ids: int) -> "Rng":
        """Derive an independent substream keyed by integer ids."""
        return Rng(self.seed, self._spawn_key + tuple(int(i) for i in ids))

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self._gen.normal(loc, scale, size)

    def truncated_normal(self, scale: float, size, clip_sigmas: float = 2.0):
        """Normal draws clipped to +/- clip_sigmas standard deviations."""
        x = self._gen.normal(0.0, scale, size)
        bound = clip_sigmas * scale
        return np.clip(x, -bound, bound)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice_without_replacement(self, candidates, count: int) -> np.ndarray:
        """Uniform sample of `count` items from `candidates`, no repeats."""
        candidates = np.asarray(candidates)
        if count > len(candidates):
            raise ValueError(f"cannot draw {count} from {len(candidates)} candidates")
        idx = self._gen.permutation(len(candidates))[:count]
        return candidates[idx]

    def multinomial_index(self, probs: np.ndarray) -> int:
        """Single draw from a categorical distribution given by `probs`."""
        p = np.asarray(probs, dtype=np.float64)
        p = p / p.sum()
        u = self._gen.uniform()
        return int(np.searchsorted(np.cumsum(p), u, side="right").clip(0, len(p) - 1))

    def multinomial_rows(self, probs: np.ndarray) -> np.ndarray:
        """One categorical draw per row of a [n, V] probability matrix."""
        p = np.asarray(probs, dtype=np.float64)
        p = p / p.sum(axis=1, keepdims=True)
        cdf = np.cumsum(p, axis=1)
        u = self._gen.uniform(size=(p.shape[0], 1))
        return np.minimum((cdf < u).sum(axis=1), p.shape[1] - 1)

    def shuffle_list(self, items: list) -> list:
        order = self._gen.permutation(len(items))
        return [items[i] for i in order]
