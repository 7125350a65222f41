"""Minimal Box space, API-compatible with the common Gym usage patterns
(shape, dtype, bounds, sample, contains, seed)."""

import numpy as np


class Box:
    def __init__(self, low, high, shape=None, dtype=np.float64, seed=None):
        low = np.asarray(low, dtype=dtype)
        high = np.asarray(high, dtype=dtype)
        if shape is not None:
            low = np.broadcast_to(low, shape).astype(dtype)
            high = np.broadcast_to(high, shape).astype(dtype)
        if low.shape != high.shape:
            raise ValueError("low and high must have the same shape")
        if np.any(low > high):
            raise ValueError("low must not exceed high")
        self.low = low
        self.high = high
        self.shape = low.shape
        self.dtype = np.dtype(dtype)
        self._rng = np.random.default_rng(seed)

    def seed(self, seed=None):
        self._rng = np.random.default_rng(seed)
        return [seed]

    def sample(self):
        lo = np.where(np.isfinite(self.low), self.low, -1e3)
        hi = np.where(np.isfinite(self.high), self.high, 1e3)
        return self._rng.uniform(lo, hi).astype(self.dtype)

    def contains(self, x):
        x = np.asarray(x)
        return (x.shape == self.shape and np.all(np.isfinite(x))
                and bool(np.all(x >= self.low) and np.all(x <= self.high)))

    def __repr__(self):
        return f"Box{self.shape}"

    def __eq__(self, other):
        return (isinstance(other, Box) and self.shape == other.shape
                and np.array_equal(self.low, other.low)
                and np.array_equal(self.high, other.high))
