from __future__ import annotations

import numpy as np

# prefix sums are rebuilt from the raw window this often to bound drift
REBASE_EVERY = 1 << 16


class RingBuffer:
    """Last ``capacity`` vectors plus their running prefix sums.

    ``window_sum(w)`` is O(N) for any ``w <= min(count, capacity)``.
    """

    def __init__(self, capacity: int, dim: int):
        self.capacity = capacity
        self.dim = dim
        self._obs = np.zeros((capacity, dim))
        self._cum = np.zeros((capacity + 1, dim))
        self._pos = 0  # slot of the latest prefix sum in _cum
        self.count = 0
        self._since_rebase = 0

    def push(self, x: np.ndarray) -> np.ndarray:
        """Append ``x``; return the observation that fell out (zeros if none)."""
        cap = self.capacity
        slot = self.count % cap
        evicted = self._obs[slot].copy() if self.count >= cap else np.zeros(self.dim)
        self._obs[slot] = x
        nxt = (self._pos + 1) % (cap + 1)
        self._cum[nxt] = self._cum[self._pos] + x
        self._pos = nxt
        self.count += 1
        self._since_rebase += 1
        if self._since_rebase >= REBASE_EVERY:
            self.rebase()
        return evicted

    @property
    def just_rebased(self) -> bool:
        return self.count > 0 and self._since_rebase == 0

    def rebase(self) -> None:
        """Recompute prefix sums from the stored observations."""
        cap = self.capacity
        k = min(self.count, cap)
        window = self.latest(k)
        cum = np.zeros((k + 1, self.dim))
        np.cumsum(window, axis=0, out=cum[1:])
        for j in range(k + 1):
            self._cum[(self._pos - k + j) % (cap + 1)] = cum[j]
        self._since_rebase = 0

    def window_sum(self, w: int) -> np.ndarray:
        if not 0 < w <= min(self.count, self.capacity):
            raise IndexError(f"window {w} not available (have {self.count})")
        return self._cum[self._pos] - self._cum[(self._pos - w) % (self.capacity + 1)]

    def window_sums(self, widths: np.ndarray) -> np.ndarray:
        """Sums over each width in ``widths``, shape ``(len(widths), dim)``."""
        idx = (self._pos - widths) % (self.capacity + 1)
        return self._cum[self._pos] - self._cum[idx]

    def latest(self, k: int) -> np.ndarray:
        """The last ``k`` observations in time order."""
        k = min(k, self.count, self.capacity)
        idx = (np.arange(self.count - k, self.count)) % self.capacity
        return self._obs[idx].copy()
