"""Exact sliding-window counts, used as ground truth."""

from __future__ import annotations

import numpy as np


class HistoryDisabledError(RuntimeError):
    pass


class ExactWindow:
    """Exact per-item frequencies over the last ``w`` items.

    Keeps a ring buffer of the window and a dense count array indexed by
    item. With ``keep_history=True`` the whole stream is retained so that
    arbitrary ranges can be counted (O(n) memory).
    """

    def __init__(self, w: int, domain_size: int, *, keep_history: bool = False) -> None:
        if w < 1:
            raise ValueError(f"window size must be >= 1, got {w}")
        if domain_size < 1:
            raise ValueError(f"domain_size must be >= 1, got {domain_size}")
        self.w = w
        self.domain_size = domain_size
        self.t = 0
        self.counts = np.zeros(domain_size + 1, dtype=np.int64)
        self._ring = np.zeros(w, dtype=np.int64)
        self.keep_history = keep_history
        self._chunks: list[np.ndarray] = []
        self._tail: list[int] = []

    def _check(self, items: np.ndarray) -> None:
        if items.size and (items.min() < 1 or items.max() > self.domain_size):
            raise ValueError(f"items outside domain [1, {self.domain_size}]")

    def observe(self, item: int) -> None:
        if not 1 <= item <= self.domain_size:
            raise ValueError(f"item {item} outside domain [1, {self.domain_size}]")
        slot = self.t % self.w
        if self.t >= self.w:
            self.counts[self._ring[slot]] -= 1
        self._ring[slot] = item
        self.counts[item] += 1
        self.t += 1
        if self.keep_history:
            self._tail.append(item)

    def observe_many(self, items) -> None:
        items = np.asarray(items, dtype=np.int64).ravel()
        if items.size == 0:
            return
        self._check(items)
        w, t, c = self.w, self.t, items.size
        # times (0-based) leaving the window: [t - w, t + c - w)
        leave_lo, leave_hi = max(t - w, 0), max(t + c - w, 0)
        old_leave_hi = min(leave_hi, t)
        if old_leave_hi > leave_lo:
            leaving = self._ring[np.arange(leave_lo, old_leave_hi) % w]
            self.counts -= np.bincount(leaving, minlength=self.counts.size)
        if leave_hi > t:
            self.counts -= np.bincount(items[: leave_hi - t], minlength=self.counts.size)
        self.counts += np.bincount(items, minlength=self.counts.size)
        keep = items[-w:]
        self._ring[np.arange(t + c - keep.size, t + c) % w] = keep
        self.t += c
        if self.keep_history:
            self._flush_tail()
            self._chunks.append(items.copy())

    @property
    def window_start(self) -> int:
        """1-based index of the oldest item in the window."""
        return max(self.t - self.w + 1, 1)

    def frequency(self, item: int) -> int:
        if not 1 <= item <= self.domain_size:
            return 0
        return int(self.counts[item])

    def window_counts(self) -> np.ndarray:
        """Counts for items ``1..m`` (entry ``i`` is item ``i + 1``); a view."""
        return self.counts[1:]

    def history(self) -> np.ndarray:
        if not self.keep_history:
            raise HistoryDisabledError("range queries need keep_history=True")
        self._flush_tail()
        if len(self._chunks) != 1:
            merged = np.concatenate(self._chunks) if self._chunks else np.zeros(0, dtype=np.int64)
            self._chunks = [merged]
        return self._chunks[0]

    def _flush_tail(self) -> None:
        if self._tail:
            self._chunks.append(np.array(self._tail, dtype=np.int64))
            self._tail = []

    def range_frequency(self, item: int, lo: int, hi: int) -> int:
        """Occurrences of ``item`` at 1-based positions ``lo..hi`` inclusive."""
        if not 1 <= lo <= hi <= self.t:
            raise ValueError(f"need 1 <= lo <= hi <= t={self.t}, got [{lo}, {hi}]")
        return int(np.count_nonzero(self.history()[lo - 1 : hi] == item))

    def range_counts(self, lo: int, hi: int) -> np.ndarray:
        """Counts of every item ``1..m`` over positions ``lo..hi``."""
        if not 1 <= lo <= hi <= self.t:
            raise ValueError(f"need 1 <= lo <= hi <= t={self.t}, got [{lo}, {hi}]")
        return np.bincount(self.history()[lo - 1 : hi], minlength=self.domain_size + 1)[1:]

    def heavy_hitters(self, gamma: float) -> set[int]:
        """Items with window frequency at least ``gamma * w``."""
        return {int(i) + 1 for i in np.flatnonzero(self.window_counts() >= gamma * self.w)}
