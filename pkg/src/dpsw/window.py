"""The sliding-window framework: substreams of checkpointed private sketches.

The stream is cut into consecutive substreams of ``L`` items. Inside each
substream, forward sketch ``j`` covers the first ``I[j]`` items and backward
sketch ``j`` covers the last ``I[j]`` items, where ``I`` is the checkpoint list;
``j = 1`` is a single sketch over the whole substream shared by both lists.
A window query sums one sketch per overlapping substream: the tightest
backward sketch that starts at or before the window start, the full sketch
of every substream in between, and the longest forward sketch of the current
substream that is already complete.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .checkpoints import CheckpointList, build_checkpoints
from .params import BudgetSchedule, FrameworkConfig, PrivacyBudget, budget_schedule
from .pcms import PCMS


def _phase_plan(checkpoints: CheckpointList) -> list[tuple[int, tuple[int, ...]]]:
    """Offsets at which the set of sketches receiving items changes.

    Returns ``(first_offset, slots)`` pairs; slot ``j - 1`` is forward sketch
    ``j`` and slot ``n - 2 + j`` is backward sketch ``j >= 2``.
    """
    L = checkpoints.sub_len
    sizes = checkpoints.forward
    n = len(sizes)
    bounds = {0}
    for jj, size in enumerate(sizes):
        if size < L:
            bounds.add(size)
            bounds.add(L - size)
    plan = []
    for offset in sorted(bounds):
        slots = [jj for jj, size in enumerate(sizes) if offset < size]
        slots += [n - 1 + jj for jj in range(1, n) if offset >= L - sizes[jj]]
        plan.append((offset, tuple(slots)))
    return plan


def _sketch_seed(master: int, substream: int, slot: int) -> int:
    seq = np.random.SeedSequence(master, spawn_key=(substream, slot))
    return int(seq.generate_state(1, dtype=np.uint64)[0])


class Substream:
    """One length-``L`` segment with its forward and backward sketches."""

    def __init__(
        self,
        index: int,
        start: int,
        config: FrameworkConfig,
        checkpoints: CheckpointList,
        schedule: BudgetSchedule,
        plan: list[tuple[int, tuple[int, ...]]],
    ) -> None:
        self.index = index
        self.start = start
        self.length = config.sub_len
        self.end = start + config.sub_len - 1
        self.checkpoints = checkpoints
        n = len(checkpoints)
        a, b = config.rows, config.width
        self.block = np.empty((2 * n - 1, a, b), dtype=np.float64)
        self._flat = self.block.reshape(-1)
        self.slots: list[PCMS] = []
        for slot in range(2 * n - 1):
            if slot < n:
                j = slot + 1
                lo, hi = start, start + checkpoints.forward[slot] - 1
            else:
                j = slot - n + 2
                lo, hi = self.end - checkpoints.forward[j - 1] + 1, self.end
            self.slots.append(PCMS(
                a, b, schedule.for_checkpoint(j), _sketch_seed(config.seed, index, slot),
                lo, hi, domain_size=config.domain_size, hashing=config.hashing,
                out=self.block[slot],
            ))
        self.forward = self.slots[:n]
        self.backward = [self.slots[0]] + self.slots[n:]
        self._plan = plan
        self._phase = -1
        self._next_offset = 0
        self._active: tuple[int, ...] = ()
        self._table: np.ndarray | None = None

    @property
    def sketches(self) -> list[PCMS]:
        return self.slots

    def spent_budget(self) -> float:
        """Sum of zCDP budgets over distinct sketches (shared sketch once)."""
        return math.fsum(s.rho for s in self.slots)

    def _enter_phase(self, phase: int) -> None:
        offset, active = self._plan[phase]
        for slot in set(self._active) - set(active):
            self.slots[slot].freeze()
        self._active = active
        self._phase = phase
        self._next_offset = self._plan[phase + 1][0] if phase + 1 < len(self._plan) else self.length
        size = self.slots[0].counters.size
        self._table = np.concatenate(
            [self.slots[s].flat_table + s * size for s in active], axis=1
        )

    def advance(self, t: int) -> None:
        """Bring the active sketch set up to date for an item at time ``t``."""
        while t - self.start >= self._next_offset:
            self._enter_phase(self._phase + 1)

    def insert(self, item: int) -> None:
        self._flat[self._table[item]] += 1.0

    def insert_many(self, items: np.ndarray) -> None:
        counts = np.bincount(self._table[items].ravel(), minlength=self._flat.size)
        self._flat += counts

    def phase_last_time(self) -> int:
        """Last stream time at which the current active set still applies."""
        return self.start + self._next_offset - 1

    def close(self) -> None:
        for sketch in self.slots:
            sketch.freeze()
        self._table = None


@dataclass(frozen=True)
class SelectedSketch:
    substream: int
    side: str
    checkpoint: int
    sketch: PCMS

    @property
    def start(self) -> int:
        return self.sketch.start

    @property
    def end(self) -> int:
        return self.sketch.end


@dataclass(frozen=True)
class SketchSelection:
    """The sketches whose estimates are summed for one window query."""

    t: int
    window_start: int
    parts: tuple[SelectedSketch, ...]

    @property
    def interval(self) -> tuple[int, int]:
        return self.parts[0].start, self.parts[-1].end

    @property
    def left_checkpoint(self) -> int:
        return self.parts[0].checkpoint

    @property
    def right_checkpoint(self) -> int:
        return self.parts[-1].checkpoint

    def ranges(self) -> list[tuple[int, int]]:
        return [(p.start, p.end) for p in self.parts]


class WindowSketch:
    """Differentially private frequency sketch over a count-based sliding window.

    Every substream spends at most ``budget.rho`` (zCDP) and substreams are
    disjoint, so the structure as a whole is rho-zCDP and hence
    ``(epsilon, delta)``-DP. Sketches are only read after their last insert.

    Not thread-safe: one writer; concurrent readers only without a writer.
    """

    def __init__(self, config: FrameworkConfig, budget: PrivacyBudget) -> None:
        self.config = config
        self.budget = budget
        self.checkpoints = build_checkpoints(config.sub_len, config.alpha)
        self.schedule = budget_schedule(budget.rho, config.alpha, len(self.checkpoints))
        self._plan = _phase_plan(self.checkpoints)
        self.active: deque[Substream] = deque()
        self.t = 0
        self._substreams_opened = 0
        self._all_items: np.ndarray | None = None

    @property
    def current(self) -> Substream | None:
        return self.active[-1] if self.active else None

    @property
    def window_start(self) -> int:
        return max(self.t - self.config.w + 1, 1)

    def _open_substream(self, t: int) -> Substream:
        if self.active:
            self.active[-1].close()
        self._substreams_opened += 1
        sub = Substream(self._substreams_opened, t, self.config, self.checkpoints,
                        self.schedule, self._plan)
        self.active.append(sub)
        return sub

    def _evict(self) -> None:
        start = self.t - self.config.w + 1
        active = self.active
        while active[0].end < start:
            active.popleft()

    def observe(self, item: int) -> None:
        """Feed the next stream item."""
        if not 1 <= item <= self.config.domain_size:
            raise ValueError(f"item {item} outside domain [1, {self.config.domain_size}]")
        self.t += 1
        t = self.t
        active = self.active
        if not active or t > active[-1].end:
            sub = self._open_substream(t)
        else:
            sub = active[-1]
        if t - sub.start >= sub._next_offset:
            sub.advance(t)
        sub.insert(item)
        if active[0].end < t - self.config.w + 1:
            self._evict()

    def observe_many(self, items) -> None:
        """Feed a batch of items; the end state matches per-item :meth:`observe`."""
        items = np.asarray(items, dtype=np.int64)
        if items.size == 0:
            return
        if items.min() < 1 or items.max() > self.config.domain_size:
            raise ValueError(f"items outside domain [1, {self.config.domain_size}]")
        pos = 0
        while pos < items.size:
            t_next = self.t + 1
            sub = self.current
            if sub is None or t_next > sub.end:
                sub = self._open_substream(t_next)
            sub.advance(t_next)
            count = min(items.size - pos, sub.phase_last_time() - t_next + 1)
            sub.insert_many(items[pos : pos + count])
            self.t += count
            pos += count
            self._evict()

    def select_sketches(self) -> SketchSelection:
        """Pick one sketch per substream overlapping the current window."""
        if self.t < 1:
            raise ValueError("no items observed yet")
        t = self.t
        s = self.window_start
        last = self.active[-1]
        forward_sizes = self.checkpoints.forward
        # v_j = T + I[j] - 1 decreases in j; the first j with v_j <= t is the largest
        y = next(j for j, size in enumerate(forward_sizes) if last.start + size - 1 <= t)
        right = SelectedSketch(last.index, "forward", y + 1, last.forward[y])
        first = self.active[0]
        if first is last:
            return SketchSelection(t, s, (right,))
        # u_j = T + L - I[j] (u_1 = T) increases in j; take the largest j with u_j <= s
        x = 0
        for j in range(1, len(forward_sizes)):
            if first.end - forward_sizes[j] + 1 <= s:
                x = j
        parts = [SelectedSketch(first.index, "backward", x + 1, first.backward[x])]
        for k in range(1, len(self.active) - 1):
            sub = self.active[k]
            parts.append(SelectedSketch(sub.index, "forward", 1, sub.forward[0]))
        parts.append(right)
        return SketchSelection(t, s, tuple(parts))

    def estimate_window_frequency(self, item: int) -> float:
        """Noisy frequency of ``item`` in the current window (may be negative)."""
        return float(sum(p.sketch.estimate(item) for p in self.select_sketches().parts))

    def estimate_many(self, items, selection: SketchSelection | None = None) -> np.ndarray:
        """Estimates for several items; ``selection`` may be passed to reuse one."""
        if selection is None:
            selection = self.select_sketches()
        items = np.asarray(items, dtype=np.int64)
        total = np.zeros(items.shape, dtype=np.float64)
        for part in selection.parts:
            total += part.sketch.estimate_many(items)
        return total

    def estimate_all(self, selection: SketchSelection | None = None) -> np.ndarray:
        """Estimates for every item; entry ``i`` is item ``i + 1``."""
        if self._all_items is None:
            self._all_items = np.arange(1, self.config.domain_size + 1, dtype=np.int64)
        return self.estimate_many(self._all_items, selection)

    def heavy_hitter_threshold(self, gamma: float) -> float:
        return (gamma - self.config.heavy_hitter_zeta) * self.config.w

    def heavy_hitters(self, gamma: float) -> dict[int, float]:
        """Items whose window estimate reaches ``(gamma - zeta) * w``, with estimates."""
        estimates = self.estimate_all()
        hits = np.flatnonzero(estimates >= self.heavy_hitter_threshold(gamma))
        return {int(i) + 1: float(estimates[i]) for i in hits}

    def footprint(self) -> tuple[int, int, int]:
        """``(bytes, live sketches, live substreams)``.

        Bytes count counters and per-sketch metadata; precomputed hash tables
        are a speed cache and are excluded.
        """
        sketches = [s for sub in self.active for s in sub.slots]
        return sum(s.nbytes() for s in sketches), len(sketches), len(self.active)
