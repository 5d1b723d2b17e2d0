"""Smooth-histogram checkpoint lists for a substream.

A substream of length ``L`` is summarised by a decreasing list ``forward`` of
prefix lengths (``L`` first, ``1`` last) such that neighbouring entries are
either within a factor ``1 - alpha`` of each other or consecutive integers.
``backward`` holds the matching start offsets of the suffix sketches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

# |forward| <= BOUND_CONSTANT * ln(L) / alpha + 2 holds for every (L, alpha) we
# have enumerated; the worst observed ratio is about 0.87.
BOUND_CONSTANT = 1.0


@dataclass(frozen=True)
class CheckpointList:
    sub_len: int
    alpha: float
    forward: tuple[int, ...]
    backward: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.forward)

    def size_bound(self) -> float:
        return BOUND_CONSTANT * math.log(self.sub_len) / self.alpha + 2


def _prune(sub_len: int, alpha: float) -> list[int]:
    index: list[int] = []
    shrink = 1.0 - alpha
    for i in range(sub_len, 0, -1):
        index.append(i)
        j = 0
        # len(index) is re-read after every deletion
        while j <= len(index) - 3:
            threshold = shrink * index[j]
            # index is strictly decreasing, so qualifying k form a run after j
            k = j + 1
            while k + 1 < len(index) and index[k + 1] >= threshold:
                k += 1
            if k > j + 1 and index[k] >= threshold:
                del index[j + 1 : k]
            j += 1
    return index


@lru_cache(maxsize=256)
def build_checkpoints(sub_len: int, alpha: float) -> CheckpointList:
    """Run the pruning pass over ``L, L-1, ..., 1`` and reflect the result.

    Each new index is appended, then for every position ``j`` the entries
    strictly between ``j`` and the furthest ``k`` with
    ``I[k] >= (1 - alpha) * I[j]`` are removed. The reflected list is
    ``L - I[j] + 1``. Cost is roughly ``O(L * |I|)``; results are cached.
    """
    if sub_len < 1:
        raise ValueError(f"substream length must be >= 1, got {sub_len}")
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    forward = tuple(_prune(sub_len, alpha))
    backward = tuple(sub_len - i + 1 for i in forward)
    return CheckpointList(sub_len, alpha, forward, backward)


def checkpoint_count(sub_len: int, alpha: float) -> int:
    return len(build_checkpoints(sub_len, alpha))


def alpha_for_count(sub_len: int, target: int, *, tol: float = 1e-7) -> float:
    """Smallest alpha (to ``tol``) whose checkpoint list has ``target`` entries.

    The count is non-increasing in alpha, so the search bisects on
    ``count <= target``. Raises ``ValueError`` when no alpha in (0, 1) lands
    exactly on ``target``.
    """
    if target < 1:
        raise ValueError(f"target checkpoint count must be >= 1, got {target}")
    if sub_len == 1:
        if target != 1:
            raise ValueError("a substream of length 1 always has exactly 1 checkpoint")
        return 0.5
    hi = 1.0 - 1e-12
    if checkpoint_count(sub_len, hi) > target:
        raise ValueError(f"cannot reach {target} checkpoints for L={sub_len}")
    # walk down geometrically; tiny alpha makes the pruning pass quadratic
    lo = 0.5
    while checkpoint_count(sub_len, lo) <= target:
        hi = lo
        lo /= 2
        if lo < 1e-6:
            return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if checkpoint_count(sub_len, mid) <= target:
            hi = mid
        else:
            lo = mid
    if checkpoint_count(sub_len, hi) != target:
        raise ValueError(f"no alpha yields exactly {target} checkpoints for L={sub_len}")
    return hi
