"""Private count-min sketch: a count-min sketch whose counters start as Gaussian noise."""

from __future__ import annotations

import math
import struct

import numpy as np

SNAPSHOT_MAGIC = b"PCMS"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<4sHBBIIdQqq")
_HASHING_CODES = {"multiply_shift": 0, "identity": 1}

# bytes of bookkeeping per sketch besides counters: two 64-bit hash
# parameters per row plus rho, seed, start, end, rows, width
def metadata_bytes(rows: int) -> int:
    return 16 * rows + 48


class FrozenSketchError(RuntimeError):
    """Raised when inserting into a sketch that has been frozen."""


def hash_parameters(seed: int, rows: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-row multiplier (odd) and increment for multiply-add-shift hashing.

    Drawn from the first child of ``SeedSequence(seed)``; the noise uses the
    second child, so sketch width never influences the hash functions.
    """
    hash_seq, _ = np.random.SeedSequence(seed).spawn(2)
    rng = np.random.Generator(np.random.PCG64(hash_seq))
    mult = rng.integers(0, 2**64, size=rows, dtype=np.uint64, endpoint=False) | np.uint64(1)
    add = rng.integers(0, 2**64, size=rows, dtype=np.uint64, endpoint=False)
    return mult, add


def hash_columns(items, mult: np.ndarray, add: np.ndarray, width: int) -> np.ndarray:
    """Map items to 0-based columns, one row per hash function.

    ``((mult * x + add) mod 2^64) >> 32`` is a 2-universal hash of 32-bit keys
    onto 32 bits; the top bits are then scaled onto ``[0, width)``.
    """
    x = np.asarray(items, dtype=np.uint64).reshape(1, -1)
    mixed = x * mult.reshape(-1, 1) + add.reshape(-1, 1)
    high = mixed >> np.uint64(32)
    return ((high * np.uint64(width)) >> np.uint64(32)).astype(np.intp)


class PCMS:
    """An ``rows x width`` count-min sketch initialised with N(0, rows/rho) noise.

    The noise scale makes the released counter array rho-zCDP: one changed
    item moves at most ``2 * rows`` counters by one, giving l2-sensitivity
    ``sqrt(2 * rows)``. ``rho = inf`` disables noise.

    Args:
        rows: Number of hash rows ``a``.
        width: Counters per row ``b``.
        rho: zCDP budget of this sketch, or ``math.inf``.
        seed: 64-bit seed; identical seeds give identical noise and hashes.
        start, end: Stream positions this sketch is declared to cover.
        domain_size: If given, item columns are precomputed for ``[1, m]``
            and inserts outside the domain are rejected.
        hashing: ``"multiply_shift"`` or ``"identity"`` (column ``item - 1``).
        out: Optional ``(rows, width)`` float64 buffer to hold the counters.
    """

    def __init__(
        self,
        rows: int,
        width: int,
        rho: float,
        seed: int,
        start: int = 1,
        end: int | None = None,
        *,
        domain_size: int | None = None,
        hashing: str = "multiply_shift",
        out: np.ndarray | None = None,
    ) -> None:
        if rows < 1 or width < 1:
            raise ValueError(f"rows and width must be >= 1, got {rows}x{width}")
        if not rho > 0:
            raise ValueError(f"rho must be > 0, got {rho}")
        if hashing not in _HASHING_CODES:
            raise ValueError(f"unknown hashing {hashing!r}")
        if hashing == "identity" and domain_size is not None and domain_size > width:
            raise ValueError("identity hashing needs width >= domain_size")
        self.rows = rows
        self.width = width
        self.rho = float(rho)
        self.seed = int(seed)
        self.start = start
        self.end = end
        self.domain_size = domain_size
        self.hashing = hashing
        self.frozen = False

        self.mult, self.add = hash_parameters(self.seed, rows)
        if out is None:
            out = np.empty((rows, width), dtype=np.float64)
        elif out.shape != (rows, width) or out.dtype != np.float64:
            raise ValueError("out buffer must be float64 with shape (rows, width)")
        self.counters = out
        if math.isinf(self.rho):
            self.counters.fill(0.0)
        else:
            _, noise_seq = np.random.SeedSequence(self.seed).spawn(2)
            rng = np.random.Generator(np.random.PCG64(noise_seq))
            rng.standard_normal(out=self.counters)
            self.counters *= math.sqrt(rows / self.rho)

        self._row_offsets = np.arange(rows, dtype=np.intp) * width
        self.flat_table: np.ndarray | None = None
        if domain_size is not None:
            cols = self.columns(np.arange(1, domain_size + 1))
            table = np.zeros((domain_size + 1, rows), dtype=np.intp)
            # row 0 stands for the invalid item 0 and is never read
            table[1:] = (cols + self._row_offsets[:, None]).T
            self.flat_table = table

    @property
    def sigma(self) -> float:
        return 0.0 if math.isinf(self.rho) else math.sqrt(self.rows / self.rho)

    def columns(self, items) -> np.ndarray:
        """0-based column of each item in every row, shape ``(rows, len(items))``."""
        if self.hashing == "identity":
            cols = np.asarray(items, dtype=np.intp).reshape(1, -1) - 1
            if cols.size and (cols.min() < 0 or cols.max() >= self.width):
                raise ValueError("identity hashing needs items in [1, width]")
            return np.repeat(cols, self.rows, axis=0)
        return hash_columns(items, self.mult, self.add, self.width)

    def flat_indices(self, item: int) -> np.ndarray:
        """Indices into ``counters.ravel()`` touched by ``item``."""
        if self.flat_table is not None:
            return self.flat_table[item]
        return self.columns([item])[:, 0] + self._row_offsets

    def _check_item(self, item: int) -> None:
        if self.domain_size is not None and not 1 <= item <= self.domain_size:
            raise ValueError(f"item {item} outside domain [1, {self.domain_size}]")

    def insert(self, item: int) -> None:
        """Add one occurrence of ``item``: one counter per row goes up by 1."""
        if self.frozen:
            raise FrozenSketchError("cannot insert into a frozen sketch")
        self._check_item(item)
        self.counters.reshape(-1)[self.flat_indices(item)] += 1.0

    def insert_many(self, items) -> None:
        """Bulk insert; equivalent to calling :meth:`insert` for each item."""
        if self.frozen:
            raise FrozenSketchError("cannot insert into a frozen sketch")
        items = np.asarray(items, dtype=np.int64)
        if items.size == 0:
            return
        if self.domain_size is not None and (items.min() < 1 or items.max() > self.domain_size):
            raise ValueError(f"items outside domain [1, {self.domain_size}]")
        if self.flat_table is not None:
            idx = self.flat_table[items].ravel()
        else:
            idx = (self.columns(items) + self._row_offsets[:, None]).ravel()
        self.counters.reshape(-1)[:] += np.bincount(idx, minlength=self.counters.size)

    def estimate(self, item: int) -> float:
        """Minimum over rows of the counters ``item`` hashes to (unclamped)."""
        return float(self.counters.reshape(-1)[self.flat_indices(item)].min())

    def estimate_many(self, items) -> np.ndarray:
        items = np.asarray(items, dtype=np.int64)
        if self.flat_table is not None:
            idx = self.flat_table[items]
        else:
            idx = (self.columns(items) + self._row_offsets[:, None]).T
        return self.counters.reshape(-1)[idx].min(axis=1)

    def freeze(self) -> None:
        self.frozen = True

    def nbytes(self) -> int:
        """Counter storage plus fixed per-sketch metadata."""
        return self.rows * self.width * 8 + metadata_bytes(self.rows)

    def to_bytes(self) -> bytes:
        """Versioned little-endian snapshot: header, then row-major float64 counters."""
        header = _HEADER.pack(
            SNAPSHOT_MAGIC,
            SNAPSHOT_VERSION,
            _HASHING_CODES[self.hashing],
            int(self.frozen),
            self.rows,
            self.width,
            self.rho,
            self.seed,
            self.start,
            -1 if self.end is None else self.end,
        )
        return header + self.counters.astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes, *, domain_size: int | None = None) -> PCMS:
        fields = _HEADER.unpack_from(data)
        magic, version, hashing_code, frozen, rows, width, rho, seed, start, end = fields
        if magic != SNAPSHOT_MAGIC:
            raise ValueError("not a PCMS snapshot")
        if version != SNAPSHOT_VERSION:
            raise ValueError(f"unsupported snapshot version {version}")
        expected = _HEADER.size + rows * width * 8
        if len(data) != expected:
            raise ValueError(f"snapshot has {len(data)} bytes, expected {expected}")
        hashing = {v: k for k, v in _HASHING_CODES.items()}[hashing_code]
        # rho = inf skips the noise draw; the counters are overwritten anyway
        sketch = cls(rows, width, math.inf, seed, start, None if end == -1 else end,
                     domain_size=domain_size, hashing=hashing)
        sketch.rho = rho
        sketch.counters[:] = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).reshape(rows, width)
        sketch.frozen = bool(frozen)
        return sketch

    def __repr__(self) -> str:
        return (f"PCMS(rows={self.rows}, width={self.width}, rho={self.rho:.4g}, "
                f"range=[{self.start}, {self.end}], frozen={self.frozen})")
