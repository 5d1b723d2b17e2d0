"""Synthetic streams (Zipf, Gaussian, uniform) and newline-delimited stream files."""

from __future__ import annotations

import os
from collections.abc import Iterable, Iterator
from dataclasses import dataclass

import numpy as np

KINDS = ("zipf", "gaussian", "uniform", "file")


class StreamFormatError(ValueError):
    """A stream file line is not a decimal unsigned integer."""

    def __init__(self, path: str | os.PathLike, lineno: int, line: str) -> None:
        super().__init__(f"{os.fspath(path)}: line {lineno}: not an unsigned integer: {line!r}")
        self.lineno = lineno


@dataclass(frozen=True)
class StreamSpec:
    """Recipe for a stream.

    ``mix_uniform_fraction`` of positions (chosen independently per position)
    are replaced by uniform draws from ``[1, m]``; the rest follow ``kind``.
    """

    kind: str
    n: int
    m: int
    zipf_skew: float = 1.0
    gauss_mean: float = 50.0
    gauss_sd: float = 25.0
    mix_uniform_fraction: float = 0.05
    seed: int = 0
    path: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.kind == "file":
            if not self.path:
                raise ValueError("kind='file' needs a path")
            return
        if self.n < 1 or self.m < 1:
            raise ValueError(f"n and m must be >= 1, got n={self.n}, m={self.m}")
        if not self.zipf_skew > 0:
            raise ValueError(f"zipf_skew must be > 0, got {self.zipf_skew}")
        if not self.gauss_sd > 0:
            raise ValueError(f"gauss_sd must be > 0, got {self.gauss_sd}")
        if not 0.0 <= self.mix_uniform_fraction <= 1.0:
            raise ValueError(f"mix_uniform_fraction must be in [0, 1], got {self.mix_uniform_fraction}")


def zipf_probabilities(m: int, skew: float) -> np.ndarray:
    weights = np.arange(1, m + 1, dtype=np.float64) ** -skew
    return weights / weights.sum()


def _zipf(rng: np.random.Generator, n: int, m: int, skew: float) -> np.ndarray:
    cdf = np.cumsum(zipf_probabilities(m, skew))
    cdf[-1] = 1.0
    return np.searchsorted(cdf, rng.random(n), side="right").astype(np.int64) + 1


def _gaussian(rng: np.random.Generator, n: int, m: int, mean: float, sd: float) -> np.ndarray:
    out = np.empty(n, dtype=np.int64)
    filled = 0
    while filled < n:
        draws = rng.normal(mean, sd, size=max(2 * (n - filled), 1024))
        draws = draws[draws > 0]
        # round half up, but never to 0: (0, 0.5) maps to 1
        values = np.maximum(np.floor(draws + 0.5), 1).astype(np.int64)
        values = values[values <= m][: n - filled]
        out[filled : filled + values.size] = values
        filled += values.size
    return out


def generate(spec: StreamSpec) -> np.ndarray:
    """Draw a stream as an int64 array; identical specs give identical arrays."""
    if spec.kind == "file":
        raise ValueError("generate() does not handle kind='file'; use read_stream()")
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    if spec.kind == "zipf":
        items = _zipf(rng, spec.n, spec.m, spec.zipf_skew)
    elif spec.kind == "gaussian":
        items = _gaussian(rng, spec.n, spec.m, spec.gauss_mean, spec.gauss_sd)
    else:
        items = rng.integers(1, spec.m, size=spec.n, endpoint=True)
    if spec.kind != "uniform" and spec.mix_uniform_fraction > 0:
        mask = rng.random(spec.n) < spec.mix_uniform_fraction
        items[mask] = rng.integers(1, spec.m, size=int(mask.sum()), endpoint=True)
    return items


def write_stream(path: str | os.PathLike, items: Iterable[int]) -> None:
    """Write one decimal item per line."""
    with open(path, "w", encoding="utf-8") as fh:
        if isinstance(items, np.ndarray):
            if items.size:
                fh.write("\n".join(map(str, items.tolist())))
                fh.write("\n")
            return
        for item in items:
            fh.write(f"{int(item)}\n")


def read_stream(path: str | os.PathLike) -> Iterator[int]:
    """Yield items lazily from a newline-delimited file."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text.isdigit() or not text.isascii():
                raise StreamFormatError(path, lineno, line.rstrip("\n"))
            yield int(text)


def load_stream(path: str | os.PathLike) -> np.ndarray:
    return np.fromiter(read_stream(path), dtype=np.int64)


def stream_from_spec(spec: StreamSpec) -> np.ndarray:
    if spec.kind == "file":
        return load_stream(spec.path)
    return generate(spec)
