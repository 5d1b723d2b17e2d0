"""Query workloads, accuracy metrics and experiment runs.

A workload samples query times uniformly from ``[w, n]``. At each time it
asks for the 50 most frequent items of the window (ties broken by smaller
item id) and 50 other items whose window frequency is at least 100, plus one
heavy-hitter query.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .oracle import ExactWindow
from .params import FrameworkConfig, PrivacyBudget, default_delta, window_error_bound
from .window import WindowSketch

NUM_HIGH = 50
NUM_LOW = 50
MIN_LOW_FREQ = 100

METRICS_COLUMNS = (
    "dataset", "n", "m", "w", "L", "alpha", "num_checkpoints", "a", "b",
    "epsilon", "delta", "rho", "gamma", "mae_high", "mae_low", "mre_high",
    "mre_low", "precision", "recall", "f1", "throughput_ips", "footprint_bytes", "seed",
)
QUERY_LOG_COLUMNS = ("t", "group", "item", "truth", "estimate")
HH_LOG_COLUMNS = ("t", "predicted", "actual", "hits")


@dataclass
class QueryPoint:
    t: int
    high: list[int]
    high_truth: list[int]
    low: list[int]
    low_truth: list[int]
    low_shortfall: int = 0


@dataclass
class Workload:
    w: int
    n: int
    sample_fraction: float
    seed: int
    points: list[QueryPoint]
    gamma: float = 0.01

    @property
    def timestamps(self) -> list[int]:
        return [p.t for p in self.points]

    @property
    def low_shortfall(self) -> int:
        return sum(p.low_shortfall for p in self.points)

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(asdict(self), fh)

    @classmethod
    def load(cls, path: str | os.PathLike) -> Workload:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        raw["points"] = [QueryPoint(**p) for p in raw["points"]]
        return cls(**raw)


def top_items(counts: np.ndarray, k: int) -> np.ndarray:
    """The ``k`` items (1-based) with largest positive counts; ties go to smaller ids.

    ``counts[i]`` is the count of item ``i + 1``. Items with zero count are
    never returned, so fewer than ``k`` may come back.
    """
    k = min(k, int(np.count_nonzero(counts)))
    if k <= 0:
        return np.zeros(0, dtype=np.int64)
    kth = np.partition(counts, counts.size - k)[counts.size - k]
    above = np.flatnonzero(counts > kth)
    ties = np.flatnonzero(counts == kth)[: k - above.size]
    chosen = np.concatenate([above, ties])
    order = np.lexsort((chosen, -counts[chosen]))
    return chosen[order] + 1


def build_workload(
    stream: np.ndarray,
    w: int,
    sample_fraction: float = 0.01,
    seed: int = 0,
    *,
    domain_size: int | None = None,
    gamma: float = 0.01,
    num_high: int = NUM_HIGH,
    num_low: int = NUM_LOW,
    min_low_freq: int = MIN_LOW_FREQ,
) -> Workload:
    """Sample query times and their frequency-query items with exact answers.

    ``floor(sample_fraction * (n - w + 1))`` times (at least one) are drawn
    without replacement from ``[w, n]``. When fewer than ``num_low`` items
    qualify for the low group, all of them are taken and the gap is recorded
    in ``low_shortfall``.
    """
    stream = np.asarray(stream, dtype=np.int64)
    n = stream.size
    if n < w:
        raise ValueError(f"stream of {n} items is shorter than the window {w}")
    if not 0 < sample_fraction <= 1:
        raise ValueError(f"sample_fraction must be in (0, 1], got {sample_fraction}")
    m = int(stream.max()) if domain_size is None else domain_size
    rng = np.random.Generator(np.random.PCG64(seed))
    span = n - w + 1
    k = max(1, math.floor(sample_fraction * span))
    times = np.sort(rng.choice(span, size=k, replace=False)) + w

    oracle = ExactWindow(w, m)
    points = []
    for t in times.tolist():
        oracle.observe_many(stream[oracle.t : t])
        counts = oracle.window_counts()
        high = top_items(counts, num_high)
        eligible = np.flatnonzero(counts >= min_low_freq) + 1
        eligible = np.setdiff1d(eligible, high, assume_unique=True)
        take = min(num_low, eligible.size)
        low = np.sort(rng.choice(eligible, size=take, replace=False)) if take else eligible[:0]
        points.append(QueryPoint(
            t=t,
            high=high.tolist(),
            high_truth=counts[high - 1].tolist(),
            low=low.tolist(),
            low_truth=counts[low - 1].tolist(),
            low_shortfall=num_low - take,
        ))
    return Workload(w=w, n=n, sample_fraction=sample_fraction, seed=seed, points=points, gamma=gamma)


def mae(estimates: Sequence[float], truths: Sequence[float]) -> float:
    est = np.asarray(estimates, dtype=np.float64)
    tru = np.asarray(truths, dtype=np.float64)
    if est.size == 0 or est.shape != tru.shape:
        raise ValueError("mae needs two non-empty sequences of equal length")
    return float(np.mean(np.abs(est - tru)))


def mre(estimates: Sequence[float], truths: Sequence[float]) -> float:
    est = np.asarray(estimates, dtype=np.float64)
    tru = np.asarray(truths, dtype=np.float64)
    if est.size == 0 or est.shape != tru.shape:
        raise ValueError("mre needs two non-empty sequences of equal length")
    if np.any(tru == 0):
        raise ValueError("mre is undefined for zero true frequencies")
    return float(np.mean(np.abs(est - tru) / tru))


def prf1(predicted: set[int], actual: set[int]) -> tuple[float, float, float]:
    """Precision, recall and F1 of a predicted heavy-hitter set.

    An empty prediction has precision 1 only when the true set is empty too;
    an empty true set has recall 1.
    """
    hits = len(predicted & actual)
    precision = hits / len(predicted) if predicted else (1.0 if not actual else 0.0)
    recall = hits / len(actual) if actual else 1.0
    return precision, recall, f1_score(precision, recall)


def f1_score(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


@dataclass
class MetricsReport:
    dataset: str
    n: int
    m: int
    w: int
    L: int
    alpha: float
    num_checkpoints: int
    a: int
    b: int
    epsilon: float
    delta: float
    rho: float
    gamma: float
    mae_high: float
    mae_low: float
    mre_high: float
    mre_low: float
    precision: float
    recall: float
    f1: float
    throughput_ips: float
    footprint_bytes: int
    seed: int
    theoretical_xi: float = math.nan
    num_queries: int = 0
    extra: dict = field(default_factory=dict)

    def row(self) -> dict:
        return {c: getattr(self, c) for c in METRICS_COLUMNS}


def write_metrics_csv(path: str | os.PathLike, reports: Sequence[MetricsReport]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRICS_COLUMNS)
        writer.writeheader()
        for report in reports:
            writer.writerow({k: _fmt(v) for k, v in report.row().items()})


def _fmt(value):
    return repr(value) if isinstance(value, float) else value


def read_metrics_csv(path: str | os.PathLike) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


@dataclass
class QueryLog:
    """Raw answers of one run; metrics are a pure function of this log."""

    t: list[int] = field(default_factory=list)
    group: list[str] = field(default_factory=list)
    item: list[int] = field(default_factory=list)
    truth: list[int] = field(default_factory=list)
    estimate: list[float] = field(default_factory=list)
    hh: list[tuple[int, int, int, int]] = field(default_factory=list)

    def add_frequency(self, t: int, group: str, items, truths, estimates) -> None:
        k = len(items)
        self.t.extend([t] * k)
        self.group.extend([group] * k)
        self.item.extend(int(i) for i in items)
        self.truth.extend(int(f) for f in truths)
        self.estimate.extend(float(e) for e in estimates)

    def add_heavy_hitters(self, t: int, predicted: set[int], actual: set[int]) -> None:
        self.hh.append((t, len(predicted), len(actual), len(predicted & actual)))

    def summarize(self) -> dict[str, float]:
        group = np.array(self.group)
        truth = np.array(self.truth, dtype=np.float64)
        est = np.array(self.estimate, dtype=np.float64)
        out = {}
        for name in ("high", "low"):
            sel = group == name
            if sel.any():
                out[f"mae_{name}"] = mae(est[sel], truth[sel])
                out[f"mre_{name}"] = mre(est[sel], truth[sel])
            else:
                out[f"mae_{name}"] = out[f"mre_{name}"] = math.nan
        if self.hh:
            precisions, recalls = [], []
            for _, predicted, actual, hits in self.hh:
                precisions.append(hits / predicted if predicted else (1.0 if not actual else 0.0))
                recalls.append(hits / actual if actual else 1.0)
            p, r = float(np.mean(precisions)), float(np.mean(recalls))
            out.update(precision=p, recall=r, f1=f1_score(p, r))
        else:
            out.update(precision=math.nan, recall=math.nan, f1=math.nan)
        return out

    def save(self, prefix: str | os.PathLike) -> tuple[str, str]:
        """Write ``<prefix>.queries.csv`` and ``<prefix>.hh.csv``."""
        qpath, hpath = f"{os.fspath(prefix)}.queries.csv", f"{os.fspath(prefix)}.hh.csv"
        with open(qpath, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(QUERY_LOG_COLUMNS)
            for row in zip(self.t, self.group, self.item, self.truth, self.estimate):
                writer.writerow(row[:4] + (repr(row[4]),))
        with open(hpath, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(HH_LOG_COLUMNS)
            writer.writerows(self.hh)
        return qpath, hpath

    @classmethod
    def load(cls, prefix: str | os.PathLike) -> QueryLog:
        log = cls()
        with open(f"{os.fspath(prefix)}.queries.csv", newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                log.t.append(int(row["t"]))
                log.group.append(row["group"])
                log.item.append(int(row["item"]))
                log.truth.append(int(row["truth"]))
                log.estimate.append(float(row["estimate"]))
        with open(f"{os.fspath(prefix)}.hh.csv", newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                log.hh.append(tuple(int(row[c]) for c in HH_LOG_COLUMNS))
        return log


def measure_throughput(sketch: WindowSketch, stream) -> float:
    """Items per second over per-item :meth:`WindowSketch.observe` calls only."""
    items = np.asarray(stream, dtype=np.int64).tolist()
    if not items:
        warnings.warn("empty stream: throughput undefined, reporting 0", RuntimeWarning, stacklevel=2)
        return 0.0
    observe = sketch.observe
    start = time.perf_counter()
    for item in items:
        observe(item)
    elapsed = time.perf_counter() - start
    return len(items) / elapsed if elapsed > 0 else math.inf


def run_single(
    config: FrameworkConfig,
    budget: PrivacyBudget,
    stream: np.ndarray,
    workload: Workload,
    *,
    gamma: float | None = None,
    dataset: str = "",
    bulk: bool = False,
    log: QueryLog | None = None,
) -> MetricsReport:
    """Replay ``stream`` through a fresh sketch and answer ``workload``.

    Only the time spent feeding items counts toward throughput. ``bulk``
    feeds the gaps between query times in batches (same final state, much
    faster, but the throughput then reflects the batch path).
    """
    stream = np.asarray(stream, dtype=np.int64)
    if workload.n != stream.size or workload.w != config.w:
        raise ValueError("workload was built for a different stream length or window size")
    gamma = workload.gamma if gamma is None else gamma
    sketch = WindowSketch(config, budget)
    oracle = ExactWindow(config.w, config.domain_size)
    log = QueryLog() if log is None else log
    threshold = sketch.heavy_hitter_threshold(gamma)
    feed_time = 0.0
    peak_bytes = 0

    def feed(chunk: np.ndarray) -> None:
        nonlocal feed_time
        if bulk:
            start = time.perf_counter()
            sketch.observe_many(chunk)
            feed_time += time.perf_counter() - start
        else:
            items = chunk.tolist()
            observe = sketch.observe
            start = time.perf_counter()
            for item in items:
                observe(item)
            feed_time += time.perf_counter() - start
        oracle.observe_many(chunk)

    for point in workload.points:
        feed(stream[sketch.t : point.t])
        estimates = sketch.estimate_all()
        high = np.asarray(point.high, dtype=np.int64)
        low = np.asarray(point.low, dtype=np.int64)
        log.add_frequency(point.t, "high", high, point.high_truth, estimates[high - 1])
        log.add_frequency(point.t, "low", low, point.low_truth, estimates[low - 1])
        predicted = set((np.flatnonzero(estimates >= threshold) + 1).tolist())
        actual = oracle.heavy_hitters(gamma)
        log.add_heavy_hitters(point.t, predicted, actual)
        peak_bytes = max(peak_bytes, sketch.footprint()[0])
    feed(stream[sketch.t :])
    peak_bytes = max(peak_bytes, sketch.footprint()[0])

    summary = log.summarize()
    return MetricsReport(
        dataset=dataset,
        n=stream.size,
        m=config.domain_size,
        w=config.w,
        L=config.sub_len,
        alpha=config.alpha,
        num_checkpoints=len(sketch.checkpoints),
        a=config.rows,
        b=config.width,
        epsilon=budget.epsilon,
        delta=budget.delta,
        rho=budget.rho,
        gamma=gamma,
        throughput_ips=stream.size / feed_time if feed_time > 0 else math.inf,
        footprint_bytes=peak_bytes,
        seed=config.seed,
        theoretical_xi=window_error_bound(config, sketch.schedule),
        num_queries=len(log.t),
        **summary,
    )


def run_experiment(
    config: FrameworkConfig,
    stream: np.ndarray,
    workload: Workload,
    epsilons: Sequence[float],
    *,
    delta: float | None = None,
    gamma: float | None = None,
    dataset: str = "",
    bulk: bool = False,
    jobs: int = 1,
    log_prefix: str | os.PathLike | None = None,
) -> list[MetricsReport]:
    """One :class:`MetricsReport` per epsilon; delta defaults to ``n^-1.5``.

    Grid points are independent and may run on ``jobs`` threads. With
    ``log_prefix`` the raw answers of each point are saved next to it.
    """
    stream = np.asarray(stream, dtype=np.int64)
    delta = default_delta(stream.size) if delta is None else delta
    budgets = [PrivacyBudget.from_eps_delta(eps, delta) for eps in epsilons]

    def one(indexed: tuple[int, PrivacyBudget]) -> MetricsReport:
        i, budget = indexed
        log = QueryLog()
        report = run_single(config, budget, stream, workload, gamma=gamma,
                            dataset=dataset, bulk=bulk, log=log)
        if log_prefix is not None:
            log.save(f"{os.fspath(log_prefix)}.{i}")
        return report

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(one, enumerate(budgets)))
    return [one(item) for item in enumerate(budgets)]
