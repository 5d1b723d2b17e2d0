"""Executable checks of the framework's guarantees.

Each check returns a :class:`CheckReport` with a readable summary and a CSV
dump of everything it measured. Run ``python -m dpsw.fidelity`` for the
default battery.
"""

from __future__ import annotations

import csv
import math
import os
import sys
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .checkpoints import build_checkpoints
from .datagen import StreamSpec, generate
from .oracle import ExactWindow
from .params import FrameworkConfig, PrivacyBudget, default_delta, epsilon_from_rho
from .window import WindowSketch


@dataclass(frozen=True)
class TrialPlan:
    """Seeds and parameters shared by the trials of one check.

    ``stream`` fixes the data; each seed in ``seeds`` drives a fresh sketch
    (and, for the noiseless check, a fresh random stream).
    """

    seeds: tuple[int, ...]
    n: int = 10_000
    w: int = 1_000
    sub_len: int = 100
    alpha: float = 0.5
    domain_size: int = 20
    rows: int = 2
    width: int = 5000
    epsilon: float = 1.0
    delta: float | None = None
    gamma: float = 0.01
    stream: StreamSpec | None = None
    query_times: tuple[int, ...] | None = None
    num_query_times: int = 5
    query_every: int = 1
    eta: float = 0.05
    include_threshold: float | None = None
    exclude_threshold: float | None = None
    min_rate: float | None = None

    def __post_init__(self) -> None:
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("trial seeds must be distinct")
        if not self.seeds:
            raise ValueError("need at least one seed")
        if self.n < self.w:
            raise ValueError(f"n={self.n} must be >= w={self.w}")
        if not 0 < self.eta < 1:
            raise ValueError(f"eta must be in (0, 1), got {self.eta}")

    @property
    def num_trials(self) -> int:
        return len(self.seeds)

    def config(self, seed: int, **overrides) -> FrameworkConfig:
        fields = dict(w=self.w, sub_len=self.sub_len, alpha=self.alpha, rows=self.rows,
                      width=self.width, domain_size=self.domain_size, seed=seed)
        fields.update(overrides)
        return FrameworkConfig(**fields)

    def budget(self) -> PrivacyBudget:
        delta = default_delta(self.n) if self.delta is None else self.delta
        return PrivacyBudget.from_eps_delta(self.epsilon, delta)


@dataclass
class CheckReport:
    name: str
    checked: int = 0
    violations: int = 0
    rows: list[dict] = field(default_factory=list)
    first_counterexample: str | None = None
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def fail(self, trace: str) -> None:
        self.violations += 1
        if self.first_counterexample is None:
            self.first_counterexample = trace

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        lines = [f"[{status}] {self.name}: {self.checked} checked, {self.violations} violations"]
        lines += [f"  {note}" for note in self.notes]
        if self.first_counterexample:
            lines.append(f"  first counterexample: {self.first_counterexample}")
        return "\n".join(lines)

    def write_csv(self, path: str | os.PathLike) -> None:
        columns: list[str] = []
        for row in self.rows:
            columns += [k for k in row if k not in columns]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=["check"] + columns)
            writer.writeheader()
            for row in self.rows:
                writer.writerow({"check": self.name, **row})


def sub_len_for_count(alpha: float, target: int, limit: int = 1 << 20) -> int | None:
    """Smallest substream length whose checkpoint list has ``target`` entries.

    The count grows (almost always monotonically) with ``L``: double until it
    reaches ``target``, bisect, then scan a little for the rare wiggle.
    """
    def count(L: int) -> int:
        return len(build_checkpoints(L, alpha))

    hi = 1
    while count(hi) < target:
        hi *= 2
        if hi > limit:
            return None
    lo = hi // 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if count(mid) >= target:
            hi = mid
        else:
            lo = mid
    for L in range(max(1, hi - 8), hi + 9):
        if count(L) == target:
            return L
    return None


def check_budget_conservation(configs: Iterable[tuple[float, int]], rho: float = 1.0,
                              substreams: int = 4, rel_tol: float = 1e-12) -> CheckReport:
    """Every materialised substream spends exactly ``rho (1 - (1-a)^2 a^(|I|-1))``.

    ``configs`` are ``(alpha, |I|)`` pairs; a substream length giving that
    many checkpoints is searched for, then a small sketch is fed
    ``substreams`` substreams' worth of items and each one is inspected.
    """
    report = CheckReport("budget conservation")
    budget = PrivacyBudget(epsilon_from_rho(rho, 1e-6), 1e-6, rho)
    for alpha, count in configs:
        L = sub_len_for_count(alpha, count)
        if L is None:
            report.fail(f"no substream length gives |I|={count} at alpha={alpha}")
            continue
        config = FrameworkConfig(w=2 * L, sub_len=L, alpha=alpha, rows=1, width=4,
                                 domain_size=4, seed=count)
        sketch = WindowSketch(config, budget)
        expected = rho * (1.0 - (1.0 - alpha) ** 2 * alpha ** (count - 1))
        seen = set()
        stream = np.tile(np.arange(1, 5), (substreams * L) // 4 + 1)[: substreams * L]
        for pos in range(0, stream.size, L):
            sketch.observe_many(stream[pos : pos + L])
            for sub in sketch.active:
                if sub.index in seen:
                    continue
                seen.add(sub.index)
                spent = sub.spent_budget()
                rel = abs(spent - expected) / expected
                report.checked += 1
                report.rows.append(dict(alpha=alpha, num_checkpoints=count, L=L,
                                        substream=sub.index, spent=repr(spent),
                                        expected=repr(expected), rel_error=rel))
                if len(sub.checkpoints) != count or rel > rel_tol:
                    report.fail(f"alpha={alpha} |I|={count} L={L} substream={sub.index}: "
                                f"spent {spent!r}, expected {expected!r} (rel {rel:.3g})")
    return report


def check_noiseless_equivalence(plan: TrialPlan) -> CheckReport:
    """With no noise and injective hashing, estimates equal exact range counts.

    For every query time, the selected sketch ranges must be contiguous and
    each item's estimate must equal its count over the selection interval.
    """
    report = CheckReport("noiseless equivalence")
    m = plan.domain_size
    for seed in plan.seeds:
        rng = np.random.Generator(np.random.PCG64(seed))
        stream = rng.integers(1, m, size=plan.n, endpoint=True)
        config = plan.config(seed, width=m, hashing="identity")
        sketch = WindowSketch(config, PrivacyBudget.noiseless())
        # prefix[t, i] = occurrences of item i + 1 among the first t items
        prefix = np.zeros((plan.n + 1, m), dtype=np.int64)
        prefix[np.arange(1, plan.n + 1), stream - 1] = 1
        np.cumsum(prefix, axis=0, out=prefix)
        for t, item in enumerate(stream.tolist(), start=1):
            sketch.observe(item)
            if t % plan.query_every:
                continue
            selection = sketch.select_sketches()
            ranges = selection.ranges()
            contiguous = all(ranges[i][1] + 1 == ranges[i + 1][0] for i in range(len(ranges) - 1))
            lo, hi = selection.interval
            covers = lo <= selection.window_start and hi <= t
            estimates = sketch.estimate_all(selection)
            exact = prefix[hi] - prefix[lo - 1]
            report.checked += 1
            if not (contiguous and covers) or not np.array_equal(estimates, exact):
                bad = np.flatnonzero(estimates != exact)
                report.fail(
                    f"seed={seed} t={t} window_start={selection.window_start} ranges={ranges} "
                    f"contiguous={contiguous} items={(bad + 1).tolist()[:5]} "
                    f"estimates={estimates[bad][:5].tolist()} exact={exact[bad][:5].tolist()} "
                    f"stream_tail={stream[max(0, t - 12):t].tolist()}"
                )
        report.rows.append(dict(seed=seed, n=plan.n, w=plan.w, L=plan.sub_len,
                                alpha=plan.alpha, queries=plan.n // plan.query_every))
    return report


@dataclass
class HeavyHitterTrials:
    """Raw outcome of repeated heavy-hitter queries on one fixed stream."""

    times: np.ndarray
    truth: np.ndarray  # (num_times, m) exact window counts
    errors: np.ndarray  # (trials, num_times, m) estimate - truth
    reported: np.ndarray  # (trials, num_times, m) bool
    threshold: float


MIN_STATISTICAL_TRIALS = 20


def run_hh_trials(plan: TrialPlan) -> HeavyHitterTrials:
    if plan.num_trials < MIN_STATISTICAL_TRIALS:
        raise ValueError(f"statistical checks need >= {MIN_STATISTICAL_TRIALS} trials, got {plan.num_trials}")
    spec = plan.stream or StreamSpec("zipf", plan.n, plan.domain_size, seed=0)
    stream = generate(spec)
    m = spec.m
    if plan.query_times is not None:
        times = np.array(sorted(plan.query_times), dtype=np.int64)
    else:
        rng = np.random.Generator(np.random.PCG64(spec.seed + 1))
        span = plan.n - plan.w + 1
        times = np.sort(rng.choice(span, size=min(plan.num_query_times, span), replace=False)) + plan.w
    oracle = ExactWindow(plan.w, m)
    truth = np.empty((times.size, m), dtype=np.int64)
    for k, t in enumerate(times.tolist()):
        oracle.observe_many(stream[oracle.t : t])
        truth[k] = oracle.window_counts()

    budget = plan.budget()
    errors = np.empty((plan.num_trials, times.size, m))
    reported = np.empty((plan.num_trials, times.size, m), dtype=bool)
    threshold = math.nan
    for trial, seed in enumerate(plan.seeds):
        sketch = WindowSketch(plan.config(seed, domain_size=m), budget)
        threshold = sketch.heavy_hitter_threshold(plan.gamma)
        for k, t in enumerate(times.tolist()):
            sketch.observe_many(stream[sketch.t : t])
            est = sketch.estimate_all()
            errors[trial, k] = est - truth[k]
            reported[trial, k] = est >= threshold
    return HeavyHitterTrials(times, truth, errors, reported, threshold)


def check_heavy_hitters(plan: TrialPlan, trials: HeavyHitterTrials | None = None) -> CheckReport:
    """Heavy items are reported and light items are not, at the required rate.

    By default ``xi_hat`` is the ``1 - eta`` quantile of ``|estimate - truth|``
    over every trial, time and item; items at or above ``gamma w + xi_hat``
    must be reported, and items at or below ``(gamma - 2 zeta) w - xi_hat``
    must be absent, each in at least ``1 - eta`` of the trials. The plan can
    replace both thresholds and the rate.
    """
    trials = run_hh_trials(plan) if trials is None else trials
    config = plan.config(0, domain_size=trials.truth.shape[1])
    zeta = config.heavy_hitter_zeta
    xi_hat = float(np.quantile(np.abs(trials.errors), 1.0 - plan.eta))
    gw = plan.gamma * plan.w
    include = gw + xi_hat if plan.include_threshold is None else plan.include_threshold
    exclude = (plan.gamma - 2 * zeta) * plan.w - xi_hat if plan.exclude_threshold is None else plan.exclude_threshold
    rate = 1.0 - plan.eta if plan.min_rate is None else plan.min_rate

    report = CheckReport("heavy-hitter guarantee")
    report.notes.append(f"xi_hat={xi_hat:.4g} threshold={trials.threshold:.4g} include>={include:.4g} "
                        f"exclude<={exclude:.4g} rate>={rate}")
    hit_rate = trials.reported.mean(axis=0)
    worst_in, worst_out = math.inf, math.inf
    for k, t in enumerate(trials.times.tolist()):
        truth = trials.truth[k]
        for kind, items, rates in (
            ("include", np.flatnonzero(truth >= include), hit_rate[k]),
            ("exclude", np.flatnonzero(truth <= exclude), 1.0 - hit_rate[k]),
        ):
            for i in items.tolist():
                r = float(rates[i])
                report.checked += 1
                if kind == "include":
                    worst_in = min(worst_in, r)
                    report.rows.append(dict(t=t, kind=kind, item=i + 1, truth=int(truth[i]), rate=r))
                else:
                    worst_out = min(worst_out, r)
                if r < rate:
                    report.fail(f"t={t} item={i + 1} truth={int(truth[i])} {kind} rate {r:.3f} < {rate}")
    report.notes.append(f"worst inclusion rate={worst_in:.3f} worst exclusion rate={worst_out:.3f}")
    return report


def default_plans() -> dict[str, TrialPlan]:
    return {
        "noiseless": TrialPlan(seeds=tuple(range(20)), n=2000, w=500, sub_len=50, query_every=3),
        "hh": TrialPlan(seeds=tuple(range(1000, 1050)), n=20_000, w=5_000, sub_len=500, alpha=0.5,
                        epsilon=4.0, gamma=0.02, domain_size=200,
                        stream=StreamSpec("zipf", 20_000, 200, zipf_skew=1.2, seed=7)),
    }


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    out_dir = argv[0] if argv else None
    plans = default_plans()
    grid = [(a, k) for a in (0.1, 0.3, 0.5, 0.7, 0.9) for k in range(1, 7)]
    reports = [
        check_budget_conservation(grid),
        check_noiseless_equivalence(plans["noiseless"]),
        check_heavy_hitters(plans["hh"]),
    ]
    for report in reports:
        print(report)
        if out_dir:
            os.makedirs(out_dir, exist_ok=True)
            report.write_csv(os.path.join(out_dir, report.name.replace(" ", "_") + ".csv"))
    return 0 if all(r.passed for r in reports) else 1


if __name__ == "__main__":
    sys.exit(main())
