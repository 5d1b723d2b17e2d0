import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dpsw.bench import (
    METRICS_COLUMNS,
    QueryLog,
    Workload,
    build_workload,
    f1_score,
    mae,
    measure_throughput,
    mre,
    prf1,
    read_metrics_csv,
    run_experiment,
    run_single,
    top_items,
    write_metrics_csv,
)
from dpsw.datagen import StreamSpec, generate
from dpsw.params import FrameworkConfig, PrivacyBudget
from dpsw.window import WindowSketch


def test_error_metrics_examples():
    assert mae([1, 2, 3], [1, 2, 3]) == 0 and mre([1, 2, 3], [1, 2, 3]) == 0
    assert mae([2, 4], [1, 2]) == 1.5
    assert mre([2, 4], [1, 2]) == 1.0
    # negative estimates count their full error
    assert mae([-3], [2]) == 5


def test_error_metric_domain():
    with pytest.raises(ValueError):
        mae([], [])
    with pytest.raises(ValueError):
        mre([1.0], [0])
    with pytest.raises(ValueError):
        mae([1, 2], [1])


def test_prf1_examples():
    assert prf1({1, 2}, {1, 2}) == (1.0, 1.0, 1.0)
    assert prf1(set(), set()) == (1.0, 1.0, 1.0)
    assert prf1(set(), {3}) == (0.0, 0.0, 0.0)
    p, r, f = prf1({1, 2, 3, 4}, {1, 5})
    assert (p, r) == (0.25, 0.5) and f == pytest.approx(1 / 3)


@given(st.sets(st.integers(0, 20)), st.sets(st.integers(0, 20)))
def test_prf1_properties(pred, truth):
    p, r, f = prf1(pred, truth)
    assert 0 <= p <= 1 and 0 <= r <= 1 and 0 <= f <= 1
    assert f == f1_score(p, r)
    assert f <= min(2 * p, 2 * r) + 1e-12
    if p + r > 0:
        assert f == pytest.approx(2 * p * r / (p + r))
    if pred and pred == truth:
        assert p == r == 1
    if p == r == 1 and truth:
        assert pred == truth


def test_top_items_ties_go_to_smaller_ids():
    counts = np.array([5, 7, 7, 0, 5, 5])
    assert top_items(counts, 3).tolist() == [2, 3, 1]
    assert top_items(counts, 10).tolist() == [2, 3, 1, 5, 6]
    assert top_items(np.zeros(4, dtype=int), 2).size == 0


@given(st.lists(st.integers(0, 6), min_size=1, max_size=60), st.integers(1, 70))
def test_top_items_matches_sorting(counts, k):
    counts = np.array(counts)
    ranked = sorted((i for i in range(counts.size) if counts[i] > 0), key=lambda i: (-counts[i], i))
    assert top_items(counts, k).tolist() == [i + 1 for i in ranked[:k]]


def test_workload_single_timestamp_when_n_equals_w():
    stream = np.arange(1, 101)
    wl = build_workload(stream, 100, 0.5, seed=1, num_high=5, min_low_freq=1)
    assert wl.timestamps == [100]


def test_workload_uniform_tie_break():
    stream = np.tile(np.arange(1, 101), 3)
    wl = build_workload(stream, 300, 1.0, seed=0, min_low_freq=3)
    point = wl.points[0]
    assert point.high == list(range(1, 51))
    assert point.high_truth == [3] * 50
    assert sorted(point.low) == list(range(51, 101))
    assert point.low_shortfall == 0


def test_workload_timestamp_count_and_range():
    stream = generate(StreamSpec("zipf", 10**6, 25_600, seed=1))
    wl = build_workload(stream, 10**5, 0.0001, seed=2)
    assert len(wl.points) == math.floor(0.0001 * (10**6 - 10**5 + 1))
    assert wl.timestamps == sorted(set(wl.timestamps))
    assert all(10**5 <= t <= 10**6 for t in wl.timestamps)


def test_workload_ground_truth_and_shortfall():
    rng = np.random.default_rng(4)
    stream = rng.integers(1, 200, size=5000)
    wl = build_workload(stream, 1000, 0.01, seed=3, min_low_freq=8)
    for p in wl.points:
        window = np.bincount(stream[p.t - 1000 : p.t], minlength=201)
        assert [window[i] for i in p.high] == p.high_truth
        assert [window[i] for i in p.low] == p.low_truth
        assert min(p.high_truth) >= max(window[i] for i in range(1, 201) if i not in p.high)
        assert all(f >= 8 for f in p.low_truth)
        assert not set(p.low) & set(p.high)
        assert len(p.low) + p.low_shortfall == 50
    assert wl.low_shortfall == sum(p.low_shortfall for p in wl.points)


def test_workload_validation():
    with pytest.raises(ValueError):
        build_workload(np.ones(5, dtype=int), 10)
    with pytest.raises(ValueError):
        build_workload(np.ones(20, dtype=int), 10, sample_fraction=0)


def test_workload_json_round_trip(tmp_path):
    stream = np.random.default_rng(0).integers(1, 30, size=400)
    wl = build_workload(stream, 100, 0.05, seed=1, min_low_freq=2)
    wl.save(tmp_path / "w.json")
    assert Workload.load(tmp_path / "w.json") == wl


def small_setup(n=3000, w=600, seed=0):
    stream = generate(StreamSpec("zipf", n, 300, seed=seed))
    cfg = FrameworkConfig(w=w, sub_len=60, alpha=0.5, rows=2, width=128, domain_size=300, seed=seed)
    wl = build_workload(stream, w, 0.02, seed=seed, min_low_freq=5, gamma=0.02)
    return stream, cfg, wl


def test_noiseless_aligned_run_is_exact():
    m, w, L = 80, 400, 100
    stream = np.random.default_rng(1).integers(1, m, size=2000, endpoint=True)
    cfg = FrameworkConfig(w=w, sub_len=L, alpha=0.5, rows=1, width=m, domain_size=m,
                          hashing="identity", zeta=0.0)
    wl = build_workload(stream, w, 1.0, seed=0, min_low_freq=1)
    wl.points = [p for p in wl.points if p.t % L == 0]
    report = run_single(cfg, PrivacyBudget.noiseless(), stream, wl, bulk=True)
    assert report.mae_high == report.mae_low == 0
    assert report.precision == report.recall == report.f1 == 1


def test_report_recomputes_from_logs(tmp_path):
    stream, cfg, wl = small_setup()
    log = QueryLog()
    report = run_single(cfg, PrivacyBudget.from_eps_delta(1.0, 1e-6), stream, wl, log=log, bulk=True)
    log.save(tmp_path / "run")
    again = QueryLog.load(tmp_path / "run").summarize()
    for key, value in again.items():
        assert getattr(report, key) == value or (math.isnan(value) and math.isnan(getattr(report, key)))
    assert report.num_queries == len(log.t)
    assert 0 <= report.f1 <= 1


def test_bulk_and_per_item_agree():
    stream, cfg, wl = small_setup()
    budget = PrivacyBudget.from_eps_delta(1.0, 1e-6)
    a = run_single(cfg, budget, stream, wl, bulk=True)
    b = run_single(cfg, budget, stream, wl, bulk=False)
    assert a.mae_high == pytest.approx(b.mae_high, rel=1e-9)
    assert a.f1 == b.f1
    assert a.footprint_bytes == b.footprint_bytes > 0


def test_run_experiment_grid_and_csv(tmp_path):
    stream, cfg, wl = small_setup()
    reports = run_experiment(cfg, stream, wl, [0.5, 2.0], bulk=True, jobs=2, log_prefix=tmp_path / "log")
    assert [r.epsilon for r in reports] == [0.5, 2.0]
    assert reports[0].delta == pytest.approx(3000 ** -1.5)
    assert (tmp_path / "log.1.queries.csv").exists()
    serial = run_experiment(cfg, stream, wl, [0.5, 2.0], bulk=True)
    assert [r.mae_high for r in serial] == [r.mae_high for r in reports]
    write_metrics_csv(tmp_path / "m.csv", reports)
    rows = read_metrics_csv(tmp_path / "m.csv")
    assert list(rows[0]) == list(METRICS_COLUMNS)
    assert float(rows[1]["mae_high"]) == reports[1].mae_high
    assert int(rows[0]["num_checkpoints"]) == reports[0].num_checkpoints


def test_mae_decreases_with_epsilon_on_average():
    stream, cfg, wl = small_setup()
    means = []
    for eps in (0.1, 1.0, 4.0):
        maes = [run_single(FrameworkConfig(**{**cfg.__dict__, "seed": s}),
                           PrivacyBudget.from_eps_delta(eps, 1e-6), stream, wl, bulk=True).mae_high
                for s in range(5)]
        means.append(np.mean(maes))
    assert means[0] > means[1] > means[2]


def test_run_rejects_mismatched_workload():
    stream, cfg, wl = small_setup()
    with pytest.raises(ValueError):
        run_single(cfg, PrivacyBudget.noiseless(), stream[:-1], wl)


def test_measure_throughput():
    cfg = FrameworkConfig(w=1000, sub_len=100, alpha=0.5, rows=2, width=64, domain_size=50)
    budget = PrivacyBudget.from_eps_delta(1.0, 1e-6)
    stream = np.random.default_rng(0).integers(1, 50, size=20_000)
    rate = measure_throughput(WindowSketch(cfg, budget), stream)
    assert rate > 1000
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        assert measure_throughput(WindowSketch(cfg, budget), []) == 0.0
    assert caught and issubclass(caught[0].category, RuntimeWarning)


def test_throughput_scales_linearly():
    cfg = FrameworkConfig(w=2000, sub_len=200, alpha=0.5, rows=2, width=64, domain_size=50)
    budget = PrivacyBudget.from_eps_delta(1.0, 1e-6)
    rng = np.random.default_rng(1)
    short = max(measure_throughput(WindowSketch(cfg, budget), rng.integers(1, 50, 20_000)) for _ in range(3))
    long = max(measure_throughput(WindowSketch(cfg, budget), rng.integers(1, 50, 40_000)) for _ in range(3))
    assert 0.6 < long / short < 1.6
