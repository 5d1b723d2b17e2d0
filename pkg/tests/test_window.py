import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dpsw.checkpoints import alpha_for_count, build_checkpoints
from dpsw.params import FrameworkConfig, PrivacyBudget
from dpsw.pcms import metadata_bytes
from dpsw.window import WindowSketch

NOISELESS = PrivacyBudget.noiseless()


def exact_config(w, L, alpha, m, **kw):
    return FrameworkConfig(w=w, sub_len=L, alpha=alpha, rows=kw.pop("rows", 1), width=m,
                           domain_size=m, hashing="identity", **kw)


def expected_interval(t, w, L, I):
    """Covered interval derived directly from the checkpoint list."""
    s = max(t - w + 1, 1)
    T = (t - 1) // L * L + 1
    right = T + max(i for i in I if i <= t - T + 1) - 1
    T_old = (s - 1) // L * L + 1
    if T_old == T:
        return T, right
    left = T_old + L - min(i for i in I if T_old + L - i <= s)
    return left, right


def test_hand_traced_example():
    sk = WindowSketch(exact_config(4, 2, 0.5, 3), NOISELESS)
    for item in [1, 1, 2, 2, 3, 3]:
        sk.observe(item)
    sel = sk.select_sketches()
    assert sel.ranges() == [(3, 4), (5, 6)]
    assert sel.interval == (3, 6)
    assert sk.estimate_window_frequency(1) == 0
    assert sk.estimate_window_frequency(2) == 2
    assert sk.estimate_window_frequency(3) == 2
    assert [s.start for s in sk.active] == [3, 5]
    assert sk.footprint()[2] <= 3


def test_eviction_timeline_small_window():
    sk = WindowSketch(exact_config(4, 2, 0.5, 3), NOISELESS)
    starts = []
    for item in [1, 1, 2, 2, 3, 3]:
        sk.observe(item)
        starts.append([s.start for s in sk.active])
        assert len(sk.active) <= 3
    assert 1 not in starts[-1]


def test_first_observe_fills_forward_sketches_only():
    sk = WindowSketch(exact_config(100, 10, 0.5, 5), NOISELESS)
    sk.observe(4)
    sub = sk.active[0]
    I = sk.checkpoints.forward
    assert all(s.estimate(4) == 1 for s in sub.forward)
    for j, sketch in enumerate(sub.backward):
        assert sketch.estimate(4) == (1 if I[j] == 10 else 0)


def test_create():
    alpha = alpha_for_count(10**5, 3)
    cfg = FrameworkConfig(w=10**6, sub_len=10**5, alpha=alpha, rows=2, width=100, domain_size=10)
    sk = WindowSketch(cfg, PrivacyBudget.from_eps_delta(1.0, 1e-9))
    assert len(sk.checkpoints) == 3 and sk.t == 0 and not sk.active
    assert sk.footprint() == (0, 0, 0)
    with pytest.raises(ValueError):
        sk.select_sketches()


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 40), st.data())
def test_noiseless_framework_properties(w, data):
    L = data.draw(st.integers(1, w))
    alpha = data.draw(st.sampled_from([0.1, 0.3, 0.5, 0.7, 0.9]))
    m = 4
    stream = data.draw(st.lists(st.integers(1, m), min_size=1, max_size=150))
    sk = WindowSketch(exact_config(w, L, alpha, m), NOISELESS)
    I = build_checkpoints(L, alpha).forward
    prefix = np.zeros((len(stream) + 1, m), dtype=np.int64)
    for t, item in enumerate(stream, start=1):
        prefix[t] = prefix[t - 1]
        prefix[t, item - 1] += 1
        sk.observe(item)
        assert sk.t == t
        assert len(sk.active) <= math.ceil(w / L) + 1
        s = max(t - w + 1, 1)
        assert sk.active[0].end >= s
        sel = sk.select_sketches()
        lo, hi = sel.interval
        assert (lo, hi) == expected_interval(t, w, L, I)
        ranges = sel.ranges()
        assert all(a[1] + 1 == b[0] for a, b in zip(ranges, ranges[1:]))
        assert lo <= s and hi <= t
        for part in sel.parts:
            assert part.sketch.frozen or part.end == t
        # misalignment: left gap below I[x]; right gap below I[y-1] - I[y]
        left = sel.parts[0]
        assert s - lo < I[left.checkpoint - 1] or len(sel.parts) == 1
        y = sel.right_checkpoint
        assert t - hi == 0 if y == 1 else t - hi < I[y - 2] - I[y - 1]
        est = sk.estimate_all()
        assert np.array_equal(est, prefix[hi] - prefix[lo - 1])


def test_aligned_windows_are_exact():
    rng = np.random.default_rng(5)
    stream = rng.integers(1, 30, size=2000)
    sk = WindowSketch(exact_config(400, 100, 0.5, 30), NOISELESS)
    for t, item in enumerate(stream.tolist(), start=1):
        sk.observe(item)
        if t % 100 == 0 and t >= 400:
            truth = np.bincount(stream[t - 400 : t], minlength=31)[1:]
            assert np.array_equal(sk.estimate_all(), truth)
            assert sk.select_sketches().left_checkpoint == 1
            assert sk.select_sketches().right_checkpoint == 1


@pytest.mark.parametrize("L", [1, 7, 50])
def test_degenerate_lengths(L):
    m = 6
    stream = np.random.default_rng(L).integers(1, m, size=200, endpoint=True)
    sk = WindowSketch(exact_config(50, L, 0.5, m), NOISELESS)
    sk.observe_many(stream)
    truth = np.bincount(stream[-50:], minlength=m + 1)[1:]
    lo, hi = sk.select_sketches().interval
    assert np.array_equal(sk.estimate_all(), np.bincount(stream[lo - 1 : hi], minlength=m + 1)[1:])
    if L in (1, 50):
        assert np.array_equal(sk.estimate_all(), truth)


def test_single_substream_window():
    sk = WindowSketch(exact_config(10, 10, 0.5, 3), NOISELESS)
    sk.observe_many([1, 2, 3, 3, 3, 1, 2, 3, 3, 1, 2])
    assert len(sk.select_sketches().parts) <= 2


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(0, 300), max_size=6), st.integers(0, 2**32))
def test_bulk_matches_per_item(cuts, seed):
    cfg = FrameworkConfig(w=120, sub_len=30, alpha=0.3, rows=2, width=16, domain_size=40, seed=seed)
    budget = PrivacyBudget.from_eps_delta(1.0, 1e-6)
    stream = np.random.default_rng(seed).integers(1, 40, size=300, endpoint=True)
    a, b = WindowSketch(cfg, budget), WindowSketch(cfg, budget)
    for item in stream.tolist():
        a.observe(item)
    pos = 0
    for cut in sorted(cuts) + [300]:
        b.observe_many(stream[pos:cut])
        pos = max(pos, cut)
    assert a.t == b.t == 300
    assert a.select_sketches().ranges() == b.select_sketches().ranges()
    assert [s.index for s in a.active] == [s.index for s in b.active]
    for sa, sb in zip(a.active, b.active):
        for x, y in zip(sa.slots, sb.slots):
            assert x.frozen == y.frozen
            assert np.allclose(x.counters, y.counters, rtol=0, atol=1e-9)


def test_budget_per_substream():
    alpha = 0.5
    cfg = FrameworkConfig(w=64, sub_len=8, alpha=alpha, rows=1, width=4, domain_size=4)
    sk = WindowSketch(cfg, PrivacyBudget.from_eps_delta(2.0, 1e-5))
    sk.observe_many(np.ones(100, dtype=np.int64))
    rho = sk.budget.rho
    for sub in sk.active:
        assert len(sub.slots) == 7
        assert sub.spent_budget() == pytest.approx(rho * (1 - 0.25 * alpha**3), rel=1e-12)
        assert sub.spent_budget() <= rho


def test_footprint_counts_shared_sketch_once():
    cfg = FrameworkConfig(w=8, sub_len=8, alpha=0.5, rows=2, width=10, domain_size=5)
    sk = WindowSketch(cfg, PrivacyBudget.from_eps_delta(1.0, 1e-6))
    sk.observe_many([1] * 8)
    nbytes, sketches, substreams = sk.footprint()
    assert (sketches, substreams) == (7, 1)
    assert nbytes == 7 * (2 * 10 * 8 + metadata_bytes(2))


def test_heavy_hitters_noiseless():
    m = 10
    sk = WindowSketch(exact_config(10, 5, 0.5, m), NOISELESS)
    sk.observe_many([9, 1, 9, 2, 9, 9, 3, 9, 4, 9, 9, 5, 9, 9, 6])
    hh = sk.heavy_hitters(0.5)
    assert 9 in hh and hh[9] == sk.estimate_window_frequency(9)
    zeta = sk.config.heavy_hitter_zeta
    assert sk.heavy_hitters(1 + zeta + 1e-9) == {}


def test_heavy_hitter_threshold_is_inclusive():
    m = 4
    cfg = FrameworkConfig(w=10, sub_len=10, alpha=0.5, rows=1, width=m, domain_size=m,
                          hashing="identity", zeta=0.1)
    sk = WindowSketch(cfg, NOISELESS)
    sk.observe_many([1, 1, 1, 1, 2, 2, 2, 3, 3, 4])
    # threshold (0.5 - 0.1) * 10 = 4 equals the count of item 1
    assert sk.heavy_hitter_threshold(0.5) == pytest.approx(4.0)
    assert set(sk.heavy_hitters(0.5)) == {1}


def test_noisy_estimates_are_reproducible():
    cfg = FrameworkConfig(w=500, sub_len=50, alpha=0.5, rows=2, width=64, domain_size=100, seed=3)
    budget = PrivacyBudget.from_eps_delta(1.0, 1e-6)
    stream = np.random.default_rng(0).integers(1, 100, size=1234)
    a, b = WindowSketch(cfg, budget), WindowSketch(cfg, budget)
    a.observe_many(stream)
    b.observe_many(stream)
    assert np.array_equal(a.estimate_all(), b.estimate_all())
    c = WindowSketch(FrameworkConfig(**{**cfg.__dict__, "seed": 4}), budget)
    c.observe_many(stream)
    assert not np.array_equal(a.estimate_all(), c.estimate_all())
    assert a.estimate_many([5, 6]).tolist() == [a.estimate_window_frequency(5), a.estimate_window_frequency(6)]


def test_aligned_query_is_unbiased_without_collisions():
    # every sketch sees one item per column, so only noise (min over 1 row) remains
    m, w, L = 20, 200, 50
    stream = np.tile(np.arange(1, m + 1), 20)
    budget = PrivacyBudget.from_eps_delta(1.0, 1e-6)
    errors = []
    for seed in range(40):
        cfg = FrameworkConfig(w=w, sub_len=L, alpha=0.5, rows=1, width=m, domain_size=m,
                              hashing="identity", seed=seed)
        sk = WindowSketch(cfg, budget)
        sk.observe_many(stream)
        errors.append(sk.estimate_all() - w / m)
    errors = np.concatenate(errors)
    # four full sketches each with variance 1 / rho1
    sd = math.sqrt(4 / sk.schedule.rho1)
    assert abs(errors.mean()) < 4 * sd / math.sqrt(errors.size)
    assert 0.8 < errors.std() / sd < 1.2


def test_rejects_out_of_domain():
    sk = WindowSketch(exact_config(10, 5, 0.5, 3), NOISELESS)
    with pytest.raises(ValueError):
        sk.observe(4)
    with pytest.raises(ValueError):
        sk.observe_many([1, 0])
    sk.observe_many([])
    assert sk.t == 0
