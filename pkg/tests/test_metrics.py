import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairstock.inventory import InventoryState, MultiInventoryState, StepRecord, step, step_multi
from fairstock.metrics import (
    EnvyTracker,
    MetricsTracker,
    MultiEnvyTracker,
    accumulate,
    finalize,
    multi_envy,
    summarize_batch,
)


def _rec(a, n, w=0.0, v=0.0):
    return StepRecord(a, 0.0, n, -n * a, w, v, w > 0, v > 0)


def _run(records, h=1.0, b=1.0):
    tr = MetricsTracker()
    for r in records:
        accumulate(tr, r)
    return finalize(tr, h, b)


def test_envy_examples():
    assert _run([_rec(1.0, 1), _rec(1.2, 3), _rec(0.8, 2)]).delta_fair == pytest.approx(0.4)
    assert _run([_rec(1.0, 1), _rec(5.0, 0), _rec(1.1, 2)]).delta_fair == pytest.approx(0.1)


def test_delta_eff_example():
    s = _run([_rec(1, 1, 0, 1), _rec(1, 1, 2, 0), _rec(1, 1, 0, 0)])
    assert s.delta_eff == 1.0 and s.T == 3
    assert s.w_bar == 2 / 3 and s.v_bar == 1 / 3


def test_zero_records():
    s = _run([_rec(1.0, 2)] * 5)
    assert s.delta_eff == 0 and s.delta_fair == 0
    with pytest.raises(ValueError):
        MetricsTracker().finalize()


def test_costs_weight_terms():
    s = _run([_rec(1, 1, 2, 0), _rec(1, 1, 0, 4)], h=0.5, b=3.0)
    assert s.delta_eff == 0.5 * s.w_bar + 3.0 * s.v_bar


def test_multi_envy_examples():
    w = np.array([[1.0, 2.0], [2.0, 1.0]])
    x, y = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    # brute force over every pair of (round, type) bundles
    hist = [np.stack([x, y]), np.stack([y, x])]
    bundles = [(t, th) for t in range(2) for th in range(2)]
    brute = 0.0
    for th in range(2):
        for (t1, a), (t2, c) in itertools.product(bundles, repeat=2):
            brute = max(brute, abs(w[th] @ hist[t1][a] - w[th] @ hist[t2][c]))
    assert brute == 1.0
    assert multi_envy(w, hist, [[1, 1], [1, 1]]) == 1.0
    assert multi_envy(w, [np.ones((2, 2))] * 3, [[1, 1]] * 3) == 0.0


def test_multi_envy_single_type_reduces_to_scalar():
    allocs = [0.9, 1.1, 1.0, 1.3]
    demand = [1, 2, 0, 1]
    scalar = EnvyTracker()
    for a, n in zip(allocs, demand):
        scalar.update(a, n)
    multi = multi_envy(np.ones((1, 1)), [np.array([[a]]) for a in allocs], [[n] for n in demand])
    assert multi == pytest.approx(scalar.delta_fair)


def test_multi_envy_rejects_bad_input():
    with pytest.raises(ValueError):
        MultiEnvyTracker(np.array([[1.0, 0.0]]))
    tr = MultiEnvyTracker(np.ones((2, 3)))
    with pytest.raises(ValueError):
        tr.update(np.ones((2, 2)), [1, 1])


def _brute_multi(w, hist, dem):
    # own bundles and all bundles restricted to types present in that round
    n_types = w.shape[0]
    best = 0.0
    for th in range(n_types):
        own = [w[th] @ A[th] for A, d in zip(hist, dem) if d[th] > 0]
        every = [w[th] @ A[o] for A, d in zip(hist, dem) for o in range(n_types) if d[o] > 0]
        for u in own:
            for v in every:
                best = max(best, abs(u - v))
    return best


@settings(max_examples=80, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), T=st.integers(1, 12), types=st.integers(1, 3), res=st.integers(1, 3))
def test_multi_envy_streaming_matches_brute_force(seed, T, types, res):
    rng = np.random.default_rng(seed)
    w = rng.uniform(0.1, 4, size=(types, res))
    hist = [rng.uniform(0, 2, size=(types, res)) for _ in range(T)]
    dem = [rng.integers(0, 3, size=types) for _ in range(T)]
    assert multi_envy(w, hist, dem) == pytest.approx(_brute_multi(w, hist, dem), abs=1e-12)


@settings(max_examples=80, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), T=st.integers(1, 200))
def test_streaming_equals_batch(seed, T):
    rng = np.random.default_rng(seed)
    M = 10.0
    state = InventoryState(5.0, M)
    tr = MetricsTracker()
    recs = []
    for _ in range(T):
        a = rng.choice([0.8, 1.0, 1.3])
        state, rec = step(state, rng.exponential(5), float(rng.poisson(5)), a)
        tr.accumulate(rec, capacity=M)
        recs.append(rec)
    s = tr.finalize()
    w = np.array([r.waste for r in recs])
    v = np.array([r.stockout for r in recs])
    pos = [r.allocation for r in recs if r.demand > 0]
    assert s.w_bar == pytest.approx(w.mean(), rel=1e-12, abs=1e-15)
    assert s.v_bar == pytest.approx(v.mean(), rel=1e-12, abs=1e-15)
    assert s.delta_fair == (max(pos) - min(pos) if pos else 0.0)
    assert s.h_m == np.mean([r.at_upper for r in recs])
    assert s.h_0 == np.mean([r.at_lower for r in recs])
    assert s.sandwich_violations == 0
    assert s.w_bar <= s.z_max * s.h_m + 1e-12
    assert s.v_bar <= s.z_min * s.h_0 + 1e-12


def test_multi_accumulate_sums_stores():
    state = MultiInventoryState((5, 0), (5, 5))
    tr = MetricsTracker(MultiEnvyTracker(np.ones((1, 2))))
    state, recs = step_multi(state, (2, 0), (1,), np.array([[1.0, 1.0]]))
    tr.accumulate(recs, capacity=5)
    s = tr.finalize()
    assert (s.w_bar, s.v_bar) == (1.0, 1.0)
    assert s.h_m == 1.0 and s.h_0 == 1.0


def test_summarize_batch():
    runs = [_run([_rec(1, 1, w, 0)]) for w in (1.0, 2.0, 3.0)]
    out = summarize_batch(runs)
    assert out["w_bar"][0] == 2.0
    assert out["w_bar"][1] == pytest.approx(1 / math.sqrt(3))
