import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from fairstock.env import DistributionSpec, RngStream, cycle_reference, sample_demand, sample_supply

N_LARGE = 1_000_000


def _draws(spec, n=N_LARGE, seed=3):
    return spec.sample(RngStream(seed).generator("supply"), np.arange(n))


def test_deterministic_point_mass():
    spec = DistributionSpec.deterministic(5)
    rng = RngStream(0)
    assert all(sample_supply(spec, rng, t) == 5.0 for t in range(20))
    assert sample_demand(DistributionSpec.deterministic(1), rng, 7) == 1


def test_zero_sigma_normal_is_degenerate():
    spec = DistributionSpec.truncated_normal(5, 0.0)
    assert np.all(_draws(spec, 100) == 5.0)


def test_truncated_normal_mean():
    x = _draws(DistributionSpec.truncated_normal(5, 1))
    assert 4.99 <= x.mean() <= 5.01
    assert x.min() >= 0


def test_clamped_normal_mean_matches_closed_form():
    # mu/sigma = 0.5 makes the clamp visible; E[max(0, Y)] = m Phi(m/s) + s phi(m/s)
    m, s = 0.5, 1.0
    x = _draws(DistributionSpec.truncated_normal(m, s))
    exact = m * stats.norm.cdf(m / s) + s * stats.norm.pdf(m / s)
    se = x.std() / math.sqrt(len(x))
    assert abs(x.mean() - exact) < 4 * se


def test_poisson_mean_and_integers():
    x = _draws(DistributionSpec.poisson(5))
    assert 4.99 <= x.mean() <= 5.01
    assert np.all(x == np.round(x))


def test_bernoulli_frequency():
    x = _draws(DistributionSpec.bernoulli(0.5))
    assert 0.498 <= x.mean() <= 0.502


def test_exponential_parameterized_by_mean():
    x = _draws(DistributionSpec.exponential(5))
    assert abs(x.mean() - 5) < 4 * 5 / math.sqrt(len(x))


def test_bounded_discrete_frequencies():
    spec = DistributionSpec.bounded_discrete([0, 2, 7], [0.2, 0.5, 0.3])
    x = _draws(spec, 200_000)
    for v, p in zip(spec.values, spec.probs):
        f = np.mean(x == v)
        assert abs(f - p) < 4 * math.sqrt(p * (1 - p) / len(x))


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(family="truncated_normal", mean=5, sigma=-1),
        dict(family="exponential", mean=0.0),
        dict(family="bernoulli", p=1.5),
        dict(family="bounded_discrete", values=(1, 2), probs=(0.5, 0.6)),
        dict(family="bounded_discrete", values=(-1, 2), probs=(0.5, 0.5)),
        dict(family="poisson", mean=-1),
        dict(family="gamma", mean=1),
        dict(family="bernoulli", p=0.5, mean_schedule=(1, 2)),
    ],
)
def test_invalid_specs_rejected(kwargs):
    with pytest.raises(ValueError):
        DistributionSpec(**kwargs)


def test_schedule_periodicity():
    spec = DistributionSpec.truncated_normal(mean_schedule=[4, 6], sigma=1)
    assert [spec.mean_at(t) for t in range(4)] == [4, 6, 4, 6]
    assert spec.nominal_mean == 5
    x = spec.sample(RngStream(1).generator("supply"), np.arange(400_000))
    even, odd = x[0::2].mean(), x[1::2].mean()
    assert abs(even - 4) < 0.01 and abs(odd - 6) < 0.01


def test_deterministic_schedule_rounds():
    spec = DistributionSpec("deterministic", mean_schedule=(1, 2, 3))
    rng = RngStream(0)
    vals = [sample_supply(spec, rng, t) for t in range(7)]
    assert vals == [1, 2, 3, 1, 2, 3, 1]


def test_replication_determinism_and_independence():
    spec = DistributionSpec.truncated_normal(5, 1)
    a = [sample_supply(spec, RngStream(11, 4), t) for t in range(1)]
    r1, r2 = RngStream(11, 4), RngStream(11, 4)
    p1 = [sample_supply(spec, r1, t) for t in range(50)]
    p2 = [sample_supply(spec, r2, t) for t in range(50)]
    assert p1 == p2 and p1[0] == a[0]
    other = [sample_supply(spec, RngStream(11, 5), t) for t in range(50)]
    assert p1 != other


def test_substreams_do_not_depend_on_creation_order():
    spec = DistributionSpec.poisson(3)
    r1 = RngStream(2, 0)
    d1 = [sample_demand(spec, r1, t) for t in range(10)]
    r2 = RngStream(2, 0)
    _ = [sample_supply(spec, r2, t) for t in range(25)]
    d2 = [sample_demand(spec, r2, t) for t in range(10)]
    assert d1 == d2


def test_independent_replications_uncorrelated():
    spec = DistributionSpec.truncated_normal(5, 1)
    n = 50_000
    x = spec.sample(RngStream(0, 0).generator("supply"), np.arange(n))
    y = spec.sample(RngStream(0, 1).generator("supply"), np.arange(n))
    r = np.corrcoef(x, y)[0, 1]
    assert abs(r) < 4 / math.sqrt(n)


def test_block_draws_match_single_draws():
    spec = DistributionSpec.truncated_normal(mean_schedule=[4, 6], sigma=1)
    block = spec.sample(RngStream(5).generator("supply"), np.arange(30))
    rng = RngStream(5)
    single = [sample_supply(spec, rng, t) for t in range(30)]
    np.testing.assert_array_equal(block, single)


@pytest.mark.parametrize(
    "sup,dem,expected",
    [([4, 6], [5, 5], 1.0), ([5], [5], 1.0), ([2, 4, 6], [1, 2, 3], 2.0)],
)
def test_cycle_reference(sup, dem, expected):
    assert cycle_reference(sup, dem) == expected


def test_cycle_reference_errors():
    with pytest.raises(ValueError):
        cycle_reference([1, 2], [0, 0])
    with pytest.raises(ValueError):
        cycle_reference([1, 2], [1])


def test_round_trip_dict():
    for spec in [
        DistributionSpec.truncated_normal(5, 1),
        DistributionSpec.truncated_normal(mean_schedule=[4, 6], sigma=1),
        DistributionSpec.deterministic(3),
        DistributionSpec.bernoulli(0.3, 2.0),
        DistributionSpec.bounded_discrete([0, 10], [0.5, 0.5]),
        DistributionSpec.poisson(4),
        DistributionSpec.exponential(5),
    ]:
        assert DistributionSpec.from_dict(spec.to_dict()) == spec
    with pytest.raises(ValueError):
        DistributionSpec.from_dict({"family": "truncated_normal", "mean": 5, "sigma": 1, "scale": 2})


families = st.one_of(
    st.builds(DistributionSpec.truncated_normal, st.floats(0, 20), st.floats(0, 10)),
    st.builds(DistributionSpec.poisson, st.floats(0, 50)),
    st.builds(DistributionSpec.exponential, st.floats(0.01, 50)),
    st.builds(DistributionSpec.bernoulli, st.floats(0, 1), st.floats(0, 10)),
    st.builds(DistributionSpec.deterministic, st.floats(0, 100)),
)


@settings(max_examples=60, deadline=None)
@given(spec=families, seed=st.integers(0, 2**63))
def test_draws_nonnegative(spec, seed):
    x = spec.sample(RngStream(seed).generator("demand"), np.arange(200))
    assert np.all(x >= 0) and np.all(np.isfinite(x))
