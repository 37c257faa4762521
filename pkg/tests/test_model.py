import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpcrowd.model import (
    ObservationModel,
    ProcessModel,
    StreamPrefix,
    TrueState,
    observe,
    partition_users,
    step_process,
)


def test_step_identity_no_noise():
    model = ProcessModel(transition=np.array([[1.0]]), noise_var=np.array([0.0]))
    state = TrueState(t=1, value=np.array([42.0]))
    nxt = step_process(model, state, np.random.default_rng(0))
    assert nxt.t == 2
    assert nxt.value[0] == 42.0


def test_step_identity_2d():
    model = ProcessModel(transition=np.eye(2), noise_var=np.zeros(2))
    state = TrueState(t=3, value=np.array([3.0, 5.0]))
    nxt = step_process(model, state, np.random.default_rng(0))
    assert np.array_equal(nxt.value, [3.0, 5.0])


def test_step_noise_variance():
    # A=1, Q=1e5: increments are N(0, 1e5); sample variance within 5%
    model = ProcessModel(transition=np.array([[1.0]]), noise_var=np.array([1e5]))
    rng = np.random.default_rng(7)
    state = TrueState(t=1, value=np.array([0.0]))
    draws = np.array([step_process(model, state, rng).value[0] for _ in range(10_000)])
    assert 0.95e5 < draws.var() < 1.05e5


def test_step_dimension_mismatch():
    model = ProcessModel(transition=np.eye(2), noise_var=np.zeros(2))
    with pytest.raises(ValueError):
        step_process(model, TrueState(t=0, value=np.array([1.0])), np.random.default_rng(0))


def test_partition_single_server():
    sizes = partition_users(100, 1, np.random.default_rng(0))
    assert sizes.tolist() == [100]


def test_partition_exhaustive():
    rng = np.random.default_rng(1)
    sizes = partition_users(10_000, 7, rng)
    assert sizes.sum() == 10_000
    assert (sizes >= 0).all()


def test_partition_mean_size():
    # n=1e5, m=50: mean group size 2000 within 1% over 1000 trials
    rng = np.random.default_rng(2)
    totals = np.zeros(50)
    trials = 1000
    for _ in range(trials):
        totals += partition_users(100_000, 50, rng)
    means = totals / trials
    assert np.all(np.abs(means - 2000) < 20)


def test_partition_rejects_zero():
    with pytest.raises(ValueError):
        partition_users(0, 5, np.random.default_rng(0))
    with pytest.raises(ValueError):
        partition_users(10, 0, np.random.default_rng(0))


@given(st.integers(1, 5000), st.integers(1, 60))
@settings(max_examples=50, deadline=None)
def test_partition_always_exhaustive(n, m):
    sizes = partition_users(n, m, np.random.default_rng(n * 61 + m))
    assert len(sizes) == m
    assert sizes.sum() == n


def test_observation_model_coefficients_sum_to_one():
    obs = ObservationModel(n=9, group_sizes=(3, 3, 3))
    # three thirds don't float-sum to 1 exactly; the check tolerates 1e-12
    assert abs(obs.coefficients.sum() - 1.0) < 1e-12


def test_observation_model_rejects_partial_cover():
    with pytest.raises(ValueError):
        ObservationModel(n=10, group_sizes=(3, 3, 3))


def test_observe_noiseless():
    out = observe(0.5, np.array([100.0]), np.array([0.0]), np.random.default_rng(0))
    assert out[0] == 50.0


def test_observe_empty_server():
    out = observe(0.0, np.array([123.0]), np.array([0.0]), np.random.default_rng(0))
    assert out[0] == 0.0


def test_observe_noise_variance():
    # H=0.2, Q=25: Var = H^2 Q = 1.0, within 5% at 1e4 draws
    rng = np.random.default_rng(3)
    draws = np.array([observe(0.2, np.array([0.0]), np.array([25.0]), rng)[0] for _ in range(10_000)])
    assert 0.95 < draws.var() < 1.05


def test_observe_unbiased():
    rng = np.random.default_rng(4)
    n = 20_000
    draws = np.array([observe(0.4, np.array([50.0]), np.array([9.0]), rng)[0] for _ in range(n)])
    # mean(x)/H -> r within 3 sigma / sqrt(N)
    sigma = np.sqrt(0.16 * 9.0)
    assert abs(draws.mean() / 0.4 - 50.0) < 3 * sigma / 0.4 / np.sqrt(n)


def test_stream_prefix_validation():
    sp = StreamPrefix(values=np.arange(6.0).reshape(3, 2))
    assert sp.timestamps == 3 and sp.d == 2
    with pytest.raises(ValueError):
        StreamPrefix(values=np.array([[np.inf]]))
