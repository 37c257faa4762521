import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpcrowd.kcif import (
    NeighborMessage,
    build_message,
    decode_message,
    effective_variance,
    encode_message,
    fuse,
    initialize,
    message_num_bytes,
    predict,
    prediction_gain,
    update,
    update_from_delta,
)


# -------------------------------------------------------- effective variance

def test_effective_variance_nonprivate():
    # inf budget drops the perturbation term: 0.5^2 * 4 = 1
    assert effective_variance(0.5, np.inf, 1.0, 4.0) == 1.0


def test_effective_variance_pure_noise_observer():
    assert effective_variance(0.0, 1.0, 1.0, 123.0) == 2.0


def test_effective_variance_hand_value():
    # alpha=2, scale=(1/0.5)=2 -> 2*(2*4 + 0.01*100) = 18
    assert effective_variance(0.1, 0.5, 1.0, 100.0, alpha=2.0) == pytest.approx(18.0)


def test_effective_variance_rejects_zero_budget():
    with pytest.raises(ValueError):
        effective_variance(0.5, 0.0, 1.0, 1.0)


def test_effective_variance_monotone_in_budget():
    lo = effective_variance(0.3, 0.2, 1.0, 10.0)
    hi = effective_variance(0.3, 2.0, 1.0, 10.0)
    assert hi < lo


# ------------------------------------------------------------------ predict

def test_predict_static_noiseless():
    prior, prior_var = predict(np.array([7.0]), np.array([2.0]), np.array([[1.0]]), np.array([0.0]))
    assert prior[0] == 7.0 and prior_var[0] == 2.0


def test_predict_variance_growth():
    _, prior_var = predict(np.array([0.0]), np.array([1.0]), np.array([[1.0]]), np.array([1e5]))
    assert prior_var[0] == 100001.0


def test_predict_zero_transition():
    prior, _ = predict(np.array([55.0]), np.array([1.0]), np.array([[0.0]]), np.array([1.0]))
    assert prior[0] == 0.0


def test_prediction_gain_row_sums():
    a = np.array([[0.8, 0.04], [0.04, 0.8]])
    assert np.allclose(prediction_gain(a), [0.84**2, 0.84**2])


# ------------------------------------------------------------------ message

def test_build_message_hand_values():
    msg = build_message(0, 1, np.array([0.0]), 1.0, np.array([10.0]), np.array([2.0]))
    assert msg.weighted_value[0] == 5.0
    assert msg.weight[0] == 0.5


def test_build_message_empty_server():
    msg = build_message(0, 1, np.array([0.0]), 0.0, np.array([10.0]), np.array([2.0]))
    assert msg.weighted_value[0] == 0.0 and msg.weight[0] == 0.0


def test_build_message_zero_measurement():
    msg = build_message(0, 1, np.array([0.0]), 0.5, np.array([0.0]), np.array([4.0]))
    assert msg.weighted_value[0] == 0.0
    assert msg.weight[0] == 0.25 / 4.0


def test_build_message_rejects_bad_variance():
    with pytest.raises(ValueError):
        build_message(0, 1, np.array([0.0]), 0.5, np.array([1.0]), np.array([0.0]))


# --------------------------------------------------------------------- fuse

def _msg(sender, u, w, prior=0.0):
    return NeighborMessage(
        sender=sender,
        t=1,
        prior=np.array([prior]),
        weighted_value=np.array([u]),
        weight=np.array([w]),
    )


def test_fuse_isolated_is_self():
    y, w = fuse(_msg(0, 2.5, 0.7), [])
    assert y[0] == 2.5 and w[0] == 0.7


def test_fuse_additive():
    y, w = fuse(_msg(0, 1.0, 1.0), [_msg(1, 1.0, 1.0), _msg(2, 1.0, 1.0)])
    assert y[0] == 3.0 and w[0] == 3.0


def test_fuse_rejects_duplicate_sender():
    with pytest.raises(ValueError):
        fuse(_msg(0, 1, 1), [_msg(0, 1, 1)])


@given(st.lists(st.tuples(st.floats(-5, 5), st.floats(0, 5)), min_size=1, max_size=6))
@settings(max_examples=100, deadline=None)
def test_fuse_matches_brute_force(pairs):
    msgs = [_msg(i, u, w) for i, (u, w) in enumerate(pairs)]
    y, w = fuse(msgs[0], msgs[1:])
    assert y[0] == pytest.approx(sum(u for u, _ in pairs))
    assert w[0] == pytest.approx(sum(w for _, w in pairs))


# ------------------------------------------------------------------- update

def test_update_no_information():
    post, var = update(np.array([3.0]), np.array([2.0]), np.zeros(1), np.zeros(1), [], 0.05)
    assert post[0] == 3.0 and var[0] == 2.0


def test_update_agreeing_neighbors_drop_consensus_term():
    prior = np.array([4.0])
    with_nbrs, _ = update(prior, np.array([1.0]), np.array([2.0]), np.array([1.0]),
                          [prior, prior], 0.05)
    alone, _ = update(prior, np.array([1.0]), np.array([2.0]), np.array([1.0]), [], 0.05)
    assert with_nbrs[0] == pytest.approx(alone[0])


def test_update_variance_contraction():
    _, var = update(np.array([0.0]), np.array([4.0]), np.array([1.0]), np.array([0.5]), [], 0.05)
    assert var[0] == pytest.approx(1.0 / (1.0 / 4.0 + 0.5))
    assert var[0] <= 4.0


@given(
    st.floats(0.1, 100.0),
    st.floats(0.0, 10.0),
    st.floats(-10, 10),
    st.floats(-10, 10),
)
@settings(max_examples=100, deadline=None)
def test_update_never_inflates_variance(prior_var, weight, prior, fused):
    _, var = update(np.array([prior]), np.array([prior_var]),
                    np.array([fused]), np.array([weight]), [], 0.05)
    assert var[0] <= prior_var * (1 + 1e-12)
    if weight == 0:
        assert var[0] == pytest.approx(prior_var)


def test_update_from_delta_consensus_direction():
    # neighbors sitting above our prior pull the posterior up
    post_hi, _ = update_from_delta(np.array([0.0]), np.array([1.0]), np.zeros(1), np.zeros(1),
                                   np.array([10.0]), 0.05)
    post_lo, _ = update_from_delta(np.array([0.0]), np.array([1.0]), np.zeros(1), np.zeros(1),
                                   np.array([-10.0]), 0.05)
    assert post_hi[0] > 0 > post_lo[0]


# ------------------------------------------------- textbook Kalman reduction

def test_matches_textbook_kalman_50_steps():
    """Single server, H=1, no consensus: the information-form update must
    equal the covariance-form textbook filter to ~1e-10 relative error."""
    rng = np.random.default_rng(42)
    a, q, r = 1.0, 2.0, 3.0
    truth = np.cumsum(rng.normal(0, np.sqrt(q), 50))
    zs = truth + rng.normal(0, np.sqrt(r), 50)

    # textbook covariance form, seeded the same way as the filter under
    # test: pre-step posterior = first measurement with weight H^2/R
    xk, mk = zs[0], 1.0 / r
    ref = []
    for z in zs:
        xb, p = a * xk, a * a * mk + q
        k = p / (p + r)
        xk = xb + k * (z - xb)
        mk = (1 - k) * p
        ref.append(xk)

    # information form under test
    prior, prior_var = initialize(np.array([zs[0]]), 1.0, np.array([r]),
                                  np.array([[a]]), np.array([q]))
    post = None
    got = []
    for t, z in enumerate(zs, start=1):
        if t > 1:
            prior, prior_var = predict(post, post_var, np.array([[a]]), np.array([q]))
        msg = build_message(0, t, prior, 1.0, np.array([z]), np.array([r]))
        y, w = fuse(msg, [])
        post, post_var = update(prior, prior_var, y, w, [], 0.05)
        got.append(post[0])

    np.testing.assert_allclose(got, ref, rtol=1e-10)


def test_initialize_empty_server_uninformative():
    prior, prior_var = initialize(np.array([0.0]), 0.0, np.array([1.0]),
                                  np.array([[1.0]]), np.array([2.0]))
    assert prior[0] == 0.0
    assert prior_var[0] == 1e6 * 2.0 + 2.0


# ------------------------------------------------------------------- codec

def test_message_byte_size():
    assert message_num_bytes(1) == 32
    assert message_num_bytes(6) == 152


def test_message_round_trip():
    msg = NeighborMessage(sender=3, t=17, prior=np.array([1.5, -2.0]),
                          weighted_value=np.array([0.25, 4.0]), weight=np.array([0.5, 0.0]))
    blob = encode_message(msg)
    assert len(blob) == message_num_bytes(2)
    back = decode_message(blob)
    assert back.sender == 3 and back.t == 17
    np.testing.assert_array_equal(back.prior, msg.prior)
    np.testing.assert_array_equal(back.weighted_value, msg.weighted_value)
    np.testing.assert_array_equal(back.weight, msg.weight)
