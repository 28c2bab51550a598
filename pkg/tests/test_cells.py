import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from colstsm.cells import (Model, SequencePair, colstsm_step, forward_sequence, init_params,
                           lstm_step, nll_loss, param_shapes, pooled_baseline, rnn_output,
                           rnn_step, softmax, step_probs)
from colstsm.numkernel import Prng

TANH1 = 0.7615941559557649


def zeros(family, n=1, m=1, k=2):
    shapes = param_shapes(family, {"n": n, "m": m, "k": k})
    return Model(family, {"n": n, "m": m, "k": k}, {k_: np.zeros(s) for k_, s in shapes.items()})


# -- rnn --------------------------------------------------------------------

def test_rnn_step_zero_params():
    p = {"W_hx": np.zeros((2, 3)), "W_hh": np.zeros((2, 2)), "b_h": np.zeros(2)}
    np.testing.assert_array_equal(rnn_step(p, np.ones(3), np.ones(2)), 0.0)


def test_rnn_step_scalar():
    p = {"W_hx": np.ones((1, 1)), "W_hh": np.zeros((1, 1)), "b_h": np.zeros(1)}
    assert rnn_step(p, np.array([1.0]), np.zeros(1))[0] == pytest.approx(TANH1, rel=1e-15)


@given(st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=3))
def test_rnn_step_range(x):
    prng = Prng(0)
    p = {"W_hx": prng.uniform((4, 3), -3, 3), "W_hh": prng.uniform((4, 4), -3, 3), "b_h": np.ones(4)}
    h = rnn_step(p, np.array(x), np.full(4, 0.3))
    assert np.all(np.abs(h) <= 1.0)


def test_rnn_output_variants():
    p = {"W_zh": np.eye(2), "b_z": np.zeros(2)}
    h = np.array([0.3, -0.2])
    np.testing.assert_array_equal(rnn_output(p, h), h)
    p2 = {"W_zh": np.array([[2.0, 0.0], [0.0, 2.0]]), "b_z": np.zeros(2)}
    np.testing.assert_allclose(rnn_output(p2, np.array([1.0, -1.0]), compat_tanh=True),
                               [0.9640276, -0.9640276], atol=5e-8)
    zero = {"W_zh": np.zeros((3, 2)), "b_z": np.zeros(3)}
    np.testing.assert_array_equal(rnn_output(zero, h), 0.0)


# -- lstm -------------------------------------------------------------------

def _lstm_zero(d=1, m=1):
    p = {}
    for q in "ifog":
        p[f"W_{q}x"] = np.zeros((m, d))
        p[f"W_{q}h"] = np.zeros((m, m))
        p[f"b_{q}"] = np.zeros(m)
    return p


def test_lstm_zero_fixed_point():
    h, c, _ = lstm_step(_lstm_zero(), np.ones(1), np.zeros(1), np.zeros(1))
    assert h[0] == 0.0 and c[0] == 0.0


def test_lstm_scalar_hand_computation():
    h, c, _ = lstm_step(_lstm_zero(), np.array([0.7]), np.zeros(1), np.array([2.0]))
    assert c[0] == 1.0
    assert h[0] == pytest.approx(0.5 * TANH1, rel=1e-15)
    assert h[0] == pytest.approx(0.3807971, abs=5e-8)


def test_lstm_saturated_forget_preserves_cell():
    p = _lstm_zero()
    p["b_f"] = np.array([700.0])
    _, c, _ = lstm_step(p, np.array([0.7]), np.zeros(1), np.array([2.0]))
    assert c[0] == pytest.approx(2.0, abs=1e-15)


# -- colstsm ----------------------------------------------------------------

def test_colstsm_zero_fixed_point():
    p = zeros("colstsm", n=2, m=3).params
    h, ca, cb, _ = colstsm_step(p, np.ones(2), -np.ones(2), np.zeros(3), np.zeros(3), np.zeros(3))
    assert not h.any() and not ca.any() and not cb.any()


def test_colstsm_scalar_hand_computation():
    p = zeros("colstsm").params
    h, ca, cb, cache = colstsm_step(p, np.array([0.3]), np.array([-0.4]), np.zeros(1),
                                    np.array([2.0]), np.zeros(1))
    assert ca[0] == 1.0 and cb[0] == 0.0
    assert cache["c"][0] == 0.5
    assert h[0] == pytest.approx(0.5 * math.tanh(0.5), rel=1e-15)
    assert h[0] == pytest.approx(0.2310586, abs=5e-8)


def _swap_ab(params, n):
    out = {}
    for name, v in params.items():
        if name.endswith("_a"):
            out[name] = params[name[:-2] + "_b"]
        elif name.endswith("_b"):
            out[name] = params[name[:-2] + "_a"]
        elif name == "W_ox":
            out[name] = np.ascontiguousarray(np.concatenate([v[:, n:], v[:, :n]], axis=1))
        else:
            out[name] = v
    return out


def test_colstsm_relabeling_symmetry():
    n = 3
    model, _ = init_params("colstsm", {"n": n, "m": 4, "k": 2}, Prng(11)), None
    prng = Prng(12)
    xa, xb = prng.gaussian(n), prng.gaussian(n)
    h0, ca0, cb0 = prng.uniform(4, -1, 1), prng.uniform(4, -1, 1), prng.uniform(4, -1, 1)
    h, ca, cb, _ = colstsm_step(model.params, xa, xb, h0, ca0, cb0)
    h2, ca2, cb2, _ = colstsm_step(_swap_ab(model.params, n), xb, xa, h0, cb0, ca0)
    np.testing.assert_array_equal(h, h2)
    np.testing.assert_array_equal(ca, cb2)
    np.testing.assert_array_equal(cb, ca2)


def test_colstsm_cache_identity():
    model = init_params("colstsm", {"n": 2, "m": 5, "k": 3}, Prng(4))
    prng = Prng(5)
    _, _, _, c = colstsm_step(model.params, prng.gaussian(2), prng.gaussian(2),
                              prng.uniform(5, -1, 1), prng.gaussian(5), prng.gaussian(5))
    np.testing.assert_array_equal(c["c"], c["pi_a"] * c["c_a"] + c["pi_b"] * c["c_b"])


def test_step_dimension_mismatch():
    p = zeros("colstsm", n=2, m=3).params
    with pytest.raises(ValueError):
        colstsm_step(p, np.ones(3), np.ones(3), np.zeros(3), np.zeros(3), np.zeros(3))


# -- pooled -----------------------------------------------------------------

def test_pooled_hand_computation():
    a = np.array([[1.0], [3.0]])
    b = np.array([[0.0], [2.0]])
    np.testing.assert_array_equal(pooled_baseline(np.eye(2), np.zeros(2), a, b), [2.0, 1.0])


def test_pooled_zero_weights_and_constant_sequences():
    a = np.full((5, 2), 0.5)
    b = np.full((5, 2), -1.5)
    W = Prng(1).uniform((3, 4), -1, 1)
    bp = np.array([0.1, 0.2, 0.3])
    np.testing.assert_array_equal(pooled_baseline(np.zeros((3, 4)), bp, a, b), bp)
    np.testing.assert_allclose(pooled_baseline(W, bp, a, b), W @ np.r_[a[0], b[0]] + bp, rtol=1e-15)


# -- sequences --------------------------------------------------------------

def test_forward_zero_params_emit_bias(family):
    shapes = param_shapes(family, {"n": 2, "m": 3, "k": 3})
    params = {k: np.zeros(s) for k, s in shapes.items()}
    bias = "b_p" if family == "pooled" else ("a.b_z" if family == "two-lstm" else "b_z")
    params[bias] = np.array([0.2, -0.1, 0.4])
    if family == "two-lstm":
        params["b.b_z"] = np.array([0.2, -0.1, 0.4])
    model = Model(family, {"n": 2, "m": 3, "k": 3}, params)
    trace = forward_sequence(model, np.ones((4, 2)), -np.ones((4, 2)))
    logits = trace.logits[0] if family == "two-lstm" else trace.logits
    for z in logits:
        np.testing.assert_array_equal(z[0], [0.2, -0.1, 0.4])
    for h in (trace.hidden[0] if family == "two-lstm" else trace.hidden):
        assert not h.any()


def test_forward_single_step_equals_step_call():
    model = init_params("colstsm", {"n": 2, "m": 3, "k": 2}, Prng(8))
    xa, xb = Prng(9).gaussian((1, 2)), Prng(10).gaussian((1, 2))
    trace = forward_sequence(model, xa, xb)
    h, _, _, _ = colstsm_step(model.params, xa[0], xb[0], np.zeros(3), np.zeros(3), np.zeros(3))
    np.testing.assert_array_equal(trace.hidden[0][0], h)
    assert len(trace.caches) == 1


def test_forward_cache_length(family):
    model = init_params(family, {"n": 2, "m": 3, "k": 2}, Prng(1))
    trace = forward_sequence(model, np.ones((6, 2)), np.zeros((6, 2)))
    if family == "pooled":
        assert len(trace.logits) == 1
    elif family == "two-lstm":
        assert [len(c) for c in trace.caches] == [6, 6]
    else:
        assert len(trace.caches) == 6


def test_forward_rejects_empty_and_mismatched():
    model = init_params("colstsm", {"n": 2, "m": 3, "k": 2}, Prng(1))
    with pytest.raises(ValueError):
        forward_sequence(model, np.zeros((0, 2)), np.zeros((0, 2)))
    with pytest.raises(ValueError):
        forward_sequence(model, np.zeros((3, 3)), np.zeros((3, 3)))


def test_batched_forward_matches_individual(family):
    model = init_params(family, {"n": 2, "m": 3, "k": 2}, Prng(21))
    prng = Prng(22)
    a, b = prng.gaussian((4, 5, 2)), prng.gaussian((4, 5, 2))
    batched = step_probs(forward_sequence(model, a, b))
    for i in range(4):
        single = step_probs(forward_sequence(model, a[i], b[i]))
        np.testing.assert_allclose(batched[:, i], single[:, 0], rtol=1e-13)


def test_two_lstm_fuses_by_score_averaging():
    model = init_params("two-lstm", {"n": 2, "m": 3, "k": 3}, Prng(2))
    a, b = Prng(3).gaussian((4, 2)), Prng(4).gaussian((4, 2))
    trace = forward_sequence(model, a, b)
    fused = step_probs(trace)
    expected = 0.5 * (softmax(np.stack(trace.logits[0])) + softmax(np.stack(trace.logits[1])))
    np.testing.assert_array_equal(fused, expected)


def test_init_recipe():
    m = 16
    model = init_params("colstsm", {"n": 3, "m": m, "k": 4}, Prng(0))
    for name, v in model.params.items():
        if v.ndim == 2:
            assert np.all(np.abs(v) <= 1 / math.sqrt(m))
        elif name.startswith("b_f_"):
            assert np.all(v == 1.0)
        else:
            assert np.all(v == 0.0)
    assert list(model.params).count("W_pi_h") == 1
    assert "W_pi_h_a" not in model.params and "b_pi_a" not in model.params
    again = init_params("colstsm", {"n": 3, "m": m, "k": 4}, Prng(0))
    for name in model.params:
        np.testing.assert_array_equal(model.params[name], again.params[name])


# -- softmax / loss ---------------------------------------------------------

def test_softmax_values():
    np.testing.assert_array_equal(softmax(np.array([0.0, 0.0])), [0.5, 0.5])
    np.testing.assert_allclose(softmax(np.array([math.log(2.0), 0.0])), [2 / 3, 1 / 3], rtol=1e-15)


@given(st.lists(st.floats(-300, 300), min_size=2, max_size=6), st.floats(-100, 100))
def test_softmax_distribution_and_shift(z, shift):
    z = np.array(z)
    y = softmax(z)
    assert np.all(y > 0) or np.all(np.isfinite(y))
    assert abs(y.sum() - 1.0) < 1e-12
    np.testing.assert_allclose(softmax(z + shift), y, atol=1e-12)


def test_nll_values():
    assert nll_loss(np.array([1.0, 0.0]), 0) == 0.0
    assert nll_loss(np.array([0.5, 0.5]), 1) == pytest.approx(0.6931472, abs=5e-8)
    assert nll_loss(np.full(4, 0.25), 3) == pytest.approx(1.3862944, abs=5e-8)
    with pytest.raises(ValueError):
        nll_loss(np.array([0.5, 0.5]), 2)


def test_sequence_pair_validation():
    with pytest.raises(ValueError):
        SequencePair(np.zeros((3, 2)), np.zeros((4, 2)), 0)
    with pytest.raises(ValueError):
        SequencePair(np.zeros((0, 2)), np.zeros((0, 2)), 0)
