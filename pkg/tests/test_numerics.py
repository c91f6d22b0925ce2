"""Numeric substrate tests: RNG, dense ops, softmax/temperature, Adam, and
the finite-difference gradient checker."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mailmasq.numerics import (
    AdamState,
    RngStream,
    adam_step,
    clip_global_norm,
    cross_entropy,
    derive_seed,
    entropy,
    global_norm,
    grad_check,
    matmul,
    add,
    multiply,
    sigmoid,
    softmax_temp,
    tanh,
)

# Frozen oracle values (high-precision evaluation of the defining formulas).
SOFTMAX_HALF_TEMP = (0.8807970779778824, 0.1192029220221176)  # softmax([1,0], temp 0.5)
NEG_LN_03 = 1.203972804325936
LN_4 = 1.3862943611198906


# -- RngStream -----------------------------------------------------------------

def test_fixed_seed_streams_are_identical():
    a = [RngStream(42).next_u64() for _ in range(1)]
    xs = RngStream(42)
    ys = RngStream(42)
    assert [xs.next_u64() for _ in range(10)] == [ys.next_u64() for _ in range(10)]
    assert a[0] == RngStream(42).next_u64()


def test_array_draws_match_scalar_draws():
    xs = RngStream(7)
    ys = RngStream(7)
    assert list(xs.next_u64_array(100)) == [ys.next_u64() for _ in range(100)]
    assert xs.state == ys.state


def test_uniform_in_unit_interval():
    rng = RngStream(3)
    draws = rng.uniform_array(10_000)
    assert draws.min() >= 0.0
    assert draws.max() < 1.0


def test_derive_seed_separates_labels_and_indices():
    seeds = {
        derive_seed(5, "a", 0),
        derive_seed(5, "a", 1),
        derive_seed(5, "b", 0),
        derive_seed(6, "a", 0),
    }
    assert len(seeds) == 4
    assert derive_seed(5, "a", 1) == derive_seed(5, "a", 1)


def test_below_is_in_range_and_deterministic():
    rng = RngStream(11)
    draws = [rng.below(7) for _ in range(2000)]
    assert set(draws) <= set(range(7))
    assert set(draws) == set(range(7))  # all residues seen over 2000 draws
    with pytest.raises(ValueError):
        rng.below(0)


@given(st.integers(0, 2**64 - 1), st.integers(1, 50))
@settings(max_examples=50)
def test_shuffle_is_a_permutation(seed, n):
    items = list(range(n))
    RngStream(seed).shuffle(items)
    assert sorted(items) == list(range(n))


def test_categorical_point_mass_and_validation():
    rng = RngStream(1)
    assert all(rng.categorical(np.array([1.0])) == 0 for _ in range(5))
    with pytest.raises(ValueError):
        rng.categorical(np.array([0.5, 0.4]))
    with pytest.raises(ValueError):
        rng.categorical(np.array([]))


def test_categorical_is_roughly_fair():
    rng = RngStream(99)
    n = 100_000
    hits = sum(rng.categorical(np.array([0.5, 0.5])) for _ in range(n))
    assert abs(hits / n - 0.5) < 0.01


# -- dense ops -----------------------------------------------------------------

def test_matmul_hand_cases():
    ident = np.eye(2)
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(matmul(ident, a), a)
    assert np.array_equal(matmul(a, np.array([[1.0], [1.0]])), np.array([[3.0], [7.0]]))


def test_shape_mismatches_raise():
    a = np.ones((2, 3))
    with pytest.raises(ValueError):
        matmul(a, np.ones((2, 3)))
    with pytest.raises(ValueError):
        add(a, np.ones((3, 2)))
    with pytest.raises(ValueError):
        multiply(a, np.ones((2, 2)))


def test_sigmoid_tanh_zero():
    assert sigmoid(np.array([0.0]))[0] == 0.5
    assert tanh(np.array([0.0]))[0] == 0.0


def test_sigmoid_is_stable_at_extremes():
    out = sigmoid(np.array([-800.0, 800.0]))
    assert out[0] == 0.0 and out[1] == 1.0


# -- softmax with temperature ----------------------------------------------------

def test_softmax_uniform_for_constant_logits():
    for temp in (0.2, 0.5, 0.7, 1.0):
        probs = softmax_temp(np.array([3.3, 3.3, 3.3]), temp)
        assert np.allclose(probs, 1 / 3, atol=1e-15)


def test_softmax_analytic_cases():
    probs = softmax_temp(np.array([math.log(2.0), 0.0]), 1.0)
    assert abs(probs[0] - 2 / 3) < 1e-14
    probs = softmax_temp(np.array([1.0, 0.0]), 0.5)
    assert abs(probs[0] - SOFTMAX_HALF_TEMP[0]) < 1e-15
    assert abs(probs[1] - SOFTMAX_HALF_TEMP[1]) < 1e-15


def test_softmax_rejects_bad_inputs():
    with pytest.raises(ValueError):
        softmax_temp(np.array([1.0]), 0.0)
    with pytest.raises(ValueError):
        softmax_temp(np.array([1.0]), 1.5)
    with pytest.raises(ValueError):
        softmax_temp(np.array([]), 1.0)


def test_softmax_survives_low_temperature_extremes():
    probs = softmax_temp(np.array([500.0, -500.0]), 0.2)
    assert np.isfinite(probs).all()
    assert abs(probs.sum() - 1.0) < 1e-12


logits_strategy = st.lists(
    st.floats(min_value=-30, max_value=30, allow_nan=False), min_size=2, max_size=12
).map(np.array)
temp_strategy = st.sampled_from([0.2, 0.5, 0.7, 1.0])


@given(logits_strategy, temp_strategy)
@settings(max_examples=200)
def test_softmax_normalizes_and_shift_invariant(logits, temp):
    probs = softmax_temp(logits, temp)
    assert abs(probs.sum() - 1.0) < 1e-12
    shifted = softmax_temp(logits + 13.7, temp)
    assert np.max(np.abs(probs - shifted)) < 1e-12


@given(logits_strategy)
@settings(max_examples=200)
def test_softmax_argmax_invariant_and_entropy_monotone(logits):
    temps = [0.2, 0.5, 0.7, 1.0]
    dists = [softmax_temp(logits, t) for t in temps]
    modes = {int(np.argmax(d)) for d in dists}
    if np.sum(logits == logits.max()) == 1:
        assert len(modes) == 1
    entropies = [entropy(d) for d in dists]
    for low, high in zip(entropies, entropies[1:]):
        assert high >= low - 1e-12


# -- cross entropy ----------------------------------------------------------------

def test_cross_entropy_cases():
    assert cross_entropy(np.array([1.0, 0.0, 0.0]), 0) == 0.0
    assert abs(cross_entropy(np.full(4, 0.25), 2) - LN_4) < 1e-15
    assert abs(cross_entropy(np.array([0.7, 0.3]), 1) - NEG_LN_03) < 1e-15
    with pytest.raises(IndexError):
        cross_entropy(np.array([1.0]), 3)


def test_cross_entropy_clamps_zero_probability():
    assert cross_entropy(np.array([1.0, 0.0]), 1) == -math.log(1e-300)


# -- Adam -------------------------------------------------------------------------

def test_adam_zero_gradient_is_noop():
    params = {"w": np.array([1.0, -2.0])}
    state = AdamState.init_like(params)
    adam_step(params, {"w": np.zeros(2)}, state, lr=0.1)
    assert np.array_equal(params["w"], np.array([1.0, -2.0]))
    assert state.t == 1


def test_adam_single_step_oracle():
    # One step from zero with g=0.1: m̂=g, v̂=g², so Δ = lr·g/(|g|+eps).
    params = {"w": np.array([0.0])}
    state = AdamState.init_like(params)
    adam_step(params, {"w": np.array([0.1])}, state, lr=1e-3)
    expected = -1e-3 * 0.1 / (0.1 + 1e-8)
    assert abs(params["w"][0] - expected) < 1e-18
    assert abs(params["w"][0] - (-9.99999900000001e-4)) < 1e-15


def test_adam_first_step_magnitude_is_about_lr():
    # First step moves by lr/(1 + eps/|g|) regardless of gradient scale.
    for g in (1e-6, 0.03, 5.0, -2.0):
        params = {"w": np.array([0.0])}
        state = AdamState.init_like(params)
        adam_step(params, {"w": np.array([float(g)])}, state, lr=0.01)
        expected = 0.01 / (1.0 + 1e-8 / abs(g))
        assert abs(abs(params["w"][0]) - expected) < 1e-15
        assert np.sign(params["w"][0]) == -np.sign(g)


def test_adam_rejects_mismatched_shapes():
    params = {"w": np.zeros(2)}
    state = AdamState.init_like(params)
    with pytest.raises(ValueError):
        adam_step(params, {"w": np.zeros(3)}, state, lr=0.1)
    with pytest.raises(ValueError):
        adam_step(params, {"q": np.zeros(2)}, AdamState.init_like(params), lr=0.1)


# -- clipping ----------------------------------------------------------------------

def test_clip_global_norm():
    grads = {"a": np.array([3.0]), "b": np.array([4.0])}
    pre = clip_global_norm(grads, 1.0)
    assert abs(pre - 5.0) < 1e-12
    assert abs(global_norm(grads) - 1.0) < 1e-9
    grads = {"a": np.array([0.3])}
    clip_global_norm(grads, 1.0)
    assert grads["a"][0] == 0.3  # below-threshold gradients untouched


# -- gradient checker ----------------------------------------------------------------

def test_grad_check_quadratic():
    params = {"w": np.array([0.3, -1.2, 2.0])}

    def f():
        return 0.5 * float(params["w"] @ params["w"])

    err = grad_check(f, params, {"w": params["w"].copy()})
    assert err < 1e-9


def test_grad_check_flags_corrupted_gradient():
    params = {"w": np.array([0.5, 1.5])}

    def f():
        return 0.5 * float(params["w"] @ params["w"])

    err = grad_check(f, params, {"w": 2.0 * params["w"]})
    assert abs(err - 1.0) < 1e-6


def test_grad_check_rejects_bad_h():
    params = {"w": np.array([1.0])}
    with pytest.raises(ValueError):
        grad_check(lambda: 0.0, params, {"w": np.zeros(1)}, h=0.0)
