import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from saliency_lab import loss as L

probs = st.floats(0.01, 0.99)


def test_mse_examples():
    t = np.random.default_rng(0).uniform(size=(2, 1, 4, 4))
    assert float(L.mse(t, t)) == 0.0
    assert float(L.mse(np.zeros((1, 1, 2, 2)), np.ones((1, 1, 2, 2)))) == 1.0
    assert float(L.mse(np.array([0.5, 0.5]), np.array([0.0, 1.0]))) == 0.25


def test_bce_examples():
    b = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert float(L.bce(b, b)) <= 1e-6
    assert abs(float(L.bce(np.full((1, 1, 4, 4), 0.5), np.full((1, 1, 4, 4), 0.5))) - math.log(2)) <= 1e-9
    assert abs(float(L.bce(np.array([0.9]), np.array([1.0]))) - (-math.log(0.9))) <= 1e-12


def test_bce_clamps_saturated_predictions():
    v = float(L.bce(np.array([0.0, 1.0]), np.array([1.0, 0.0])))
    assert np.isfinite(v) and abs(v + math.log(1e-7)) < 1e-6


def test_downsample_examples():
    x = np.random.default_rng(1).uniform(size=(2, 1, 8, 8))
    np.testing.assert_array_equal(L.downsample_map(x, 1), x)
    np.testing.assert_array_equal(L.downsample_map(np.array([[1.0, 0], [0, 1]]), 2), [[0.5]])
    assert L.downsample_map(np.zeros((1, 1, 192, 256)), 4).shape == (1, 1, 48, 64)
    with pytest.raises(ValueError):
        L.downsample_map(x, 3)


def test_generator_adv_loss_examples():
    assert abs(float(L.generator_adv_loss(np.array([[0.5]]), 0.7, 0.005)) - 0.696647) <= 1e-6
    d = np.array([[0.3], [0.8]])
    assert abs(float(L.generator_adv_loss(d, 5.0, 0.0)) - np.mean(-np.log(d))) <= 1e-12
    with pytest.raises(ValueError):
        L.generator_adv_loss(d, 1.0, -1.0)


def test_discriminator_loss_examples():
    assert abs(float(L.discriminator_loss(np.array([[0.5]]), np.array([[0.5]]))) - 2 * math.log(2)) <= 1e-9
    assert float(L.discriminator_loss(np.array([[1.0]]), np.array([[0.0]]))) <= 2e-6
    # the two terms mirror each other: real score r and fake score f trade places as (1-f, 1-r)
    r, f = 0.27, 0.61
    a = float(L.discriminator_loss(np.array([[r]]), np.array([[f]])))
    b = float(L.discriminator_loss(np.array([[1 - f]]), np.array([[1 - r]])))
    assert a == pytest.approx(b, abs=1e-12)


def test_content_loss_kind():
    p, t = np.full(4, 0.2), np.full(4, 0.6)
    assert float(L.content_loss(p, t, "mse")) == pytest.approx(0.16)
    assert float(L.content_loss(p, t, "bce")) == float(L.bce(p, t))
    with pytest.raises(ValueError):
        L.content_loss(p, t, "l1")


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (1, 1, 4, 4), elements=probs), arrays(np.float64, (1, 1, 4, 4), elements=probs))
def test_cross_entropy_exceeds_entropy(p, t):
    assert float(L.bce(p, t)) >= float(L.bce(t, t)) - 1e-12
    assert float(L.mse(p, t)) >= 0


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (3, 1, 4, 4), elements=probs), arrays(np.float64, (3, 1, 4, 4), elements=probs),
       st.randoms(use_true_random=False))
def test_losses_permutation_invariant(p, t, rnd):
    perm = list(range(p.size))
    rnd.shuffle(perm)
    pf, tf = p.ravel()[perm].reshape(p.shape), t.ravel()[perm].reshape(t.shape)
    for fn in (L.mse, L.bce):
        assert float(fn(pf, tf)) == pytest.approx(float(fn(p, t)), rel=1e-12)
        assert float(fn(p[::-1], t[::-1])) == pytest.approx(float(fn(p, t)), rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (2, 1, 8, 16), elements=st.floats(0, 1)), st.sampled_from([1, 2, 4, 8]))
def test_downsample_preserves_mean(x, factor):
    assert abs(L.downsample_map(x, factor).mean() - x.mean()) <= 1e-12


@settings(max_examples=40, deadline=None)
@given(probs, probs, st.floats(0, 1))
def test_adversarial_losses_monotone(a, b, alpha):
    lo, hi = sorted((a, b))
    if hi - lo < 1e-6:
        return
    g = lambda d: float(L.generator_adv_loss(np.array([[d]]), 0.4, alpha))
    assert g(hi) < g(lo)
    dl = lambda r, f: float(L.discriminator_loss(np.array([[r]]), np.array([[f]])))
    assert dl(hi, 0.5) < dl(lo, 0.5)
    assert dl(0.5, lo) < dl(0.5, hi)


def test_losses_nonnegative():
    rng = np.random.default_rng(2)
    d = rng.uniform(size=(4, 1))
    assert float(L.generator_adv_loss(d, 0.3, 0.005)) >= 0
    assert float(L.discriminator_loss(d, d[::-1])) >= 0
