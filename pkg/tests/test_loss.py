import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from holoplex.core import Grid, NumericalError, VideoTensor
from holoplex.loss import (
    DegenerateScalingWarning,
    LossConfig,
    combined_loss,
    ffl_loss,
    loss_and_grad,
    lsq_scale,
    mse_loss,
)


def dft_ffl_oracle(y, a, alpha):
    # explicit per-frame DFT, per-bin |dF|^(2 + alpha)
    T, h, w = y.shape
    yy, xx = np.mgrid[0:h, 0:w]
    total = 0.0
    for t in range(T):
        for ky in range(h):
            for kx in range(w):
                e = np.exp(-2j * np.pi * (ky * yy / h + kx * xx / w)) / np.sqrt(h * w)
                dF = np.sum(y[t] * e) - np.sum(a[t] * e)
                total += abs(dF) ** (2 + alpha)
    return total / y.size


def test_loss_config_invariants():
    with pytest.raises(ValueError):
        LossConfig(0, 0)
    with pytest.raises(ValueError):
        LossConfig(-1, 1)
    with pytest.raises(ValueError):
        LossConfig(alpha=-0.5)
    with pytest.raises(ValueError):
        LossConfig(scale_mode="median")


def test_mse_examples(rng):
    x = rng.uniform(size=(2, 4, 4))
    assert mse_loss(x, x) == 0
    assert mse_loss(np.ones((4, 4)), np.zeros((4, 4))) == 1.0
    y, a = rng.uniform(size=(2, 4, 4)), rng.uniform(size=(2, 4, 4))
    brute = sum((y[t, i, j] - a[t, i, j]) ** 2 for t in range(2) for i in range(4) for j in range(4)) / 32
    assert mse_loss(y, a) == pytest.approx(brute, rel=1e-12)


def test_shape_mismatch():
    with pytest.raises(ValueError):
        mse_loss(np.zeros((4, 4)), np.zeros((4, 5)))
    with pytest.raises(ValueError):
        ffl_loss(np.zeros((4, 4)), np.zeros((5, 4)))


@pytest.mark.parametrize("alpha", [0.0, 1.0, 2.5])
def test_ffl_identical_is_zero(rng, alpha):
    x = rng.uniform(size=(3, 8, 8))
    assert ffl_loss(x, x, alpha) == 0


def test_ffl_alpha0_equals_mse(rng):
    y, a = rng.uniform(size=(2, 16, 16)), rng.uniform(size=(2, 16, 16))
    assert ffl_loss(y, a, 0.0) == pytest.approx(mse_loss(y, a), rel=1e-10)


@pytest.mark.parametrize("alpha", [1.0, 0.5])
def test_ffl_matches_dft_oracle(rng, alpha):
    y, a = rng.uniform(size=(2, 4, 4)), rng.uniform(size=(2, 4, 4))
    assert ffl_loss(y, a, alpha) == pytest.approx(dft_ffl_oracle(y, a, alpha), rel=1e-10)


def test_ffl_overflow():
    y = np.full((4, 4), 1e100)
    with pytest.raises(NumericalError):
        ffl_loss(y, np.zeros((4, 4)), 50.0)


def test_combined_zero_weight_reductions(rng):
    y, a = rng.uniform(size=(2, 8, 8)), rng.uniform(size=(2, 8, 8))
    assert combined_loss(y, a, LossConfig(2.5, 0.0)) == pytest.approx(2.5 * mse_loss(y, a), rel=1e-14)
    assert combined_loss(y, a, LossConfig(0.0, 0.7, 1.0)) == pytest.approx(0.7 * ffl_loss(y, a, 1.0), rel=1e-14)
    c = LossConfig(0.3, 0.7, 1.5)
    assert combined_loss(y, a, c) == pytest.approx(0.3 * mse_loss(y, a) + 0.7 * ffl_loss(y, a, 1.5), rel=1e-14)


def test_lsq_exact_proportionality(rng):
    a = rng.uniform(0.1, 1, size=(2, 8, 8))
    s, deg = lsq_scale(2 * a, a)
    np.testing.assert_allclose(s, 2.0)
    assert not deg.any()
    assert combined_loss(2 * a, a, LossConfig(1, 0, scale_mode="lsq")) == pytest.approx(0, abs=1e-28)


def test_lsq_degenerate_flagged(rng):
    y = rng.uniform(size=(2, 4, 4))
    a = np.zeros_like(y)
    a[1] = 0.5
    with pytest.warns(DegenerateScalingWarning):
        s, deg = lsq_scale(y, a)
    assert deg.tolist() == [True, False] and s[0] == 1.0


def test_video_tensor_inputs(rng):
    g = Grid(4, 4, 1e-6)
    y, a = rng.uniform(size=(2, 1, 4, 4)), rng.uniform(size=(2, 1, 4, 4))
    assert mse_loss(VideoTensor(g, y), VideoTensor(g, a)) == pytest.approx(mse_loss(y, a))


def test_target_as_intensity():
    c = LossConfig(target_is_intensity=True)
    np.testing.assert_allclose(c.prepare_target(np.array([4.0, 0.25])), [2.0, 0.5])


vals = arrays(np.float64, (2, 6, 6), elements=st.floats(0, 1))


@settings(max_examples=40, deadline=None)
@given(y=vals, a=vals, alpha=st.floats(0, 3))
def test_nonnegative_and_zero_iff_equal(y, a, alpha):
    assert mse_loss(y, a) >= 0 and ffl_loss(y, a, alpha) >= 0
    assert ffl_loss(y, y, alpha) == 0
    if mse_loss(y, a) > 0:
        assert combined_loss(y, a, LossConfig(1, 1, alpha)) > 0


@settings(max_examples=30, deadline=None)
@given(y=vals, a=vals, sy=st.integers(0, 5), sx=st.integers(0, 5))
def test_shift_and_permutation_invariance(y, a, sy, sx):
    roll = lambda v: np.roll(v, (sy, sx), axis=(-2, -1))  # noqa: E731
    assert mse_loss(roll(y), roll(a)) == pytest.approx(mse_loss(y, a), rel=1e-12, abs=1e-300)
    assert ffl_loss(roll(y), roll(a)) == pytest.approx(ffl_loss(y, a), rel=1e-10, abs=1e-300)
    assert ffl_loss(y[::-1], a[::-1]) == pytest.approx(ffl_loss(y, a), rel=1e-12, abs=1e-300)


@pytest.mark.parametrize("cfg", [
    LossConfig(1, 0), LossConfig(0, 1, 0.0), LossConfig(0, 1, 1.0, detach_weight=False),
    LossConfig(1, 1, 1.0, detach_weight=False), LossConfig(1, 1, 2.0, "lsq", detach_weight=False),
])
def test_loss_gradient_fd(rng, cfg):
    y, a = rng.uniform(size=(2, 6, 6)), rng.uniform(0.1, 1, size=(2, 6, 6))
    g = loss_and_grad(y, a, cfg, need_grad=True)[3]
    eps = 1e-6
    fd = np.zeros_like(a)
    for idx in np.ndindex(a.shape):
        p, m = a.copy(), a.copy()
        p[idx] += eps
        m[idx] -= eps
        fd[idx] = (loss_and_grad(y, p, cfg)[0] - loss_and_grad(y, m, cfg)[0]) / (2 * eps)
    assert np.abs(g - fd).max() / np.abs(fd).max() < 1e-6


def test_detached_weight_gradient(rng):
    # detached: gradient of sum w |d|^2 / n with w held fixed
    y, a = rng.uniform(size=(4, 4)), rng.uniform(size=(4, 4))
    cfg = LossConfig(0, 1, 1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        g = loss_and_grad(y, a, cfg, need_grad=True)[3]
    exact = loss_and_grad(y, a, LossConfig(0, 1, 1.0, detach_weight=False), need_grad=True)[3]
    np.testing.assert_allclose(exact, 1.5 * g, atol=1e-14)
