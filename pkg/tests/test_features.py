import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hairtransfer.errors import EmptyRegion, LevelError, ShapeError
from hairtransfer.features import (
    APPEARANCE_TAP,
    LEVEL_TAPS,
    STYLE_TAPS,
    ToyExtractor,
    gram,
    masked_mean,
    mean_appearance,
    normalize_channels,
    perceptual_distance,
    perceptual_distance_grad,
    resize_mask_nearest,
)

finite = st.floats(-10, 10, allow_nan=False)


def test_geometry_table(ext):
    for b in range(1, 6):
        assert ext.levels[b] == (2 ** (b + 2), 2 ** (b - 1))
    assert ext.appearance_tap == APPEARANCE_TAP and ext.style_taps == STYLE_TAPS
    with pytest.raises(LevelError):
        ext.extract(np.zeros((3, 8, 8)), 6)


def test_zero_image_zero_features(ext):
    for b in range(1, 6):
        assert not ext.extract(np.zeros((3, 16, 16)), b).any()


def test_deterministic(ext, rng):
    img = rng.random((3, 16, 16))
    assert np.array_equal(ext.extract(img, 3), ToyExtractor(0).extract(img, 3))


def test_level1_loop_oracle(ext, rng):
    img = rng.random((3, 4, 4))
    _, weight = ext.layers[1]
    out = ext.extract(img, 1)
    for o in range(weight.shape[0]):
        for y in range(4):
            for x in range(4):
                acc = 0.0
                for c in range(3):
                    acc += weight[o, c] * img[c, y, x]
                assert out[o, y, x] == pytest.approx(acc, abs=1e-12)


def test_pooled_level_loop_oracle(ext, rng):
    img = rng.random((3, 8, 8))
    _, weight = ext.layers[3]  # stride 4
    out = ext.extract(img, 3)
    for o in range(weight.shape[0]):
        for y in range(2):
            for x in range(2):
                patch = img[:, 4 * y : 4 * y + 4, 4 * x : 4 * x + 4].mean(axis=(1, 2))
                assert out[o, y, x] == pytest.approx(weight[o] @ patch, abs=1e-12)


def test_taps_alias_levels(ext, rng):
    img = rng.random((3, 16, 16))
    for b, tap in LEVEL_TAPS.items():
        assert np.array_equal(ext.extract(img, b), ext.extract(img, tap))


@settings(max_examples=30, deadline=None)
@given(finite, finite, st.integers(1, 5))
def test_linearity(a, b, level):
    ext = ToyExtractor(0)
    rng = np.random.default_rng(7)
    x, y = rng.random((2, 3, 16, 16))
    lhs = ext.extract(a * x + b * y, level)
    rhs = a * ext.extract(x, level) + b * ext.extract(y, level)
    assert np.allclose(lhs, rhs, atol=1e-9)


def test_partial_window_pooling(ext, rng):
    img = rng.random((3, 8, 12))
    _, weight = ext.layers[5]  # stride 16 > image: one global-mean cell
    assert np.allclose(ext.extract(img, 5)[:, 0, 0], weight @ img.mean(axis=(1, 2)))
    _, weight = ext.layers[4]  # stride 8: windows 8x8 and 8x4
    out = ext.extract(img, 4)
    assert out.shape[1:] == (1, 2)
    assert np.allclose(out[:, 0, 1], weight @ img[:, :, 8:].mean(axis=(1, 2)))


@pytest.mark.parametrize("shape", [(16, 16), (12, 20)])
def test_vjp_is_adjoint(ext, rng, shape):
    for layer in (1, 4, 5, APPEARANCE_TAP):
        x = rng.standard_normal((3, *shape))
        f = ext.extract(x, layer)
        g = rng.standard_normal(f.shape)
        assert np.sum(f * g) == pytest.approx(np.sum(x * ext.vjp(x, layer, g)), rel=1e-10)


def test_identity_appearance_tap():
    ext = ToyExtractor(0, identity_appearance=True)
    img = np.full((3, 8, 8), 0.4)
    assert np.allclose(mean_appearance(ext, img, np.ones((8, 8), bool)), 0.4)


def test_perceptual_distance_examples():
    a = np.array([1.0, 0.0]).reshape(2, 1, 1)
    b = np.array([0.0, 1.0]).reshape(2, 1, 1)
    assert perceptual_distance(a, b) == pytest.approx(1.0, abs=1e-9)  # eps 1e-10 in the norm
    assert perceptual_distance(a, a) == 0.0
    with pytest.raises(ShapeError):
        perceptual_distance(a, np.zeros((3, 1, 1)))


@settings(max_examples=50, deadline=None)
@given(arrays(float, (4, 3, 3), elements=finite), arrays(float, (4, 3, 3), elements=finite))
def test_perceptual_distance_properties(fa, fb):
    d = perceptual_distance(fa, fb)
    assert d >= 0 and d == pytest.approx(perceptual_distance(fb, fa), abs=1e-12)
    assert perceptual_distance(fa, fa) == 0.0


def test_perceptual_distance_loop_oracle(rng):
    fa, fb = rng.standard_normal((2, 5, 3, 4))
    acc = 0.0
    for y in range(3):
        for x in range(4):
            na = np.sqrt(sum(fa[c, y, x] ** 2 for c in range(5))) + 1e-10
            nb = np.sqrt(sum(fb[c, y, x] ** 2 for c in range(5))) + 1e-10
            for c in range(5):
                acc += (fa[c, y, x] / na - fb[c, y, x] / nb) ** 2
    assert perceptual_distance(fa, fb) == pytest.approx(acc / 60, abs=1e-12)


def test_perceptual_grad_finite_difference(rng):
    target, synth = rng.standard_normal((2, 6, 3, 3))
    _, g = perceptual_distance_grad(target, synth)
    h = 1e-6
    for idx in [(0, 0, 0), (3, 1, 2), (5, 2, 1)]:
        plus, minus = synth.copy(), synth.copy()
        plus[idx] += h
        minus[idx] -= h
        fd = (perceptual_distance(target, plus) - perceptual_distance(target, minus)) / (2 * h)
        assert g[idx] == pytest.approx(fd, rel=1e-5, abs=1e-10)


def test_normalize_channels_zero_safe():
    assert not normalize_channels(np.zeros((3, 2, 2))).any()


def test_mean_appearance_examples():
    feats = np.array([[[1.0, 3.0], [5.0, 7.0]]])
    mask = np.array([[1, 0], [1, 0]], bool)
    assert masked_mean(feats, mask)[0] == pytest.approx(3.0)
    with pytest.raises(EmptyRegion):
        masked_mean(feats, np.zeros((2, 2), bool))


def test_mean_appearance_empty_after_resize():
    ext = ToyExtractor(0)
    ext.layers[APPEARANCE_TAP] = (4, ext.layers[APPEARANCE_TAP][1])
    mask = np.zeros((8, 8), bool)
    mask[1, 1] = True  # nearest-neighbour samples rows/cols 0 and 4 only
    with pytest.raises(EmptyRegion):
        mean_appearance(ext, np.ones((3, 8, 8)), mask)


def test_resize_mask_nearest():
    m = np.arange(16).reshape(4, 4) % 2 == 0
    small = resize_mask_nearest(m, (2, 2))
    assert np.array_equal(small, m[::2, ::2])


def test_mean_appearance_permutation_invariant(ext, rng):
    img = rng.random((3, 8, 8))
    mask = rng.random((8, 8)) > 0.4
    ys, xs = np.nonzero(mask)
    perm = rng.permutation(len(ys))
    shuffled = img.copy()
    shuffled[:, ys, xs] = img[:, ys[perm], xs[perm]]
    assert np.allclose(mean_appearance(ext, img, mask), mean_appearance(ext, shuffled, mask))


def test_gram_examples():
    assert not gram(np.zeros((3, 2, 2))).any()
    assert np.array_equal(gram(np.eye(2).T.reshape(2, 2, 1)), np.eye(2))
    gamma = np.array([[1, 2], [3, 4], [5, 6]], float)  # (HW, C)
    assert np.array_equal(gram(gamma.T.reshape(2, 3, 1)), [[35, 44], [44, 56]])


@settings(max_examples=50, deadline=None)
@given(arrays(float, (4, 3, 2), elements=finite))
def test_gram_symmetric_psd(f):
    g = gram(f)
    assert np.allclose(g, g.T)
    assert np.linalg.eigvalsh(g).min() >= -1e-8 * max(1.0, np.abs(g).max())
