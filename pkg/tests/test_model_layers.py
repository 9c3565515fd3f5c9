import numpy as np
import pytest

from frontseg.model import layers as ly


def brute_conv(x, w_flat, b, k):
    """Direct same-padded convolution, (C,H,W) single sample."""
    c, h, w = x.shape
    out_ch = w_flat.shape[0]
    w4 = w_flat.reshape(out_ch, c, k, k)
    pad = k // 2
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    out = np.zeros((out_ch, h, w))
    for oc in range(out_ch):
        for i in range(h):
            for j in range(w):
                out[oc, i, j] = (xp[:, i : i + k, j : j + k] * w4[oc]).sum() + b[oc]
    return out


def brute_convt(x, w, b, k):
    """Direct stride-2 transposed convolution with the library's crop rule,
    (C,h,w) single sample; w has shape (in, out, k, k)."""
    c, h, wdt = x.shape
    out_ch = w.shape[1]
    full = np.zeros((out_ch, 2 * h + k - 2, 2 * wdt + k - 2))
    for ci in range(c):
        for i in range(h):
            for j in range(wdt):
                full[:, 2 * i : 2 * i + k, 2 * j : 2 * j + k] += x[ci, i, j] * w[ci]
    lo = (k - 2) // 2
    return full[:, lo : lo + 2 * h, lo : lo + 2 * wdt] + b[:, None, None]


def layer_grad_check(layer, x, n_probes=40, h=1e-6, rtol=1e-5, seed=0):
    """Scalar loss sum(forward(x) * R): check dx and all parameter grads
    against central finite differences."""
    rng = np.random.default_rng(seed)
    out = layer.forward(x, training=True)
    r = rng.standard_normal(out.shape)
    dx = layer.backward(r)

    def loss():
        return float((layer.forward(x, training=True) * r).sum())

    flat_x = x.reshape(-1)
    probes = rng.choice(flat_x.size, size=min(n_probes, flat_x.size), replace=False)
    for idx in probes:
        orig = flat_x[idx]
        flat_x[idx] = orig + h
        hi = loss()
        flat_x[idx] = orig - h
        lo = loss()
        flat_x[idx] = orig
        numeric = (hi - lo) / (2 * h)
        analytic = dx.reshape(-1)[idx]
        assert analytic == pytest.approx(numeric, rel=rtol, abs=1e-8)

    layer.forward(x, training=True)
    layer.backward(r)
    for name, param in layer.params:
        analytic_grad = layer.grads[name]
        flat_p = param.reshape(-1)
        probes = rng.choice(flat_p.size, size=min(n_probes, flat_p.size), replace=False)
        for idx in probes:
            orig = flat_p[idx]
            flat_p[idx] = orig + h
            hi = loss()
            flat_p[idx] = orig - h
            lo = loss()
            flat_p[idx] = orig
            numeric = (hi - lo) / (2 * h)
            assert analytic_grad.reshape(-1)[idx] == pytest.approx(numeric, rel=rtol, abs=1e-8), name


# ---------------------------------------------------------------------------
# Conv2D
# ---------------------------------------------------------------------------


def test_conv_matches_direct_convolution():
    rng = np.random.default_rng(1)
    conv = ly.Conv2D(3, 4, 5, rng, dtype=np.float64)
    x = rng.standard_normal((2, 3, 8, 9))
    out = conv.forward(x, training=False)
    assert out.shape == (2, 4, 8, 9)
    for n in range(2):
        np.testing.assert_allclose(out[n], brute_conv(x[n], conv.W, conv.b, 5), rtol=1e-12)


def test_conv_kernel3_matches_direct():
    rng = np.random.default_rng(2)
    conv = ly.Conv2D(2, 2, 3, rng, dtype=np.float64)
    x = rng.standard_normal((1, 2, 6, 6))
    np.testing.assert_allclose(
        conv.forward(x, training=False)[0], brute_conv(x[0], conv.W, conv.b, 3), rtol=1e-12
    )


def test_conv_gradients():
    rng = np.random.default_rng(3)
    conv = ly.Conv2D(2, 3, 5, rng, dtype=np.float64)
    layer_grad_check(conv, rng.standard_normal((2, 2, 7, 7)))


def test_conv_init_bound_scales_with_fan_in():
    rng = np.random.default_rng(4)
    conv = ly.Conv2D(4, 8, 5, rng, dtype=np.float64)
    bound = 1.0 / np.sqrt(4 * 25)
    assert np.abs(conv.W).max() <= bound
    assert (conv.b == 0).all()


def test_conv_rejects_wrong_channels():
    rng = np.random.default_rng(5)
    conv = ly.Conv2D(2, 3, 5, rng)
    with pytest.raises(ValueError):
        conv.forward(np.zeros((1, 3, 8, 8), np.float32), training=False)


# ---------------------------------------------------------------------------
# BatchNorm
# ---------------------------------------------------------------------------


def test_batchnorm_normalizes_batch():
    rng = np.random.default_rng(7)
    bn = ly.BatchNorm(3, dtype=np.float64)
    x = rng.standard_normal((4, 3, 6, 6)) * 5 + 2
    out = bn.forward(x, training=True)
    means = out.mean(axis=(0, 2, 3))
    stds = out.std(axis=(0, 2, 3))
    np.testing.assert_allclose(means, 0, atol=1e-10)
    np.testing.assert_allclose(stds, 1, atol=1e-3)  # eps shifts the variance slightly


def test_batchnorm_running_stats_update():
    rng = np.random.default_rng(8)
    bn = ly.BatchNorm(2, momentum=0.1, dtype=np.float64)
    x = rng.standard_normal((8, 2, 4, 4)) + 3.0
    bn.forward(x, training=True)
    batch_mean = x.mean(axis=(0, 2, 3))
    np.testing.assert_allclose(bn.running_mean, 0.1 * batch_mean, rtol=1e-12)
    # inference path uses the running buffers, not the batch
    out_inf = bn.forward(x, training=False)
    expected = (x - bn.running_mean.reshape(1, -1, 1, 1)) / np.sqrt(
        bn.running_var.reshape(1, -1, 1, 1) + bn.eps
    )
    np.testing.assert_allclose(out_inf, expected, rtol=1e-12)


def test_batchnorm_biased_variance():
    bn = ly.BatchNorm(1, momentum=1.0, dtype=np.float64)
    x = np.array([0.0, 2.0]).reshape(2, 1, 1, 1)
    bn.forward(x, training=True)
    assert bn.running_var[0] == pytest.approx(1.0)  # 1/m, not 1/(m-1)


def test_batchnorm_gradients():
    rng = np.random.default_rng(9)
    bn = ly.BatchNorm(3, dtype=np.float64)
    bn.gamma[:] = rng.uniform(0.5, 1.5, 3)
    bn.beta[:] = rng.standard_normal(3)
    layer_grad_check(bn, rng.standard_normal((3, 3, 5, 5)), rtol=1e-4)


# ---------------------------------------------------------------------------
# LeakyReLU and MaxPool
# ---------------------------------------------------------------------------


def test_leaky_relu_values_and_grads():
    act = ly.LeakyReLU(0.1)
    x = np.array([[-2.0, 0.0, 3.0]])[None, None]
    out = act.forward(x, training=True)
    np.testing.assert_allclose(out, [[[[-0.2, 0.0, 3.0]]]])
    dx = act.backward(np.ones_like(x))
    np.testing.assert_allclose(dx, [[[[0.1, 1.0, 1.0]]]])


def test_leaky_relu_gradcheck_away_from_kink():
    rng = np.random.default_rng(10)
    x = rng.standard_normal((2, 2, 4, 4))
    x[np.abs(x) < 0.1] = 0.5  # keep probes away from the non-differentiable point
    layer_grad_check(ly.LeakyReLU(0.1), x)


def test_maxpool_values():
    pool = ly.MaxPool2x2()
    x = np.arange(16, dtype=np.float64).reshape(1, 1, 4, 4)
    out = pool.forward(x, training=False)
    np.testing.assert_allclose(out[0, 0], [[5, 7], [13, 15]])


def test_maxpool_requires_even_dims():
    with pytest.raises(ValueError):
        ly.MaxPool2x2().forward(np.zeros((1, 1, 3, 4)), training=False)


def test_maxpool_backward_routes_to_argmax():
    pool = ly.MaxPool2x2()
    x = np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 1, 2, 2)
    pool.forward(x, training=True)
    dx = pool.backward(np.array([[[[10.0]]]]))
    np.testing.assert_allclose(dx[0, 0], [[0, 0], [0, 10.0]])


def test_maxpool_tie_goes_to_first_position():
    pool = ly.MaxPool2x2()
    x = np.full((1, 1, 2, 2), 7.0)
    pool.forward(x, training=True)
    dx = pool.backward(np.array([[[[1.0]]]]))
    np.testing.assert_allclose(dx[0, 0], [[1.0, 0.0], [0.0, 0.0]])


def test_maxpool_gradcheck():
    rng = np.random.default_rng(11)
    x = rng.standard_normal((2, 3, 6, 6))
    layer_grad_check(ly.MaxPool2x2(), x)


# ---------------------------------------------------------------------------
# ConvTranspose2D
# ---------------------------------------------------------------------------


def test_convtranspose_doubles_spatial_dims():
    rng = np.random.default_rng(12)
    up = ly.ConvTranspose2D(3, 2, 5, rng, dtype=np.float64)
    out = up.forward(rng.standard_normal((2, 3, 4, 6)), training=False)
    assert out.shape == (2, 2, 8, 12)


def test_convtranspose_matches_direct_scatter():
    rng = np.random.default_rng(13)
    up = ly.ConvTranspose2D(2, 3, 5, rng, dtype=np.float64)
    x = rng.standard_normal((2, 2, 3, 4))
    out = up.forward(x, training=False)
    for n in range(2):
        np.testing.assert_allclose(out[n], brute_convt(x[n], up.W, up.b, 5), rtol=1e-12)


def test_convtranspose_kernel3():
    rng = np.random.default_rng(14)
    up = ly.ConvTranspose2D(1, 1, 3, rng, dtype=np.float64)
    x = rng.standard_normal((1, 1, 3, 3))
    np.testing.assert_allclose(
        up.forward(x, training=False)[0], brute_convt(x[0], up.W, up.b, 3), rtol=1e-12
    )


def test_convtranspose_gradients():
    rng = np.random.default_rng(15)
    up = ly.ConvTranspose2D(2, 2, 5, rng, dtype=np.float64)
    layer_grad_check(up, rng.standard_normal((2, 2, 4, 4)))


# ---------------------------------------------------------------------------
# Sigmoid
# ---------------------------------------------------------------------------


def test_sigmoid_values_stable_at_extremes():
    sig = ly.Sigmoid()
    x = np.array([[-800.0, 0.0, 800.0]])[None, None]
    out = sig.forward(x, training=False)
    assert out[0, 0, 0, 0] == 0.0
    assert out[0, 0, 0, 1] == 0.5
    assert out[0, 0, 0, 2] == 1.0
    assert np.isfinite(out).all()


def test_sigmoid_gradcheck():
    rng = np.random.default_rng(16)
    layer_grad_check(ly.Sigmoid(), rng.standard_normal((2, 1, 5, 5)))
