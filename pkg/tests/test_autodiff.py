"""Central-finite-difference verification of every differentiable layer."""
import numpy as np
import pytest

import udnkit.autodiff as ad
from udnkit.forward_model import ForwardModel, MaskStack, Psf
from udnkit.kernels import conv2d_forward

from helpers import delta_psf


def proj_loss(y, P):
    """Scalar probe sum(y * P) so any op can be checked through one loss."""
    val = float(np.sum(y.value * P))

    def bwd(g):
        y.grad = g * P if y.grad is None else y.grad + g * P

    return ad.Var(val, (y,), bwd, "probe")


def fd_gradients(loss_fn, arrays, step=1e-3):
    """Central finite differences of loss_fn w.r.t. every entry of arrays."""
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        flat = a.ravel()
        gflat = g.ravel()
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + step
            hi = loss_fn()
            flat[i] = keep - step
            lo = loss_fn()
            flat[i] = keep
            gflat[i] = (hi - lo) / (2.0 * step)
        grads.append(g)
    return grads


def max_rel_err(got, ref):
    """Worst-case relative error with a scale-aware floor for tiny entries."""
    got, ref = np.asarray(got), np.asarray(ref)
    floor = 1e-3 * np.abs(ref).max() + 1e-12
    return float((np.abs(got - ref) / np.maximum(np.abs(ref), floor)).max())


def check_op(build, arrays, tol=1e-4, step=1e-3):
    """Run autodiff once, then FD over every input array; compare."""
    loss_var, var_list = build()
    ad.backward(loss_var)
    ad_grads = [v.grad if v.grad is not None else np.zeros_like(v.value)
                for v in var_list]

    def loss_only():
        lv, _ = build()
        return float(lv.value)

    fd = fd_gradients(loss_only, arrays, step=step)
    worst = max(max_rel_err(g, f) for g, f in zip(ad_grads, fd))
    assert worst < tol, f"max relative gradient error {worst:.3e}"


@pytest.mark.usefixtures("f64")
class TestLayerGradients:
    def test_conv2d_stride1(self):
        r = np.random.default_rng(0)
        x = r.standard_normal((3, 6, 6))
        w = r.standard_normal((4, 3, 3, 3)) * 0.5
        b = r.standard_normal(4) * 0.1
        P = r.standard_normal((4, 6, 6))

        def build():
            xv, wv, bv = ad.Var(x), ad.Var(w), ad.Var(b)
            return proj_loss(ad.conv2d(xv, wv, bv, stride=1), P), [xv, wv, bv]

        check_op(build, [x, w, b])

    def test_conv2d_stride2(self):
        r = np.random.default_rng(1)
        x = r.standard_normal((2, 8, 8))
        w = r.standard_normal((3, 2, 3, 3)) * 0.5
        b = r.standard_normal(3) * 0.1
        P = r.standard_normal((3, 4, 4))

        def build():
            xv, wv, bv = ad.Var(x), ad.Var(w), ad.Var(b)
            return proj_loss(ad.conv2d(xv, wv, bv, stride=2), P), [xv, wv, bv]

        check_op(build, [x, w, b])

    def test_conv2d_1x1(self):
        r = np.random.default_rng(2)
        x = r.standard_normal((5, 4, 4))
        w = r.standard_normal((2, 5, 1, 1))
        b = r.standard_normal(2)
        P = r.standard_normal((2, 4, 4))

        def build():
            xv, wv, bv = ad.Var(x), ad.Var(w), ad.Var(b)
            return proj_loss(ad.conv2d(xv, wv, bv), P), [xv, wv, bv]

        check_op(build, [x, w, b])

    def test_leaky_relu(self):
        r = np.random.default_rng(3)
        x = r.standard_normal((3, 5, 5))
        x[np.abs(x) < 0.05] = 0.1        # keep clear of the kink
        P = r.standard_normal(x.shape)

        def build():
            xv = ad.Var(x)
            return proj_loss(ad.leaky_relu(xv, 0.2), P), [xv]

        check_op(build, [x])

    def test_sigmoid(self):
        r = np.random.default_rng(4)
        x = r.standard_normal((2, 4, 4)) * 2.0
        P = r.standard_normal(x.shape)

        def build():
            xv = ad.Var(x)
            return proj_loss(ad.sigmoid(xv), P), [xv]

        check_op(build, [x])

    def test_channel_norm(self):
        r = np.random.default_rng(5)
        x = r.standard_normal((3, 6, 6)) * 1.5 + 0.3
        gamma = r.standard_normal(3) * 0.5 + 1.0
        beta = r.standard_normal(3) * 0.2
        P = r.standard_normal(x.shape)

        def build():
            xv, gv, bv = ad.Var(x), ad.Var(gamma), ad.Var(beta)
            return proj_loss(ad.channel_norm(xv, gv, bv), P), [xv, gv, bv]

        check_op(build, [x, gamma, beta])

    def test_upsample2x(self):
        r = np.random.default_rng(6)
        x = r.standard_normal((2, 4, 5))
        P = r.standard_normal((2, 8, 10))

        def build():
            xv = ad.Var(x)
            return proj_loss(ad.upsample2x(xv), P), [xv]

        check_op(build, [x])

    def test_concat_channels(self):
        r = np.random.default_rng(7)
        a = r.standard_normal((2, 4, 4))
        b = r.standard_normal((3, 4, 4))
        P = r.standard_normal((5, 4, 4))

        def build():
            av, bv = ad.Var(a), ad.Var(b)
            return proj_loss(ad.concat_channels([av, bv]), P), [av, bv]

        check_op(build, [a, b])

    def test_measurement_loss_through_forward_model(self):
        r = np.random.default_rng(8)
        fm = ForwardModel(Psf(r.random((8, 8)) + 0.05),
                          MaskStack(r.random((2, 8, 8)), "custom"))
        v = r.random((2, 8, 8))
        b = r.random((8, 8))

        def build():
            vv = ad.Var(v)
            return ad.measurement_mse(vv, fm, b), [vv]

        check_op(build, [v])

    def test_measurement_loss_with_pixel_weight(self):
        r = np.random.default_rng(9)
        fm = ForwardModel(Psf(r.random((8, 8)) + 0.05), np.ones((1, 8, 8)))
        v = r.random((1, 8, 8))
        b = r.random((8, 8))
        weight = (r.random((8, 8)) > 0.3).astype(np.float64)

        def build():
            vv = ad.Var(v)
            return ad.measurement_mse(vv, fm, b, weight=weight), [vv]

        check_op(build, [v])


class TestGraphMechanics:
    def test_reused_node_accumulates(self, f64):
        x = np.array([1.5, -0.7, 2.0])
        P = np.array([1.0, 2.0, 3.0])

        def build():
            xv = ad.Var(x)
            a = ad.leaky_relu(xv, 0.5, name="a")
            b = ad.leaky_relu(xv, 0.5, name="b")
            y = ad.concat_channels([a, b])
            return proj_loss(y, np.concatenate([P, P])), [xv]

        check_op(build, [x])

    def test_non_finite_activation_names_layer(self):
        x = ad.Var(np.array([[np.inf]])[None])
        with pytest.raises(FloatingPointError, match="down3_act"):
            ad.leaky_relu(x, 0.2, name="down3_act")

    def test_zero_weight_conv_matches_kernel(self):
        r = np.random.default_rng(10)
        x = r.standard_normal((2, 5, 5)).astype(np.float32)
        w = r.standard_normal((3, 2, 3, 3)).astype(np.float32)
        y = ad.conv2d(ad.Var(x), ad.Var(w), None, stride=1).value
        assert np.array_equal(y, conv2d_forward(x, w, None, 1))
