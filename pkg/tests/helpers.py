"""Shared oracle utilities for the test suite."""
import numpy as np


def materialize(op):
    """Dense matrix of a linear operator via delta probes of apply()."""
    K, H, W = op.scene_shape
    n = K * H * W
    cols = []
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        cols.append(op.apply(e.reshape(K, H, W)).ravel())
    return np.stack(cols, axis=1)


def delta_psf(H, W):
    h = np.zeros((H, W))
    h[H // 2, W // 2] = 1.0
    return h


def rel_err(got, ref):
    ref = np.asarray(ref, dtype=np.float64)
    return float(np.linalg.norm(np.asarray(got, np.float64) - ref) /
                 max(np.linalg.norm(ref), 1e-300))


def full_net_fd_worst_error(model, fm, b, step=1e-3):
    """Worst-case relative error of reverse-mode vs central differences,
    over every weight entry of a generator model.

    Entries far below a tensor's peak gradient are compared against a
    floor of 1% of that peak (an absolute tolerance, as in standard
    gradient checkers), so truncation residue on near-zero entries does
    not masquerade as a formula error.
    """
    import numpy as np

    from udnkit.udn import loss_and_gradients

    _, grads = loss_and_gradients(model, fm, b)
    worst = 0.0
    for name, w in model.weights.items():
        g_fd = np.zeros_like(w)
        flat, gflat = w.ravel(), g_fd.ravel()
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + step
            hi, _ = loss_and_gradients(model, fm, b)
            flat[i] = keep - step
            lo, _ = loss_and_gradients(model, fm, b)
            flat[i] = keep
            gflat[i] = (hi - lo) / (2.0 * step)
        floor = 1e-2 * np.abs(g_fd).max() + 1e-12
        rel = np.abs(grads[name] - g_fd) / np.maximum(np.abs(g_fd), floor)
        worst = max(worst, float(rel.max()))
    return worst


def fd_test_state(arch, fm_seed=1, model_seed=0, shift=5.0):
    """Deterministic model/measurement pair for whole-net gradient checks.

    The norm offsets are shifted so no pre-activation sits inside the
    finite-difference window of the rectifier kink (the kink itself is
    covered by the dedicated layer test).
    """
    import numpy as np

    from udnkit.forward_model import ForwardModel, Psf
    from udnkit.udn import init_model

    r = np.random.default_rng(fm_seed)
    fm = ForwardModel(Psf(r.random((8, 8)) + 0.05), np.ones((1, 8, 8)))
    b = r.random((8, 8))
    model = init_model(arch, (8, 8), seed=model_seed)
    for k in model.weights:
        if k.endswith("_bt"):
            model.weights[k][:] = shift
    return model, fm, b


class ScaledOperator:
    """g * A wrapper, for operator-level scaling-law checks."""

    def __init__(self, op, gain):
        self.op = op
        self.gain = gain
        self.scene_shape = op.scene_shape
        self.sensor_shape = op.sensor_shape

    def apply(self, v):
        return self.gain * self.op.apply(v)

    def adjoint(self, b):
        return self.gain * self.op.adjoint(b)
