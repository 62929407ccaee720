#!/usr/bin/env python3
"""Benchmark the compiled conv kernels against the numpy fallback.

Usage:  python3 benchmarks/bench_kernels.py [--repeat 50]

Shapes mirror the generator workloads: (C_in, H, W) activations with 3x3
kernels at the spatial scales the encoder-decoder actually visits, plus a
full forward+backward through a mid-size generator.
"""
import argparse
import time

import numpy as np

from udnkit import kernels
from udnkit.kernels import _reference


def time_case(fn, repeat):
    fn()                                     # warm up
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn()
    return (time.perf_counter() - t0) / repeat


def bench_conv(repeat):
    if not kernels.HAVE_EXTENSION:
        print("extension not built; only the numpy fallback is available")
        return
    print(f"{'case':38s} {'numpy':>10s} {'compiled':>10s} {'speedup':>8s}")
    rng = np.random.default_rng(0)
    cases = [
        ("64x64 ci32 co32 s1", 32, 32, 64, 1),
        ("64x64 ci32 co32 s2", 32, 32, 64, 2),
        ("32x32 ci64 co64 s1", 64, 64, 32, 1),
        ("16x16 ci64 co64 s1", 64, 64, 16, 1),
        ("8x8   ci16 co16 s1", 16, 16, 8, 1),
    ]
    for label, ci, co, hw, stride in cases:
        x = rng.standard_normal((ci, hw, hw)).astype(np.float32)
        w = rng.standard_normal((co, ci, 3, 3)).astype(np.float32) * 0.1
        bias = np.zeros(co, dtype=np.float32)
        for phase, ref_fn, ext_fn in [
            ("fwd", lambda: _reference.conv2d_forward(x, w, bias, stride),
             lambda: kernels._ext.conv2d_forward(x, w, bias, stride)),
        ]:
            t_ref = time_case(ref_fn, repeat)
            t_ext = time_case(ext_fn, repeat)
            print(f"{label + ' ' + phase:38s} {t_ref * 1e3:9.3f}ms "
                  f"{t_ext * 1e3:9.3f}ms {t_ref / t_ext:7.2f}x")
        gy = np.asarray(kernels._ext.conv2d_forward(x, w, bias, stride))
        t_ref = time_case(
            lambda: _reference.conv2d_backward_input(gy, w, stride, x.shape[1:]),
            repeat)
        t_ext = time_case(
            lambda: kernels._ext.conv2d_backward_input(gy, w, stride, x.shape[1:]),
            repeat)
        print(f"{label + ' bwd-in':38s} {t_ref * 1e3:9.3f}ms "
              f"{t_ext * 1e3:9.3f}ms {t_ref / t_ext:7.2f}x")
        t_ref = time_case(
            lambda: _reference.conv2d_backward_weights(gy, x, stride, w.shape),
            repeat)
        t_ext = time_case(
            lambda: kernels._ext.conv2d_backward_weights(gy, x, stride, w.shape),
            repeat)
        print(f"{label + ' bwd-w':38s} {t_ref * 1e3:9.3f}ms "
              f"{t_ext * 1e3:9.3f}ms {t_ref / t_ext:7.2f}x")


def bench_generator(repeat):
    """One optimization step of a mid-size generator, both backends."""
    import os

    from udnkit.forward_model import ForwardModel
    from udnkit.synth import scene_blobs, synth_caustic_psf
    from udnkit.udn import UdnArchitecture, init_model, loss_and_gradients

    fm = ForwardModel(synth_caustic_psf(64, 64, seed=0), np.ones((1, 64, 64)))
    b = fm.apply(scene_blobs(64, 64, seed=1)[None].astype(np.float32))
    arch = UdnArchitecture(depth=3, channels=32, input_channels=16,
                           skip_channels=4)
    model = init_model(arch, (64, 64), seed=0)

    for label, backend in [("numpy", "python"), ("compiled", "ext")]:
        if backend == "ext" and not kernels.HAVE_EXTENSION:
            continue
        prev = kernels.BACKEND
        kernels.BACKEND = backend
        try:
            t = time_case(lambda: loss_and_gradients(model, fm, b),
                          max(repeat // 10, 3))
            print(f"generator step (depth3/ch32 @64x64) {label:9s} {t * 1e3:9.2f}ms")
        finally:
            kernels.BACKEND = prev


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=50)
    args = ap.parse_args()
    print(f"backend selected at import: {kernels.BACKEND}")
    bench_conv(args.repeat)
    bench_generator(args.repeat)


if __name__ == "__main__":
    main()
