"""Untrained encoder-decoder reconstruction.

A fixed-topology generator with randomly initialized weights and a fixed
random input is optimized by Adam against a single measurement through
the differentiable forward model; the reconstruction is the generator
output at the early-stopping snapshot.  No training data is involved --
the weights are re-optimized from scratch for every measurement.
"""
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import precision
from .core import require_finite
from .tensorio import read_tensor, write_tensor


@dataclass
class UdnArchitecture:
    """Generator topology; fixed before a solve and immutable during it."""

    depth: int = 5
    channels: int = 64
    skip_channels: int = 4
    kernel_size: int = 3
    input_channels: int = 32
    output_channels: int = 1
    leaky_slope: float = 0.2
    norm_eps: float = 1e-5
    z_scale: float = 0.1

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.kernel_size % 2 != 1:
            raise ValueError("kernel_size must be odd")
        if min(self.channels, self.skip_channels, self.input_channels,
               self.output_channels) < 1:
            raise ValueError("channel counts must be positive")


@dataclass
class UdnConfig:
    max_iters: int = 5000
    step_size: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    snapshot_every: int = 100
    early_stop: str = "best-loss"          # or "held-out-pixels"
    holdout_fraction: float = 0.02
    patience: int = None                   # in snapshots; None disables

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.early_stop not in ("best-loss", "held-out-pixels"):
            raise ValueError(f"unknown early_stop mode {self.early_stop!r}")
        if not 0.0 < self.holdout_fraction < 1.0:
            if self.early_stop == "held-out-pixels":
                raise ValueError("holdout_fraction must be in (0, 1)")


class UdnModel:
    """Weights plus the fixed latent input z for one reconstruction."""

    def __init__(self, arch, shape, weights, z, seed):
        self.arch = arch
        self.shape = tuple(shape)
        self.weights = weights      # ordered dict name -> ndarray
        self.z = z                  # (input_channels, H, W), immutable
        self.seed = seed

    def parameter_count(self):
        return sum(w.size for w in self.weights.values())


def save_checkpoint(model, directory, iteration=0):
    """Persist a model as a bundle: one tensor container per weight plus
    z, and a manifest recording architecture constants, seed, iteration,
    and the weight order."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_tensor(d / "z.udnt", model.z)
    for name, w in model.weights.items():
        write_tensor(d / f"{name}.udnt", w)
    manifest = {
        "arch": asdict(model.arch),
        "shape": list(model.shape),
        "seed": int(model.seed),
        "iteration": int(iteration),
        "weights": list(model.weights),
    }
    (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def load_checkpoint(directory):
    """Rebuild a model from :func:`save_checkpoint` output.

    Returns ``(model, iteration)``; weights and z round-trip bit-exactly.
    """
    d = Path(directory)
    manifest = json.loads((d / "manifest.json").read_text())
    arch = UdnArchitecture(**manifest["arch"])
    weights = {name: read_tensor(d / f"{name}.udnt")
               for name in manifest["weights"]}
    z = read_tensor(d / "z.udnt")
    model = UdnModel(arch, tuple(manifest["shape"]), weights, z,
                     manifest["seed"])
    return model, manifest["iteration"]


def _layer_plan(arch):
    """Ordered (name, shape info) for every parameter tensor.

    Convolutions followed by a channel norm carry no bias (the norm
    subtracts the per-channel mean, so such a bias has zero gradient);
    only the output head keeps one.
    """
    ch, sk, k = arch.channels, arch.skip_channels, arch.kernel_size
    plan = []
    cin = arch.input_channels
    for lvl in range(arch.depth):
        # skip branch taps the encoder input of this level (same resolution
        # the decoder returns to after its upsample)
        plan.append((f"skip{lvl}_conv", (sk, cin, 1, 1)))
        plan.append((f"skip{lvl}_norm", sk))
        plan.append((f"down{lvl}_conv0", (ch, cin, k, k)))
        plan.append((f"down{lvl}_norm0", ch))
        plan.append((f"down{lvl}_conv1", (ch, ch, k, k)))
        plan.append((f"down{lvl}_norm1", ch))
        cin = ch
    for lvl in reversed(range(arch.depth)):
        plan.append((f"up{lvl}_conv0", (ch, ch + sk, k, k)))
        plan.append((f"up{lvl}_norm0", ch))
        plan.append((f"up{lvl}_conv1", (ch, ch, k, k)))
        plan.append((f"up{lvl}_norm1", ch))
    plan.append(("head_conv", (arch.output_channels, ch, 1, 1)))
    return plan


def init_model(arch, shape, seed=0):
    """Deterministic model: z then weights drawn from one Philox stream.

    Conv weights are fan-in scaled uniform U(-1/sqrt(fan_in), 1/sqrt(fan_in))
    with zero biases; norms start at identity (gamma 1, beta 0).  Two calls
    with equal (arch, shape, seed) produce bit-identical models.
    """
    H, W = shape
    stride_total = 2 ** arch.depth
    if H % stride_total or W % stride_total:
        need_h = (H // stride_total + 1) * stride_total
        need_w = (W // stride_total + 1) * stride_total
        raise ValueError(
            f"scene extent {(H, W)} not divisible by 2^depth={stride_total}; "
            f"pad to at least {(need_h, need_w)}")
    dtype = precision.get_dtype()
    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    z = (arch.z_scale * rng.random((arch.input_channels, H, W))).astype(dtype)
    weights = {}
    for name, spec in _layer_plan(arch):
        if "conv" in name:
            co, ci, kh, kw = spec
            bound = 1.0 / np.sqrt(ci * kh * kw)
            weights[name + "_w"] = rng.uniform(-bound, bound,
                                               (co, ci, kh, kw)).astype(dtype)
            if name == "head_conv":
                weights[name + "_b"] = np.zeros(co, dtype=dtype)
        else:
            weights[name + "_g"] = np.ones(spec, dtype=dtype)
            weights[name + "_bt"] = np.zeros(spec, dtype=dtype)
    return UdnModel(arch, shape, weights, z, seed)


def _forward_graph(model):
    """Build the generator graph; returns (output Var, params dict of Vars)."""
    arch = model.arch
    params = {k: ad.Var(v, name=k) for k, v in model.weights.items()}

    def conv(x, name, stride=1):
        bias = params.get(name + "_b")
        return ad.conv2d(x, params[name + "_w"], bias, stride=stride, name=name)

    def norm(x, name):
        return ad.channel_norm(x, params[name + "_g"], params[name + "_bt"],
                               eps=arch.norm_eps, name=name)

    def act(x, name):
        return ad.leaky_relu(x, arch.leaky_slope, name=name)

    x = ad.Var(model.z, name="z")
    skips = []
    for lvl in range(arch.depth):
        skips.append(act(norm(conv(x, f"skip{lvl}_conv"), f"skip{lvl}_norm"),
                         f"skip{lvl}_act"))
        x = act(norm(conv(x, f"down{lvl}_conv0", stride=2), f"down{lvl}_norm0"),
                f"down{lvl}_act0")
        x = act(norm(conv(x, f"down{lvl}_conv1"), f"down{lvl}_norm1"),
                f"down{lvl}_act1")
    for lvl in reversed(range(arch.depth)):
        x = ad.upsample2x(x, name=f"up{lvl}_upsample")
        x = ad.concat_channels([x, skips[lvl]], name=f"up{lvl}_concat")
        x = act(norm(conv(x, f"up{lvl}_conv0"), f"up{lvl}_norm0"), f"up{lvl}_act0")
        x = act(norm(conv(x, f"up{lvl}_conv1"), f"up{lvl}_norm1"), f"up{lvl}_act1")
    out = ad.sigmoid(conv(x, "head_conv"), name="head_squash")
    return out, params


def generate(model):
    """Deterministic forward pass G(z; W); output cube in [0, 1]^(K, H, W)."""
    return _forward_graph(model)[0].value


def loss_and_gradients(model, fm, b, pixel_weight=None):
    """Measurement-domain MSE and its gradient for every weight tensor."""
    out, params = _forward_graph(model)
    loss = ad.measurement_mse(out, fm, b, weight=pixel_weight)
    ad.backward(loss)
    grads = {k: (p.grad if p.grad is not None else np.zeros_like(p.value))
             for k, p in params.items()}
    return float(loss.value), grads


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(model, grads, state, cfg):
    """Standard bias-corrected Adam update, in place on the model weights."""
    state.t += 1
    b1, b2 = cfg.beta1, cfg.beta2
    correct1 = 1.0 - b1 ** state.t
    correct2 = 1.0 - b2 ** state.t
    for k, w in model.weights.items():
        g = grads[k]
        if k not in state.m:
            state.m[k] = np.zeros_like(w)
            state.v[k] = np.zeros_like(w)
        state.m[k] = b1 * state.m[k] + (1.0 - b1) * g
        state.v[k] = b2 * state.v[k] + (1.0 - b2) * (g * g)
        m_hat = state.m[k] / correct1
        v_hat = state.v[k] / correct2
        w -= (cfg.step_size * m_hat / (np.sqrt(v_hat) + cfg.eps)).astype(w.dtype)
    return model, state


@dataclass
class Snapshot:
    iteration: int
    train_loss: float
    holdout_loss: float
    estimate: np.ndarray


@dataclass
class UdnResult:
    estimate: np.ndarray
    trace: np.ndarray                  # training loss per iteration
    snapshots: list
    selected_iteration: int
    seconds_trace: np.ndarray
    holdout_pixels: np.ndarray         # bool sensor mask, or None
    diverged_at: int = None
    wall_time: float = 0.0


def _masked_mse(model, est, b, weight):
    resid = model.apply(est) - b
    r = resid if weight is None else resid * weight
    n = b.size if weight is None else float(weight.sum())
    return float(np.sum(r.astype(np.float64) * r) / n)


def sample_holdout(fm, fraction, seed):
    """Boolean sensor mask of held-out pixels, drawn only from pixels the
    mask stack actually measures (never from erased ones)."""
    measured = fm.masks.masks.sum(axis=0) > 0
    idx = np.flatnonzero(measured.ravel())
    n_hold = int(np.floor(fraction * idx.size + 0.5))
    if n_hold < 1:
        raise ValueError(f"holdout fraction {fraction} selects no pixels")
    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed) + (1 << 32)))
    chosen = rng.permutation(idx.size)[:n_hold]
    hold = np.zeros(measured.size, dtype=bool)
    hold[idx[chosen]] = True
    return hold.reshape(measured.shape)


def reconstruct_udn(fm, b, arch, cfg, seed=0):
    """Optimize the generator against one measurement; returns a UdnResult.

    Snapshots are taken every ``cfg.snapshot_every`` iterations and at the
    end; the returned estimate is the snapshot chosen by the early-stop
    rule (best training loss, or best held-out-pixel loss).  On divergence
    the best snapshot so far is preserved and reported.
    """
    b = precision.asfloat(require_finite(b, "measurement"))
    if b.shape != fm.sensor_shape:
        raise ValueError(f"measurement shape {b.shape} != {fm.sensor_shape}")
    if arch.output_channels != fm.scene_shape[0]:
        raise ValueError(
            f"generator outputs {arch.output_channels} channels but the "
            f"model expects K={fm.scene_shape[0]}")

    dtype = precision.get_dtype()
    holdout = None
    train_weight = None
    hold_weight = None
    if cfg.early_stop == "held-out-pixels":
        holdout = sample_holdout(fm, cfg.holdout_fraction, seed)
        train_weight = (~holdout).astype(dtype)
        hold_weight = holdout.astype(dtype)

    model = init_model(arch, fm.sensor_shape, seed)
    state = AdamState()
    trace, seconds = [], []
    snapshots = []
    best_metric = np.inf
    best_index = -1
    stale = 0
    diverged_at = None
    t0 = time.perf_counter()

    def take_snapshot(iteration):
        nonlocal best_metric, best_index, stale
        est = generate(model)
        tl = _masked_mse(fm, est, b, train_weight)
        hl = _masked_mse(fm, est, b, hold_weight) if holdout is not None else np.nan
        snapshots.append(Snapshot(iteration, tl, hl, est))
        metric = hl if cfg.early_stop == "held-out-pixels" else tl
        if metric < best_metric:
            best_metric = metric
            best_index = len(snapshots) - 1
            stale = 0
        else:
            stale += 1

    for i in range(1, cfg.max_iters + 1):
        try:
            loss, grads = loss_and_gradients(model, fm, b, train_weight)
        except FloatingPointError:
            diverged_at = i
            break
        trace.append(loss)
        seconds.append(time.perf_counter() - t0)
        adam_step(model, grads, state, cfg)
        if i % cfg.snapshot_every == 0 or i == cfg.max_iters:
            take_snapshot(i)
            if cfg.patience is not None and stale >= cfg.patience:
                break

    if not snapshots:
        # diverged before the first snapshot: keep the last finite output
        try:
            take_snapshot(max(len(trace), 1))
        except FloatingPointError:
            snapshots.append(Snapshot(0, np.inf, np.inf,
                                      np.zeros(fm.scene_shape, dtype=dtype)))
            best_index = 0
    chosen = snapshots[best_index]
    return UdnResult(
        estimate=chosen.estimate,
        trace=np.array(trace),
        snapshots=snapshots,
        selected_iteration=chosen.iteration,
        seconds_trace=np.array(seconds),
        holdout_pixels=holdout,
        diverged_at=diverged_at,
        wall_time=time.perf_counter() - t0,
    )
