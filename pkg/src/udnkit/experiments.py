"""Experiment orchestration: specs, simulation, solver runs, reports.

An :class:`ExperimentSpec` is a fully serializable description of one
measurement-and-reconstruction run (scene/PSF sources, mask parameters,
solver selection, seeds); identical specs reproduce identical outputs in
64-bit single-threaded mode.  ``run_experiment`` writes every artifact
(tensors, traces, metrics, record) under the spec's output directory.
"""
import hashlib
import json
import platform
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import precision
from .core import downsample_mean, require_finite
from .forward_model import ForwardModel, MaskStack, Psf
from .masks import make_erasure_mask, make_filter_masks, make_shutter_masks
from .metrics import compute_metrics
from .solvers import FistaConfig, SolverDivergence, fista_tv
from .synth import make_scene, synth_caustic_psf
from .tensorio import load_array, read_tensor, write_tensor
from .udn import UdnArchitecture, UdnConfig, reconstruct_udn

MODALITIES = ("2d-erasures", "video", "hyperspectral")


class SpecError(ValueError):
    """Invalid experiment specification (CLI exit code 2)."""


@dataclass
class ExperimentSpec:
    modality: str
    H: int
    W: int
    K: int = 1
    scene: dict = field(default_factory=lambda: {"generator": "blobs"})
    psf: dict = field(default_factory=lambda: {"generator": "caustic"})
    mask: dict = field(default_factory=dict)
    downsample: int = 1
    noise_sigma: float = 0.0
    solvers: dict = field(default_factory=dict)
    metrics: bool = True
    best_by: str = "mse"
    out_dir: str = "runs/experiment"
    seed: int = 0

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise SpecError(f"unknown modality {self.modality!r}; "
                            f"expected one of {MODALITIES}")
        if self.H < 1 or self.W < 1 or self.K < 1:
            raise SpecError(f"bad extents H={self.H} W={self.W} K={self.K}")
        if self.downsample < 1:
            raise SpecError("downsample factor must be >= 1")
        if self.noise_sigma < 0:
            raise SpecError("noise_sigma must be >= 0")
        for name in self.solvers:
            if name not in ("fista", "udn"):
                raise SpecError(f"unknown solver {name!r}")
        if self.modality == "2d-erasures" and self.K != 1:
            raise SpecError("2d-erasures runs have K = 1")

    # -- serialization ----------------------------------------------------

    @classmethod
    def from_json(cls, path):
        try:
            payload = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise SpecError(f"cannot read spec {path}: {e}") from e
        return cls.from_dict(payload)

    @classmethod
    def from_dict(cls, payload):
        known = set(cls.__dataclass_fields__)
        unknown = set(payload) - known
        if unknown:
            raise SpecError(f"unknown spec fields {sorted(unknown)}")
        try:
            return cls(**payload)
        except TypeError as e:
            raise SpecError(str(e)) from e

    def to_dict(self):
        return asdict(self)

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))

    def spec_hash(self):
        """Digest of every semantically meaningful field (out_dir excluded)."""
        payload = self.to_dict()
        payload.pop("out_dir")
        blob = json.dumps(payload, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


# ---------------------------------------------------------------------------
# measurement simulation
# ---------------------------------------------------------------------------

def _resolve_psf(spec):
    cfg = dict(spec.psf)
    if "file" in cfg:
        raw = load_array(cfg["file"])
        if spec.downsample > 1:
            raw = downsample_mean(raw, spec.downsample)
        return Psf(raw)
    generator = cfg.pop("generator", "caustic")
    if generator != "caustic":
        raise SpecError(f"unknown psf generator {generator!r}")
    cfg.setdefault("seed", spec.seed)
    return synth_caustic_psf(spec.H, spec.W, **cfg)


def _resolve_scene(spec):
    cfg = dict(spec.scene)
    if "file" in cfg:
        path = cfg["file"]
        try:
            raw = load_array(path)
        except OSError as e:
            raise SpecError(f"scene file {path}: {e}") from e
        if raw.ndim == 2:
            raw = raw[None]
        if spec.downsample > 1:
            raw = downsample_mean(raw, spec.downsample)
        if raw.shape != (spec.K, spec.H, spec.W):
            raise SpecError(f"scene file shape {raw.shape} != "
                            f"{(spec.K, spec.H, spec.W)}")
        return precision.asfloat(np.clip(raw, 0.0, 1.0))
    generator = cfg.pop("generator", "blobs")
    cfg.setdefault("seed", spec.seed)
    if generator == "camera":
        cfg.pop("seed")
    return make_scene(generator, spec.H, spec.W, K=spec.K, **cfg)


def _resolve_masks(spec):
    cfg = dict(spec.mask)
    if "file" in cfg:
        return MaskStack(read_tensor(cfg["file"]), cfg.get("kind", "custom"))
    if spec.modality == "2d-erasures":
        return make_erasure_mask(spec.H, spec.W,
                                 cfg.get("erase_fraction", 0.0),
                                 seed=cfg.get("seed", spec.seed))
    if spec.modality == "video":
        mode = cfg.get("mode", "dual")
        r = cfg.get("lines_per_frame", 1)
        masks = make_shutter_masks(spec.H, spec.W, r, mode)
        if masks.K != spec.K:
            raise SpecError(f"shutter geometry yields K={masks.K}, "
                            f"spec says K={spec.K}")
        return masks
    superpixel = tuple(cfg.get("superpixel", (spec.K, 1)))
    response = None
    if "response_file" in cfg:
        response = read_tensor(cfg["response_file"])
    return make_filter_masks(spec.H, spec.W, spec.K, superpixel, response)


def simulate_measurement(spec):
    """Build the forward model, apply it to the ground truth, add noise.

    Returns ``(b, fm, ground_truth)``.
    """
    try:
        psf = _resolve_psf(spec)
        masks = _resolve_masks(spec)
        gt = _resolve_scene(spec)
    except ValueError as e:
        if isinstance(e, SpecError):
            raise
        raise SpecError(str(e)) from e
    fm = ForwardModel(psf, masks)
    b = fm.apply(gt)
    if spec.noise_sigma > 0:
        rng = np.random.Generator(
            np.random.Philox(key=np.uint64(spec.seed) + (2 << 32)))
        b = b + precision.asfloat(spec.noise_sigma
                                  * rng.standard_normal(b.shape))
    return b, fm, gt


# ---------------------------------------------------------------------------
# solver execution and records
# ---------------------------------------------------------------------------

def _fista_runs(spec, fm, b, out):
    cfg_common = dict(spec.solvers["fista"])
    taus = cfg_common.pop("taus", None) or [cfg_common.pop("tau", 1e-4)]
    runs = {}
    for tau in taus:
        solver_id = f"fista_tau{tau:g}"
        entry = {"solver": "fista", "tau": tau, "status": "ok"}
        try:
            cfg = FistaConfig(tau=tau, **cfg_common)
            rep = fista_tv(fm, b, cfg)
            est_path = out / f"{solver_id}_estimate.udnt"
            trace_path = out / f"{solver_id}_trace.csv"
            rep.save(est_path, trace_path)
            entry.update(estimate=str(est_path), trace=str(trace_path),
                         iterations=rep.iterations_run,
                         final_objective=float(rep.objective_trace[-1]),
                         wall_time=rep.wall_time)
        except SolverDivergence as e:
            entry.update(status="diverged", error=str(e), iteration=e.iteration)
        except (ValueError, FloatingPointError) as e:
            entry.update(status="failed", error=str(e))
        runs[solver_id] = entry
    return runs


def _udn_run(spec, fm, b, out):
    cfg_in = dict(spec.solvers["udn"])
    arch_in = cfg_in.pop("arch", {})
    arch_in.setdefault("output_channels", spec.K)
    entry = {"solver": "udn", "status": "ok"}
    try:
        arch = UdnArchitecture(**arch_in)
        cfg = UdnConfig(**cfg_in)
        res = reconstruct_udn(fm, b, arch, cfg, seed=spec.seed)
        est_path = out / "udn_estimate.udnt"
        write_tensor(est_path, res.estimate)
        trace_path = out / "udn_trace.csv"
        with open(trace_path, "w") as f:
            f.write("iteration,train_loss,holdout_loss,seconds\n")
            hold = {s.iteration: s.holdout_loss for s in res.snapshots}
            for i, (loss, sec) in enumerate(zip(res.trace, res.seconds_trace), 1):
                h = hold.get(i, float("nan"))
                f.write(f"{i},{loss!r},{h!r},{sec!r}\n")
        entry.update(estimate=str(est_path), trace=str(trace_path),
                     iterations=len(res.trace),
                     selected_iteration=res.selected_iteration,
                     wall_time=res.wall_time)
        if res.diverged_at is not None:
            entry.update(status="diverged-kept-best", iteration=res.diverged_at)
    except (ValueError, FloatingPointError) as e:
        entry.update(status="failed", error=str(e))
    return {"udn": entry}


@dataclass
class RunRecord:
    spec: dict
    spec_hash: str
    measurement: str
    ground_truth: str
    psf: str
    solvers: dict
    best_fista: dict
    environment: dict
    started: float
    finished: float

    def save(self, path):
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True))

    @classmethod
    def load(cls, path):
        return cls(**json.loads(Path(path).read_text()))

    def referenced_files(self):
        refs = [self.measurement, self.ground_truth, self.psf]
        for entry in self.solvers.values():
            for key in ("estimate", "trace", "metrics_csv"):
                if entry.get(key):
                    refs.append(entry[key])
        return refs

    def check_complete(self):
        missing = [p for p in self.referenced_files() if not Path(p).exists()]
        if missing:
            raise FileNotFoundError(f"record references missing files: {missing}")


def run_experiment(spec, solver_filter=None):
    """Simulate (or load) the measurement, run solvers, score, persist.

    A failing solver is recorded and the remaining solvers still run.
    Returns the :class:`RunRecord`; every referenced file exists when it
    is returned.
    """
    started = time.time()
    out = Path(spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    b, fm, gt = simulate_measurement(spec)

    b_path = out / "measurement.udnt"
    gt_path = out / "ground_truth.udnt"
    psf_path = out / "psf.udnt"
    write_tensor(b_path, b)
    write_tensor(gt_path, gt)
    write_tensor(psf_path, fm.psf.image)
    write_tensor(out / "masks.udnt", fm.masks.masks)

    runs = {}
    active = {name: cfg for name, cfg in spec.solvers.items()
              if solver_filter is None or name in solver_filter}
    if "fista" in active:
        runs.update(_fista_runs(spec, fm, b, out))
    if "udn" in active:
        runs.update(_udn_run(spec, fm, b, out))

    if spec.metrics:
        for solver_id, entry in runs.items():
            if entry.get("estimate"):
                est = read_tensor(entry["estimate"])
                rep = compute_metrics(est, gt)
                mpath = out / f"{solver_id}_metrics.csv"
                rep.save_csv(mpath)
                entry["metrics_csv"] = str(mpath)
                entry["metrics"] = {
                    k: getattr(rep, k) for k in rep.AGGREGATE_FIELDS
                    if getattr(rep, k) is not None}

    best = _select_best_fista(runs, spec.best_by)
    record = RunRecord(
        spec=spec.to_dict(),
        spec_hash=spec.spec_hash(),
        measurement=str(b_path),
        ground_truth=str(gt_path),
        psf=str(psf_path),
        solvers=runs,
        best_fista=best,
        environment={
            "python": sys.version.split()[0],
            "numpy": np.__version__,
            "platform": platform.platform(),
            "precision": precision.precision_name(),
        },
        started=started,
        finished=time.time(),
    )
    record.save(out / "record.json")
    record.check_complete()
    return record


def _select_best_fista(runs, best_by):
    """Best FISTA run per metric; the headline pick follows ``best_by``.

    Higher-is-better metrics flip the comparison.  (The paper's selection
    metric is out of scope here, so the criterion is an explicit field.)
    """
    higher_better = {"ssim", "ms_ssim", "psnr"}
    fista = {sid: e for sid, e in runs.items()
             if e.get("solver") == "fista" and e.get("metrics")}
    if not fista:
        return {}
    per_metric = {}
    metric_names = set()
    for e in fista.values():
        metric_names.update(e["metrics"])
    for m in metric_names:
        scored = [(sid, e["metrics"][m]) for sid, e in fista.items()
                  if m in e["metrics"]]
        pick = (max if m in higher_better else min)(scored, key=lambda t: t[1])
        per_metric[m] = pick[0]
    return {"by": best_by, "solver": per_metric.get(best_by),
            "per_metric": per_metric}


# ---------------------------------------------------------------------------
# reporting
# ---------------------------------------------------------------------------

FALSECOLOR_CENTERS = (0.25, 0.5, 0.75)     # B, G, R band positions
FALSECOLOR_WIDTH = 0.15


def falsecolor_composite(cube):
    """Map a (K, H, W) spectral cube to RGB with fixed Gaussian band
    weights: blue/green/red response curves centered at 25/50/75% of the
    band range, width 15%."""
    cube = np.asarray(cube, np.float64)
    K = cube.shape[0]
    t = np.linspace(0.0, 1.0, K) if K > 1 else np.array([0.5])
    rgb = []
    for center in reversed(FALSECOLOR_CENTERS):       # R, G, B
        w = np.exp(-0.5 * ((t - center) / FALSECOLOR_WIDTH) ** 2)
        rgb.append(np.tensordot(w / w.sum(), cube, axes=(0, 0)))
    img = np.stack(rgb, axis=-1)
    peak = img.max()
    if peak > 0:
        img = img / peak
    return img


def report(records, out_dir):
    """Comparison tables and figure-ready data for a set of run records.

    Emits a summary table over records, per-frame / per-wavelength metric
    curves for K>1 records, and false-color composites for hyperspectral
    estimates.  Records of mixed modality are rejected.
    """
    if not records:
        raise ValueError("report needs at least one record")
    modalities = {r.spec["modality"] for r in records}
    if len(modalities) != 1:
        raise ValueError(f"inconsistent record set: modalities {sorted(modalities)}")
    modality = modalities.pop()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    solver_ids = sorted({sid for r in records for sid in r.solvers})
    metric_names = sorted({m for r in records for e in r.solvers.values()
                           for m in e.get("metrics", {})})
    rows = []
    header = ["record", "erase_fraction"] + [
        f"{sid}:{m}" for sid in solver_ids for m in metric_names]
    for i, rec in enumerate(records):
        frac = rec.spec.get("mask", {}).get("erase_fraction", "")
        row = [str(i), str(frac)]
        for sid in solver_ids:
            metrics = rec.solvers.get(sid, {}).get("metrics", {})
            row += ["" if m not in metrics else repr(metrics[m])
                    for m in metric_names]
        rows.append(row)
    table = out / "summary.csv"
    with open(table, "w") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(row) + "\n")
    written = [table]

    if modality in ("video", "hyperspectral"):
        axis = "frame" if modality == "video" else "wavelength"
        for i, rec in enumerate(records):
            gt = read_tensor(rec.ground_truth)
            curve_path = out / f"record{i}_per_{axis}.csv"
            curves = {}
            for sid in sorted(rec.solvers):
                entry = rec.solvers[sid]
                if not entry.get("estimate"):
                    continue
                est = read_tensor(entry["estimate"])
                rep = compute_metrics(est, gt)
                curves[sid] = rep.per_slice
                if modality == "hyperspectral":
                    _save_png(out / f"record{i}_{sid}_falsecolor.png",
                              falsecolor_composite(est))
                    written.append(out / f"record{i}_{sid}_falsecolor.png")
            if curves:
                with open(curve_path, "w") as f:
                    names = ["mse", "psnr", "ssim"]
                    f.write(axis + "," + ",".join(
                        f"{sid}:{m}" for sid in curves for m in names) + "\n")
                    for k in range(gt.shape[0]):
                        cells = [str(k)]
                        for sid in curves:
                            cells += [repr(curves[sid][m][k]) for m in names]
                        f.write(",".join(cells) + "\n")
                written.append(curve_path)
            if modality == "hyperspectral":
                _save_png(out / f"record{i}_gt_falsecolor.png",
                          falsecolor_composite(gt))
    return written


def _save_png(path, img):
    from PIL import Image

    arr = (np.clip(img, 0.0, 1.0) * 255.0).round().astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path)
