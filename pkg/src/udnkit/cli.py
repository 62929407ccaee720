"""Command-line interface.

Subcommands share one option set: --spec (JSON experiment spec), --out
(override the spec's output directory), --seed, --precision, --threads.
Exit codes: 0 success, 2 spec validation failure, 3 solver divergence.

Heavy imports happen after --threads is applied so the thread caps
actually reach the numeric libraries.
"""
import argparse
import os
import sys

EXIT_OK = 0
EXIT_SPEC = 2
EXIT_DIVERGED = 3


def build_parser():
    parser = argparse.ArgumentParser(
        prog="udnkit",
        description="Mask-based lensless compressive imaging toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, doc in [
        ("simulate", "build the forward model and write the measurement"),
        ("fista", "run the FISTA+TV baseline from a spec"),
        ("udn", "run the untrained-network reconstruction from a spec"),
        ("evaluate", "recompute metrics for a finished run directory"),
        ("report", "emit comparison tables/figures for finished runs"),
    ]:
        p = sub.add_parser(name, help=doc)
        p.add_argument("--spec", required=True, help="experiment spec (JSON)")
        p.add_argument("--out", default=None, help="output directory override")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--precision", choices=("f32", "f64"), default=None)
        p.add_argument("--threads", type=int, default=None)
    return parser


def _apply_threads(n):
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS"):
        os.environ[var] = str(n)


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.threads is not None:
        _apply_threads(args.threads)

    from . import precision
    from .experiments import ExperimentSpec, SpecError

    if args.precision is not None:
        precision.set_precision(args.precision)

    try:
        spec = ExperimentSpec.from_json(args.spec)
        if args.out is not None:
            spec.out_dir = args.out
        if args.seed is not None:
            spec.seed = args.seed
        return _dispatch(args.command, spec)
    except SpecError as e:
        print(f"spec error: {e}", file=sys.stderr)
        return EXIT_SPEC


def _dispatch(command, spec):
    from pathlib import Path

    from .experiments import RunRecord, report, run_experiment, simulate_measurement
    from .tensorio import write_tensor

    if command == "simulate":
        out = Path(spec.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        b, fm, gt = simulate_measurement(spec)
        write_tensor(out / "measurement.udnt", b)
        write_tensor(out / "ground_truth.udnt", gt)
        write_tensor(out / "psf.udnt", fm.psf.image)
        print(f"wrote measurement {b.shape} to {out}")
        return EXIT_OK

    if command in ("fista", "udn"):
        if command not in spec.solvers:
            print(f"spec error: spec has no {command!r} solver section",
                  file=sys.stderr)
            return EXIT_SPEC
        record = run_experiment(spec, solver_filter={command})
        for sid, e in record.solvers.items():
            print(f"{sid}: {e['status']}"
                  + (f" ({e.get('error', '')})" if e["status"] != "ok" else ""))
        statuses = {e["status"] for e in record.solvers.values()}
        if "diverged" in statuses or "diverged-kept-best" in statuses:
            return EXIT_DIVERGED
        if "failed" in statuses:
            return EXIT_SPEC
        return EXIT_OK

    if command == "evaluate":
        return _evaluate(spec)

    if command == "report":
        records = sorted(Path(spec.out_dir).glob("**/record.json"))
        if not records:
            print(f"no record.json under {spec.out_dir}", file=sys.stderr)
            return EXIT_SPEC
        loaded = [RunRecord.load(p) for p in records]
        written = report(loaded, Path(spec.out_dir) / "report")
        for path in written:
            print(f"wrote {path}")
        return EXIT_OK

    raise AssertionError(f"unhandled command {command}")


def _evaluate(spec):
    from pathlib import Path

    from .experiments import RunRecord
    from .metrics import compute_metrics
    from .tensorio import read_tensor

    record_path = Path(spec.out_dir) / "record.json"
    if not record_path.exists():
        print(f"no record.json in {spec.out_dir}; run a solver first",
              file=sys.stderr)
        return EXIT_SPEC
    record = RunRecord.load(record_path)
    gt = read_tensor(record.ground_truth)
    for solver_id, entry in record.solvers.items():
        if not entry.get("estimate"):
            continue
        rep = compute_metrics(read_tensor(entry["estimate"]), gt)
        mpath = Path(spec.out_dir) / f"{solver_id}_metrics.csv"
        rep.save_csv(mpath)
        entry["metrics_csv"] = str(mpath)
        entry["metrics"] = {k: getattr(rep, k) for k in rep.AGGREGATE_FIELDS
                            if getattr(rep, k) is not None}
        print(f"{solver_id}: mse={rep.mse:.6g} ssim={rep.ssim:.4f}")
    record.save(record_path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
