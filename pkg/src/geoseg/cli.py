"""Command-line interface.

Subcommands: transform, loss, grad-check, eval, sweep, phantom, optimize.
stdout carries machine-parseable JSON or CSV only; diagnostics go to stderr
as single-line JSON. Exit codes: 0 success, 1 validation error (bad flags,
unreadable or invalid inputs), 2 computation error (including a grad-check
that exceeds its tolerance).
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import losses, metrics, optimize, phantom, transforms, volume

_TRANSFORM_OPS = {
    "fog-x": ("fog", 0),
    "fog-y": ("fog", 1),
    "fog-z": ("fog", 2),
    "sog": ("sog", None),
    "dtm": ("dtm", False),
    "dtm-signed": ("dtm", True),
}


class _ValidationExit(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _ValidationExit(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="geoseg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("transform", help="apply a geometric operator to a volume")
    p.add_argument("--in", dest="infile", required=True, help="input .gvol.json")
    p.add_argument("--op", required=True, choices=sorted(_TRANSFORM_OPS))
    p.add_argument("--stencil", default="central", choices=["central", "forward"])
    p.add_argument("--boundary", default="replicate", choices=["replicate", "zero"])
    p.add_argument("--out", required=True, help="output gvol prefix or .gvol.json")

    p = sub.add_parser("loss", help="evaluate a loss spec on a pred/gt pair")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--spec", required=True, help="loss spec JSON file")
    p.add_argument("--progress", type=float, default=0.0)
    p.add_argument("--grad", default=None, help="optional gvol output for the gradient")

    p = sub.add_parser("grad-check", help="finite-difference check of a loss gradient")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--spec", required=True)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-5)
    p.add_argument("--max-voxels", type=int, default=None)

    p = sub.add_parser("eval", help="lesion-wise metrics at one threshold")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--connectivity", type=int, default=26, choices=[6, 18, 26])
    p.add_argument("--format", default="json", choices=["json", "csv"])

    p = sub.add_parser("sweep", help="metrics across a threshold sweep (CSV)")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--thresholds", default=None, help="comma list or start..end:step")
    p.add_argument("--connectivity", type=int, default=26, choices=[6, 18, 26])
    p.add_argument("--out", default=None, help="write CSV here instead of stdout")

    p = sub.add_parser("phantom", help="generate a synthetic lesion volume")
    p.add_argument("--spec", required=True, help="phantom spec JSON file")
    p.add_argument("--out-prefix", required=True)

    p = sub.add_parser("optimize", help="optimize a probability map against a mask")
    p.add_argument("--gt", required=True)
    p.add_argument("--config", required=True, help="optimizer config JSON file")
    p.add_argument("--out-prefix", required=True)

    return parser


def _parse_thresholds(text: str) -> list[float]:
    """Either '0.1,0.5,0.9' or 'start..end:step' (both ends inclusive)."""
    if ".." in text:
        span, _, step_s = text.partition(":")
        if not step_s:
            raise ValueError(f"range syntax is start..end:step, got {text!r}")
        start_s, _, end_s = span.partition("..")
        start, end, step = float(start_s), float(end_s), float(step_s)
        if step <= 0:
            raise ValueError("threshold step must be > 0")
        count = int(np.floor((end - start) / step + 1e-9)) + 1
        values = [round(start + i * step, 12) for i in range(max(count, 0))]
    else:
        values = [float(v) for v in text.split(",") if v.strip()]
    if not values:
        raise ValueError(f"no thresholds in {text!r}")
    for v in values:
        if not 0.0 < v < 1.0:
            raise ValueError(f"thresholds must lie in (0, 1), got {v}")
    return values


def _load_json(path):
    with open(path) as fh:
        return json.load(fh)


def _fail(code: int, message: str) -> int:
    print(json.dumps({"error": message}), file=sys.stderr)
    return code


def _load_pair(pred_path, gt_path):
    pred = volume.read_gvol(pred_path)
    gt = volume.read_gvol(gt_path)
    if not isinstance(gt, volume.BinaryMask):
        raise volume.VolumeError(f"--gt must be a mask gvol, got {type(gt).__name__}")
    if isinstance(pred, volume.BinaryMask):
        pred = volume.ProbabilityMap(pred.grid, pred.data)
    elif not isinstance(pred, volume.ProbabilityMap):
        raise volume.VolumeError("--pred must be a prob (or mask) gvol")
    return pred, gt


def _cmd_transform(args) -> int:
    field = volume.read_gvol(args.infile)
    family, detail = _TRANSFORM_OPS[args.op]
    stencil = transforms.Stencil(args.stencil)
    boundary = transforms.Boundary(args.boundary)
    if family == "fog":
        op = transforms.GeometricOperator(
            transforms.OpKind(args.op), stencil, boundary
        )
        out = transforms.fog(field, (detail,), op).components[detail]
    elif family == "sog":
        op = transforms.GeometricOperator(transforms.OpKind.SOG, stencil, boundary)
        out = transforms.sog(field, op)
    else:
        if not isinstance(field, volume.BinaryMask):
            raise volume.VolumeError("distance transform input must be a mask gvol")
        out = transforms.edt(field, signed=detail)
    # distance maps and derivatives are plain scalar fields on disk
    volume.write_gvol(volume.ScalarField(out.grid, out.data), args.out)
    return 0


def _cmd_loss(args) -> int:
    pred, gt = _load_pair(args.pred, args.gt)
    composite = losses.composite_from_json(_load_json(args.spec))
    res = losses.composite_eval(composite, pred, gt, args.progress)
    out = {"value": res.value, "terms": res.terms}
    if args.grad:
        volume.write_gvol(volume.ScalarField(res.grad.grid, res.grad.data), args.grad)
        out["grad"] = args.grad
    print(json.dumps(out))
    return 0


def _cmd_grad_check(args) -> int:
    pred, gt = _load_pair(args.pred, args.gt)
    composite = losses.composite_from_json(_load_json(args.spec))
    report = losses.grad_check(
        composite, pred, gt, eps=args.eps, max_voxels=args.max_voxels
    )
    out = report.to_dict()
    out["tol"] = args.tol
    out["passed"] = report.max_rel_err < args.tol
    print(json.dumps(out))
    return 0 if out["passed"] else 2


def _cmd_eval(args) -> int:
    pred, gt = _load_pair(args.pred, args.gt)
    m = metrics.lesion_metrics(
        volume.binarize(pred, args.threshold), gt, args.connectivity
    )
    if args.format == "csv":
        print(metrics.sweep_csv([(args.threshold, m)]), end="")
    else:
        print(json.dumps(metrics.metrics_dict(m, args.threshold)))
    return 0


def _cmd_sweep(args) -> int:
    pred, gt = _load_pair(args.pred, args.gt)
    thresholds = (
        metrics.DEFAULT_THRESHOLDS
        if args.thresholds is None
        else _parse_thresholds(args.thresholds)
    )
    rows = metrics.threshold_sweep(pred, gt, thresholds, args.connectivity)
    text = metrics.sweep_csv(rows)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        print(text, end="")
    return 0


def _cmd_phantom(args) -> int:
    obj = _load_json(args.spec)
    spec = phantom.phantom_spec_from_json(obj)
    mask = phantom.generate_phantom(spec)
    manifest = phantom.phantom_manifest(spec, mask)
    volume.write_gvol(mask, f"{args.out_prefix}_gt")
    files = {"gt": f"{args.out_prefix}_gt.gvol.json"}
    if "perturb" in obj:
        pspec = phantom.perturb_spec_from_json(obj["perturb"])
        pred = phantom.perturb(mask, pspec)
        volume.write_gvol(pred, f"{args.out_prefix}_pred")
        manifest["perturb"] = phantom.perturb_spec_to_json(pspec)
        files["pred"] = f"{args.out_prefix}_pred.gvol.json"
    manifest["files"] = files
    manifest_path = f"{args.out_prefix}_manifest.json"
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    print(json.dumps({"manifest": manifest_path, **files}))
    return 0


def _cmd_optimize(args) -> int:
    gt = volume.read_gvol(args.gt)
    if not isinstance(gt, volume.BinaryMask):
        raise volume.VolumeError("--gt must be a mask gvol")
    cfg = optimize.config_from_json(_load_json(args.config))
    traj = optimize.optimize_map(gt, cfg)
    csv_path = f"{args.out_prefix}_trajectory.csv"
    with open(csv_path, "w") as fh:
        fh.write(optimize.trajectory_csv(traj))
    volume.write_gvol(traj.final_map, f"{args.out_prefix}_final")
    last = traj.points[-1]
    print(
        json.dumps(
            {
                "trajectory": csv_path,
                "final": f"{args.out_prefix}_final.gvol.json",
                "steps": cfg.steps,
                "final_loss": last.loss,
                "final_dsc": last.dsc,
            }
        )
    )
    return 0


_INPUT_ERRORS = (
    volume.GvolError,
    volume.VolumeError,
    ValueError,
    OSError,
    json.JSONDecodeError,
    KeyError,
    TypeError,
)

_HANDLERS = {
    "transform": _cmd_transform,
    "loss": _cmd_loss,
    "grad-check": _cmd_grad_check,
    "eval": _cmd_eval,
    "sweep": _cmd_sweep,
    "phantom": _cmd_phantom,
    "optimize": _cmd_optimize,
}

# Commands fail with exit 1 up to and including input loading/validation and
# exit 2 afterwards; loading happens inside the handlers, so computation-phase
# errors are distinguished by type.
_COMPUTATION_ERRORS = (
    transforms.NoBoundaryError,
    losses.NonFiniteLossError,
    optimize.OptimizationError,
    FloatingPointError,
)


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _ValidationExit as exc:
        return _fail(1, f"argument error: {exc}")
    handler = _HANDLERS[args.command]
    try:
        return handler(args)
    except _COMPUTATION_ERRORS as exc:
        return _fail(2, f"computation error: {exc}")
    except _INPUT_ERRORS as exc:
        return _fail(1, f"invalid input: {exc}")
    except Exception as exc:  # pragma: no cover - defensive
        return _fail(2, f"computation error: {exc}")


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
