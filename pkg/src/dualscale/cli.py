"""Command-line entry point.

Exit status: 0 on success, 1 on validation errors (bad input, config or
artifact), 2 on computation errors. Set ``DUALSCALE_LOG_LEVEL`` to change
logging verbosity.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

from dualscale import __version__, btrank, comparisons, corpus_io
from dualscale.errors import DualscaleError, ValidationError
from dualscale.pipeline import STAGES, PipelineConfig, json_text, run_pipeline, run_stage
from dualscale.reliability import ReliabilityGrid, krippendorff_alpha

log = logging.getLogger("dualscale")

OVERRIDES = {
    "predictions": "predictions",
    "pointwise": "pointwise",
    "pairwise": "pairwise",
    "out": "output_dir",
    "seed": "seed",
    "reference": "reference_ensemble",
    "reg": "reg",
    "tol": "tol",
    "max_iter": "max_iter",
    "margin": "margin",
    "tie_mode": "tie_mode",
    "intra": "intra_per_bin",
    "inter": "inter_per_binpair",
    "threshold": "binarize_threshold",
}


def _config_args(p: argparse.ArgumentParser):
    p.add_argument("--config", help="YAML pipeline config")
    p.add_argument("--out", help="output directory")
    p.add_argument("--predictions")
    p.add_argument("--pointwise")
    p.add_argument("--pairwise")
    p.add_argument("--seed", type=int)
    p.add_argument("--reference", help="reference ensemble id")
    p.add_argument("--reg", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--margin", type=float)
    p.add_argument("--tie-mode", dest="tie_mode", choices=("loss", "random"))
    p.add_argument("--intra", type=int, help="intra-bin pairs per bin")
    p.add_argument("--inter", type=int, help="inter-bin pairs per bin pair")
    p.add_argument("--threshold", type=float, help="NA-probability threshold for binarization")
    p.add_argument("--force", action="store_true", help="accept artifacts stamped by another config")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dualscale", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    for name in (*STAGES, "run"):
        if name in ("fit-bt",):
            continue
        p = sub.add_parser(name, help="full pipeline" if name == "run" else f"{name} stage")
        _config_args(p)

    p = sub.add_parser("fit-bt", help="fit BT strengths (a single matrix file, or the pipeline stage)")
    _config_args(p)
    p.add_argument("--matrix", help="standalone mode: dense win-matrix CSV")
    p.add_argument("--scale-out", default="scale.json")
    p.add_argument("--probabilities", help="also write the probability matrix CSV here")

    p = sub.add_parser("agreement", help="Krippendorff's alpha of a grid or of pointwise annotations")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--grid", help="CSV with columns unit, rater, value")
    src.add_argument("--pointwise", help="pointwise annotation CSV (nominal)")
    p.add_argument("--level", choices=("nominal", "ordinal"), default="nominal")

    p = sub.add_parser("make-fixture", help="write the synthetic demo corpus and config")
    p.add_argument("directory")
    p.add_argument("--seed", type=int, default=7)
    return parser


def _load_config(args) -> PipelineConfig:
    overrides = {key: getattr(args, attr) for attr, key in OVERRIDES.items() if hasattr(args, attr)}
    return PipelineConfig.load(args.config, overrides)


def _agreement(args) -> None:
    if args.grid:
        path = Path(args.grid)
        if not path.exists():
            raise ValidationError(f"grid file not found: {path}")
        values = {}
        with open(path, newline="", encoding="utf-8") as fh:
            for n, row in enumerate(csv.DictReader(line for line in fh if not line.startswith("#")), 1):
                try:
                    value = row["value"].strip()
                    unit, rater = row["unit"], row["rater"]
                except (KeyError, AttributeError):
                    raise ValidationError(f"grid row {n}: need unit, rater, value") from None
                if value == "":
                    continue
                if args.level == "ordinal":
                    try:
                        value = float(value)
                    except ValueError:
                        raise ValidationError(f"grid row {n}: ordinal value {value!r} is not numeric") from None
                values[(unit, rater)] = value
        grid = ReliabilityGrid(values, args.level)
    else:
        annotations = corpus_io.load_annotations(args.pointwise, "pointwise")
        grid = ReliabilityGrid({(a.argument_id, a.annotator_id): a.label for a in annotations}, "nominal")
    alpha = krippendorff_alpha(grid)
    print(f"alpha={alpha:.6f} level={grid.level} units={len(grid.pairable_units())} raters={len(grid.raters)}")


def _fit_standalone(args) -> None:
    path = Path(args.matrix)
    if not path.exists():
        raise ValidationError(f"matrix file not found: {path}")
    Wm = comparisons.matrix_from_csv(path.read_text(encoding="utf-8"))
    reg = btrank.DEFAULT_REG if args.reg is None else args.reg
    tol = btrank.DEFAULT_TOL if args.tol is None else args.tol
    max_iter = btrank.DEFAULT_MAX_ITER if args.max_iter is None else args.max_iter
    scale = btrank.fit_bt_ilsr(Wm, reg=reg, tol=tol, max_iter=max_iter)
    Path(args.scale_out).write_text(json_text(scale.as_dict()), encoding="utf-8")
    if args.probabilities:
        Path(args.probabilities).write_text(
            comparisons.square_to_csv(scale.ids, btrank.probability_matrix(scale)), encoding="utf-8")
    print(f"fitted {len(scale.ids)} items in {scale.iterations} iterations (converged={scale.converged})")


def dispatch(args) -> None:
    if args.command == "agreement":
        _agreement(args)
    elif args.command == "make-fixture":
        from dualscale.synthetic import generate_fixture

        print(generate_fixture(args.directory, args.seed))
    elif args.command == "fit-bt" and args.matrix:
        _fit_standalone(args)
    elif args.command == "run":
        manifest = run_pipeline(_load_config(args), force=args.force)
        print(json.dumps({"config_hash": manifest["config_hash"], "artifacts": len(manifest["artifacts"])}))
    else:
        cfg = _load_config(args)
        ws = run_stage(args.command, cfg, force=args.force)
        for name in ws.written:
            print(ws.path(name))


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("DUALSCALE_LOG_LEVEL", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        dispatch(args)
    except DualscaleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
