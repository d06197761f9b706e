"""Command-line interface for the pipeline and its individual stages.

Exit codes: 0 success, 2 configuration error, 3 stage failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STAGE = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lpvred",
        description="Embed nonlinear benchmark models in affine LPV form and "
                    "reduce the scheduling dimension.",
    )
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="TOML or JSON pipeline configuration")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--seed", type=int, default=None, help="simulation seed override")
        p.add_argument("--deterministic", action="store_true",
                       help="single-threaded numerics for bit-stable artifacts")
        return p

    common(sub.add_parser("run", help="run the full pipeline and write a manifest"))
    common(sub.add_parser("simulate", help="integrate scenarios and write the datasets"))
    common(sub.add_parser("embed", help="write the exact full-order affine embedding"))

    p = common(sub.add_parser("reduce-pca", help="fit truncated-SVD reductions"))
    p.add_argument("--nhat", default=None, help="comma list of reduced dimensions")
    p.add_argument("--norm", choices=("minmax", "std"), default=None)

    p = common(sub.add_parser("reduce-dnn", help="train network reductions"))
    p.add_argument("--nhat", default=None, help="comma list of reduced dimensions")
    p.add_argument("--norm", choices=("minmax", "std"), default=None)

    p = common(sub.add_parser("region", help="build the scheduling region of a reduction"))
    p.add_argument("--method", choices=("auto", "aabb", "kabsch", "ellipsoid", "sphere"),
                   default=None, help="region construction")
    p.add_argument("--dim", type=int, default=None, help="reduced dimension of the artifact")
    p.add_argument("--norm", choices=("minmax", "std"), default=None)
    p.add_argument("--reduction", choices=("pca", "dnn"), default=None)

    p = common(sub.add_parser("evaluate", help="error reports on the validation split"))

    p = common(sub.add_parser("compare", help="open-loop trajectory comparison"))
    p.add_argument("--nhat", default=None, help="comma list of reduced dimensions")
    return parser


def _parse_nhat(text):
    if text is None:
        return None
    try:
        return tuple(int(v) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise SystemExit(EXIT_CONFIG)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if "--deterministic" in argv:
        # pin BLAS threading before numpy is first imported
        for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, "1")
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")

    from dataclasses import replace

    from .config import ConfigError, load_config
    from .pipeline import (
        MissingArtifactError,
        StageError,
        run_pipeline,
        stage_compare,
        stage_embed,
        stage_evaluate,
        stage_reduce_dnn,
        stage_reduce_pca,
        stage_region,
        stage_simulate,
    )

    overrides = {
        "out_dir": args.out,
        "seed": args.seed,
        "deterministic": args.deterministic,
        "n_hat": _parse_nhat(getattr(args, "nhat", None)),
        "norm": getattr(args, "norm", None),
        "method": None,
    }
    try:
        cfg = load_config(args.config, overrides)
        if args.command == "region":
            region = cfg.region
            if args.method is not None:
                region = replace(region, method=args.method)
            if args.dim is not None:
                region = replace(region, n_hat=int(args.dim))
            if args.norm is not None:
                region = replace(region, normalization=args.norm)
            if getattr(args, "reduction", None) is not None:
                region = replace(region, reduction=args.reduction)
            cfg = replace(cfg, region=region)
            if int(cfg.region.n_hat) not in {int(n) for n in cfg.reduce.n_hat}:
                cfg = replace(cfg, reduce=replace(cfg.reduce,
                                                  n_hat=tuple(sorted({*map(int, cfg.reduce.n_hat),
                                                                      int(cfg.region.n_hat)}))))
            cfg.validate()
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    from pathlib import Path

    out = Path(cfg.out_dir)
    stages = {
        "simulate": stage_simulate,
        "embed": stage_embed,
        "reduce-pca": stage_reduce_pca,
        "reduce-dnn": stage_reduce_dnn,
        "region": stage_region,
        "evaluate": stage_evaluate,
        "compare": stage_compare,
    }
    try:
        if args.command == "run":
            manifest = run_pipeline(cfg)
            print(f"wrote {len(manifest['files'])} artifacts to {cfg.out_dir} "
                  f"(manifest {out / 'manifest.json'})")
        else:
            out.mkdir(parents=True, exist_ok=True)
            files = stages[args.command](cfg, out)
            for f in files:
                print(f)
    except MissingArtifactError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except (OSError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
