"""Command-line entry points: generate, degrade, reconstruct, evaluate, run."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .experiment import (
    ExperimentConfig,
    build_pair,
    load_pair,
    reconstruct_method,
    run_experiment,
    save_pair,
    write_metrics_csv,
)
from .formats import read_float_raster, write_float_raster, write_pgm
from .forward import ImageGrid
from .metrics import metric_report
from .phantoms import PhantomSpec, generate_phantom


def _load_config(args) -> ExperimentConfig:
    if args.config is None:
        raise SystemExit("this command requires --config")
    cfg = ExperimentConfig.from_file(args.config)
    doc = dict(cfg.raw)
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.out is not None:
        doc["output_dir"] = args.out
    if args.methods is not None:
        doc["methods"] = [m.strip() for m in args.methods.split(",") if m.strip()]
    if args.chains is not None:
        doc.setdefault("sampler", {})
        doc["sampler"] = dict(doc["sampler"])
        doc["sampler"]["chains"] = args.chains
    if args.decimate:
        doc["decimate"] = True
    return ExperimentConfig.from_dict(doc)


def _cmd_generate(args) -> int:
    out = Path(args.out or "out")
    out.mkdir(parents=True, exist_ok=True)
    if args.config is not None:
        cfg = ExperimentConfig.from_file(args.config)
        if cfg.phantom is None:
            raise SystemExit("config has no phantom section")
        spec = cfg.phantom
        if args.seed is not None:
            spec = PhantomSpec(kind=spec.kind, height=spec.height, width=spec.width,
                               seed=args.seed, background=spec.background,
                               band_strength=spec.band_strength,
                               speckle_strength=spec.speckle_strength, value=spec.value)
    else:
        spec = PhantomSpec(kind=args.kind, height=args.size, width=args.size,
                           seed=args.seed or 0, value=args.value)
    image = generate_phantom(spec)
    write_float_raster(image, out / "hr.imgf32")
    write_pgm(image, out / "hr.pgm")
    print(f"wrote {out / 'hr.imgf32'} ({spec.kind}, {spec.height}x{spec.width}, seed {spec.seed})")
    return 0


def _cmd_degrade(args) -> int:
    out = Path(args.out or "out")
    x_hr = read_float_raster(args.input)
    seed = args.seed if args.seed is not None else 0
    y, _ = build_pair(x_hr, args.factor, args.sigma_y, seed, decimate=args.decimate)
    save_pair(out, x_hr, y, args.factor, args.sigma_y, seed, args.decimate)
    print(f"wrote LR pair to {out} (factor {args.factor}, sigma_y {args.sigma_y}, seed {seed})")
    return 0


def _cmd_reconstruct(args) -> int:
    cfg = _load_config(args)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.pair is not None:
        x_hr, y, manifest = load_pair(args.pair)
        from .forward import BlockAverageOperator

        op = BlockAverageOperator(manifest["factor"], x_hr.height, x_hr.width)
    else:
        result = run_experiment(cfg, render_figures=not args.no_figures)
        print(f"reconstructions written to {result.out_dir}")
        return 0
    for method in cfg.methods:
        recon = reconstruct_method(method, cfg, y, op)
        stem = method.replace("-", "_")
        write_float_raster(recon, out / f"{stem}_mean.imgf32")
        write_pgm(recon, out / f"{stem}_mean.pgm")
        print(f"{method}: wrote {out / (stem + '_mean.imgf32')}")
    return 0


def _cmd_evaluate(args) -> int:
    truth = read_float_raster(args.truth)
    rows = []
    for recon_path in args.recon:
        candidate = read_float_raster(recon_path)
        label = Path(recon_path).stem
        rows.append((args.image_id, label, metric_report(truth, candidate)))
    out = Path(args.out or "out")
    out.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(out / "metrics.csv", rows)
    for image_id, label, report in rows:
        print(f"{label}: psnr={report.psnr:.4f} ssim={report.ssim:.6f} rmse={report.rmse:.6f}")
    return 0


def _cmd_run(args) -> int:
    cfg = _load_config(args)
    result = run_experiment(cfg, render_figures=not args.no_figures)
    for method in cfg.methods:
        report = result.reports[method]
        if isinstance(report, str):
            print(f"{method}: {report}")
        else:
            print(f"{method}: psnr={report.psnr:.4f} ssim={report.ssim:.6f} rmse={report.rmse:.6f}")
    print(f"outputs in {result.out_dir}")
    return 0


def _add_common(parser):
    parser.add_argument("--config", help="experiment config JSON", default=None)
    parser.add_argument("--seed", type=int, default=None, help="override master seed")
    parser.add_argument("--out", default=None, help="override output directory")
    parser.add_argument("--methods", default=None, help="comma-separated method list")
    parser.add_argument("--chains", type=int, default=None, help="independent chains")
    parser.add_argument("--decimate", action="store_true",
                        help="generate data by sparse sampling instead of block averaging")
    parser.add_argument("--no-figures", action="store_true", help="skip figure rendering")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="diffsr",
        description="Split-Gibbs posterior sampling for block-average super-resolution.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="render a synthetic phantom")
    p.add_argument("--kind", default="layered_cornea",
                   choices=["layered_cornea", "gmm_field", "flat"])
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--value", type=float, default=0.5, help="flat phantom value")
    _add_common(p)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("degrade", help="measure an HR image into an LR pair")
    p.add_argument("--input", required=True, help="HR float raster")
    p.add_argument("--factor", type=int, required=True)
    p.add_argument("--sigma-y", type=float, required=True, dest="sigma_y")
    _add_common(p)
    p.set_defaults(func=_cmd_degrade)

    p = sub.add_parser("reconstruct", help="run configured methods")
    p.add_argument("--pair", default=None, help="directory from a previous degrade")
    _add_common(p)
    p.set_defaults(func=_cmd_reconstruct)

    p = sub.add_parser("evaluate", help="score reconstructions against ground truth")
    p.add_argument("--truth", required=True, help="ground-truth float raster")
    p.add_argument("--recon", nargs="+", required=True, help="reconstruction rasters")
    p.add_argument("--image-id", default="image", dest="image_id")
    _add_common(p)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("run", help="full pipeline: generate, degrade, reconstruct, evaluate")
    _add_common(p)
    p.set_defaults(func=_cmd_run)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
