"""Reproducible experiment harness: strict JSON configs, LR/HR pair
construction, method execution, metric tables, and run manifests.

A config plus its master seed determines every output byte (the manifest's
wall-clock entry aside).  Unknown config keys are rejected so that a config
file can be trusted as a complete run description.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .forward import (
    BlockAverageOperator,
    ImageGrid,
    MeasurementVector,
    NoiseModel,
    degrade,
)
from .formats import read_float_raster, write_float_raster, write_pgm
from .metrics import MetricReport, bicubic_upsample, metric_report
from .phantoms import PhantomSpec, generate_phantom
from .priors import GaussianPrior, GmmPrior, fit_gmm_prior, make_schedule
from .sampler import AnnealingSchedule, pnp_dm_run, posterior_mean_estimate
from .sde import ReverseSdeConfig

CSV_HEADER = "image_id,method,psnr,ssim,rmse"

# Canonical method registry; seed derivation uses these indices so results do
# not depend on the order methods are listed in.
_METHOD_INDEX = {"bicubic": 1, "pnp-dm-edm": 2, "pnp-dm-vp": 3, "pnp-dm-ve": 4}
_DEGRADE_INDEX = 0

_PHANTOM_KEYS = {
    "kind", "height", "width", "seed",
    "background", "band_strength", "speckle_strength", "value",
}
_PRIOR_KEYS = {
    "kind", "mean", "variance", "weights", "means", "variances",
    "components", "train_count", "train_seed", "em_iterations",
}
_SCHEDULE_KEYS = {"kind", "beta_min", "beta_max", "sigma_min", "sigma_max"}
_ANNEALING_KEYS = {"rho0", "rho_min", "alpha"}
_SAMPLER_KEYS = {
    "iterations", "burn_in", "chains", "sde_steps", "sigma_end",
    "sigma_max", "method", "step_exponent", "init", "save_iterates",
}
_TOP_KEYS = {
    "phantom", "input_image", "operator", "noise", "prior", "schedule",
    "annealing", "sampler", "methods", "seed", "output_dir", "decimate",
}


def _reject_unknown(section: dict, allowed: set, where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ValueError(f"unknown key(s) in {where}: {sorted(unknown)}")


def _require(section: dict, key: str, where: str):
    if key not in section:
        raise ValueError(f"missing required key {key!r} in {where}")
    return section[key]


@dataclass
class ExperimentConfig:
    """Validated description of one reconstruction experiment."""

    raw: dict

    phantom: PhantomSpec | None
    input_image: str | None
    factor: int
    sigma_y: float
    prior_spec: dict
    schedule_spec: dict
    annealing: AnnealingSchedule
    iterations: int
    burn_in: int
    chains: int
    sde_config: ReverseSdeConfig
    sigma_max: float
    init: str
    save_iterates: bool
    methods: list
    seed: int
    output_dir: str
    decimate: bool

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        _reject_unknown(doc, _TOP_KEYS, "config")

        phantom = None
        input_image = doc.get("input_image")
        if "phantom" in doc:
            if input_image is not None:
                raise ValueError("config must set either 'phantom' or 'input_image', not both")
            ph = doc["phantom"]
            _reject_unknown(ph, _PHANTOM_KEYS, "phantom")
            phantom = PhantomSpec(
                kind=_require(ph, "kind", "phantom"),
                height=int(_require(ph, "height", "phantom")),
                width=int(_require(ph, "width", "phantom")),
                seed=int(ph.get("seed", 0)),
                background=float(ph.get("background", 0.08)),
                band_strength=float(ph.get("band_strength", 0.75)),
                speckle_strength=float(ph.get("speckle_strength", 0.35)),
                value=float(ph.get("value", 0.5)),
            )
        elif input_image is None:
            raise ValueError("config needs a 'phantom' section or an 'input_image' path")

        op_sec = _require(doc, "operator", "config")
        _reject_unknown(op_sec, {"factor"}, "operator")
        factor = int(_require(op_sec, "factor", "operator"))
        if factor < 1:
            raise ValueError(f"operator factor must be >= 1, got {factor}")

        noise_sec = _require(doc, "noise", "config")
        _reject_unknown(noise_sec, {"sigma_y"}, "noise")
        sigma_y = float(_require(noise_sec, "sigma_y", "noise"))
        if sigma_y < 0:
            raise ValueError(f"sigma_y must be >= 0, got {sigma_y}")

        prior_spec = dict(_require(doc, "prior", "config"))
        _reject_unknown(prior_spec, _PRIOR_KEYS, "prior")
        if prior_spec.get("kind") not in ("gaussian", "gmm", "fitted_gmm"):
            raise ValueError(f"prior kind must be gaussian|gmm|fitted_gmm, got {prior_spec.get('kind')!r}")
        if prior_spec["kind"] == "fitted_gmm" and phantom is None:
            raise ValueError("fitted_gmm prior requires a phantom section to train on")

        schedule_spec = dict(doc.get("schedule", {"kind": "edm"}))
        _reject_unknown(schedule_spec, _SCHEDULE_KEYS, "schedule")
        sched_kind = schedule_spec.get("kind", "edm")
        if sched_kind not in ("edm", "vp", "ve"):
            raise ValueError(f"schedule kind must be edm|vp|ve, got {sched_kind!r}")
        schedule_spec["kind"] = sched_kind
        per_kind = {"edm": {"kind"}, "vp": {"kind", "beta_min", "beta_max"},
                    "ve": {"kind", "sigma_min", "sigma_max"}}
        _reject_unknown(schedule_spec, per_kind[sched_kind], f"schedule[{sched_kind}]")

        ann_sec = dict(doc.get("annealing", {}))
        _reject_unknown(ann_sec, _ANNEALING_KEYS, "annealing")
        annealing = AnnealingSchedule(
            rho0=float(ann_sec.get("rho0", 10.0)),
            rho_min=float(ann_sec.get("rho_min", 0.3)),
            alpha=float(ann_sec.get("alpha", 0.9)),
        )

        samp = dict(doc.get("sampler", {}))
        _reject_unknown(samp, _SAMPLER_KEYS, "sampler")
        iterations = int(samp.get("iterations", 100))
        burn_in = int(samp.get("burn_in", 50))
        chains = int(samp.get("chains", 1))
        if iterations <= burn_in or burn_in < 0:
            raise ValueError(f"need iterations > burn_in >= 0, got {iterations}, {burn_in}")
        if chains < 1:
            raise ValueError(f"chains must be >= 1, got {chains}")
        sde_config = ReverseSdeConfig(
            steps=int(samp.get("sde_steps", 100)),
            step_exponent=float(samp.get("step_exponent", 7.0)),
            sigma_terminal=float(samp.get("sigma_end", 1e-3)),
            method=samp.get("method", "heun_stochastic"),
        )
        sigma_max = float(samp.get("sigma_max", 80.0))
        init = samp.get("init", "prior")
        if init not in ("prior", "bicubic"):
            raise ValueError(f"sampler init must be prior|bicubic, got {init!r}")
        save_iterates = bool(samp.get("save_iterates", False))

        methods = list(doc.get("methods", ["bicubic", "pnp-dm"]))
        resolved = []
        for name in methods:
            resolved.append(resolve_method(name, sched_kind))
        if len(set(resolved)) != len(resolved):
            raise ValueError(f"duplicate methods after resolution: {resolved}")

        seed = int(doc.get("seed", 0))
        output_dir = doc.get("output_dir", "out")
        decimate = bool(doc.get("decimate", False))

        return cls(
            raw=doc,
            phantom=phantom,
            input_image=input_image,
            factor=factor,
            sigma_y=sigma_y,
            prior_spec=prior_spec,
            schedule_spec=schedule_spec,
            annealing=annealing,
            iterations=iterations,
            burn_in=burn_in,
            chains=chains,
            sde_config=sde_config,
            sigma_max=sigma_max,
            init=init,
            save_iterates=save_iterates,
            methods=resolved,
            seed=seed,
            output_dir=output_dir,
            decimate=decimate,
        )

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def config_hash(self) -> str:
        canonical = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()


def resolve_method(name: str, default_schedule: str) -> str:
    """Map a method name to its canonical form ('pnp-dm' picks the config schedule)."""
    if name == "pnp-dm":
        name = f"pnp-dm-{default_schedule}"
    if name not in _METHOD_INDEX:
        raise ValueError(f"unknown method {name!r}; expected one of {sorted(_METHOD_INDEX)} or 'pnp-dm'")
    return name


def derive_seed(master_seed: int, index: int) -> int:
    """Stable per-component seed derived from the master seed."""
    return int(np.random.SeedSequence([int(master_seed), int(index)]).generate_state(1)[0])


def build_prior(cfg: ExperimentConfig, dim: int):
    spec = cfg.prior_spec
    kind = spec["kind"]
    if kind == "gaussian":
        return GaussianPrior(dim, mean=spec.get("mean", 0.5), variance=spec.get("variance", 0.04))
    if kind == "gmm":
        return GmmPrior(spec["weights"], spec["means"], spec["variances"])
    # fitted_gmm: train on phantoms drawn from the same family, disjoint seeds
    train_count = int(spec.get("train_count", 128))
    train_seed = int(spec.get("train_seed", 10_000))
    components = int(spec.get("components", 3))
    em_iterations = int(spec.get("em_iterations", 25))
    base = cfg.phantom
    train = [
        generate_phantom(PhantomSpec(
            kind=base.kind, height=base.height, width=base.width, seed=train_seed + i,
            background=base.background, band_strength=base.band_strength,
            speckle_strength=base.speckle_strength, value=base.value,
        ))
        for i in range(train_count)
    ]
    return fit_gmm_prior(train, n_components=components, iterations=em_iterations, seed=train_seed)


def build_pair(
    x_hr: ImageGrid,
    factor: int,
    sigma_y: float,
    seed: int,
    decimate: bool = False,
):
    """Construct (measurement, operator) for an HR image.

    ``decimate`` replaces block averaging with step-``factor`` sparse sampling
    when generating the data (the reconstruction operator stays block
    averaging), for model-mismatch experiments.
    """
    op = BlockAverageOperator(factor, x_hr.height, x_hr.width)
    noise = NoiseModel(sigma_y)
    if decimate:
        sparse = x_hr.data[::factor, ::factor].ravel()
        if sigma_y > 0:
            rng = np.random.default_rng(seed)
            sparse = sparse + sigma_y * rng.standard_normal(sparse.shape)
        y = MeasurementVector(sparse)
    else:
        y = degrade(x_hr, op, noise, seed)
    return y, op


def save_pair(out_dir, x_hr: ImageGrid, y: MeasurementVector, factor: int,
              sigma_y: float, seed: int, decimate: bool = False) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lr = ImageGrid.from_flat(y.data, x_hr.height // factor, x_hr.width // factor)
    write_float_raster(x_hr, out / "hr.imgf32")
    write_float_raster(lr, out / "lr.imgf32")
    write_pgm(x_hr, out / "hr.pgm")
    write_pgm(lr, out / "lr.pgm")
    manifest = {"factor": factor, "sigma_y": sigma_y, "seed": seed, "decimate": decimate,
                "hr_shape": [x_hr.height, x_hr.width]}
    with open(out / "pair.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_pair(pair_dir):
    pair_dir = Path(pair_dir)
    with open(pair_dir / "pair.json") as fh:
        manifest = json.load(fh)
    x_hr = read_float_raster(pair_dir / "hr.imgf32")
    lr = read_float_raster(pair_dir / "lr.imgf32")
    return x_hr, MeasurementVector(lr.ravel()), manifest


def _format_metric(value: float) -> str:
    if np.isinf(value):
        return "inf"
    return repr(float(value))


def reconstruct_method(
    method: str,
    cfg: ExperimentConfig,
    y: MeasurementVector,
    op: BlockAverageOperator,
    iterate_dir=None,
) -> ImageGrid:
    """Run one reconstruction method and return the estimate as an HR image.

    ``iterate_dir`` dumps each retained chain iterate as a float raster
    (sampler methods only).
    """
    lr_shape = (op.lr_height, op.lr_width)
    if method == "bicubic":
        lr = ImageGrid.from_flat(y.data, *lr_shape)
        return bicubic_upsample(lr, cfg.factor)
    kind = method.removeprefix("pnp-dm-")
    sched_spec = cfg.schedule_spec
    params = {k: v for k, v in sched_spec.items() if k != "kind"}
    sched = make_schedule(kind, **params) if sched_spec["kind"] == kind else make_schedule(kind)
    prior = build_prior(cfg, op.input_dim)
    x_init = None
    if cfg.init == "bicubic":
        lr = ImageGrid.from_flat(y.data, *lr_shape)
        x_init = bicubic_upsample(lr, cfg.factor).ravel()
    samples, stats = pnp_dm_run(
        y=y,
        op=op,
        noise=NoiseModel(cfg.sigma_y),
        score=prior,
        sched=sched,
        anneal=cfg.annealing,
        sde_cfg=cfg.sde_config,
        iterations=cfg.iterations,
        burn_in=cfg.burn_in,
        seed=derive_seed(cfg.seed, _METHOD_INDEX[method]),
        chains=cfg.chains,
        sigma_max=cfg.sigma_max,
        x_init=x_init,
    )
    if iterate_dir is not None:
        iterate_dir = Path(iterate_dir)
        iterate_dir.mkdir(parents=True, exist_ok=True)
        for i, row in enumerate(samples):
            grid = ImageGrid.from_flat(row, op.hr_height, op.hr_width)
            write_float_raster(grid, iterate_dir / f"iterate_{i:05d}.imgf32")
    return posterior_mean_estimate(stats, op.hr_height, op.hr_width)


def write_metrics_csv(path, rows) -> None:
    """rows: iterable of (image_id, method, MetricReport-or-failure-string)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER.split(","))
        for image_id, method, report in rows:
            if isinstance(report, MetricReport):
                writer.writerow([
                    image_id, method,
                    _format_metric(report.psnr),
                    _format_metric(report.ssim),
                    _format_metric(report.rmse),
                ])
            else:
                writer.writerow([image_id, method, report, report, report])


def write_summary_csv(path, methods, reports) -> None:
    """Table layout with methods as columns and metrics as rows."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric"] + list(methods))
        for metric in ("psnr", "ssim", "rmse"):
            row = [metric]
            for method in methods:
                report = reports[method]
                if isinstance(report, MetricReport):
                    row.append(_format_metric(getattr(report, metric)))
                else:
                    row.append(report)
            writer.writerow(row)


@dataclass
class ExperimentResult:
    image_id: str
    truth: ImageGrid
    measurement: MeasurementVector
    reconstructions: dict
    reports: dict
    out_dir: Path


def run_experiment(cfg: ExperimentConfig, render_figures: bool = True) -> ExperimentResult:
    """Full pipeline: data, every configured method, metrics, files, figures."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    if cfg.phantom is not None:
        x_hr = generate_phantom(cfg.phantom)
        image_id = f"{cfg.phantom.kind}_{cfg.phantom.seed}"
    else:
        x_hr = read_float_raster(cfg.input_image)
        image_id = Path(cfg.input_image).stem

    degrade_seed = derive_seed(cfg.seed, _DEGRADE_INDEX)
    y, op = build_pair(x_hr, cfg.factor, cfg.sigma_y, degrade_seed, decimate=cfg.decimate)
    save_pair(out, x_hr, y, cfg.factor, cfg.sigma_y, degrade_seed, cfg.decimate)

    reconstructions = {}
    reports = {}
    timings = {}
    for method in cfg.methods:
        started = time.perf_counter()
        stem = method.replace("-", "_")
        iterate_dir = None
        if cfg.save_iterates and method != "bicubic":
            iterate_dir = out / f"{stem}_iterates"
        try:
            recon = reconstruct_method(method, cfg, y, op, iterate_dir=iterate_dir)
        except Exception as exc:  # record, keep the other methods running
            reports[method] = f"failed:{exc}"
            timings[method] = time.perf_counter() - started
            continue
        timings[method] = time.perf_counter() - started
        reconstructions[method] = recon
        reports[method] = metric_report(x_hr, recon)
        write_float_raster(recon, out / f"{stem}_mean.imgf32")
        write_pgm(recon, out / f"{stem}_mean.pgm")

    rows = [(image_id, method, reports[method]) for method in cfg.methods]
    write_metrics_csv(out / "metrics.csv", rows)
    write_summary_csv(out / "summary.csv", cfg.methods, reports)

    manifest = {
        "image_id": image_id,
        "config_hash": cfg.config_hash(),
        "master_seed": cfg.seed,
        "iterations": cfg.iterations,
        "methods": {
            m: {
                "seed": derive_seed(cfg.seed, _METHOD_INDEX[m]),
                "wall_time_s": timings[m],
            }
            for m in cfg.methods
        },
        "degrade_seed": derive_seed(cfg.seed, _DEGRADE_INDEX),
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")

    if render_figures:
        from .report import save_comparison_figure, save_metrics_figure

        lr = ImageGrid.from_flat(y.data, op.lr_height, op.lr_width)
        panels = [("truth", x_hr), ("measurement", lr)]
        panels += [(m, reconstructions[m]) for m in cfg.methods if m in reconstructions]
        save_comparison_figure(out / "comparison.png", panels)
        save_metrics_figure(out / "metrics.png", reports)

    return ExperimentResult(
        image_id=image_id,
        truth=x_hr,
        measurement=y,
        reconstructions=reconstructions,
        reports=reports,
        out_dir=out,
    )
