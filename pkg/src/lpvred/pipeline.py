"""Pipeline stages: simulate, embed, reduce, region, evaluate, compare.

Each stage consumes and produces files under the output directory, so the
stages can run independently and resume.  ``run_pipeline`` chains them and
writes a manifest with per-file content hashes; two runs with identical
configuration and seeds produce byte-identical manifests.
"""

from __future__ import annotations

import logging
from dataclasses import replace
from pathlib import Path
from typing import List

import numpy as np

from . import __version__, serialize
from .config import PipelineConfig, config_hash
from .lpv import FullOrderReduction, ab_entry_indices, build_variation_dataset, full_order_lpv
from .metrics import compare_trajectories, evaluate_reduction
from .models import FactorizedModel, full_scheduling_region, get_model
from .nnet import train
from .pca import fit_pca
from .regions import (
    axis_aligned_box,
    conservatism_ratio,
    ellipsoid_to_box,
    kabsch_box,
    min_enclosing_sphere,
    min_volume_ellipsoid,
)
from .simulate import default_scenarios, integrate_scenarios, subsample_trajectories

log = logging.getLogger(__name__)

__all__ = ["StageError", "MissingArtifactError", "run_pipeline",
           "stage_simulate", "stage_embed", "stage_reduce_pca", "stage_reduce_dnn",
           "stage_region", "stage_evaluate", "stage_compare"]


class StageError(RuntimeError):
    """A pipeline stage failed; carries the stage name."""

    def __init__(self, stage: str, cause: str):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage


class MissingArtifactError(FileNotFoundError):
    """An upstream artifact is absent; names the subcommand that makes it."""

    def __init__(self, path: Path, producer: str):
        super().__init__(f"missing artifact {path}; run `lpvred {producer}` first")
        self.producer = producer


# -- artifact paths ---------------------------------------------------------


def _paths(out: Path) -> dict:
    return {
        "model_json": out / "model.json",
        "train": out / "dataset_train.lpvd",
        "val": out / "dataset_val.lpvd",
        "traj_dir": out / "trajectories",
        "embed": out / "embed" / "full_order.lpvm",
        "embed_json": out / "embed" / "full_order.json",
        "reduce_dir": out / "reduce",
        "region_dir": out / "region",
        "reports_dir": out / "reports",
        "compare_dir": out / "compare",
        "manifest": out / "manifest.json",
    }


def reduction_path(out: Path, method: str, norm: str, n: int) -> Path:
    ext = "lpvm" if method == "pca" else "lpvn"
    return out / "reduce" / f"{method}_{norm}_n{int(n):02d}.{ext}"


def _require(path: Path, producer: str) -> Path:
    if not path.exists():
        raise MissingArtifactError(path, producer)
    return path


def _load_reduction(path: Path, method: str):
    if method == "pca":
        return serialize.load_pca(path)
    return serialize.load_dnn(path)


def _load_datasets(out: Path):
    p = _paths(out)
    train = serialize.load_sample_set(_require(p["train"], "simulate"))
    val = serialize.load_sample_set(_require(p["val"], "simulate"))
    return train, val


# -- stages -----------------------------------------------------------------


def stage_simulate(cfg: PipelineConfig, out: Path) -> List[Path]:
    model = get_model(cfg.model_name)
    sim = cfg.simulate
    scenarios = default_scenarios(model, sim.trajectory_count, sim.duration, sim.seed)
    trajectories = integrate_scenarios(model, scenarios, sim.h, sim.duration)
    ds = subsample_trajectories(model, trajectories, sim.n_samples, sim.seed)
    train, val = ds.split(sim.validation_fraction, sim.seed + 1)

    p = _paths(out)
    written = []
    serialize.save_sample_set(p["train"], train)
    serialize.save_sample_set(p["val"], val)
    written += [p["train"], p["val"]]
    p["traj_dir"].mkdir(parents=True, exist_ok=True)
    for i, tr in enumerate(trajectories[:3]):
        path = p["traj_dir"] / f"traj_{i:02d}_{tr.label or 'scenario'}.csv"
        serialize.trajectory_to_csv(path, tr)
        written.append(path)
    n_div = sum(tr.diverged for tr in trajectories)
    if n_div:
        log.warning("%d/%d scenarios diverged and were truncated", n_div, len(trajectories))
    return written


def stage_embed(cfg: PipelineConfig, out: Path) -> List[Path]:
    model = get_model(cfg.model_name)
    lpv = full_order_lpv(model, mode="ab")
    lo, hi = full_scheduling_region(model, grid_density=3, seed=cfg.simulate.seed)
    idx = ab_entry_indices(model)
    lpv.region_lo, lpv.region_hi = lo[idx], hi[idx]

    p = _paths(out)
    p["embed"].parent.mkdir(parents=True, exist_ok=True)
    serialize.save_lpv(p["embed"], lpv)
    serialize.write_json(p["embed_json"], serialize.lpv_summary(lpv))
    meta = model.describe()
    meta["full_scheduling_box"] = {"lo": lo.tolist(), "hi": hi.tolist()}
    serialize.write_json(p["model_json"], meta)
    return [p["embed"], p["embed_json"], p["model_json"]]


def stage_reduce_pca(cfg: PipelineConfig, out: Path) -> List[Path]:
    if "pca" not in cfg.reduce.methods:
        return []
    model = get_model(cfg.model_name)
    train, _ = _load_datasets(out)
    variation = build_variation_dataset(model, train)
    written = []
    rdir = _paths(out)["reduce_dir"]
    rdir.mkdir(parents=True, exist_ok=True)
    for norm in cfg.reduce.normalizations:
        spectrum_path = rdir / f"pca_{norm}_spectrum.csv"
        first = True
        for n in cfg.reduce.n_hat:
            red = fit_pca(variation, norm, int(n))
            if first:
                serialize.spectrum_to_csv(spectrum_path, red.singular_values, norm)
                written.append(spectrum_path)
                first = False
            path = reduction_path(out, "pca", norm, n)
            serialize.save_pca(path, red)
            side = path.with_suffix(".json")
            serialize.write_json(side, {
                "method": "pca", "normalization": norm, "n_s": int(n),
                "singular_values": red.singular_values.tolist(),
                "numerical_rank": int(np.sum(red.singular_values >
                                             max(variation.Pi.shape) * np.finfo(float).eps
                                             * red.singular_values[0])),
            })
            written += [path, side]
    return written


def stage_reduce_dnn(cfg: PipelineConfig, out: Path) -> List[Path]:
    if "dnn" not in cfg.reduce.methods:
        return []
    model = get_model(cfg.model_name)
    train_ds, val_ds = _load_datasets(out)
    vtrain = build_variation_dataset(model, train_ds)
    vval = build_variation_dataset(model, val_ds)
    written = []
    rdir = _paths(out)["reduce_dir"]
    rdir.mkdir(parents=True, exist_ok=True)
    for norm in cfg.reduce.normalizations:
        for n in cfg.reduce.n_hat:
            tcfg = replace(cfg.reduce.dnn, normalization=norm)
            red = train(model, vtrain, vval, int(n), tcfg)
            path = reduction_path(out, "dnn", norm, n)
            serialize.save_dnn(path, red)
            curve = path.with_name(path.stem + "_curve.csv")
            serialize.training_curve_to_csv(curve, red.history)
            side = path.with_suffix(".json")
            serialize.write_json(side, {
                "method": "dnn", "normalization": norm, "n_latent": int(n),
                "best_epoch": red.history["best_epoch"],
                "best_val_loss": red.history["best_val_loss"],
            })
            written += [path, curve, side]
    return written


def stage_region(cfg: PipelineConfig, out: Path) -> List[Path]:
    model = get_model(cfg.model_name)
    rc = cfg.region
    path = reduction_path(out, rc.reduction, rc.normalization, rc.n_hat)
    red = _load_reduction(_require(path, f"reduce-{rc.reduction}"), rc.reduction)
    _, val = _load_datasets(out)
    theta = np.atleast_2d(red.scheduling_fn(model)(val.X, val.U))

    method = rc.method
    if method == "auto":
        method = "kabsch" if 2 <= theta.shape[1] <= 3 else ("aabb" if theta.shape[1] == 1 else "ellipsoid")
    payload = {"method": method, "reduction": str(path.name), "n_hat": int(rc.n_hat)}
    ell = None
    if method == "ellipsoid":
        ell = min_volume_ellipsoid(theta, rc.tolerance)
    elif method == "sphere":
        ell = min_enclosing_sphere(theta, seed=cfg.simulate.seed)
    if ell is not None:
        box = ellipsoid_to_box(ell)
        payload["ellipsoid"] = ell.to_dict()
    elif method == "kabsch":
        box = kabsch_box(theta)
    else:
        box = axis_aligned_box(theta)
    payload["box"] = box.to_dict()
    est = conservatism_ratio(theta, box, mc_samples=rc.mc_samples, seed=cfg.simulate.seed)
    payload["conservatism"] = est.to_dict()

    rdir = _paths(out)["region_dir"]
    rdir.mkdir(parents=True, exist_ok=True)
    stem = f"{rc.reduction}_{rc.normalization}_n{int(rc.n_hat):02d}"
    points_csv = rdir / f"{stem}_points.csv"
    serialize.write_csv(points_csv, [f"theta{i}" for i in range(theta.shape[1])],
                        (row for row in theta))
    payload["points_csv"] = points_csv.name
    region_json = rdir / f"{stem}_region.json"
    serialize.write_json(region_json, payload)
    return [points_csv, region_json]


def stage_evaluate(cfg: PipelineConfig, out: Path) -> List[Path]:
    model = get_model(cfg.model_name)
    _, val = _load_datasets(out)
    variation = build_variation_dataset(model, val)
    reports = [evaluate_reduction(model, FullOrderReduction(model), val, variation)]
    missing = []
    for method in cfg.reduce.methods:
        for norm in cfg.reduce.normalizations:
            for n in cfg.reduce.n_hat:
                path = reduction_path(out, method, norm, n)
                if not path.exists():
                    missing.append((path, f"reduce-{method}"))
                    continue
                red = _load_reduction(path, method)
                reports.append(evaluate_reduction(model, red, val, variation))
    if len(reports) == 1 and missing:
        raise MissingArtifactError(*missing[0])

    rdir = _paths(out)["reports_dir"]
    rdir.mkdir(parents=True, exist_ok=True)
    csv_path = rdir / "errors.csv"
    json_path = rdir / "errors.json"
    serialize.error_reports_to_csv(csv_path, reports)
    serialize.write_json(json_path, {"reports": [r.summary() for r in reports]})
    return [csv_path, json_path]


def stage_compare(cfg: PipelineConfig, out: Path) -> List[Path]:
    model = get_model(cfg.model_name)
    cc = cfg.compare
    scenarios = default_scenarios(model, 5, cc.duration, cfg.simulate.seed)
    by_label = {s.label: s for s in scenarios}
    scenario = by_label.get(cc.scenario, scenarios[0])

    written = []
    cdir = _paths(out)["compare_dir"]
    cdir.mkdir(parents=True, exist_ok=True)
    for method in cfg.reduce.methods:
        for norm in cfg.reduce.normalizations:
            reductions = {"full-order": FullOrderReduction(model)}
            for n in cc.n_hat:
                path = reduction_path(out, method, norm, n)
                if path.exists():
                    reductions[f"{method}-n{int(n):02d}"] = _load_reduction(path, method)
            if len(reductions) == 1:
                raise MissingArtifactError(reduction_path(out, method, norm, cc.n_hat[0]),
                                           f"reduce-{method}")
            cmp = compare_trajectories(model, reductions, scenario.x0, scenario.inputs,
                                       cfg.simulate.h, cc.duration)
            csv_path = cdir / f"compare_{method}_{norm}.csv"
            serialize.comparison_to_csv(csv_path, cmp)
            drift_path = cdir / f"drift_{method}_{norm}.json"
            serialize.write_json(drift_path, {"scenario": scenario.label,
                                              "duration": cc.duration,
                                              "drift": cmp.drift_summary()})
            written += [csv_path, drift_path]
    return written


_STAGES = [
    ("simulate", stage_simulate),
    ("embed", stage_embed),
    ("reduce-pca", stage_reduce_pca),
    ("reduce-dnn", stage_reduce_dnn),
    ("region", stage_region),
    ("evaluate", stage_evaluate),
    ("compare", stage_compare),
]


def run_pipeline(cfg: PipelineConfig) -> dict:
    """Run every stage in order and write the artifact manifest.

    A stage failure raises :class:`StageError` naming the stage; artifacts
    written by earlier stages stay on disk.
    """
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files: List[Path] = []
    for name, fn in _STAGES:
        try:
            files += fn(cfg, out)
        except MissingArtifactError:
            raise
        except StageError:
            raise
        except Exception as exc:  # noqa: BLE001 - stage boundary
            raise StageError(name, repr(exc)) from exc
        log.info("stage %s done (%d files)", name, len(files))
    manifest = serialize.write_manifest(_paths(out)["manifest"], out, files,
                                        tool_version=__version__, config_hash=config_hash(cfg))
    return manifest
