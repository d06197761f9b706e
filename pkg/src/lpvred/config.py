"""Pipeline configuration: a TOML (or JSON) file parsed into dataclasses.

Every setting is validated before any computation starts; violations raise
:class:`ConfigError`, which the command line maps to exit code 2.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

from .models import get_model
from .nnet import TrainConfig

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

__all__ = [
    "ConfigError",
    "SimulateConfig",
    "ReduceConfig",
    "RegionConfig",
    "CompareConfig",
    "PipelineConfig",
    "load_config",
    "config_hash",
]

VALID_METHODS = ("pca", "dnn")
VALID_NORMALIZATIONS = ("minmax", "std")
VALID_REGION_METHODS = ("auto", "aabb", "kabsch", "ellipsoid", "sphere")


class ConfigError(ValueError):
    """Invalid or inconsistent pipeline configuration."""


@dataclass(frozen=True)
class SimulateConfig:
    h: float = 1.0 / 400.0
    duration: float = 60.0
    trajectory_count: int = 20
    n_samples: int = 50_000
    seed: int = 1234
    validation_fraction: float = 0.25

    def validate(self):
        if self.h <= 0 or self.duration < self.h:
            raise ConfigError("simulate: need h > 0 and duration >= h")
        if self.trajectory_count < 1:
            raise ConfigError("simulate: trajectory_count must be >= 1")
        if self.n_samples < 4:
            raise ConfigError("simulate: n_samples must be >= 4")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ConfigError("simulate: validation_fraction must be in (0, 1)")
        total = self.trajectory_count * (int(round(self.duration / self.h)) + 1)
        if self.n_samples > total:
            raise ConfigError(f"simulate: n_samples={self.n_samples} exceeds the "
                              f"{total} points the scenarios produce")


@dataclass(frozen=True)
class ReduceConfig:
    methods: tuple = ("pca",)
    normalizations: tuple = ("minmax", "std")
    n_hat: tuple = tuple(range(1, 11))
    dnn: TrainConfig = field(default_factory=TrainConfig)

    def validate(self, n_theta: int):
        for m in self.methods:
            if m not in VALID_METHODS:
                raise ConfigError(f"reduce: unknown method {m!r}")
        for n in self.normalizations:
            if n not in VALID_NORMALIZATIONS:
                raise ConfigError(f"reduce: unknown normalization {n!r}")
        if not self.methods or not self.normalizations or not self.n_hat:
            raise ConfigError("reduce: methods, normalizations and n_hat must be non-empty")
        for n in self.n_hat:
            if not 1 <= int(n) <= n_theta:
                raise ConfigError(f"reduce: n_hat={n} outside [1, {n_theta}]")


@dataclass(frozen=True)
class RegionConfig:
    method: str = "auto"
    tolerance: float = 1e-6
    mc_samples: int = 100_000
    n_hat: int = 3
    reduction: str = "pca"
    normalization: str = "minmax"

    def validate(self):
        if self.method not in VALID_REGION_METHODS:
            raise ConfigError(f"region: unknown method {self.method!r}")
        if self.tolerance <= 0:
            raise ConfigError("region: tolerance must be positive")
        if self.mc_samples < 100:
            raise ConfigError("region: mc_samples must be >= 100")
        if self.reduction not in VALID_METHODS:
            raise ConfigError(f"region: unknown reduction {self.reduction!r}")
        if self.normalization not in VALID_NORMALIZATIONS:
            raise ConfigError(f"region: unknown normalization {self.normalization!r}")


@dataclass(frozen=True)
class CompareConfig:
    n_hat: tuple = (3, 5, 10)
    duration: float = 10.0
    scenario: str = "glide"

    def validate(self):
        if not self.n_hat:
            raise ConfigError("compare: n_hat must be non-empty")
        if self.duration <= 0:
            raise ConfigError("compare: duration must be positive")


@dataclass(frozen=True)
class PipelineConfig:
    model_name: str = "parafoil"
    simulate: SimulateConfig = field(default_factory=SimulateConfig)
    reduce: ReduceConfig = field(default_factory=ReduceConfig)
    region: RegionConfig = field(default_factory=RegionConfig)
    compare: CompareConfig = field(default_factory=CompareConfig)
    out_dir: str = "out"
    deterministic: bool = False

    def validate(self) -> "PipelineConfig":
        try:
            model = get_model(self.model_name)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        self.simulate.validate()
        from .lpv import ab_entry_indices

        self.reduce.validate(len(ab_entry_indices(model)))
        self.region.validate()
        self.compare.validate()
        if int(self.region.n_hat) not in {int(n) for n in self.reduce.n_hat}:
            raise ConfigError(f"region: n_hat={self.region.n_hat} is not part of the reduce sweep")
        return self

    def as_dict(self) -> dict:
        d = asdict(self)
        d["reduce"]["dnn"]["hidden"] = list(self.reduce.dnn.hidden)
        return d


def _build(section: dict, cls, name: str):
    known = cls.__dataclass_fields__
    unknown = set(section) - set(known)
    if unknown:
        raise ConfigError(f"{name}: unknown keys {sorted(unknown)}")
    coerced = {}
    for key, value in section.items():
        if isinstance(value, list):
            value = tuple(value)
        coerced[key] = value
    try:
        return cls(**coerced)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: {exc}") from None


def load_config(path, overrides: Optional[dict] = None) -> PipelineConfig:
    """Parse and validate a TOML or JSON pipeline configuration file.

    ``overrides`` (dotted-section dicts, e.g. ``{"out_dir": ...}``) replace
    file values; used by the command-line flags.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    if path.suffix == ".json":
        raw = json.loads(path.read_text())
    else:
        with open(path, "rb") as fh:
            try:
                raw = tomllib.load(fh)
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a table")

    known_sections = {"model", "simulate", "reduce", "region", "compare", "output"}
    unknown = set(raw) - known_sections
    if unknown:
        raise ConfigError(f"unknown config sections {sorted(unknown)}")

    model_sec = raw.get("model", {})
    if set(model_sec) - {"name"}:
        raise ConfigError(f"model: unknown keys {sorted(set(model_sec) - {'name'})}")
    reduce_sec = dict(raw.get("reduce", {}))
    dnn_sec = reduce_sec.pop("dnn", {})
    dnn_cfg = _build(dnn_sec, TrainConfig, "reduce.dnn")
    reduce_cfg = _build({**reduce_sec, "dnn": dnn_cfg}, ReduceConfig, "reduce")

    out_sec = raw.get("output", {})
    if set(out_sec) - {"directory"}:
        raise ConfigError(f"output: unknown keys {sorted(set(out_sec) - {'directory'})}")

    cfg = PipelineConfig(
        model_name=model_sec.get("name", "parafoil"),
        simulate=_build(raw.get("simulate", {}), SimulateConfig, "simulate"),
        reduce=reduce_cfg,
        region=_build(raw.get("region", {}), RegionConfig, "region"),
        compare=_build(raw.get("compare", {}), CompareConfig, "compare"),
        out_dir=out_sec.get("directory", "out"),
    )
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    return cfg.validate()


def apply_overrides(cfg: PipelineConfig, overrides: dict) -> PipelineConfig:
    """Apply flat CLI overrides (out_dir, seed, deterministic, n_hat, ...)."""
    if "out_dir" in overrides and overrides["out_dir"] is not None:
        cfg = replace(cfg, out_dir=str(overrides["out_dir"]))
    if overrides.get("deterministic"):
        cfg = replace(cfg, deterministic=True)
    if overrides.get("seed") is not None:
        cfg = replace(cfg, simulate=replace(cfg.simulate, seed=int(overrides["seed"])))
    if overrides.get("n_hat") is not None:
        n_hat = tuple(int(v) for v in overrides["n_hat"])
        cfg = replace(cfg, reduce=replace(cfg.reduce, n_hat=n_hat),
                      compare=replace(cfg.compare, n_hat=n_hat))
        if int(cfg.region.n_hat) not in {int(n) for n in n_hat}:
            cfg = replace(cfg, region=replace(cfg.region, n_hat=int(n_hat[0])))
    if overrides.get("norm") is not None:
        norm = str(overrides["norm"])
        cfg = replace(cfg, reduce=replace(cfg.reduce, normalizations=(norm,)),
                      region=replace(cfg.region, normalization=norm))
    if overrides.get("method") is not None:
        cfg = replace(cfg, reduce=replace(cfg.reduce, methods=(str(overrides["method"]),)))
    return cfg


def config_hash(cfg: PipelineConfig) -> str:
    """Stable hash of the configuration tree.

    The output location and threading flag do not influence artifact
    content, so they are excluded from the hash.
    """
    d = cfg.as_dict()
    d.pop("out_dir", None)
    d.pop("deterministic", None)
    canon = json.dumps(d, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()
