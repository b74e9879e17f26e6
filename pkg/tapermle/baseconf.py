"""
tapermle: baseconf.py
"""

import dataclasses
import json
import os
from typing import Any, Optional

from tapermle.covmodel import CovModel, TaperFamily, TaperSpec
from tapermle.data import Design
from tapermle.errors import ConfigError, TaperMleError
from tapermle.likelihood import ParamBox
from tapermle.schema import validate_config
from tapermle.simulate import DesignKind, Seed, make_design


@dataclasses.dataclass
class DesignConf:
    """Sampling design of simulate and of the MC experiments."""

    kind: DesignKind
    n: Optional[int]
    jitter: float

    def build(self, seed: Seed, n: Optional[int] = None) -> Design:
        n = n or self.n
        if n is None:
            raise ConfigError("design.n", "missing required key")
        try:
            return make_design(self.kind, n, self.jitter, seed)
        except TaperMleError as e:
            raise ConfigError("design", str(e)) from e


@dataclasses.dataclass
class EstimatorConf:
    """Which estimator cmd_fit runs."""

    kind: str
    theta1: Optional[float]
    tapered: bool


@dataclasses.dataclass
class Acceptance:
    var_tol: float
    mean_tol: Optional[float]
    ks_alpha: float


@dataclasses.dataclass
class McConf:
    experiment: str
    replicates: int
    n_list: Optional[list[int]]
    theta1: Optional[float]
    seeds: int
    grid: Optional[list[tuple[float, float]]]
    derivatives: bool
    acceptance: Acceptance


@dataclasses.dataclass
class DiagConf:
    lambda_max: float
    lambda_grid: Optional[list[float]]
    alt_model: Optional[CovModel]
    band_dump: Optional[str]


@dataclasses.dataclass
class BenchConf:
    n_list: list[int]
    runs: int


@dataclasses.dataclass
class OutputConf:
    """Output paths; None writes JSON to stdout and skips optional files."""

    data: Optional[str] = None
    fit: Optional[str] = None
    summary: Optional[str] = None
    z_csv: Optional[str] = None
    report: Optional[str] = None


def _model(section: dict, prefix: str) -> CovModel:
    record = dict(section)
    if record["family"] == "exponential":
        if record.get("nu") not in (None, 0.5):
            raise ConfigError(f"{prefix}.nu", "exponential family requires nu = 0.5")
        record["nu"] = 0.5
    elif record.get("nu") is None:
        raise ConfigError(f"{prefix}.nu", "missing required key for the matern family")
    return CovModel.from_dict(record)


def _taper(section: dict) -> TaperSpec:
    family = TaperFamily.parse(section["family"])
    if family is TaperFamily.NONE:
        return TaperSpec.none()
    if section["gamma"] is None:
        raise ConfigError("taper.gamma", f"required for taper family '{section['family']}'")
    return TaperSpec(family, section["gamma"])


def _box(section: dict) -> Optional[ParamBox]:
    values = [section[k] for k in "abwv"]
    if all(v is None for v in values):
        return None
    for key, value in zip("abwv", values):
        if value is None:
            raise ConfigError(f"box.{key}", "missing required key")
    a, b, w, v = values
    if a > b:
        raise ConfigError("box.b", f"must be >= box.a ({a}), got {b}")
    if w > v:
        raise ConfigError("box.v", f"must be >= box.w ({w}), got {v}")
    return ParamBox.from_bounds(a, b, w, v)


@dataclasses.dataclass
class RunConfig:
    """A validated run configuration with typed sections."""

    model: CovModel
    taper: TaperSpec
    design: DesignConf
    estimator: EstimatorConf
    box: Optional[ParamBox]
    mc: McConf
    diag: DiagConf
    bench: BenchConf
    seed: Seed
    threads: Optional[int]
    output: OutputConf

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        """
        Validate and type a raw config document.

        Raises:
            ConfigError: On unknown, missing, mistyped or out-of-range keys.
        """
        conf = validate_config(doc)
        try:
            model = _model(conf["model"], "model")
            taper = _taper(conf["taper"])
            alt = conf["diag"]["alt_model"]
            alt_model = _model(alt, "diag.alt_model") if alt is not None else None
        except ConfigError:
            raise
        except TaperMleError as e:
            raise ConfigError("model", str(e)) from e

        mc = conf["mc"]
        diag = conf["diag"]
        design = conf["design"]
        return cls(
            model=model,
            taper=taper,
            design=DesignConf(DesignKind(design["kind"]), design["n"], float(design["jitter"])),
            estimator=EstimatorConf(**conf["estimator"]),
            box=_box(conf["box"]),
            mc=McConf(
                experiment=mc["experiment"],
                replicates=mc["replicates"],
                n_list=mc["n_list"],
                theta1=mc["theta1"],
                seeds=mc["seeds"],
                grid=[tuple(p) for p in mc["grid"]] if mc["grid"] else None,
                derivatives=mc["derivatives"],
                acceptance=Acceptance(**mc["acceptance"]),
            ),
            diag=DiagConf(
                lambda_max=float(diag["lambda_max"]),
                lambda_grid=diag["lambda_grid"],
                alt_model=alt_model,
                band_dump=diag["band_dump"],
            ),
            bench=BenchConf(**conf["bench"]),
            seed=Seed(conf["seed"]),
            threads=conf["threads"],
            output=OutputConf(**conf["output"]),
        )

    def provenance(self) -> dict[str, Any]:
        """Model, taper, design and seed exactly as configured."""
        return {
            "model": self.model.to_dict(),
            "taper": self.taper.to_dict(),
            "design": {
                "kind": self.design.kind.value,
                "n": self.design.n,
                "jitter": self.design.jitter,
            },
            "seed": self.seed.to_dict(),
        }


def read_config(config: str = "config.json") -> dict:
    """
    Load the raw configuration document from a JSON file, or from
    config.json inside a directory.
    """
    config_path = os.path.abspath(os.path.expanduser(config))
    if os.path.isdir(config_path):
        config_path = os.path.join(config_path, "config.json")
    if not os.path.exists(config_path):
        raise ConfigError("config", f"file not found: {config_path}")
    try:
        with open(config_path, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError("config", f"invalid JSON in {config_path}: {e}") from e


def load_config(config: str = "config.json") -> RunConfig:
    return RunConfig.from_dict(read_config(config))
