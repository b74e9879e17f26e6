import dataclasses
import json
from pathlib import Path

import pytest

from tapermle.baseconf import RunConfig, load_config
from tapermle.covmodel import CovFamily, TaperFamily
from tapermle.errors import ConfigError
from tapermle import schema
from tapermle.schema import OPTIONAL_SECTIONS, SCHEMA, Field, validate_config
from tapermle.simulate import DesignKind

MINIMAL = {"model": {"family": "exponential", "sigma2": 1.0, "theta": 2.0}}


def with_keys(**sections) -> dict:
    doc = json.loads(json.dumps(MINIMAL))
    doc.update(sections)
    return doc


def config_error(doc: dict) -> ConfigError:
    with pytest.raises(ConfigError) as e:
        RunConfig.from_dict(doc)
    return e.value


def test_defaults_are_filled():
    conf = RunConfig.from_dict(MINIMAL)
    assert conf.model.family is CovFamily.EXPONENTIAL
    assert conf.model.nu == 0.5
    assert conf.taper.is_identity
    assert conf.design.kind is DesignKind.REGULAR
    assert conf.design.n is None
    assert conf.estimator.kind == "fixed"
    assert conf.box is None
    assert conf.mc.replicates == 100
    assert conf.mc.acceptance.mean_tol == 0.25
    assert conf.bench.n_list == [1000, 2000, 5000]
    assert conf.bench.runs == 5
    assert conf.seed.root == 0
    assert conf.threads is None
    assert conf.output.summary is None
    assert conf.diag.alt_model is None


def test_full_config():
    conf = RunConfig.from_dict(
        {
            "$schema": "./tapermle.schema.json",
            "model": {"family": "Matern", "sigma2": 1, "theta": 1, "nu": 1},
            "taper": {"family": "WendlandTwo", "gamma": 0.3},
            "design": {"kind": "jittered", "n": 64, "jitter": 0.25},
            "box": {"a": 0.25, "b": 4, "w": 0.25, "v": 4},
            "mc": {"n_list": [128, 256], "theta1": 2, "acceptance": {"mean_tol": None}},
            "diag": {"alt_model": {"family": "matern", "sigma2": 0.25, "theta": 2, "nu": 1}},
            "seed": 2**64 - 1,
        }
    )
    assert conf.model.family is CovFamily.MATERN
    assert conf.taper.family is TaperFamily.WENDLAND2
    assert conf.taper.gamma == 0.3
    assert conf.design.kind is DesignKind.JITTERED
    assert conf.box.theta_range == (0.25, 4.0)
    assert conf.mc.acceptance.mean_tol is None
    assert conf.diag.alt_model.microergodic == pytest.approx(conf.model.microergodic)
    assert conf.provenance()["taper"] == {"taper_family": "wendland2", "gamma": 0.3}


@pytest.mark.parametrize(
    "doc, key",
    [
        ({"model": {"family": "exponential", "theta": 1.0}}, "model.sigma2"),
        ({}, "model.family"),
        (with_keys(colour="red"), "colour"),
        (with_keys(taper={"family": "wendland1", "gama": 0.3}), "taper.gama"),
        (with_keys(mc={"acceptance": {"alpha": 0.1}}), "mc.acceptance.alpha"),
        (with_keys(taper={"family": "spherical"}), "taper.family"),
        (with_keys(taper={"family": "wendland1"}), "taper.gamma"),
        (with_keys(taper={"family": "wendland1", "gamma": -1}), "taper.gamma"),
        (with_keys(design={"jitter": 0.5}), "design.jitter"),
        (with_keys(design={"n": "100"}), "design.n"),
        (with_keys(mc={"replicates": 1}), "mc.replicates"),
        (with_keys(mc={"n_list": [256, 128]}), "mc.n_list"),
        (with_keys(mc={"grid": [[1.0]]}), "mc.grid"),
        (with_keys(bench={"runs": 3}), "bench.runs"),
        (with_keys(seed=-1), "seed"),
        (with_keys(seed=True), "seed"),
        (with_keys(box={"a": 2, "b": 1, "w": 1, "v": 2}), "box.b"),
        (with_keys(box={"a": 1, "b": 2, "w": 1}), "box.v"),
    ],
)
def test_config_errors_name_the_key(doc, key):
    assert config_error(doc).key == key


def test_exponential_rejects_other_nu():
    doc = {"model": {"family": "exponential", "sigma2": 1, "theta": 1, "nu": 1.5}}
    assert config_error(doc).key == "model.nu"
    assert config_error({"model": {"family": "matern", "sigma2": 1, "theta": 1}}).key == "model.nu"


def test_validate_config_keeps_sections():
    conf = validate_config(MINIMAL)
    assert set(conf) >= {"model", "taper", "design", "mc", "diag", "bench", "output"}
    assert conf["mc"]["acceptance"]["var_tol"] == 0.2


def test_load_config_from_file_and_directory(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(with_keys(seed=7)), encoding="utf-8")
    assert load_config(str(path)).seed.root == 7
    assert load_config(str(tmp_path)).seed.root == 7


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "absent.json"))
    bad = tmp_path / "bad.json"
    bad.write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(str(bad))


def test_run_config_holds_only_typed_sections():
    names = [f.name for f in dataclasses.fields(RunConfig)]
    assert names == [key for key in SCHEMA if key != "$schema"]


def load_json_schema() -> dict:
    path = Path(schema.__file__).with_name("schema.json")
    return json.loads(path.read_text(encoding="utf-8"))


def resolve(node: dict, root: dict) -> dict:
    ref = node.get("$ref")
    if ref is None:
        return node
    target = root
    for part in ref.removeprefix("#/").split("/"):
        target = target[part]
    return {**target, **{k: v for k, v in node.items() if k != "$ref"}}


def is_required(spec, path: str) -> bool:
    if isinstance(spec, Field):
        return spec.required
    if path.removeprefix("config.") in OPTIONAL_SECTIONS:
        return False
    return any(is_required(sub, f"{path}.{key}") for key, sub in spec.items())


def assert_mirrors(section: dict, node: dict, root: dict, path: str):
    node = resolve(node, root)
    assert node["type"] == "object", path
    assert node["additionalProperties"] is False, path
    props = node["properties"]
    assert set(props) == set(section), path
    required = {key for key, spec in section.items() if is_required(spec, f"{path}.{key}")}
    assert set(node.get("required", [])) == required, path
    for key, spec in section.items():
        if isinstance(spec, dict):
            assert_mirrors(spec, props[key], root, f"{path}.{key}")
            continue
        prop = resolve(props[key], root)
        if spec.choices is not None:
            assert tuple(prop["enum"]) == spec.choices, f"{path}.{key}"
        if spec.default is not None:
            assert prop["default"] == spec.default, f"{path}.{key}"


def test_shipped_json_schema_mirrors_the_key_schema():
    root = load_json_schema()
    assert_mirrors(SCHEMA, root, root, "config")

