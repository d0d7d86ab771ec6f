# test_config_utils.py
# ---------------------------------------------------------------
# Testes para utils/config_utils.py
# Objetivo: garantir que o esquema rejeita chaves desconhecidas,
# confere tipos e domínios e aplica sobrescritas pontilhadas.
# ---------------------------------------------------------------

import os

import pytest

from services import load_config
from src.errors import ConfigError
from src.forward_variance import curve_from_config
from utils.config_utils import (
    BACKEND_DIR,
    DEFAULT_CONFIG,
    apply_overrides,
    build_config,
    config_hash,
    merge_config,
    resolve_path,
    validate_config,
)


# ---- Test 1: Defaults and schema ----

def test_defaults_are_copied():
    cfg = merge_config(None)
    assert cfg == DEFAULT_CONFIG
    cfg["run"]["seed"] = 1
    assert DEFAULT_CONFIG["run"]["seed"] != 1


def test_shipped_yaml_matches_defaults():
    assert load_config() == validate_config(merge_config(None))


def test_unknown_key_reports_dotted_path():
    with pytest.raises(ConfigError, match="model.xi0.shape"):
        merge_config({"model": {"xi0": {"shape": 1}}})
    with pytest.raises(ConfigError, match="extra"):
        merge_config({"extra": True})


def test_type_checks():
    with pytest.raises(ConfigError):
        merge_config({"simulation": {"m": "big"}})
    with pytest.raises(ConfigError):
        merge_config({"simulation": {"n": True}})
    with pytest.raises(ConfigError):
        merge_config({"smile": {"schemes": "msoe"}})
    with pytest.raises(ConfigError):
        merge_config({"run": {"seed": None}})
    with pytest.raises(ConfigError):
        merge_config({"run": ["seed"]})
    cfg = merge_config({"model": {"eta": 2}})
    assert isinstance(cfg["model"]["eta"], float)


# ---- Test 2: Overrides ----

def test_overrides_are_parsed_as_yaml():
    cfg = apply_overrides(merge_config(None), [
        "simulation.m=1024",
        "smile.schemes=[msoe]",
        "kernel.delta=0.01",
        "run.threads=null",
    ])
    assert cfg["simulation"]["m"] == 1024
    assert cfg["smile"]["schemes"] == ["msoe"]
    assert cfg["kernel"]["delta"] == 0.01
    assert cfg["run"]["threads"] is None


def test_bad_overrides():
    base = merge_config(None)
    with pytest.raises(ConfigError):
        apply_overrides(base, ["simulation.m"])
    with pytest.raises(ConfigError):
        apply_overrides(base, ["simulation.m.x=1"])
    with pytest.raises(ConfigError):
        apply_overrides(base, ["simulation.paths=10"])
    assert apply_overrides(base, []) is base


# ---- Test 3: Domain checks ----

@pytest.mark.parametrize("override", [
    "execution_mode=plot",
    "model.hurst=0.6",
    "model.rho=-1.0",
    "model.eta=-0.5",
    "kernel.eps=0.0",
    "simulation.m=0",
    "smile.schemes=[hybrid]",
    "smile.kind=digital",
    "smile.benchmark_n=0",
    "surface.benchmark_n=0.5",
    "barrier.scheme=euler",
    "calibration.loss=kl",
    "calibration.m=1",
    "calibration.patience=0",
    "landscape.grid=1",
    "gen_nodes.delta=2.0",
    "market.bids=[0.1]",
])
def test_domain_violations(override):
    with pytest.raises(ConfigError):
        build_config(None, [override])


def test_fine_benchmark_cannot_be_a_compared_scheme():
    with pytest.raises(ConfigError, match="benchmark_n"):
        build_config(None, ["smile.benchmark_n=256", "smile.schemes=[msoe, cholesky]"])
    cfg = build_config(None, ["smile.benchmark_n=256"])
    assert cfg["smile"]["benchmark_n"] == 256


def test_build_config_accepts_valid_overrides():
    cfg = build_config({"run": {"seed": 7}}, ["simulation.n=64"])
    assert cfg["run"]["seed"] == 7
    assert cfg["simulation"]["n"] == 64


def test_config_hash_is_stable():
    a = build_config(None)
    b = build_config(None)
    assert config_hash(a) == config_hash(b)
    assert len(config_hash(a)) == 64
    assert config_hash(build_config(None, ["run.seed=1"])) != config_hash(a)


def test_curve_experiment_preset_loads():
    preset = os.path.join(os.path.dirname(__file__), "..", "resources", "experimento_curva.yaml")
    cfg = load_config(preset)
    calib = cfg["calibration"]
    assert cfg["execution_mode"] == "calibrate"
    assert calib["patience"] == 30
    assert calib["test_maturities"] == [1.2, 1.5]
    curve = curve_from_config(calib["initial_curve"])
    assert curve.kind == "pwc" and len(curve.params) == 8
    assert curve.horizon == 1.5
    assert cfg["market"]["truth_curve"] == "ns"


# ---- Test 4: Relative paths ----

def test_relative_paths_resolve_against_backend_root(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    out_dir = resolve_path(DEFAULT_CONFIG["paths"]["out_dir"])
    assert out_dir == os.path.join(BACKEND_DIR, "data", "out")
    assert resolve_path("./resources") == os.path.join(BACKEND_DIR, "resources")
    assert os.path.isdir(resolve_path(DEFAULT_CONFIG["paths"]["resources"]))


def test_absolute_paths_are_kept(tmp_path):
    assert resolve_path(str(tmp_path)) == str(tmp_path)
    assert resolve_path(None) is None
    assert resolve_path("saida", root=str(tmp_path)) == os.path.join(str(tmp_path), "saida")
