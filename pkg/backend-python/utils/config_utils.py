# config_utils.py
# ---------------------------------------------------------------
# Esquema da configuração (config.yaml) e validação:
#   - DEFAULT_CONFIG define todas as chaves aceitas e seus tipos
#   - Chaves desconhecidas são rejeitadas (caminho pontilhado na mensagem)
#   - Sobrescritas de linha de comando no formato chave.pontilhada=valor
#   - Verificações de domínio antes de qualquer cálculo
#   - Caminhos relativos resolvidos contra a raiz do backend
# ---------------------------------------------------------------

import copy
import hashlib
import json
import os

import yaml

from src.errors import ConfigError

COMMANDS = ("gen-nodes", "smile", "surface", "calibrate", "barrier", "landscape")
SCHEMES = ("msoe", "soe", "cholesky")
BACKEND_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))

DEFAULT_CONFIG = {
    "execution_mode": "smile",
    "paths": {
        "out_dir": "./data/out",
        "resources": "./resources",
    },
    "run": {
        "seed": 20240601,
        "threads": None,
        "block_size": 4096,
        "progress": True,
    },
    "model": {
        "xi0": {
            "kind": "constant",
            "levels": [0.055225],
            "pillars": None,
            "kappa": 0.01,
            "nn_weights_file": None,
            "nn_seed": 0,
            "leaky_slope": 0.01,
        },
        "hurst": 0.07,
        "rho": -0.9,
        "eta": 1.9,
        "s0": 1.0,
        "r": 0.0,
    },
    "kernel": {
        "eps": 1.0e-3,
        "delta": None,
        "grid_points": 10000,
        "nodes_file": None,
    },
    "simulation": {
        "n": 128,
        "m": 262144,
        "cholesky_cap": 512,
        "dump_paths": False,
        "dump_limit": 100,
    },
    "smile": {
        "maturity": 1.0,
        "log_strikes": None,
        "schemes": ["msoe", "soe"],
        "benchmark": "cholesky",
        "benchmark_n": None,
        "kind": "call",
    },
    "surface": {
        "maturities": None,
        "log_strikes": None,
        "schemes": ["msoe", "soe"],
        "benchmark": "cholesky",
        "benchmark_n": None,
        "kind": "call",
    },
    "barrier": {
        "maturities": [0.3, 0.5, 1.0],
        "tau": 0.002,
        "scheme": "msoe",
        "dop_strike": 0.95,
        "dop_barriers": [0.70, 0.71, 0.72, 0.73, 0.74, 0.75, 0.76, 0.77,
                         0.78, 0.79, 0.80, 0.81, 0.82, 0.83, 0.84, 0.85],
        "uoc_strike": 1.05,
        "uoc_barriers": [1.15, 1.16, 1.17, 1.18, 1.19, 1.20, 1.21, 1.22,
                         1.23, 1.24, 1.25, 1.26, 1.27, 1.28, 1.29, 1.30],
        "include_zero_barrier": True,
    },
    "calibration": {
        "case": 0,
        "loss": "w1",
        "initial_curve": None,
        "fixed": [],
        "maturities": [0.3, 0.5, 1.0],
        "strikes": [0.9, 0.95, 1.0, 1.05],
        "test_maturities": [],
        "test_strikes": [0.8, 0.85, 1.1, 1.15],
        "tau": 0.002,
        "m": 8192,
        "eps": 1.0e-3,
        "eps_stop": None,
        "patience": None,
        "delta_min": None,
        "max_iters": 5000,
        "fd_step": 0.001,
        "regen_threshold": 1.0e-4,
    },
    "market": {
        "samples_file": None,
        "truth_curve": None,
        "seed": None,
        "bids": None,
        "asks": None,
    },
    "landscape": {
        "loss": "w1",
        "pair": ["H", "eta"],
        "ranges": [[0.05, 0.09], [1.5, 2.3]],
        "grid": 25,
        "common_noise": True,
    },
    "gen_nodes": {
        "hurst": 0.07,
        "delta": 0.0078125,
        "T": 1.0,
        "eps": 1.0e-3,
        "out_file": "nodes.csv",
    },
}


def _check_type(value, default, dotted):
    # None no padrão: chave opcional, validada por quem a consome
    if default is None:
        return value
    if value is None:
        raise ConfigError(f"{dotted}: valor nulo não permitido.")
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{dotted}: esperado booleano, recebido {value!r}.")
    elif isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{dotted}: esperado inteiro, recebido {value!r}.")
    elif isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{dotted}: esperado número, recebido {value!r}.")
        value = float(value)
    elif isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{dotted}: esperado texto, recebido {value!r}.")
    elif isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{dotted}: esperado lista, recebido {value!r}.")
    return value


def merge_config(user, defaults=None, prefix=""):
    """Mescla `user` sobre os padrões rejeitando chaves fora do esquema."""
    defaults = DEFAULT_CONFIG if defaults is None else defaults
    merged = copy.deepcopy(defaults)
    if user is None:
        return merged
    if not isinstance(user, dict):
        raise ConfigError(f"{prefix or 'config'}: esperado mapeamento, recebido {type(user).__name__}.")
    for key, value in user.items():
        dotted = f"{prefix}.{key}" if prefix else str(key)
        if key not in defaults:
            raise ConfigError(f"Chave desconhecida na configuração: {dotted}")
        default = defaults[key]
        if isinstance(default, dict):
            merged[key] = merge_config(value, default, dotted)
        else:
            merged[key] = _check_type(value, default, dotted)
    return merged


def apply_overrides(cfg, overrides):
    """Aplica sobrescritas 'a.b.c=valor' (valor interpretado como YAML)."""
    user = {}
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"Sobrescrita inválida (use chave=valor): {item}")
        dotted, raw = item.split("=", 1)
        keys = dotted.strip().split(".")
        node = user
        for key in keys[:-1]:
            node = node.setdefault(key, {})
            if not isinstance(node, dict):
                raise ConfigError(f"Sobrescrita conflitante em {dotted}.")
        try:
            node[keys[-1]] = yaml.safe_load(raw)
        except yaml.YAMLError as exc:
            raise ConfigError(f"Valor inválido em {dotted}: {exc}") from exc
    return merge_config(_deep_update(copy.deepcopy(cfg), user)) if user else cfg


def _deep_update(base, extra):
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _deep_update(base[key], value)
        else:
            base[key] = value
    return base


def _is_number(value):
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _require(condition, message):
    if not condition:
        raise ConfigError(message)


def _check_schemes(names, dotted):
    for name in names:
        _require(name in SCHEMES, f"{dotted}: esquema desconhecido '{name}' (use {SCHEMES}).")


def validate_config(cfg):
    _require(cfg["execution_mode"] in COMMANDS,
             f"execution_mode desconhecido: {cfg['execution_mode']} (use {COMMANDS}).")

    run = cfg["run"]
    _require(run["seed"] >= 0, "run.seed deve ser >= 0.")
    threads = run["threads"]
    _require(threads is None or (_is_number(threads) and int(threads) == threads and threads >= 1),
             "run.threads deve ser nulo ou >= 1.")
    _require(run["block_size"] >= 1, "run.block_size deve ser >= 1.")

    model = cfg["model"]
    _require(0.0 < model["hurst"] < 0.5, "model.hurst deve estar em (0, 1/2).")
    _require(-1.0 < model["rho"] < 1.0, "model.rho deve estar em (-1, 1).")
    _require(model["eta"] >= 0.0, "model.eta não pode ser negativo.")
    _require(model["s0"] > 0.0, "model.s0 deve ser positivo.")

    kernel = cfg["kernel"]
    _require(kernel["eps"] > 0.0, "kernel.eps deve ser positivo.")
    _require(kernel["grid_points"] >= 2, "kernel.grid_points deve ser >= 2.")
    _require(kernel["delta"] is None or (_is_number(kernel["delta"]) and kernel["delta"] > 0),
             "kernel.delta deve ser nulo ou positivo.")

    sim = cfg["simulation"]
    _require(sim["n"] >= 1, "simulation.n deve ser >= 1.")
    _require(sim["m"] >= 1, "simulation.m deve ser >= 1.")
    _require(sim["cholesky_cap"] >= 1, "simulation.cholesky_cap deve ser >= 1.")

    for section in ("smile", "surface"):
        block = cfg[section]
        _check_schemes(block["schemes"], f"{section}.schemes")
        _require(block["benchmark"] is None or block["benchmark"] in SCHEMES,
                 f"{section}.benchmark desconhecido: {block['benchmark']}.")
        bench_n = block["benchmark_n"]
        _require(bench_n is None or (type(bench_n) is int and bench_n >= 1),
                 f"{section}.benchmark_n deve ser nulo ou inteiro >= 1.")
        _require(bench_n is None or block["benchmark"] not in block["schemes"],
                 f"{section}.benchmark_n exige um benchmark fora de {section}.schemes.")
        _require(block["kind"] in ("call", "put", "otm"), f"{section}.kind deve ser call, put ou otm.")
    _require(cfg["smile"]["maturity"] > 0, "smile.maturity deve ser positivo.")

    barrier = cfg["barrier"]
    _check_schemes([barrier["scheme"]], "barrier.scheme")
    _require(barrier["tau"] > 0, "barrier.tau deve ser positivo.")
    _require(all(b >= 0 for b in barrier["dop_barriers"] + barrier["uoc_barriers"]),
             "barrier: barreiras não podem ser negativas.")

    calib = cfg["calibration"]
    _require(calib["loss"] in ("w1", "mse"), "calibration.loss deve ser w1 ou mse.")
    _require(calib["m"] >= 2, "calibration.m deve ser >= 2.")
    _require(calib["tau"] > 0, "calibration.tau deve ser positivo.")
    _require(calib["eps"] > 0, "calibration.eps deve ser positivo.")
    _require(calib["max_iters"] >= 1, "calibration.max_iters deve ser >= 1.")
    patience = calib["patience"]
    _require(patience is None or (isinstance(patience, int) and patience >= 1),
             "calibration.patience deve ser >= 1.")
    delta_min, eps_stop = calib["delta_min"], calib["eps_stop"]
    _require(delta_min is None or (_is_number(delta_min) and delta_min > 0),
             "calibration.delta_min deve ser positivo.")
    _require(eps_stop is None or (_is_number(eps_stop) and eps_stop >= 0),
             "calibration.eps_stop não pode ser negativo.")
    _require(len(calib["maturities"]) >= 1 and len(calib["strikes"]) >= 1,
             "calibration: exige vencimentos e strikes de treino.")

    market = cfg["market"]
    _require(market["seed"] is None or (isinstance(market["seed"], int) and market["seed"] >= 0),
             "market.seed deve ser nulo ou inteiro >= 0.")
    _require((market["bids"] is None) == (market["asks"] is None),
             "market.bids e market.asks devem ser informados juntos.")

    land = cfg["landscape"]
    _require(land["loss"] in ("w1", "mse"), "landscape.loss deve ser w1 ou mse.")
    _require(land["grid"] >= 2, "landscape.grid deve ser >= 2.")
    _require(len(land["pair"]) == 2 and len(land["ranges"]) == 2,
             "landscape: pair e ranges exigem dois elementos.")

    gen = cfg["gen_nodes"]
    _require(0.0 < gen["hurst"] < 0.5, "gen_nodes.hurst deve estar em (0, 1/2).")
    _require(gen["eps"] > 0, "gen_nodes.eps deve ser positivo.")
    _require(0 < gen["delta"] < gen["T"], "gen_nodes exige 0 < delta < T.")
    return cfg


def build_config(raw, overrides=None):
    cfg = merge_config(raw)
    cfg = apply_overrides(cfg, overrides)
    return validate_config(cfg)


def config_hash(cfg):
    canonical = json.dumps(cfg, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def resolve_path(path, root=None):
    """Caminhos relativos do config.yaml partem da raiz do backend, não do cwd."""
    if path is None or os.path.isabs(path):
        return path
    return os.path.normpath(os.path.join(root or BACKEND_DIR, path))
