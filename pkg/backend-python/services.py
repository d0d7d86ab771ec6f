import json
import logging
import os

import numpy as np
import yaml

from src.calibrator import (
    CalibConfig,
    calibrate,
    case_params,
    contract_grid,
    generate_market,
    iteration_seed,
    landscape,
    market_seed,
    model_prices,
)
from src.errors import ConfigError
from src.forward_variance import ParamTransform, curve_from_config, ground_truth_curve
from src.implied_vol import (
    SMILE_LOG_STRIKES,
    SURFACE_LOG_STRIKES,
    SURFACE_MATURITIES,
    compare_surfaces,
    smile_from_batch,
    surface_from_batch,
)
from src.path_simulator import GridSchedule, ModelParams, simulate_paths
from src.pricing import Contract, parameter_ape, price_contract, pricing_errors, tolerance_epsilon
from src.soe_kernel import generate_soe, read_soe, sup_error, write_soe
from utils.config_utils import build_config, resolve_path
from utils.io_utils import (
    command_folder,
    normalize_path,
    read_market_samples,
    write_csv,
    write_landscape,
    write_manifest,
    write_market_samples,
    write_path_dump,
    write_report,
    write_trajectory,
    write_vol_points,
)
from utils.log_utils import configurar_logging


# Carrega as configurações (esquema validado + sobrescritas da linha de comando):
def load_config(path=None, overrides=None):
    if path is None:
        base_dir = os.path.dirname(os.path.abspath(__file__))
        path = os.path.join(base_dir, "config.yaml")
    if not os.path.exists(path):
        raise ConfigError(f"Arquivo de configuração não encontrado: {path}")
    with open(path, "r", encoding="utf-8") as f:
        try:
            raw = yaml.safe_load(f)
        except yaml.YAMLError as exc:
            raise ConfigError(f"YAML inválido em {path}: {exc}") from exc
    return build_config(raw, overrides)


def _start(cfg, command, titulo):
    print(f"\n=== MÓDULO: {titulo} ===")
    folder = command_folder(resolve_path(cfg["paths"]["out_dir"]), command)
    configurar_logging(folder, command)
    logging.info("Iniciando '%s' com semente %d.", command, cfg["run"]["seed"])
    return folder


def _finish(cfg, command, folder, titulo, resumo, files, extra_sections=None):
    files = list(files)
    files.append(write_manifest(folder, command, cfg, files + ["relatorio.md"]))
    files.append(write_report(folder, titulo, resumo, files, extra_sections))
    logging.info("'%s' concluído: %d arquivos em %s.", command, len(files), folder)
    return {"pasta": folder, "arquivos": [normalize_path(f) for f in files], "resumo": resumo}


def _model_params(cfg):
    model = cfg["model"]
    return ModelParams(
        curve_from_config(model["xi0"]),
        model["hurst"], model["rho"], model["eta"], model["s0"], model["r"],
    )


def _resolve_resource(cfg, path):
    if os.path.isabs(path) or os.path.exists(path):
        return path
    candidate = os.path.join(resolve_path(cfg["paths"]["resources"]), path)
    return candidate if os.path.exists(candidate) else path


def _kernel(cfg, H, tau, T):
    kernel = cfg["kernel"]
    delta = kernel["delta"] or tau
    if kernel["nodes_file"]:
        path = _resolve_resource(cfg, kernel["nodes_file"])
        if not os.path.exists(path):
            raise ConfigError(f"Arquivo de nós não encontrado: {path}")
        soe = read_soe(path, H, delta, T)
        logging.info("Nós carregados de %s (N=%d).", path, soe.n_terms)
        return soe
    return generate_soe(H, delta, T, kernel["eps"], kernel["grid_points"])


def _simulate(cfg, params, schedule, soe, scheme, store_paths=False):
    run, sim = cfg["run"], cfg["simulation"]
    return simulate_paths(
        params, schedule, soe if scheme != "cholesky" else None, scheme,
        sim["m"], run["seed"], run["threads"], run["block_size"],
        store_paths=store_paths, cholesky_cap=sim["cholesky_cap"], progress=run["progress"],
    )


def _dump_paths(cfg, folder, batch, files):
    if cfg["simulation"]["dump_paths"]:
        path = os.path.join(folder, f"caminhos_{batch.scheme}.csv")
        files.append(write_path_dump(path, batch, cfg["simulation"]["dump_limit"]))


# Módulo de geração de nós SOE:
def run_gen_nodes_module(cfg):
    folder = _start(cfg, "gen-nodes", "GERAÇÃO DE NÓS SOE")
    gen = cfg["gen_nodes"]
    soe = generate_soe(gen["hurst"], gen["delta"], gen["T"], gen["eps"], cfg["kernel"]["grid_points"])
    error = sup_error(soe, gen["hurst"], gen["delta"], gen["T"], cfg["kernel"]["grid_points"])
    path = write_soe(soe, os.path.join(folder, gen["out_file"]))
    print(f"N = {soe.n_terms} | erro uniforme certificado = {error:.6e}")

    resumo = {
        "H": gen["hurst"],
        "delta": gen["delta"],
        "T": gen["T"],
        "eps": gen["eps"],
        "N": soe.n_terms,
        "erro_uniforme": error,
    }
    return _finish(cfg, "gen-nodes", folder, "Resultado da Geração de Nós", resumo, [path])


def _vol_study(cfg, command, titulo, relatorio, build_points, schedule_for, T_max):
    folder = _start(cfg, command, titulo)
    block = cfg[command]
    params = _model_params(cfg)
    bench, bench_n = block["benchmark"], block["benchmark_n"]
    schemes = list(dict.fromkeys(block["schemes"] + ([bench] if bench else [])))
    schedule = schedule_for(cfg["simulation"]["n"])
    soe = None
    if any(s != "cholesky" for s in schemes):
        soe = _kernel(cfg, params.hurst, schedule.tau, T_max)

    files, points = [], {}
    for scheme in schemes:
        if scheme == bench and bench_n:
            # referência fixa em grade fina, independente do n comparado
            bench_schedule = schedule_for(bench_n)
            bench_soe = soe
            if scheme != "cholesky":
                bench_soe = _kernel(cfg, params.hurst, bench_schedule.tau, T_max)
            batch = _simulate(cfg, params, bench_schedule, bench_soe, scheme,
                              cfg["simulation"]["dump_paths"])
        else:
            batch = _simulate(cfg, params, schedule, soe, scheme, cfg["simulation"]["dump_paths"])
        points[scheme] = build_points(batch, params)
        _dump_paths(cfg, folder, batch, files)
    files.insert(0, write_vol_points(os.path.join(folder, f"{command}.csv"), points))

    resumo = {"n": schedule.n, "m": cfg["simulation"]["m"], "N": soe.n_terms if soe else 0}
    if bench:
        resumo["n_benchmark"] = bench_n or schedule.n
        rows = []
        for scheme in schemes:
            if scheme == bench:
                continue
            cmp = compare_surfaces(points[scheme], points[bench])
            rows.append([scheme, bench, cmp["max_rel_error"], cmp["n_valid"], cmp["n_excluded"]])
            resumo[f"erro_rel_max_{scheme}"] = cmp["max_rel_error"]
            print(f"{scheme} x {bench}: erro relativo máximo = {cmp['max_rel_error']:.6f}")
        files.append(write_csv(
            os.path.join(folder, "resumo.csv"),
            ["scheme", "benchmark", "max_rel_error", "n_valid", "n_excluded"], rows,
        ))
    return _finish(cfg, command, folder, relatorio, resumo, files)


# Módulo de smile de volatilidade implícita:
def run_smile_module(cfg):
    smile = cfg["smile"]
    T = smile["maturity"]
    log_strikes = smile["log_strikes"] or SMILE_LOG_STRIKES

    def schedule_for(n):
        return GridSchedule.uniform(T, n)

    def build(batch, params):
        return smile_from_batch(batch, T, log_strikes, params.s0, params.r, smile["kind"])

    return _vol_study(
        cfg, "smile", "SMILE DE VOLATILIDADE", "Resultado do Smile de Volatilidade", build, schedule_for, T
    )


# Módulo de superfície de volatilidade implícita:
def run_surface_module(cfg):
    surface = cfg["surface"]
    maturities = surface["maturities"] or list(SURFACE_MATURITIES)
    T = max(maturities)
    log_strikes = surface["log_strikes"] or SURFACE_LOG_STRIKES

    def schedule_for(n):
        return GridSchedule.uniform(T, n, maturities)

    def build(batch, params):
        return surface_from_batch(
            batch, batch.schedule.maturities, log_strikes, params.s0, params.r, surface["kind"]
        )

    return _vol_study(
        cfg, "surface", "SUPERFÍCIE DE VOLATILIDADE", "Resultado da Superfície de Volatilidade",
        build, schedule_for, T,
    )


# Módulo de opções de barreira:
def run_barrier_module(cfg):
    folder = _start(cfg, "barrier", "OPÇÕES DE BARREIRA")
    barrier = cfg["barrier"]
    params = _model_params(cfg)
    schedule = GridSchedule.from_maturities(barrier["maturities"], barrier["tau"])
    T_max = max(schedule.maturities)
    scheme = barrier["scheme"]
    soe = _kernel(cfg, params.hurst, schedule.tau, T_max) if scheme != "cholesky" else None
    batch = _simulate(cfg, params, schedule, soe, scheme, cfg["simulation"]["dump_paths"])

    dop_barriers = list(barrier["dop_barriers"])
    if barrier["include_zero_barrier"]:
        dop_barriers.append(0.0)
    rows, files = [], []
    for T in schedule.maturities:
        contracts = [Contract("put", barrier["dop_strike"], T), Contract("call", barrier["uoc_strike"], T)]
        contracts += [Contract("down-and-out-put", barrier["dop_strike"], T, B) for B in dop_barriers]
        contracts += [Contract("up-and-out-call", barrier["uoc_strike"], T, B) for B in barrier["uoc_barriers"]]
        for contract in contracts:
            est = price_contract(batch, contract, params.r)
            B = "" if contract.barrier is None else contract.barrier
            rows.append([scheme, contract.kind, T, contract.strike, B, est.mean, est.stderr, est.m])
    files.append(write_csv(
        os.path.join(folder, "barreiras.csv"),
        ["scheme", "kind", "T", "K", "B", "price", "stderr", "m"], rows,
    ))
    _dump_paths(cfg, folder, batch, files)

    resumo = {"esquema": scheme, "m": batch.m, "N": batch.n_terms, "contratos": len(rows)}
    return _finish(cfg, "barrier", folder, "Resultado das Opções de Barreira", resumo, files)


def _truth_and_initial(cfg):
    calib, market = cfg["calibration"], cfg["market"]
    truth, initial = case_params(calib["case"])
    if market["truth_curve"]:
        truth = truth._replace(curve=ground_truth_curve(market["truth_curve"]))
    if calib["initial_curve"]:
        initial = initial._replace(curve=curve_from_config(calib["initial_curve"]))
    return truth, initial


def _calib_config(cfg, initial, market_samples, loss, eps_stop=None, contracts=None):
    calib, run = cfg["calibration"], cfg["run"]
    return CalibConfig(
        initial=initial,
        contracts=contracts or contract_grid(calib["maturities"], calib["strikes"]),
        market_samples=market_samples,
        loss=loss,
        tau=calib["tau"],
        m=calib["m"],
        eps=calib["eps"],
        eps_stop=eps_stop,
        patience=calib["patience"],
        delta_min=calib["delta_min"],
        max_iters=calib["max_iters"],
        master_seed=run["seed"],
        fd_step=calib["fd_step"],
        regen_threshold=calib["regen_threshold"],
        grid_points=cfg["kernel"]["grid_points"],
        s0=cfg["model"]["s0"],
        r=cfg["model"]["r"],
        threads=run["threads"],
        block_size=run["block_size"],
        fixed=tuple(calib["fixed"]),
        progress=run["progress"],
    )


def _synthetic_market(cfg, truth, maturities, seed):
    calib, run = cfg["calibration"], cfg["run"]
    return generate_market(
        truth, maturities, calib["tau"], calib["m"], calib["eps"], seed,
        cfg["model"]["s0"], cfg["model"]["r"], run["threads"], run["block_size"],
        cfg["kernel"]["grid_points"],
    )


def _scalar_values(params):
    values = {"H": params.hurst, "rho": params.rho, "eta": params.eta}
    if params.curve.kind == "constant":
        values["xi0"] = float(params.curve.params[0])
    return values


# Módulo de calibração por Wasserstein-1 (ou MSE):
def run_calibrate_module(cfg):
    folder = _start(cfg, "calibrate", "CALIBRAÇÃO")
    calib, market = cfg["calibration"], cfg["market"]
    truth, initial = _truth_and_initial(cfg)
    files = []

    train = contract_grid(calib["maturities"], calib["strikes"])
    test_maturities = calib["test_maturities"] or calib["maturities"]
    test = contract_grid(test_maturities, calib["test_strikes"])

    synthetic = not market["samples_file"]
    if synthetic:
        seed = market["seed"] if market["seed"] is not None else market_seed(cfg["run"]["seed"])
        samples = _synthetic_market(cfg, truth, calib["maturities"], seed)
        files.append(write_market_samples(os.path.join(folder, "mercado.csv"), samples))
    else:
        samples = read_market_samples(_resolve_resource(cfg, market["samples_file"]))

    eps_stop = calib["eps_stop"]
    if market["bids"] is not None:
        eps_stop = tolerance_epsilon(market["bids"], market["asks"])
        logging.info("Tolerância de parada pelos spreads bid-ask: %.6e", eps_stop)

    config = _calib_config(cfg, initial, samples, calib["loss"], eps_stop)
    run = calibrate(config)
    files.insert(0, write_trajectory(os.path.join(folder, "trajetoria.csv"), run))

    theta = run.theta_star
    summary = {
        "stop_reason": run.stop_reason,
        "iterations": run.iterations,
        "initial_loss": run.records[0].loss,
        "best_loss": run.best.loss,
        "theta_star": dict(zip(run.names, ParamTransform(theta.curve).values(theta).tolist())),
    }
    if synthetic:
        summary["ape"] = parameter_ape(_scalar_values(theta), _scalar_values(truth))
        # ruído comum, independente do usado na calibração
        eval_seed = iteration_seed(cfg["run"]["seed"], config.max_iters + 1)
        for label, contracts in (("in_sample", train), ("out_of_sample", test)):
            star = model_prices(config, theta, contracts, eval_seed)
            bench = model_prices(config, truth, contracts, eval_seed)
            summary[label] = pricing_errors(star, bench)

    path = os.path.join(folder, "resumo.json")
    with open(path, "w", encoding="utf-8") as f:
        json.dump(summary, f, ensure_ascii=False, indent=2, sort_keys=True)
        f.write("\n")
    files.append(normalize_path(path))
    print(f"Parada: {run.stop_reason} após {run.iterations} iterações.")

    resumo = {
        "perda": calib["loss"],
        "motivo_parada": run.stop_reason,
        "iteracoes": run.iterations,
        "perda_inicial": summary["initial_loss"],
        "melhor_perda": summary["best_loss"],
    }
    extra = {"Parâmetros calibrados": [f"- {k}: `{v:.8g}`" for k, v in summary["theta_star"].items()
                                       if not k.startswith("w_")]}
    if "ape" in summary:
        extra["APE por parâmetro"] = [f"- {k}: `{v:.6g}`" for k, v in sorted(summary["ape"].items())]
    return _finish(cfg, "calibrate", folder, "Resultado da Calibração", resumo, files, extra)


# Módulo de paisagem da perda:
def run_landscape_module(cfg):
    folder = _start(cfg, "landscape", "PAISAGEM DA PERDA")
    calib, land = cfg["calibration"], cfg["landscape"]
    truth, _ = _truth_and_initial(cfg)
    # mesmo ruído do mercado e das células: a célula verdadeira tem perda nula
    seed = iteration_seed(cfg["run"]["seed"], 0) if land["common_noise"] else market_seed(cfg["run"]["seed"])
    if cfg["market"]["samples_file"]:
        samples = read_market_samples(_resolve_resource(cfg, cfg["market"]["samples_file"]))
    else:
        samples = _synthetic_market(cfg, truth, calib["maturities"], seed)
    config = _calib_config(cfg, truth, samples, land["loss"])

    pair = tuple(land["pair"])
    ranges = tuple(tuple(r) for r in land["ranges"])
    xs, ys, values = landscape(config, pair, ranges, land["grid"], center=truth)
    path = write_landscape(os.path.join(folder, "paisagem.csv"), pair, xs, ys, values)

    finite = np.isfinite(values)
    resumo = {"perda": land["loss"], "grade": land["grid"], "celulas_ausentes": int((~finite).sum())}
    if finite.any():
        i, j = np.unravel_index(np.nanargmin(values), values.shape)
        resumo[f"minimo_{pair[0]}"] = float(xs[i])
        resumo[f"minimo_{pair[1]}"] = float(ys[j])
        resumo["log_perda_minima"] = float(values[i, j])
    return _finish(cfg, "landscape", folder, "Resultado da Paisagem da Perda", resumo, [path])


MODULES = {
    "gen-nodes": run_gen_nodes_module,
    "smile": run_smile_module,
    "surface": run_surface_module,
    "calibrate": run_calibrate_module,
    "barrier": run_barrier_module,
    "landscape": run_landscape_module,
}


def run_module(cfg, command=None):
    command = command or cfg["execution_mode"]
    if command not in MODULES:
        raise ConfigError(f"Comando desconhecido: {command} (use {sorted(MODULES)}).")
    return MODULES[command](cfg)
