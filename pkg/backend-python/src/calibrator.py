"""
Módulo: calibrator
Responsabilidade:
    - Laço de calibração: simula S_T por vencimento com os parâmetros atuais,
      avalia a perda (W1 ou MSE) contra o mercado, estima o gradiente por
      diferenças centrais com números aleatórios comuns e atualiza com Adam.
    - Kernel SOE adaptativo: reconstruído a cada iteração no H corrente e
      regenerado quando H se move além do limiar ou o certificado falha.
    - Critérios de parada (tolerância, paciência, máximo de iterações).
    - Grade de paisagem da perda para pares de parâmetros.
"""

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from tqdm import tqdm

from src.errors import CalibrationError, ConfigError, DomainError, GradientError, NumericalError
from src.forward_variance import ParamTransform, RoughParams, constant_curve
from src.path_simulator import DEFAULT_BLOCK_SIZE, GridSchedule, ModelParams, simulate_terminal_samples
from src.pricing import otm_kind, price_from_samples
from src.soe_kernel import (
    DEFAULT_GRID_POINTS,
    SoeApprox,
    generate_soe,
    soe_from_layout,
    sup_error,
)
from src.wasserstein import mse_loss, sample_sets, w1_loss

LOSS_KINDS = ("w1", "mse")
STOP_REASONS = ("tolerance", "patience", "max-iters")

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

DEFAULT_FD_STEP = 1e-3
REGEN_THRESHOLD = 1e-4
MAX_ITERATIONS = 5000

# (paciência, delta mínimo, tolerância) por tipo de perda
STOPPING_DEFAULTS = {
    "w1": (80, 1e-5, 1e-4),
    "mse": (40, 1e-9, 1e-8),
}

# caso: ((xi0, H, rho, eta) verdadeiro, chute inicial)
CASES = {
    0: ((0.09, 0.07, -0.9, 1.9), (0.15, 0.12, -0.7, 1.5)),
    1: ((0.04, 0.07, -0.9, 1.9), (0.067, 0.12, -0.7, 1.5)),
    2: ((0.09, 0.02, -0.9, 1.9), (0.15, 0.034, -0.7, 1.5)),
    3: ((0.09, 0.07, -0.7, 2.2), (0.15, 0.12, -0.544, 1.737)),
}

_LOG_FLOOR = np.finfo(float).tiny
MARKET_TAG = 2 ** 32 - 1


def scalar_params(xi0: float, hurst: float, rho: float, eta: float) -> RoughParams:
    return RoughParams(constant_curve(xi0), float(hurst), float(rho), float(eta))


def case_params(case: int) -> Tuple[RoughParams, RoughParams]:
    if case not in CASES:
        raise ConfigError(f"Caso de calibração desconhecido: {case} (use {sorted(CASES)}).")
    truth, init = CASES[case]
    return scalar_params(*truth), scalar_params(*init)


def contract_grid(maturities: Sequence[float], strikes: Sequence[float]) -> Tuple[Tuple[float, float], ...]:
    """Pares (T, K) ordenados por vencimento e depois strike."""
    return tuple((float(T), float(K)) for T in sorted(maturities) for K in strikes)


def iteration_seed(master_seed: int, iteration: int) -> int:
    seq = np.random.SeedSequence([int(master_seed), int(iteration)])
    return int(seq.generate_state(1, np.uint64)[0])


def market_seed(master_seed: int) -> int:
    # índice fora do alcance de qualquer iteração
    return iteration_seed(master_seed, MARKET_TAG)


# ---- Configuração e registros ----

@dataclass
class CalibConfig:
    initial: RoughParams
    contracts: Tuple[Tuple[float, float], ...]
    market_samples: Mapping[float, np.ndarray]
    loss: str = "w1"
    market_prices: Optional[Sequence[float]] = None
    tau: float = 1.0 / 1000
    m: int = 1 << 14
    eps: float = 1e-4
    eps_stop: Optional[float] = None
    patience: Optional[int] = None
    delta_min: Optional[float] = None
    lr_kind: Optional[str] = None
    max_iters: int = MAX_ITERATIONS
    master_seed: int = 0
    fd_step: Union[float, Sequence[float]] = DEFAULT_FD_STEP
    regen_threshold: float = REGEN_THRESHOLD
    grid_points: int = DEFAULT_GRID_POINTS
    s0: float = 1.0
    r: float = 0.0
    threads: Optional[int] = None
    block_size: int = DEFAULT_BLOCK_SIZE
    fixed: Tuple[str, ...] = ()
    progress: bool = False

    def __post_init__(self):
        if self.loss not in LOSS_KINDS:
            raise ConfigError(f"Perda desconhecida: {self.loss} (use {LOSS_KINDS}).")
        if not self.contracts:
            raise ConfigError("A calibração exige ao menos um contrato.")
        self.contracts = tuple((float(T), float(K)) for T, K in self.contracts)
        patience, delta_min, eps_stop = STOPPING_DEFAULTS[self.loss]
        if self.patience is None:
            self.patience = patience
        if self.delta_min is None:
            self.delta_min = delta_min
        if self.eps_stop is None:
            self.eps_stop = eps_stop
        if self.lr_kind is None:
            self.lr_kind = self.loss

        if self.m < 2:
            raise ConfigError(f"m deve ser >= 2, recebido {self.m}.")
        if self.patience < 1:
            raise ConfigError("patience deve ser >= 1.")
        if not self.delta_min > 0:
            raise ConfigError("delta_min deve ser positivo.")
        if self.eps_stop < 0:
            raise ConfigError("eps_stop não pode ser negativo.")
        if self.max_iters < 1:
            raise ConfigError("max_iters deve ser >= 1.")
        if not self.eps > 0:
            raise ConfigError("eps do kernel deve ser positivo.")

        market = {float(T): np.asarray(v, dtype=float) for T, v in self.market_samples.items()}
        missing = [T for T in self.maturities if T not in market]
        if missing:
            raise ConfigError(f"Amostras de mercado ausentes para os vencimentos {missing}.")
        self.market_samples = {T: market[T] for T in self.maturities}
        if self.loss == "w1":
            for T, values in self.market_samples.items():
                if values.size != self.m:
                    raise ConfigError(
                        f"Mercado em T={T} tem {values.size} amostras; a perda W1 exige m={self.m}."
                    )
        if self.market_prices is None:
            self.market_prices = market_prices_from_samples(
                self.market_samples, self.contracts, self.s0, self.r
            )
        elif len(self.market_prices) != len(self.contracts):
            raise ConfigError("market_prices deve ter um preço por contrato.")

    @property
    def maturities(self) -> Tuple[float, ...]:
        return tuple(sorted({T for T, _ in self.contracts}))

    @property
    def schedule(self) -> GridSchedule:
        return GridSchedule.from_maturities(self.maturities, self.tau)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS

    @classmethod
    def fresh(cls, dimension: int) -> "AdamState":
        return cls(np.zeros(dimension), np.zeros(dimension))


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    loss: float
    lr: float
    n_terms: int
    params: Tuple[float, ...]
    elapsed: float


@dataclass
class CalibRun:
    names: Tuple[str, ...]
    records: List[IterationRecord] = field(default_factory=list)
    stop_reason: Optional[str] = None
    theta_star: Optional[RoughParams] = None

    @property
    def losses(self) -> List[float]:
        return [rec.loss for rec in self.records]

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def best(self) -> IterationRecord:
        return min(self.records, key=lambda rec: rec.loss)

    def set_stop(self, reason: str) -> None:
        if self.stop_reason is not None:
            raise CalibrationError("motivo de parada já definido.", self.iterations)
        self.stop_reason = reason


# ---- Peças do otimizador ----

def lr_schedule(kind: str, iteration: int) -> float:
    if iteration < 0:
        raise DomainError("Iteração deve ser >= 0.")
    if kind == "w1":
        return 0.001 if iteration < 800 else 0.0002
    if kind == "mse":
        return 0.003 if iteration < 20 else 0.001
    raise DomainError(f"Cronograma de taxa desconhecido: {kind}.")


def fd_gradient(
    loss_evaluator: Callable[[np.ndarray, int], float],
    u: np.ndarray,
    steps: Union[float, Sequence[float]],
    seed: int,
) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    h = np.broadcast_to(np.asarray(steps, dtype=float), u.shape)
    grad = np.empty_like(u)
    for i in range(u.size):
        if not h[i] > 0:
            raise GradientError(f"passo de diferença finita não positivo no componente {i}.", i)
        up = u.copy()
        up[i] += h[i]
        down = u.copy()
        down[i] -= h[i]
        # mesma semente nas duas sondas
        l_up = loss_evaluator(up, seed)
        l_down = loss_evaluator(down, seed)
        if not (math.isfinite(l_up) and math.isfinite(l_down)):
            raise GradientError(f"perda não finita ao perturbar o componente {i}.", i)
        grad[i] = (l_up - l_down) / (2.0 * h[i])
    return grad


def adam_step(
    state: AdamState, params: np.ndarray, gradient: np.ndarray, rate: float
) -> Tuple[np.ndarray, AdamState]:
    params = np.asarray(params, dtype=float)
    g = np.asarray(gradient, dtype=float)
    if g.shape != params.shape or state.m.shape != params.shape:
        raise DomainError("Dimensões de parâmetros, gradiente e momentos não conferem.")
    if not np.all(np.isfinite(g)):
        bad = int(np.flatnonzero(~np.isfinite(g))[0])
        raise GradientError(f"gradiente não finito no componente {bad}.", bad)

    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * g
    v = state.beta2 * state.v + (1.0 - state.beta2) * g * g
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    new_params = params - rate * m_hat / (np.sqrt(v_hat) + state.eps)
    return new_params, AdamState(m, v, t, state.beta1, state.beta2, state.eps)


def check_stop(
    history: Sequence[float],
    eps_stop: float,
    patience: int,
    delta_min: float,
    max_iters: int,
) -> Optional[str]:
    """Motivo de parada ou None para continuar."""
    if not history:
        raise DomainError("Histórico de perdas vazio.")
    if history[-1] <= eps_stop:
        return "tolerance"
    best, last_improvement = history[0], 0
    for i, loss in enumerate(history[1:], start=1):
        if loss <= best - delta_min:
            best, last_improvement = loss, i
    if len(history) - 1 - last_improvement >= patience:
        return "patience"
    if len(history) >= max_iters:
        return "max-iters"
    return None


# ---- Kernel adaptativo ----

class KernelCache:
    """SOE certificada no H corrente, com o layout fixo para as sondas."""

    def __init__(self, delta: float, horizon: float, eps: float, grid_points: int, threshold: float):
        self.delta = delta
        self.horizon = horizon
        self.eps = eps
        self.grid_points = grid_points
        self.threshold = threshold
        self._soe: Optional[SoeApprox] = None
        self._generated_at: Optional[float] = None
        self.generations = 0

    def _generate(self, H: float) -> SoeApprox:
        self._soe = generate_soe(H, self.delta, self.horizon, self.eps, self.grid_points)
        self._generated_at = H
        self.generations += 1
        return self._soe

    def current(self, H: float) -> SoeApprox:
        if self._soe is None or abs(H - self._generated_at) > self.threshold:
            return self._generate(H)
        layout = self._soe.layout
        rebuilt = soe_from_layout(H, self.delta, self.horizon, layout)
        if sup_error(rebuilt, H, self.delta, self.horizon, self.grid_points) > self.eps:
            logging.info("Certificado falhou em H=%.6f; regenerando SOE.", H)
            return self._generate(H)
        self._soe = SoeApprox(
            rebuilt.nodes, rebuilt.weights, H, self.delta, self.horizon,
            target_eps=self.eps, layout=layout,
        )
        return self._soe

    def probe(self, H: float) -> SoeApprox:
        if self._soe is None:
            raise DomainError("Kernel ainda não gerado.")
        return soe_from_layout(H, self.delta, self.horizon, self._soe.layout)


# ---- Avaliação da perda ----

def market_prices_from_samples(
    samples: Mapping[float, np.ndarray],
    contracts: Sequence[Tuple[float, float]],
    s0: float,
    r: float,
) -> np.ndarray:
    return np.array(
        [price_from_samples(samples[T], K, T, r, otm_kind(K, s0)).mean for T, K in contracts]
    )


def generate_market(
    truth: RoughParams,
    maturities: Sequence[float],
    tau: float,
    m: int,
    eps: float,
    seed: int,
    s0: float = 1.0,
    r: float = 0.0,
    threads: Optional[int] = None,
    block_size: int = DEFAULT_BLOCK_SIZE,
    grid_points: int = DEFAULT_GRID_POINTS,
) -> Dict[float, np.ndarray]:
    """Amostras sintéticas de mercado pelo esquema mSOE sob os parâmetros verdadeiros."""
    schedule = GridSchedule.from_maturities(maturities, tau)
    soe = generate_soe(truth.hurst, tau, max(schedule.maturities), eps, grid_points)
    model = ModelParams(truth.curve, truth.hurst, truth.rho, truth.eta, s0, r)
    logging.info("Gerando mercado sintético com m=%d e semente %d.", m, seed)
    return simulate_terminal_samples(model, schedule, soe, m, seed, "msoe", threads, block_size)


class _LossModel:
    def __init__(self, config: CalibConfig):
        self.config = config
        self.schedule = config.schedule
        self.market_sets = sample_sets(config.market_samples)
        self.market_prices = np.asarray(config.market_prices, dtype=float)

    def samples(self, params: RoughParams, soe: SoeApprox, seed: int) -> Dict[float, np.ndarray]:
        cfg = self.config
        model = ModelParams(params.curve, params.hurst, params.rho, params.eta, cfg.s0, cfg.r)
        return simulate_terminal_samples(
            model, self.schedule, soe, cfg.m, seed, "msoe", cfg.threads, cfg.block_size
        )

    def __call__(self, params: RoughParams, soe: SoeApprox, seed: int) -> float:
        samples = self.samples(params, soe, seed)
        if self.config.loss == "w1":
            return w1_loss(sample_sets(samples), self.market_sets)
        cfg = self.config
        prices = market_prices_from_samples(samples, cfg.contracts, cfg.s0, cfg.r)
        return mse_loss(prices, self.market_prices)


def _kernel_cache(config: CalibConfig) -> KernelCache:
    return KernelCache(
        config.tau, max(config.maturities), config.eps, config.grid_points, config.regen_threshold
    )


def calibrate(config: CalibConfig) -> CalibRun:
    transform = ParamTransform(config.initial.curve)
    loss_model = _LossModel(config)
    kernel = _kernel_cache(config)
    run = CalibRun(tuple(transform.names))

    unknown = [name for name in config.fixed if name not in transform.names]
    if unknown:
        raise ConfigError(f"Parâmetros fixos desconhecidos: {unknown} (use {transform.names}).")
    free = np.array([i for i, name in enumerate(transform.names) if name not in config.fixed], dtype=int)
    if free.size == 0:
        raise ConfigError("Todos os parâmetros estão fixos; nada a calibrar.")
    steps = np.broadcast_to(np.asarray(config.fd_step, dtype=float), (transform.dimension,))[free]

    u = transform.unconstrain(config.initial)
    adam = AdamState.fresh(free.size)
    best_loss, best_params = math.inf, config.initial

    logging.info(
        "Calibração %s: %d parâmetros, %d contratos, m=%d, tau=%s.",
        config.loss, free.size, len(config.contracts), config.m, config.tau,
    )

    def probe_loss(w: np.ndarray, seed: int) -> float:
        v = u.copy()
        v[free] = w
        probe = transform.constrain(v)
        return loss_model(probe, kernel.probe(probe.hurst), seed)

    with tqdm(total=config.max_iters, desc="Calibração", colour="red", disable=not config.progress) as bar:
        for it in range(config.max_iters):
            start = time.perf_counter()
            params = transform.constrain(u)
            seed = iteration_seed(config.master_seed, it)
            try:
                soe = kernel.current(params.hurst)
                loss = loss_model(params, soe, seed)
            except NumericalError as exc:
                raise CalibrationError(str(exc), it + 1) from exc
            if not math.isfinite(loss):
                raise CalibrationError("perda não finita.", it + 1)

            rate = lr_schedule(config.lr_kind, it)
            if loss < best_loss:
                best_loss, best_params = loss, params

            reason = check_stop(
                run.losses + [loss], config.eps_stop, config.patience,
                config.delta_min, config.max_iters,
            )
            if reason is None:
                try:
                    grad = fd_gradient(probe_loss, u[free], steps, seed)
                    updated, adam = adam_step(adam, u[free], grad, rate)
                    u = u.copy()
                    u[free] = updated
                except NumericalError as exc:
                    raise CalibrationError(str(exc), it + 1) from exc

            run.records.append(
                IterationRecord(
                    iteration=it + 1,
                    loss=float(loss),
                    lr=rate,
                    n_terms=soe.n_terms,
                    params=tuple(float(x) for x in transform.values(params)),
                    elapsed=time.perf_counter() - start,
                )
            )
            bar.update(1)
            bar.set_postfix(loss=f"{loss:.3e}", N=soe.n_terms)
            if reason is not None:
                run.set_stop(reason)
                break

    run.theta_star = best_params
    logging.info(
        "Calibração encerrada por '%s' após %d iterações; melhor perda %.6e (%d gerações de kernel).",
        run.stop_reason, run.iterations, best_loss, kernel.generations,
    )
    return run


def model_prices(
    config: CalibConfig,
    params: RoughParams,
    contracts: Sequence[Tuple[float, float]],
    seed: int,
) -> np.ndarray:
    """Preços OTM dos contratos sob `params` com a semente dada."""
    maturities = sorted({T for T, _ in contracts})
    schedule = GridSchedule.from_maturities(maturities, config.tau)
    soe = generate_soe(params.hurst, config.tau, max(maturities), config.eps, config.grid_points)
    model = ModelParams(params.curve, params.hurst, params.rho, params.eta, config.s0, config.r)
    samples = simulate_terminal_samples(
        model, schedule, soe, config.m, seed, "msoe", config.threads, config.block_size
    )
    return market_prices_from_samples(samples, contracts, config.s0, config.r)


# ---- Paisagem da perda ----

SWEEPABLE = ("xi0", "H", "rho", "eta")


def _with_value(params: RoughParams, name: str, value: float) -> RoughParams:
    if name == "xi0":
        return params._replace(curve=constant_curve(value))
    if name == "H":
        return params._replace(hurst=float(value))
    if name == "rho":
        return params._replace(rho=float(value))
    if name == "eta":
        return params._replace(eta=float(value))
    raise ConfigError(f"Parâmetro de paisagem desconhecido: {name} (use {SWEEPABLE}).")


def landscape(
    config: CalibConfig,
    param_pair: Tuple[str, str],
    ranges: Tuple[Tuple[float, float], Tuple[float, float]],
    grid: int = 25,
    center: Optional[RoughParams] = None,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Log-perda numa grade grid x grid; linhas varrem o primeiro parâmetro.

    Os demais parâmetros ficam em `center` (o verdadeiro) e todas as células
    usam a mesma semente e os mesmos dados de mercado.
    """
    if grid < 2:
        raise ConfigError("A grade da paisagem exige pelo menos 2 pontos por eixo.")
    first, second = param_pair
    if first == second:
        raise ConfigError("A paisagem exige dois parâmetros distintos.")
    for name in param_pair:
        if name not in SWEEPABLE:
            raise ConfigError(f"Parâmetro de paisagem desconhecido: {name} (use {SWEEPABLE}).")
    base = center if center is not None else config.initial
    xs = np.linspace(*ranges[0], grid)
    ys = np.linspace(*ranges[1], grid)

    loss_model = _LossModel(config)
    seed = iteration_seed(config.master_seed, 0)
    horizon = max(config.maturities)
    kernels: Dict[float, SoeApprox] = {}
    values = np.full((grid, grid), np.nan)

    for i in tqdm(range(grid), desc="Paisagem", colour="red", disable=not config.progress):
        for j in range(grid):
            try:
                params = _with_value(_with_value(base, first, xs[i]), second, ys[j])
                if params.hurst not in kernels:
                    kernels[params.hurst] = generate_soe(
                        params.hurst, config.tau, horizon, config.eps, config.grid_points
                    )
                loss = loss_model(params, kernels[params.hurst], seed)
            except (NumericalError, DomainError) as exc:
                logging.warning("Célula (%d, %d) da paisagem ausente: %s", i, j, exc)
                continue
            if math.isfinite(loss):
                values[i, j] = math.log(max(loss, _LOG_FLOOR))
    return xs, ys, values
