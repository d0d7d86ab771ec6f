"""
Módulo: path_simulator
Responsabilidade:
    - Simular (S, V) do modelo rough Bergomi na grade uniforme por três esquemas:
        * msoe: núcleo exato no último passo + SOE para o histórico;
        * soe: SOE em todo o núcleo (transições OU exatas);
        * cholesky: amostragem conjunta exata de (I, W) na grade.
    - Registrar preços terminais por vencimento e extremos discretos do caminho.
    - Processar os caminhos em blocos de tamanho fixo, em paralelo, com
      resultado idêntico para qualquer número de threads.
"""

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import roots_legendre
from tqdm import tqdm

from src.errors import (
    ConfigError,
    DomainError,
    MaturityError,
    QuadratureError,
    SimulationOverflowError,
)
from src.gaussian_factory import (
    PURPOSE_CHOLESKY,
    PURPOSE_PERP,
    PURPOSE_XI,
    RngStream,
    StepCovariance,
    _exp_integral,
    build_covariance,
    cholesky,
    sample_gaussian,
)
from src.soe_kernel import SoeApprox

SCHEMES = ("msoe", "soe", "cholesky")
DEFAULT_BLOCK_SIZE = 4096
DEFAULT_CHOLESKY_CAP = 512
EXPONENT_LIMIT = 700.0
THREADS_ENV = "ROUGHVOL_THREADS"

QUAD_TOL = 1e-10
QUAD_START = 32
QUAD_MAX = 1 << 14

_STEP_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class ModelParams:
    xi0: Callable
    hurst: float
    rho: float
    eta: float
    s0: float = 1.0
    r: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.hurst < 0.5:
            raise DomainError(f"H deve estar em (0, 1/2), recebido {self.hurst}.")
        if not -1.0 < self.rho < 1.0:
            raise DomainError(f"|rho| deve ser < 1, recebido {self.rho}.")
        if self.eta < 0:
            raise DomainError(f"eta não pode ser negativo, recebido {self.eta}.")
        if not self.s0 > 0:
            raise DomainError(f"s0 deve ser positivo, recebido {self.s0}.")


@dataclass(frozen=True)
class GridSchedule:
    n: int
    tau: float
    maturities: Tuple[float, ...]

    def __post_init__(self):
        if self.n < 1 or not self.tau > 0:
            raise DomainError("A grade exige n >= 1 e tau > 0.")
        mats = tuple(sorted(float(T) for T in self.maturities))
        if not mats:
            raise DomainError("A grade precisa de ao menos um vencimento.")
        for T in mats:
            self._steps_for(T)
        if self._steps_for(mats[-1]) != self.n:
            raise DomainError(
                f"tau*n={self.tau * self.n} difere do maior vencimento {mats[-1]}."
            )
        object.__setattr__(self, "maturities", mats)

    def _steps_for(self, T: float) -> int:
        ratio = T / self.tau
        steps = int(round(ratio))
        if steps < 1 or abs(ratio - steps) > _STEP_TOL * max(1.0, ratio):
            raise MaturityError(f"Vencimento {T} não é ponto da grade (tau={self.tau}).")
        return steps

    @classmethod
    def uniform(cls, T: float, n: int, maturities: Optional[Sequence[float]] = None):
        return cls(int(n), T / n, tuple(maturities) if maturities else (T,))

    @classmethod
    def from_maturities(cls, maturities: Sequence[float], tau: float):
        T = max(maturities)
        return cls(int(round(T / tau)), float(tau), tuple(maturities))

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n + 1) * self.tau

    @property
    def maturity_steps(self) -> Tuple[int, ...]:
        return tuple(self._steps_for(T) for T in self.maturities)

    def step_of(self, T: float) -> int:
        step = self._steps_for(T)
        if step not in self.maturity_steps:
            raise MaturityError(f"Vencimento {T} não registrado no lote.")
        return step


@dataclass(eq=False)
class PathBatch:
    scheme: str
    schedule: GridSchedule
    m: int
    seed: int
    n_terms: int
    terminal: Dict[int, np.ndarray]
    running_min: Dict[int, np.ndarray]
    running_max: Dict[int, np.ndarray]
    price_paths: Optional[np.ndarray] = None
    variance_paths: Optional[np.ndarray] = None

    def terminal_prices(self, T: float) -> np.ndarray:
        return self.terminal[self.schedule.step_of(T)]

    def extrema(self, T: float) -> Tuple[np.ndarray, np.ndarray]:
        step = self.schedule.step_of(T)
        return self.running_min[step], self.running_max[step]


@dataclass
class VolterraState:
    """Componentes históricas por caminho e o sorteio local exato."""

    history: np.ndarray
    local: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @classmethod
    def zeros(cls, paths: int, n_terms: int) -> "VolterraState":
        return cls(np.zeros((paths, n_terms)), np.zeros(paths))


# ---- Segundos momentos (compensadores) ----

def second_moment_approx(soe: SoeApprox, H: float, tau: float, t_i: float) -> float:
    lam, om = soe.nodes, soe.weights
    base = tau ** (2.0 * H)
    if lam.size == 0 or t_i <= tau:
        return base
    c = lam[:, None] + lam[None, :]
    bracket = np.exp(-c * tau) * _exp_integral(c, t_i - tau)
    return float(base + 2.0 * H * np.sum(np.outer(om, om) * bracket))


def second_moment_soe(soe: SoeApprox, H: float, t: float) -> float:
    lam, om = soe.nodes, soe.weights
    if lam.size == 0:
        return 0.0
    c = lam[:, None] + lam[None, :]
    return float(2.0 * H * np.sum(np.outer(om, om) * _exp_integral(c, t)))


def _compensators(soe: SoeApprox, H: float, schedule: GridSchedule, scheme: str) -> np.ndarray:
    times = schedule.times
    out = np.zeros(schedule.n + 1)
    for i in range(1, schedule.n + 1):
        if scheme == "msoe":
            out[i] = second_moment_approx(soe, H, schedule.tau, times[i])
        else:
            out[i] = second_moment_soe(soe, H, times[i])
    return out


# ---- Covariâncias exatas (esquema Cholesky) ----

def exact_cross_covariance(H: float, t_i: float, t_j: float) -> float:
    if t_i <= 0 or t_j <= 0:
        raise DomainError("Covariância exata exige tempos positivos.")
    a = H + 0.5
    low = min(t_i, t_j)
    return float(np.sqrt(2.0 * H) / a * (t_i ** a - (t_i - low) ** a))


@lru_cache(maxsize=32)
def _legendre_rule(q: int) -> Tuple[np.ndarray, np.ndarray]:
    return roots_legendre(q)


def _gauss_panel(f: Callable, lo: np.ndarray, hi: np.ndarray, q: int) -> np.ndarray:
    y, w = _legendre_rule(q)
    half = (hi - lo) / 2.0
    v = lo[:, None] + half[:, None] * (1.0 + y[None, :])
    return half * (f(v) @ w)


def _volterra_cov_row(H: float, s: float, ts: np.ndarray) -> np.ndarray:
    """Cov(I_s, I_t) para cada t >= s, com v = (s - u)^(H+1/2)."""
    a = H + 0.5
    ts = np.asarray(ts, dtype=float)
    out = np.empty(ts.shape)
    same = np.isclose(ts, s, rtol=0.0, atol=1e-14 * max(s, 1.0))
    out[same] = s ** (2.0 * H)
    if np.all(same):
        return out

    gap = ts[~same] - s
    top = np.full(gap.shape, s ** a)
    split = np.minimum(gap ** a, top)

    def integrand(v, g):
        return (g[:, None] + v ** (1.0 / a)) ** (a - 1.0)

    def quad(q):
        zero = np.zeros(gap.shape)
        first = _gauss_panel(lambda v: integrand(v, gap), zero, split, q)
        second = _gauss_panel(lambda v: integrand(v, gap), split, top, q)
        return (2.0 * H / a) * (first + second)

    q = QUAD_START
    prev = quad(q)
    while q < QUAD_MAX:
        q *= 2
        cur = quad(q)
        if np.max(np.abs(cur - prev) / np.maximum(np.abs(cur), 1e-300)) <= QUAD_TOL:
            out[~same] = cur
            return out
        prev = cur
    raise QuadratureError(
        f"Quadratura da covariância de Volterra não convergiu (s={s}, H={H})."
    )


def exact_volterra_covariance(H: float, t_i: float, t_j: float) -> float:
    if t_i <= 0 or t_j <= 0:
        raise DomainError("Covariância exata exige tempos positivos.")
    s, t = min(t_i, t_j), max(t_i, t_j)
    return float(_volterra_cov_row(H, s, np.array([t]))[0])


@lru_cache(maxsize=8)
def _joint_cholesky(H: float, tau: float, n: int) -> np.ndarray:
    times = np.arange(1, n + 1) * tau
    cov_ii = np.empty((n, n))
    for i in range(n):
        row = _volterra_cov_row(H, times[i], times[i:])
        cov_ii[i, i:] = row
        cov_ii[i:, i] = row
    cov_ww = np.minimum.outer(times, times)
    a = H + 0.5
    low = np.minimum.outer(times, times)
    cov_iw = np.sqrt(2.0 * H) / a * (times[:, None] ** a - (times[:, None] - low) ** a)

    joint = np.block([[cov_ii, cov_iw], [cov_iw.T, cov_ww]])
    chol = cholesky(joint)
    chol.setflags(write=False)
    logging.info("Fator de Cholesky exato montado: H=%s, tau=%s, n=%d.", H, tau, n)
    return chol


# ---- Simulação por blocos ----

def resolve_threads(threads: Optional[int] = None) -> int:
    if threads is None:
        env = os.getenv(THREADS_ENV)
        threads = int(env) if env else (os.cpu_count() or 1)
    return max(int(threads), 1)


class _BlockRecorder:
    def __init__(self, s0: float, size: int, schedule: GridSchedule, store: bool):
        self.steps = set(schedule.maturity_steps)
        self.s_min = np.full(size, s0)
        self.s_max = np.full(size, s0)
        self.terminal: Dict[int, np.ndarray] = {}
        self.running_min: Dict[int, np.ndarray] = {}
        self.running_max: Dict[int, np.ndarray] = {}
        self.prices = np.empty((size, schedule.n + 1)) if store else None
        self.variances = np.empty((size, schedule.n + 1)) if store else None
        if store:
            self.prices[:, 0] = s0

    def record(self, step: int, s: np.ndarray, v: np.ndarray) -> None:
        np.minimum(self.s_min, s, out=self.s_min)
        np.maximum(self.s_max, s, out=self.s_max)
        if step in self.steps:
            self.terminal[step] = s.copy()
            self.running_min[step] = self.s_min.copy()
            self.running_max[step] = self.s_max.copy()
        if self.prices is not None:
            self.prices[:, step] = s
            self.variances[:, step] = v


def _check_exponent(expo: np.ndarray, block: int, step: int, block_size: int) -> None:
    worst = int(np.argmax(expo))
    if not np.isfinite(expo[worst]) or expo[worst] > EXPONENT_LIMIT:
        raise SimulationOverflowError(block, step, block * block_size + worst, float(expo[worst]))


def _simulate_block_markov(
    params: ModelParams,
    schedule: GridSchedule,
    cov: StepCovariance,
    comp: np.ndarray,
    xi_grid: np.ndarray,
    scheme: str,
    seed: int,
    block: int,
    size: int,
    block_size: int,
    store: bool,
) -> _BlockRecorder:
    soe = cov.soe
    N = soe.n_terms
    tau = schedule.tau
    decay = np.exp(-soe.nodes * tau)
    coef = np.sqrt(2.0 * params.hurst) * soe.weights
    rho, rho_bar = params.rho, math.sqrt(1.0 - params.rho ** 2)
    eta = params.eta
    log_xi = np.log(xi_grid)

    xi_stream = RngStream(seed, block, PURPOSE_XI)
    perp_stream = RngStream(seed, block, PURPOSE_PERP)
    state = VolterraState.zeros(size, N)
    log_s = np.full(size, math.log(params.s0))
    v = np.full(size, xi_grid[0])
    rec = _BlockRecorder(params.s0, size, schedule, store)
    if store:
        rec.variances[:, 0] = v

    for i in range(schedule.n):
        xi = sample_gaussian(cov.chol, xi_stream, size)
        dw_perp = math.sqrt(tau) * perp_stream.standard_normal(size)

        # preço com a variância no ponto esquerdo t_i
        log_s = log_s + (params.r - 0.5 * v) * tau + np.sqrt(v) * (rho * xi[:, 0] + rho_bar * dw_perp)

        if scheme == "msoe":
            state.local = xi[:, N + 1]
            volterra = state.history @ coef + state.local
            state.history = decay * (state.history + xi[:, 1:N + 1])
        else:
            state.history = decay * state.history + xi[:, 1:N + 1]
            volterra = state.history @ coef

        expo = eta * volterra - 0.5 * eta ** 2 * comp[i + 1]
        _check_exponent(expo + log_xi[i + 1], block, i + 1, block_size)
        v = xi_grid[i + 1] * np.exp(expo)
        rec.record(i + 1, np.exp(log_s), v)

    return rec


def _simulate_block_cholesky(
    params: ModelParams,
    schedule: GridSchedule,
    chol: np.ndarray,
    xi_grid: np.ndarray,
    seed: int,
    block: int,
    size: int,
    block_size: int,
    store: bool,
) -> _BlockRecorder:
    n, tau = schedule.n, schedule.tau
    H, eta = params.hurst, params.eta
    rho, rho_bar = params.rho, math.sqrt(1.0 - params.rho ** 2)
    times = schedule.times

    joint = RngStream(seed, block, PURPOSE_CHOLESKY).standard_normal((size, 2 * n)) @ chol.T
    volterra, w = joint[:, :n], joint[:, n:]
    dw = np.diff(w, axis=1, prepend=0.0)
    perp_stream = RngStream(seed, block, PURPOSE_PERP)

    variances = np.empty((size, n + 1))
    variances[:, 0] = xi_grid[0]
    expo = eta * volterra - 0.5 * eta ** 2 * times[1:] ** (2.0 * H)
    for i in range(n):
        _check_exponent(expo[:, i] + math.log(xi_grid[i + 1]), block, i + 1, block_size)
    variances[:, 1:] = xi_grid[1:] * np.exp(expo)

    rec = _BlockRecorder(params.s0, size, schedule, store)
    if store:
        rec.variances[:, 0] = variances[:, 0]
    log_s = np.full(size, math.log(params.s0))
    for i in range(n):
        v = variances[:, i]
        dw_perp = math.sqrt(tau) * perp_stream.standard_normal(size)
        log_s = log_s + (params.r - 0.5 * v) * tau + np.sqrt(v) * (rho * dw[:, i] + rho_bar * dw_perp)
        rec.record(i + 1, np.exp(log_s), variances[:, i + 1])
    return rec


def simulate_paths(
    params: ModelParams,
    schedule: GridSchedule,
    soe: Optional[SoeApprox],
    scheme: str,
    m: int,
    seed: int,
    threads: Optional[int] = None,
    block_size: int = DEFAULT_BLOCK_SIZE,
    store_paths: bool = False,
    cholesky_cap: int = DEFAULT_CHOLESKY_CAP,
    progress: bool = False,
) -> PathBatch:
    """
    Simula `m` caminhos em blocos de `block_size`.

    Cada bloco lê fluxos Philox próprios, chaveados por (seed, índice do
    bloco). O número de threads não altera o resultado; `block_size` altera,
    pois decide qual fluxo alimenta cada caminho. Para comparar execuções,
    mantenha o mesmo `block_size`.
    """
    if scheme not in SCHEMES:
        raise DomainError(f"Esquema desconhecido: {scheme}.")
    if m < 1:
        raise DomainError(f"Número de caminhos deve ser >= 1, recebido {m}.")
    if block_size < 1:
        raise DomainError("block_size deve ser >= 1.")

    xi_grid = np.asarray(params.xi0(schedule.times), dtype=float)
    if np.any(~np.isfinite(xi_grid)) or np.any(xi_grid <= 0):
        raise DomainError("xi0(t) deve ser positivo em todos os pontos da grade.")

    n_blocks = (m + block_size - 1) // block_size
    sizes = [min(block_size, m - b * block_size) for b in range(n_blocks)]

    if scheme == "cholesky":
        if schedule.n > cholesky_cap:
            raise ConfigError(
                f"Esquema Cholesky limitado a n <= {cholesky_cap}; recebido n={schedule.n}."
            )
        chol = _joint_cholesky(float(params.hurst), float(schedule.tau), int(schedule.n))
        n_terms = 0

        def run(b):
            return _simulate_block_cholesky(
                params, schedule, chol, xi_grid, seed, b, sizes[b], block_size, store_paths
            )
    else:
        if soe is None:
            raise DomainError(f"O esquema '{scheme}' exige uma aproximação SOE.")
        cov = build_covariance(soe, params.hurst, schedule.tau)
        comp = _compensators(soe, params.hurst, schedule, scheme)
        n_terms = soe.n_terms

        def run(b):
            return _simulate_block_markov(
                params, schedule, cov, comp, xi_grid, scheme, seed, b, sizes[b],
                block_size, store_paths,
            )

    workers = min(resolve_threads(threads), n_blocks)
    logging.info(
        "Simulando %d caminhos (%s, n=%d, N=%d) em %d blocos com %d threads.",
        m, scheme, schedule.n, n_terms, n_blocks, workers,
    )
    with ThreadPoolExecutor(max_workers=workers) as executor:
        records: List[_BlockRecorder] = list(
            tqdm(
                executor.map(run, range(n_blocks)),
                total=n_blocks,
                desc=f"Blocos {scheme}",
                colour="red",
                disable=not progress,
            )
        )

    steps = schedule.maturity_steps
    batch = PathBatch(
        scheme=scheme,
        schedule=schedule,
        m=m,
        seed=seed,
        n_terms=n_terms,
        terminal={k: np.concatenate([r.terminal[k] for r in records]) for k in steps},
        running_min={k: np.concatenate([r.running_min[k] for r in records]) for k in steps},
        running_max={k: np.concatenate([r.running_max[k] for r in records]) for k in steps},
    )
    if store_paths:
        batch.price_paths = np.concatenate([r.prices for r in records])
        batch.variance_paths = np.concatenate([r.variances for r in records])
    return batch


def simulate_terminal_samples(
    params: ModelParams,
    schedule: GridSchedule,
    soe: Optional[SoeApprox],
    m: int,
    seed: int,
    scheme: str = "msoe",
    threads: Optional[int] = None,
    block_size: int = DEFAULT_BLOCK_SIZE,
) -> Dict[float, np.ndarray]:
    batch = simulate_paths(params, schedule, soe, scheme, m, seed, threads, block_size)
    return {T: batch.terminal_prices(T) for T in schedule.maturities}
