"""
Módulo: soe_kernel
Responsabilidade:
    - Avaliar o núcleo fracionário K(t) = t^(H - 1/2).
    - Gerar aproximações por soma de exponenciais (SOE) a partir da
      representação de Bernstein, com quadratura Gauss-Jacobi em [0, 1] e
      Gauss-Legendre em intervalos geométricos [2^j, 2^(j+1)].
    - Certificar o erro uniforme em [delta, T] e ler/gravar nós e pesos em CSV.
"""

import logging
import math
import os
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Tuple, Union

import numpy as np
from scipy.special import gamma, gammaincc, roots_jacobi, roots_legendre

from src.errors import DomainError, SoeGenerationError, SoeParseError

ArrayLike = Union[float, np.ndarray]

DEFAULT_GRID_POINTS = 10_000
MAX_NODES_PER_INTERVAL = 512
MAX_INTERVALS = 64
CSV_HEADER = "lambda,omega"


class QuadratureLayout(NamedTuple):
    n_jacobi: int
    n_legendre: int
    n_intervals: int


@dataclass(frozen=True, eq=False)
class SoeApprox:
    nodes: np.ndarray
    weights: np.ndarray
    hurst: float
    valid_from: float
    valid_to: float
    target_eps: Optional[float] = None
    layout: Optional[QuadratureLayout] = field(default=None, compare=False)

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float).reshape(-1)
        weights = np.array(self.weights, dtype=float).reshape(-1)
        if nodes.shape != weights.shape:
            raise DomainError("Nós e pesos devem ter o mesmo tamanho.")
        if not np.all(np.isfinite(nodes)) or np.any(nodes < 0):
            raise DomainError("Os nós devem ser finitos e não negativos.")
        if not np.all(np.isfinite(weights)) or np.any(weights <= 0):
            raise DomainError("Os pesos devem ser finitos e positivos.")
        if not self.valid_from < self.valid_to:
            raise DomainError(
                f"Intervalo de validade inválido: [{self.valid_from}, {self.valid_to}]."
            )
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @property
    def n_terms(self) -> int:
        return int(self.nodes.size)


def _check_hurst(H: float) -> None:
    if not 0.0 < H < 0.5:
        raise DomainError(f"H deve estar em (0, 1/2), recebido {H}.")


def eval_fractional_kernel(t: ArrayLike, H: float) -> ArrayLike:
    _check_hurst(H)
    arr = np.asarray(t, dtype=float)
    if np.any(arr <= 0):
        raise DomainError("O núcleo fracionário exige t > 0.")
    out = arr ** (H - 0.5)
    return float(out) if out.ndim == 0 else out


def bernstein_weight(x: ArrayLike, H: float) -> ArrayLike:
    _check_hurst(H)
    arr = np.asarray(x, dtype=float)
    if np.any(arr <= 0):
        raise DomainError("O peso de Bernstein exige x > 0.")
    out = arr ** (-H - 0.5) / gamma(0.5 - H)
    return float(out) if out.ndim == 0 else out


def eval_soe(soe: SoeApprox, t: ArrayLike) -> ArrayLike:
    arr = np.asarray(t, dtype=float)
    out = np.exp(-np.multiply.outer(arr, soe.nodes)) @ soe.weights
    return float(out) if np.ndim(out) == 0 else out


def sup_error(
    soe: SoeApprox,
    H: float,
    delta: float,
    T: float,
    grid_points: int = DEFAULT_GRID_POINTS,
) -> float:
    if grid_points < 2:
        raise DomainError("A grade de certificação precisa de ao menos 2 pontos.")
    if not 0 < delta < T:
        raise DomainError(f"Exige 0 < delta < T, recebido delta={delta}, T={T}.")
    # geométrica: K varia mais rápido perto de delta
    grid = np.geomspace(delta, T, grid_points)
    diff = eval_fractional_kernel(grid, H) - eval_soe(soe, grid)
    return float(np.max(np.abs(diff)))


# ---- Quadratura da integral de Bernstein ----

def _tail_intervals(H: float, delta: float, eps: float) -> int:
    """Número de intervalos [2^j, 2^(j+1)] até a cauda ficar abaixo de eps/10."""
    a = 0.5 - H
    for j in range(MAX_INTERVALS):
        tail = delta ** (H - 0.5) * gammaincc(a, 2.0 ** (j + 1) * delta)
        if tail < eps / 10:
            return j + 1
    raise SoeGenerationError(
        "Cauda da integral de Bernstein não converge com o limite de intervalos.",
        best_error=math.inf,
    )


def _quadrature_terms(H: float, layout: QuadratureLayout) -> Tuple[np.ndarray, np.ndarray]:
    beta = -H - 0.5
    norm = gamma(0.5 - H)

    # [0, 1]: x = (1 + y) / 2, o fator x^beta fica no peso de Jacobi
    y, w = roots_jacobi(layout.n_jacobi, 0.0, beta)
    nodes = [(1.0 + y) / 2.0]
    weights = [2.0 ** (-beta - 1.0) * w / norm]

    y, w = roots_legendre(layout.n_legendre)
    for j in range(layout.n_intervals):
        lo, hi = 2.0 ** j, 2.0 ** (j + 1)
        half = (hi - lo) / 2.0
        x = lo + half * (1.0 + y)
        nodes.append(x)
        weights.append(half * w * x ** beta / norm)

    nodes = np.concatenate(nodes)
    weights = np.concatenate(weights)
    order = np.argsort(nodes, kind="stable")
    return nodes[order], weights[order]


def soe_from_layout(
    H: float,
    delta: float,
    T: float,
    layout: QuadratureLayout,
) -> SoeApprox:
    _check_hurst(H)
    nodes, weights = _quadrature_terms(H, layout)
    return SoeApprox(nodes, weights, H, delta, T, target_eps=None, layout=layout)


def generate_soe(
    H: float,
    delta: float,
    T: float,
    eps: float,
    grid_points: int = DEFAULT_GRID_POINTS,
) -> SoeApprox:
    _check_hurst(H)
    if not 0 < delta < T:
        raise DomainError(f"Exige 0 < delta < T, recebido delta={delta}, T={T}.")
    if not eps > 0:
        raise DomainError(f"eps deve ser positivo, recebido {eps}.")

    n_intervals = _tail_intervals(H, delta, eps)
    n = max(int(math.ceil(math.log(1.0 / eps))), 2)
    best = math.inf

    while n <= MAX_NODES_PER_INTERVAL:
        layout = QuadratureLayout(n, n, n_intervals)
        soe = soe_from_layout(H, delta, T, layout)
        err = sup_error(soe, H, delta, T, grid_points)
        best = min(best, err)
        if err <= eps:
            logging.info(
                "SOE gerada: H=%s, delta=%s, T=%s, eps=%s -> N=%d, erro=%.3e",
                H, delta, T, eps, soe.n_terms, err,
            )
            return SoeApprox(
                soe.nodes, soe.weights, H, delta, T, target_eps=eps, layout=layout
            )
        n *= 2

    raise SoeGenerationError(
        f"eps={eps} inalcançável; melhor erro obtido {best:.3e}.", best_error=best
    )


# ---- Leitura e gravação (CSV "lambda,omega") ----

def write_soe(soe: SoeApprox, path: str) -> str:
    folder = os.path.dirname(os.path.abspath(path))
    os.makedirs(folder, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(CSV_HEADER + "\n")
        for lam, om in zip(soe.nodes, soe.weights):
            f.write(f"{lam:.17g},{om:.17g}\n")
    return path


def read_soe(path: str, hurst: float, valid_from: float, valid_to: float) -> SoeApprox:
    if not os.path.exists(path):
        raise SoeParseError(f"Arquivo de nós não encontrado: {path}", line=0)

    nodes, weights = [], []
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()

    if not lines or lines[0].strip().replace(" ", "") != CSV_HEADER:
        raise SoeParseError(f"cabeçalho esperado '{CSV_HEADER}'", line=1)

    for number, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise SoeParseError(f"esperados 2 campos, encontrados {len(parts)}", line=number)
        try:
            lam, om = float(parts[0]), float(parts[1])
        except ValueError as exc:
            raise SoeParseError(f"valor não numérico em '{line}'", line=number) from exc
        if not math.isfinite(lam) or lam < 0:
            raise SoeParseError(f"nó negativo ou não finito: {parts[0].strip()}", line=number)
        if not math.isfinite(om) or om <= 0:
            raise SoeParseError(f"peso não positivo: {parts[1].strip()}", line=number)
        nodes.append(lam)
        weights.append(om)

    return SoeApprox(np.array(nodes), np.array(weights), hurst, valid_from, valid_to)
