"""
Módulo: pricing
Responsabilidade:
    - Converter lotes de caminhos em estimativas de Monte Carlo descontadas
      para opções europeias e de barreira (monitoramento discreto na grade).
    - Tolerância de parada a partir de spreads bid-ask.
    - Métricas de erro de apreciação (RMSE, MAE, MAPE, MaxAPE) e APE por parâmetro.
"""

import math
from dataclasses import dataclass
from typing import Dict, Optional, Sequence

import numpy as np

from src.errors import DomainError
from src.path_simulator import PathBatch

EUROPEAN_KINDS = ("call", "put")
BARRIER_KINDS = ("down-and-out-put", "up-and-out-call", "down-and-in-put")


@dataclass(frozen=True)
class Contract:
    kind: str
    strike: float
    maturity: float
    barrier: Optional[float] = None

    def __post_init__(self):
        if self.kind not in EUROPEAN_KINDS + BARRIER_KINDS:
            raise DomainError(f"Tipo de contrato desconhecido: {self.kind}.")
        if not self.strike > 0:
            raise DomainError(f"Strike deve ser positivo, recebido {self.strike}.")
        if self.kind in BARRIER_KINDS:
            if self.barrier is None or self.barrier < 0:
                raise DomainError("Opções de barreira exigem barreira não negativa.")


@dataclass(frozen=True)
class PriceEstimate:
    mean: float
    stderr: float
    m: int


def _estimate(payoff: np.ndarray, discount: float) -> PriceEstimate:
    m = payoff.size
    # variância amostral não viesada
    std = float(np.std(payoff, ddof=1)) if m > 1 else 0.0
    return PriceEstimate(discount * float(np.mean(payoff)), discount * std / math.sqrt(m), m)


def _vanilla_payoff(s_t: np.ndarray, strike: float, kind: str) -> np.ndarray:
    if kind == "call":
        return np.maximum(s_t - strike, 0.0)
    if kind == "put":
        return np.maximum(strike - s_t, 0.0)
    raise DomainError(f"Tipo europeu desconhecido: {kind}.")


def price_from_samples(s_t: np.ndarray, K: float, T: float, r: float, kind: str = "call") -> PriceEstimate:
    payoff = _vanilla_payoff(np.asarray(s_t, dtype=float), K, kind)
    return _estimate(payoff, math.exp(-r * T))


def price_european(batch: PathBatch, K: float, T: float, r: float, kind: str = "call") -> PriceEstimate:
    return price_from_samples(batch.terminal_prices(T), K, T, r, kind)


def price_barrier(batch: PathBatch, contract: Contract, r: float) -> PriceEstimate:
    if contract.kind not in BARRIER_KINDS:
        raise DomainError(f"Contrato '{contract.kind}' não é de barreira.")
    T, K, B = contract.maturity, contract.strike, contract.barrier
    s_t = batch.terminal_prices(T)
    s_min, s_max = batch.extrema(T)

    # desigualdades estritas: sobrevive sem tocar a barreira
    if contract.kind == "down-and-out-put":
        payoff = np.maximum(K - s_t, 0.0) * (s_min > B)
    elif contract.kind == "down-and-in-put":
        payoff = np.maximum(K - s_t, 0.0) * ~(s_min > B)
    else:
        payoff = np.maximum(s_t - K, 0.0) * (s_max < B)
    return _estimate(payoff, math.exp(-r * T))


def price_contract(batch: PathBatch, contract: Contract, r: float) -> PriceEstimate:
    if contract.kind in EUROPEAN_KINDS:
        return price_european(batch, contract.strike, contract.maturity, r, contract.kind)
    return price_barrier(batch, contract, r)


def otm_kind(strike: float, s0: float) -> str:
    """Put abaixo do spot, call a partir dele."""
    return "put" if strike < s0 else "call"


def tolerance_epsilon(bids: Sequence[float], asks: Sequence[float]) -> float:
    bids = np.asarray(bids, dtype=float)
    asks = np.asarray(asks, dtype=float)
    if bids.shape != asks.shape or bids.size < 1:
        raise DomainError("bids e asks devem ter o mesmo tamanho (>= 1).")
    return float(np.mean(np.abs(bids - asks)))


def pricing_errors(model: Sequence[float], reference: Sequence[float]) -> Dict[str, float]:
    model = np.asarray(model, dtype=float)
    reference = np.asarray(reference, dtype=float)
    if model.shape != reference.shape or model.size == 0:
        raise DomainError("Vetores de preços com tamanhos incompatíveis.")
    diff = model - reference
    ape = np.abs(diff / reference)
    return {
        "rmse": float(np.sqrt(np.mean(diff ** 2))),
        "mae": float(np.mean(np.abs(diff))),
        "mape": float(np.mean(ape)),
        "max_ape": float(np.max(ape)),
    }


def parameter_ape(estimate: Dict[str, float], truth: Dict[str, float]) -> Dict[str, float]:
    return {
        name: abs((estimate[name] - value) / value)
        for name, value in truth.items()
        if name in estimate and value != 0
    }
