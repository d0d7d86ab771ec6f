"""
Módulo: wasserstein
Responsabilidade:
    - Distância de Wasserstein-1 empírica entre amostras unidimensionais
      de mesmo tamanho (estatísticas de ordem).
    - Perdas de calibração: média de W1 sobre vencimentos e MSE de preços.
"""

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import wasserstein_distance

from src.errors import DomainError


@dataclass(frozen=True, eq=False)
class SampleSet:
    values: np.ndarray
    maturity: float

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).ravel()
        if values.size < 1:
            raise DomainError("Conjunto de amostras vazio.")
        if not np.all(np.isfinite(values)):
            raise DomainError(f"Amostras não finitas no vencimento {self.maturity}.")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def m(self) -> int:
        return int(self.values.size)


def empirical_w1(xs: SampleSet, ys: SampleSet) -> float:
    if xs.m != ys.m:
        raise DomainError(f"W1 empírica exige tamanhos iguais: {xs.m} != {ys.m}.")
    # com m igual, é a média de |X_(i) - Y_(i)|
    return float(wasserstein_distance(xs.values, ys.values))


def w1_loss(model: Mapping[float, SampleSet], market: Mapping[float, SampleSet]) -> float:
    if set(model) != set(market):
        raise DomainError(
            f"Vencimentos diferentes: modelo {sorted(model)} x mercado {sorted(market)}."
        )
    if not market:
        raise DomainError("Nenhum vencimento para comparar.")
    return float(np.mean([empirical_w1(model[T], market[T]) for T in sorted(market)]))


def mse_loss(model_prices: Sequence[float], market_prices: Sequence[float]) -> float:
    model = np.asarray(model_prices, dtype=float)
    market = np.asarray(market_prices, dtype=float)
    if model.shape != market.shape or model.size == 0:
        raise DomainError("Vetores de preços com tamanhos incompatíveis.")
    return float(np.mean((model - market) ** 2))


def sample_sets(samples: Mapping[float, np.ndarray]) -> dict:
    """{T: array} -> {T: SampleSet}."""
    return {float(T): SampleSet(values, float(T)) for T, values in samples.items()}
