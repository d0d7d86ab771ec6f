"""
Módulo: implied_vol
Responsabilidade:
    - Preço de Black-Scholes e inversão para volatilidade implícita
      (raiz com intervalo garantido + refinamento de Newton).
    - Montagem de smiles e superfícies a partir de lotes de caminhos.
    - Erro relativo máximo entre superfícies (b é o benchmark).
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Sequence, Union

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr

from src.errors import DomainError, ImpliedVolError
from src.path_simulator import PathBatch
from src.pricing import otm_kind, price_european

SMILE_LOG_STRIKES = tuple(-0.55 + 0.05 * i for i in range(1, 22))
SURFACE_MATURITIES = tuple(j / 8 for j in range(1, 9))
SURFACE_LOG_STRIKES = tuple(-0.10 + 0.01 * i for i in range(16))

PRICE_TOL = 1e-10
NEWTON_STEPS = 3
MAX_BRACKET = 1e3


@dataclass(frozen=True)
class VolSurfacePoint:
    maturity: float
    log_strike: float
    strike: float
    price: float
    stderr: float
    iv: float
    valid: bool


def bs_price(s0: float, K: float, r: float, T: float, sigma: float, kind: str = "call") -> float:
    if not (s0 > 0 and K > 0 and T > 0) or sigma < 0:
        raise DomainError("Black-Scholes exige s0, K, T > 0 e sigma >= 0.")
    disc = K * math.exp(-r * T)
    if sigma == 0:
        forward_gap = s0 - disc
        return max(forward_gap, 0.0) if kind == "call" else max(-forward_gap, 0.0)
    vol = sigma * math.sqrt(T)
    d1 = (math.log(s0 / disc) + 0.5 * vol * vol) / vol
    d2 = d1 - vol
    if kind == "call":
        return float(s0 * ndtr(d1) - disc * ndtr(d2))
    if kind == "put":
        return float(disc * ndtr(-d2) - s0 * ndtr(-d1))
    raise DomainError(f"Tipo de opção desconhecido: {kind}.")


def bs_vega(s0: float, K: float, r: float, T: float, sigma: float) -> float:
    if sigma <= 0:
        return 0.0
    vol = sigma * math.sqrt(T)
    d1 = (math.log(s0 / (K * math.exp(-r * T))) + 0.5 * vol * vol) / vol
    return float(s0 * math.exp(-0.5 * d1 * d1) / math.sqrt(2.0 * math.pi) * math.sqrt(T))


def implied_vol(price: float, s0: float, K: float, r: float, T: float, kind: str = "call") -> float:
    if not (s0 > 0 and K > 0 and T > 0):
        raise DomainError("Inversão exige s0, K, T > 0.")
    if kind not in ("call", "put"):
        raise DomainError(f"Tipo de opção desconhecido: {kind}.")
    disc = K * math.exp(-r * T)
    if kind == "call":
        lower, upper = max(s0 - disc, 0.0), s0
    else:
        lower, upper = max(disc - s0, 0.0), disc

    if not math.isfinite(price) or price < lower:
        raise ImpliedVolError(
            f"Preço {price:.6g} abaixo do limite inferior {lower:.6g}.", bound="lower", value=lower
        )
    if price >= upper:
        raise ImpliedVolError(
            f"Preço {price:.6g} acima do limite superior {upper:.6g}.", bound="upper", value=upper
        )

    # inverte pelo lado fora do dinheiro (paridade put-call)
    if kind == "call" and s0 > disc:
        price, kind = price - s0 + disc, "put"
    elif kind == "put" and disc > s0:
        price, kind = price + s0 - disc, "call"
    if price <= 0:
        raise ImpliedVolError(
            "Preço sem valor temporal; a volatilidade implícita não é identificável.",
            bound="lower", value=lower,
        )

    def gap(sigma):
        return bs_price(s0, K, r, T, sigma, kind) - price

    hi = 1.0
    while gap(hi) < 0:
        hi *= 2.0
        if hi > MAX_BRACKET:
            raise ImpliedVolError("Volatilidade implícita sem intervalo válido.", bound="upper", value=upper)

    sigma = brentq(gap, 0.0, hi, xtol=1e-16, maxiter=500)
    for _ in range(NEWTON_STEPS):
        vega = bs_vega(s0, K, r, T, sigma)
        if vega <= 0:
            break
        step = gap(sigma) / vega
        if abs(step) < 1e-16:
            break
        sigma = max(sigma - step, 0.0)

    if abs(gap(sigma)) > PRICE_TOL * s0:
        logging.warning("Inversão com resíduo %.3e (K=%s, T=%s).", gap(sigma), K, T)
    return float(sigma)


# ---- Smiles e superfícies ----

def _point(batch: PathBatch, T: float, k: float, s0: float, r: float, kind: str) -> VolSurfacePoint:
    strike = s0 * math.exp(k)
    option = otm_kind(strike, s0) if kind == "otm" else kind
    est = price_european(batch, strike, T, r, option)
    try:
        iv = implied_vol(est.mean, s0, strike, r, T, option)
        valid = True
    except ImpliedVolError as exc:
        logging.warning("Inversão falhou em T=%s, k=%.4f: %s", T, k, exc)
        iv, valid = float("nan"), False
    return VolSurfacePoint(T, k, strike, est.mean, est.stderr, iv, valid)


def smile_from_batch(
    batch: PathBatch,
    T: float,
    log_strikes: Sequence[float] = SMILE_LOG_STRIKES,
    s0: float = 1.0,
    r: float = 0.0,
    kind: str = "call",
) -> List[VolSurfacePoint]:
    return [_point(batch, T, k, s0, r, kind) for k in log_strikes]


def surface_from_batch(
    batch: PathBatch,
    maturities: Sequence[float] = SURFACE_MATURITIES,
    log_strikes: Sequence[float] = SURFACE_LOG_STRIKES,
    s0: float = 1.0,
    r: float = 0.0,
    kind: str = "call",
    scale_by_sqrt_t: bool = True,
) -> List[VolSurfacePoint]:
    points = []
    for T in maturities:
        scale = math.sqrt(T) if scale_by_sqrt_t else 1.0
        points.extend(_point(batch, T, k * scale, s0, r, kind) for k in log_strikes)
    return points


def _as_ivs(values: Sequence[Union[float, VolSurfacePoint]]) -> np.ndarray:
    return np.array(
        [v.iv if isinstance(v, VolSurfacePoint) else v for v in values], dtype=float
    )


def compare_surfaces(
    a: Sequence[Union[float, VolSurfacePoint]],
    b: Sequence[Union[float, VolSurfacePoint]],
) -> Dict[str, float]:
    sa, sb = _as_ivs(a), _as_ivs(b)
    if sa.shape != sb.shape:
        raise DomainError("Superfícies com formatos diferentes.")
    ok = np.isfinite(sa) & np.isfinite(sb) & (sb != 0)
    if not np.any(ok):
        raise DomainError("Nenhum ponto válido em comum entre as superfícies.")
    excluded = int(sa.size - np.count_nonzero(ok))
    if excluded:
        logging.warning("%d pontos excluídos da comparação (inversão falhou).", excluded)
    rel = np.abs(sa[ok] - sb[ok]) / np.abs(sb[ok])
    return {"max_rel_error": float(np.max(rel)), "n_valid": int(np.count_nonzero(ok)), "n_excluded": excluded}


def max_rel_error(
    a: Sequence[Union[float, VolSurfacePoint]],
    b: Sequence[Union[float, VolSurfacePoint]],
) -> float:
    return compare_surfaces(a, b)["max_rel_error"]
