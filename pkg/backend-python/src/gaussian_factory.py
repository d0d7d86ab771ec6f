"""
Módulo: gaussian_factory
Responsabilidade:
    - Montar a covariância (N+2)x(N+2) do vetor gaussiano de um passo:
      (incremento browniano, N integrais exponenciais, parte local exata).
    - Fatorar uma única vez (Cholesky com política de jitter).
    - Amostrar incrementos correlacionados de fluxos contra-baseados (Philox),
      de forma determinística por (semente, fluxo, posição).
"""

import logging
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np
from scipy import linalg
from scipy.special import gamma, gammainc, ndtri

from src.errors import DomainError, FactorizationError
from src.soe_kernel import SoeApprox

ArrayLike = Union[float, np.ndarray]

JITTER_SCALE = 1e-14
JITTER_RETRIES = 3
JITTER_GROWTH = 10.0

# finalidades dos fluxos aleatórios
PURPOSE_XI = 1
PURPOSE_PERP = 2
PURPOSE_CHOLESKY = 3
PURPOSE_MARKET = 4

_LANES = 4  # saídas de 64 bits por contador do Philox4x64
_TWO_POW_53 = float(2 ** 53)


def lower_incomplete_gamma(s: float, x: ArrayLike) -> ArrayLike:
    if not s > 0:
        raise DomainError(f"gamma incompleta exige s > 0, recebido {s}.")
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0):
        raise DomainError("gamma incompleta exige x >= 0.")
    out = gammainc(s, arr) * gamma(s)
    return float(out) if out.ndim == 0 else out


def _exp_integral(c: np.ndarray, tau: float) -> np.ndarray:
    """(1 - e^(-c tau)) / c com limite tau em c = 0."""
    c = np.asarray(c, dtype=float)
    out = np.full(c.shape, float(tau))
    pos = c > 0
    out[pos] = -np.expm1(-c[pos] * tau) / c[pos]
    return out


@dataclass(frozen=True, eq=False)
class StepCovariance:
    matrix: np.ndarray
    chol: np.ndarray
    tau: float
    soe: SoeApprox
    hurst: float

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[0])


def covariance_matrix(soe: SoeApprox, H: float, tau: float) -> np.ndarray:
    if not tau > 0:
        raise DomainError(f"tau deve ser positivo, recebido {tau}.")
    if not 0.0 < H < 0.5:
        raise DomainError(f"H deve estar em (0, 1/2), recebido {H}.")

    lam = soe.nodes
    n = lam.size
    a = H + 0.5
    coef = np.sqrt(2.0 * H)
    sigma = np.empty((n + 2, n + 2))

    sigma[0, 0] = tau
    sigma[0, 1:n + 1] = _exp_integral(lam, tau)
    sigma[1:n + 1, 1:n + 1] = _exp_integral(lam[:, None] + lam[None, :], tau)

    local = np.empty(n)
    pos = lam > 0
    local[pos] = coef * lower_incomplete_gamma(a, lam[pos] * tau) / lam[pos] ** a
    local[~pos] = coef * tau ** a / a
    sigma[n + 1, 0] = coef * tau ** a / a
    sigma[n + 1, 1:n + 1] = local
    sigma[n + 1, n + 1] = tau ** (2.0 * H)

    # simetria exata por cópia
    sigma[1:n + 1, 0] = sigma[0, 1:n + 1]
    sigma[0, n + 1] = sigma[n + 1, 0]
    sigma[1:n + 1, n + 1] = sigma[n + 1, 1:n + 1]
    return sigma


def cholesky(matrix: np.ndarray) -> np.ndarray:
    mat = np.asarray(matrix, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise DomainError("Cholesky exige matriz quadrada.")
    if not np.array_equal(mat, mat.T):
        raise DomainError("Cholesky exige matriz simétrica.")
    if mat.shape[0] == 0:
        return mat.copy()

    try:
        return linalg.cholesky(mat, lower=True)
    except linalg.LinAlgError:
        pass

    jitter = JITTER_SCALE * np.trace(mat) / mat.shape[0]
    for attempt in range(JITTER_RETRIES):
        if not jitter > 0:
            break
        try:
            chol = linalg.cholesky(mat + jitter * np.eye(mat.shape[0]), lower=True)
            logging.warning(
                "Cholesky precisou de jitter %.3e (tentativa %d).", jitter, attempt + 1
            )
            return chol
        except linalg.LinAlgError:
            jitter *= JITTER_GROWTH

    raise FactorizationError(
        f"Matriz {mat.shape[0]}x{mat.shape[0]} não fatorável após a política de jitter."
    )


def build_covariance(soe: SoeApprox, H: float, tau: float) -> StepCovariance:
    sigma = covariance_matrix(soe, H, tau)
    chol = cholesky(sigma)
    return StepCovariance(sigma, chol, float(tau), soe, float(H))


class RngStream:
    """
    Fluxo de normais padrão sobre um gerador contra-baseado (Philox4x64).

    A posição p (em saídas de 64 bits) corresponde ao contador p // 4 e à
    faixa p % 4, então o mesmo (master_seed, purpose, stream_id, posição)
    produz sempre o mesmo valor, independente de threads ou intercalação.
    """

    def __init__(self, master_seed: int, stream_id: int, purpose: int = 0):
        self.master_seed = int(master_seed)
        self.stream_id = int(stream_id)
        self.purpose = int(purpose)
        self._position = 0
        self._bitgen = self._new_bitgen()

    def _new_bitgen(self) -> np.random.Philox:
        seq = np.random.SeedSequence([self.master_seed, self.purpose, self.stream_id])
        return np.random.Philox(seq)

    @property
    def position(self) -> int:
        return self._position

    def seek(self, position: int) -> "RngStream":
        if position < 0:
            raise DomainError("Posição do fluxo não pode ser negativa.")
        self._bitgen = self._new_bitgen()
        self._bitgen.advance(position // _LANES)
        if position % _LANES:
            self._bitgen.random_raw(position % _LANES)
        self._position = position
        return self

    def uniforms(self, shape: Union[int, Tuple[int, ...]]) -> np.ndarray:
        size = int(np.prod(shape))
        raw = self._bitgen.random_raw(size) if size else np.empty(0, dtype=np.uint64)
        self._position += size
        # 53 bits centrados: nunca 0 nem 1
        u = ((raw >> np.uint64(11)).astype(float) + 0.5) / _TWO_POW_53
        return u.reshape(shape)

    def standard_normal(self, shape: Union[int, Tuple[int, ...]]) -> np.ndarray:
        return ndtri(self.uniforms(shape))


def sample_gaussian(chol: np.ndarray, stream: RngStream, count: int) -> np.ndarray:
    dim = chol.shape[0]
    z = stream.standard_normal((count, dim))
    return z @ chol.T
