"""
Módulo: forward_variance
Responsabilidade:
    - Famílias da curva de variância a termo xi0(t): constante, constante por
      partes (PWC), Nelson-Siegel (NS) e NS corrigida por rede neural (NS+NN).
    - Curvas de referência sintéticas para os experimentos de mercado.
    - Transformações suaves entre o espaço livre do otimizador e o espaço
      restrito de (curva, H, rho, eta).
"""

import os
from dataclasses import dataclass
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit, logit

from src.errors import ConfigError, DomainError

ArrayLike = Union[float, np.ndarray]

CURVE_KINDS = ("constant", "pwc", "ns", "ns_nn", "exp_decay", "hump_sine")
NN_LAYERS = (1, 8, 8, 1)
NN_WEIGHT_COUNT = 97
DEFAULT_LEAKY_SLOPE = 0.01
DEFAULT_KAPPA = 0.01

# NS que reproduz exatamente a curva de referência 0.02 + 0.03e^(-5t) + 3te^(-5t)
REFERENCE_NS = (0.02, 0.03, 0.6, 0.2)


@dataclass(frozen=True, eq=False)
class ForwardVarianceCurve:
    kind: str
    params: Tuple[float, ...] = ()
    pillars: Tuple[float, ...] = ()
    kappa: float = 0.0
    nn_weights: Optional[np.ndarray] = None
    leaky_slope: float = DEFAULT_LEAKY_SLOPE

    def __post_init__(self):
        if self.kind not in CURVE_KINDS:
            raise DomainError(f"Tipo de curva desconhecido: {self.kind}.")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        object.__setattr__(self, "pillars", tuple(float(p) for p in self.pillars))

        if self.kind == "constant":
            if len(self.params) != 1 or not self.params[0] > 0:
                raise DomainError("Curva constante exige um nível positivo.")
        elif self.kind == "pwc":
            pillars = np.asarray(self.pillars)
            if len(self.params) < 1 or pillars.size != len(self.params) + 1:
                raise DomainError("PWC exige L níveis e L+1 pilares.")
            if np.any(np.diff(pillars) <= 0):
                raise DomainError("Pilares da PWC devem ser estritamente crescentes.")
            if pillars[0] != 0.0:
                raise DomainError("Pilares da PWC devem começar em 0.")
            if np.any(np.asarray(self.params) <= 0):
                raise DomainError("Níveis da PWC devem ser positivos.")
        elif self.kind in ("ns", "ns_nn"):
            if len(self.params) != 4:
                raise DomainError("NS exige (beta0, beta1, beta2, tau).")
            if not self.params[3] > 0:
                raise DomainError("Escala tau da NS deve ser positiva.")
        elif self.params:
            raise DomainError(f"Curva '{self.kind}' não tem parâmetros.")

        if self.kind == "ns_nn":
            weights = np.asarray(self.nn_weights, dtype=float).reshape(-1)
            if weights.size != NN_WEIGHT_COUNT:
                raise DomainError(
                    f"Rede 1-8-8-1 exige {NN_WEIGHT_COUNT} pesos, recebidos {weights.size}."
                )
            weights.setflags(write=False)
            object.__setattr__(self, "nn_weights", weights)

    @property
    def horizon(self) -> float:
        return self.pillars[-1] if self.kind == "pwc" else np.inf

    def __call__(self, t: ArrayLike) -> ArrayLike:
        return eval_curve(self, t)


def constant_curve(level: float) -> ForwardVarianceCurve:
    return ForwardVarianceCurve("constant", (level,))


def pwc_curve(pillars: Sequence[float], levels: Sequence[float]) -> ForwardVarianceCurve:
    return ForwardVarianceCurve("pwc", tuple(levels), tuple(pillars))


def uniform_pwc_curve(horizon: float, n_buckets: int, level: float) -> ForwardVarianceCurve:
    pillars = np.linspace(0.0, horizon, n_buckets + 1)
    return pwc_curve(pillars, [level] * n_buckets)


def ns_curve(beta0: float, beta1: float, beta2: float, tau: float) -> ForwardVarianceCurve:
    return ForwardVarianceCurve("ns", (beta0, beta1, beta2, tau))


def ns_nn_curve(
    beta0: float,
    beta1: float,
    beta2: float,
    tau: float,
    kappa: float,
    weights: np.ndarray,
    leaky_slope: float = DEFAULT_LEAKY_SLOPE,
) -> ForwardVarianceCurve:
    return ForwardVarianceCurve(
        "ns_nn", (beta0, beta1, beta2, tau), kappa=kappa,
        nn_weights=weights, leaky_slope=leaky_slope,
    )


def ground_truth_curve(name: str) -> ForwardVarianceCurve:
    if name == "exp_decay":
        return ForwardVarianceCurve("exp_decay")
    if name == "ns":
        return ns_curve(*REFERENCE_NS)
    if name == "hump_sine":
        return ForwardVarianceCurve("hump_sine")
    raise DomainError(f"Curva de referência desconhecida: {name}.")


# ---- Rede neural 1-8-8-1 ----

def leaky_relu(x: ArrayLike, slope: float = DEFAULT_LEAKY_SLOPE) -> ArrayLike:
    return np.where(x >= 0, x, slope * x)


def _unpack(weights: np.ndarray) -> List[Tuple[np.ndarray, np.ndarray]]:
    layers = []
    offset = 0
    for fan_in, fan_out in zip(NN_LAYERS[:-1], NN_LAYERS[1:]):
        w = weights[offset:offset + fan_in * fan_out].reshape(fan_out, fan_in)
        offset += fan_in * fan_out
        b = weights[offset:offset + fan_out]
        offset += fan_out
        layers.append((w, b))
    return layers


def nn_forward(weights: np.ndarray, t: ArrayLike, slope: float = DEFAULT_LEAKY_SLOPE) -> ArrayLike:
    w = np.asarray(weights, dtype=float).reshape(-1)
    if w.size != NN_WEIGHT_COUNT:
        raise DomainError(f"Rede 1-8-8-1 exige {NN_WEIGHT_COUNT} pesos, recebidos {w.size}.")
    arr = np.asarray(t, dtype=float)
    h = arr.reshape(-1, 1)
    layers = _unpack(w)
    for i, (wl, bl) in enumerate(layers):
        h = h @ wl.T + bl
        if i < len(layers) - 1:
            h = leaky_relu(h, slope)
    out = h[:, 0].reshape(arr.shape)
    return float(out) if out.ndim == 0 else out


def init_nn_weights(seed: int) -> np.ndarray:
    """Uniforme em [-0.5, 0.5] / fan_in, camada a camada."""
    rng = np.random.default_rng(seed)
    chunks = []
    for fan_in, fan_out in zip(NN_LAYERS[:-1], NN_LAYERS[1:]):
        chunks.append(rng.uniform(-0.5, 0.5, fan_in * fan_out) / fan_in)
        chunks.append(rng.uniform(-0.5, 0.5, fan_out) / fan_in)
    return np.concatenate(chunks)


def write_nn_weights(weights: np.ndarray, path: str) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for value in np.asarray(weights, dtype=float).reshape(-1):
            f.write(f"{value:.17g}\n")
    return path


def read_nn_weights(path: str) -> np.ndarray:
    if not os.path.exists(path):
        raise ConfigError(f"Arquivo de pesos não encontrado: {path}")
    values = []
    with open(path, "r", encoding="utf-8") as f:
        for number, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                values.append(float(line))
            except ValueError as exc:
                raise ConfigError(f"linha {number}: peso inválido '{line}'") from exc
    if len(values) != NN_WEIGHT_COUNT:
        raise ConfigError(f"Esperados {NN_WEIGHT_COUNT} pesos, encontrados {len(values)}.")
    return np.array(values)


# ---- Avaliação ----

def _ns_value(params: Tuple[float, ...], t: np.ndarray) -> np.ndarray:
    beta0, beta1, beta2, tau = params
    x = t / tau
    decay = np.exp(-x)
    return beta0 + beta1 * decay + beta2 * x * decay


def eval_curve(curve: ForwardVarianceCurve, t: ArrayLike) -> ArrayLike:
    arr = np.asarray(t, dtype=float)
    kind = curve.kind

    if kind == "constant":
        out = np.full(arr.shape, curve.params[0])
    elif kind == "pwc":
        pillars = np.asarray(curve.pillars)
        if np.any(arr < pillars[0]) or np.any(arr > pillars[-1]):
            raise DomainError(
                f"t fora da cobertura da PWC [{pillars[0]}, {pillars[-1]}]."
            )
        # baldes [T_(l-1), T_l); o último inclui a extremidade direita
        idx = np.searchsorted(pillars, arr, side="right") - 1
        idx = np.clip(idx, 0, len(curve.params) - 1)
        out = np.asarray(curve.params)[idx]
    elif kind == "ns":
        out = _ns_value(curve.params, arr)
    elif kind == "ns_nn":
        correction = nn_forward(curve.nn_weights, arr, curve.leaky_slope)
        out = np.abs(_ns_value(curve.params, arr) * (1.0 + curve.kappa * correction))
    elif kind == "exp_decay":
        out = 0.05 * np.exp(-arr)
    else:
        out = 0.03 + 0.05 * np.exp(-5.0 * (arr - 0.3) ** 2) + 0.01 * np.sin(15.0 * arr)

    out = np.asarray(out, dtype=float)
    return float(out) if out.ndim == 0 else out


def curve_from_config(cfg: Dict) -> ForwardVarianceCurve:
    kind = cfg.get("kind", "constant")
    if kind == "constant":
        return constant_curve(cfg["levels"][0])
    if kind == "pwc":
        return pwc_curve(cfg["pillars"], cfg["levels"])
    if kind == "ns":
        return ns_curve(*cfg["levels"])
    if kind == "ns_nn":
        if cfg.get("nn_weights_file"):
            weights = read_nn_weights(cfg["nn_weights_file"])
        else:
            weights = init_nn_weights(int(cfg.get("nn_seed", 0)))
        return ns_nn_curve(
            *cfg["levels"], kappa=cfg.get("kappa", DEFAULT_KAPPA),
            weights=weights, leaky_slope=cfg.get("leaky_slope", DEFAULT_LEAKY_SLOPE),
        )
    if kind in ("exp_decay", "hump_sine"):
        return ground_truth_curve(kind)
    raise ConfigError(f"model.xi0.kind desconhecido: {kind}")


# ---- Transformações de parâmetros ----

def softplus(u: ArrayLike) -> ArrayLike:
    return np.logaddexp(0.0, u)


def softplus_inverse(y: ArrayLike) -> ArrayLike:
    arr = np.asarray(y, dtype=float)
    if np.any(arr <= 0):
        raise DomainError("softplus inverso exige valor positivo.")
    return arr + np.log(-np.expm1(-arr))


class RoughParams(NamedTuple):
    curve: ForwardVarianceCurve
    hurst: float
    rho: float
    eta: float


class ParamTransform:
    """
    Bijeção entre o vetor livre u e (curva, H, rho, eta).

    H = 0.5*sigmoid, rho = -sigmoid, eta = softplus; níveis positivos da curva
    via softplus. O layout de u segue `names`: parâmetros da curva e depois
    H, rho, eta.
    """

    def __init__(self, template: ForwardVarianceCurve):
        self.template = template
        kind = template.kind
        if kind == "constant":
            curve_names = ["xi0"]
        elif kind == "pwc":
            curve_names = [f"xi0_{i + 1}" for i in range(len(template.params))]
        elif kind == "ns":
            curve_names = ["beta0", "beta1", "beta2", "tau_ns"]
        elif kind == "ns_nn":
            curve_names = ["beta0", "beta1", "beta2", "tau_ns", "kappa"]
            curve_names += [f"w_{i}" for i in range(NN_WEIGHT_COUNT)]
        else:
            curve_names = []
        self.curve_names = curve_names
        self.names = curve_names + ["H", "rho", "eta"]

    @property
    def dimension(self) -> int:
        return len(self.names)

    def _curve_to_u(self, curve: ForwardVarianceCurve) -> np.ndarray:
        kind = self.template.kind
        if kind != curve.kind:
            raise DomainError(f"Curva '{curve.kind}' não combina com o modelo '{kind}'.")
        if kind in ("constant", "pwc"):
            return softplus_inverse(np.asarray(curve.params))
        if kind in ("ns", "ns_nn"):
            beta0, beta1, beta2, tau = curve.params
            u = [softplus_inverse(beta0), beta1, beta2, softplus_inverse(tau)]
            if kind == "ns_nn":
                u.append(curve.kappa)
                return np.concatenate([np.asarray(u, dtype=float), curve.nn_weights])
            return np.asarray(u, dtype=float)
        return np.empty(0)

    def _u_to_curve(self, u: np.ndarray) -> ForwardVarianceCurve:
        t = self.template
        if t.kind == "constant":
            return constant_curve(float(softplus(u[0])))
        if t.kind == "pwc":
            return pwc_curve(t.pillars, softplus(u))
        if t.kind == "ns":
            return ns_curve(float(softplus(u[0])), u[1], u[2], float(softplus(u[3])))
        if t.kind == "ns_nn":
            return ns_nn_curve(
                float(softplus(u[0])), u[1], u[2], float(softplus(u[3])),
                kappa=float(u[4]), weights=np.array(u[5:]), leaky_slope=t.leaky_slope,
            )
        return t

    def constrain(self, u: np.ndarray) -> RoughParams:
        u = np.asarray(u, dtype=float)
        if u.size != self.dimension:
            raise DomainError(f"Vetor livre com tamanho {u.size}, esperado {self.dimension}.")
        k = len(self.curve_names)
        curve = self._u_to_curve(u[:k])
        hurst = 0.5 * float(expit(u[k]))
        rho = -float(expit(u[k + 1]))
        eta = float(softplus(u[k + 2]))
        return RoughParams(curve, hurst, rho, eta)

    def unconstrain(self, params: RoughParams) -> np.ndarray:
        if not 0.0 < params.hurst < 0.5:
            raise DomainError(f"H={params.hurst} fora do intervalo aberto (0, 1/2).")
        if not -1.0 < params.rho < 0.0:
            raise DomainError(f"rho={params.rho} fora do intervalo aberto (-1, 0).")
        if not params.eta > 0.0:
            raise DomainError(f"eta={params.eta} deve ser positivo.")
        scalars = [
            float(logit(2.0 * params.hurst)),
            float(logit(-params.rho)),
            float(softplus_inverse(params.eta)),
        ]
        return np.concatenate([self._curve_to_u(params.curve), scalars])

    def values(self, params: RoughParams) -> np.ndarray:
        """Vetor restrito na ordem de `names` (para relatórios)."""
        curve = params.curve
        if curve.kind in ("constant", "pwc", "ns"):
            head = list(curve.params)
        elif curve.kind == "ns_nn":
            head = list(curve.params) + [curve.kappa] + list(curve.nn_weights)
        else:
            head = []
        return np.asarray(head + [params.hurst, params.rho, params.eta], dtype=float)
