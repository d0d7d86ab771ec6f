"""
Módulo: errors
Responsabilidade:
    - Hierarquia de exceções do motor de Monte Carlo.
    - ConfigError/DomainError -> código de saída 2; NumericalError -> código 3.
"""

from typing import Optional


class ConfigError(ValueError):
    """Configuração inválida, chave desconhecida ou arquivo ausente."""


class DomainError(ValueError):
    """Argumento fora do domínio de uma função pura."""


class NumericalError(RuntimeError):
    """Falha numérica durante a computação."""


class SoeGenerationError(NumericalError):
    def __init__(self, message: str, best_error: float):
        super().__init__(message)
        self.best_error = best_error


class SoeParseError(ConfigError):
    def __init__(self, message: str, line: int):
        super().__init__(f"linha {line}: {message}")
        self.line = line


class FactorizationError(NumericalError):
    pass


class QuadratureError(NumericalError):
    pass


class SimulationOverflowError(NumericalError):
    def __init__(self, block: int, step: int, path: int, exponent: float):
        super().__init__(
            f"Expoente da variância explodiu (bloco={block}, passo={step}, "
            f"caminho={path}, expoente={exponent:.4g})."
        )
        self.block = block
        self.step = step
        self.path = path
        self.exponent = exponent


class MaturityError(ValueError):
    pass


class ImpliedVolError(ValueError):
    def __init__(self, message: str, bound: str, value: float):
        super().__init__(message)
        self.bound = bound
        self.value = value


class GradientError(NumericalError):
    def __init__(self, message: str, component: Optional[int] = None):
        super().__init__(message)
        self.component = component


class CalibrationError(NumericalError):
    def __init__(self, message: str, iteration: int):
        super().__init__(f"iteração {iteration}: {message}")
        self.iteration = iteration


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, (ConfigError, DomainError, MaturityError)):
        return 2
    if isinstance(exc, NumericalError):
        return 3
    return 1
