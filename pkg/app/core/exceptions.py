# app/core/exceptions.py
from typing import Optional


class DLDError(Exception):
    """Error base del proyecto; lleva el código de salida que usa la CLI"""

    exit_code: int = 1

    def __init__(self, detail: str, exit_code: Optional[int] = None):
        """
        Inicializa el error con un mensaje legible

        Args:
            detail: Descripción del problema
            exit_code: Código de salida (opcional, por defecto el de la clase)
        """
        super().__init__(detail)
        self.detail = detail
        if exit_code is not None:
            self.exit_code = exit_code


class ConfigurationError(DLDError):
    """Configuración o uso de la CLI inválidos"""

    exit_code = 2


class ContractError(DLDError, ValueError):
    """Precondición de una operación violada"""

    exit_code = 2


class DimensionError(ContractError):
    """Formas de tensores incompatibles"""


class CtcInfeasibleError(ContractError):
    """El objetivo CTC no admite ningún alineamiento válido"""


class ArtifactFormatError(DLDError):
    """Fichero de dataset o checkpoint corrupto o de versión desconocida"""

    exit_code = 3


class NumericError(DLDError, ArithmeticError):
    """Desbordamiento a infinito o NaN en una operación"""

    exit_code = 4


class DivergenceError(NumericError):
    """El entrenamiento produjo una pérdida no finita"""

    def __init__(self, step: int, detail: str):
        super().__init__(f"Divergencia en el paso {step}: {detail}")
        self.step = step
