from typing import Any, Iterable, List, Optional

from app.core.exceptions import ContractError


def validate_int_range(value: Any, min_val: Optional[int] = None, max_val: Optional[int] = None) -> bool:
    """
    Valida que un valor sea un entero dentro de un rango.

    Args:
        value: Valor a validar
        min_val: Valor mínimo (opcional)
        max_val: Valor máximo (opcional)

    Returns:
        True si el valor es válido, False en caso contrario
    """
    try:
        val = int(value)
    except (TypeError, ValueError):
        return False
    if val != value and not isinstance(value, str):
        return False
    if min_val is not None and val < min_val:
        return False
    if max_val is not None and val > max_val:
        return False
    return True


def validate_probability(p: float, name: str = "p") -> float:
    """
    Comprueba que `p` esté en [0, 1].

    Args:
        p: Probabilidad
        name: Nombre del parámetro para el mensaje de error

    Returns:
        La probabilidad como float
    """
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise ContractError(f"{name} debe estar en [0, 1], recibido {p}")
    return p


def parse_int_list(text: str) -> List[int]:
    """
    Convierte "12,10,8" en [12, 10, 8].

    Args:
        text: Enteros separados por comas

    Returns:
        Lista de enteros en el orden dado
    """
    items = [item.strip() for item in str(text).split(",") if item.strip()]
    if not items:
        raise ContractError("Se esperaba al menos un entero")
    try:
        return [int(item) for item in items]
    except ValueError as e:
        raise ContractError(f"Lista de enteros inválida '{text}': {e}") from e


def validate_depths(depths: Iterable[int], num_blocks: int) -> List[int]:
    """
    Valida profundidades de evaluación contra el número de bloques.

    Args:
        depths: Profundidades solicitadas
        num_blocks: N del codificador

    Returns:
        Profundidades sin duplicados, ordenadas de mayor a menor
    """
    unique = sorted(set(int(d) for d in depths), reverse=True)
    invalid = [d for d in unique if not validate_int_range(d, 1, num_blocks)]
    if invalid:
        raise ContractError(f"Profundidades fuera de [1, {num_blocks}]: {invalid}")
    if not unique:
        raise ContractError("No se indicó ninguna profundidad")
    return unique
