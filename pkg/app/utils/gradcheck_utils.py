# app/utils/gradcheck_utils.py
from typing import Callable, Sequence

import numpy as np

from app.services.tensor.tensor import Tape, Tensor, no_grad


def numerical_gradient(fn: Callable[[], Tensor], tensor: Tensor, step: float = 1e-5) -> np.ndarray:
    """
    Gradiente por diferencias centrales de un escalar respecto a `tensor`.

    Los tensores son inmutables, así que se sustituye temporalmente el arreglo
    de `tensor` por copias perturbadas.

    Args:
        fn: Función sin argumentos que devuelve un escalar dependiente de `tensor`
        tensor: Hoja respecto a la que derivar
        step: Paso h de la diferencia central

    Returns:
        Arreglo con la forma de `tensor`
    """
    original = tensor.data
    grad = np.zeros(original.shape, dtype=np.float64)
    flat = grad.reshape(-1)
    try:
        with no_grad():
            for i in range(original.size):
                values = []
                for sign in (1.0, -1.0):
                    perturbed = original.copy().reshape(-1)
                    perturbed[i] += sign * step
                    tensor.data = perturbed.reshape(original.shape)
                    values.append(fn().item())
                flat[i] = (values[0] - values[1]) / (2.0 * step)
    finally:
        tensor.data = original
    return grad


def analytic_gradients(fn: Callable[[], Tensor], tensors: Sequence[Tensor]) -> list:
    """Gradientes por retropropagación de `fn` respecto a cada tensor"""
    for tensor in tensors:
        tensor.zero_grad()
    with Tape() as tape:
        loss = fn()
        tape.backward(loss)
    return [np.array(tensor.grad) for tensor in tensors]


def gradient_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """‖a − n‖ / max(‖a‖, ‖n‖, 1e-12)"""
    scale = max(float(np.linalg.norm(analytic)), float(np.linalg.norm(numeric)), 1e-12)
    return float(np.linalg.norm(analytic - numeric)) / scale


def check_gradients(fn: Callable[[], Tensor], tensors: Sequence[Tensor], step: float = 1e-5) -> float:
    """
    Compara gradiente analítico y numérico.

    Returns:
        Mayor error relativo entre todos los tensores
    """
    analytic = analytic_gradients(fn, tensors)
    errors = [
        gradient_relative_error(a, numerical_gradient(fn, t, step))
        for a, t in zip(analytic, tensors)
    ]
    return max(errors)
