# app/services/tensor/ops.py
"""
Operaciones diferenciables sobre Tensor.

Cada operación calcula su salida con numpy y, si hay una cinta activa y algún
operando requiere gradiente, registra su regla de retropropagación.
"""
from typing import Optional, Sequence

import numpy as np

from app.core.exceptions import ContractError, DimensionError, NumericError
from app.services.tensor.tensor import BackwardFn, Tensor, current_tape

GELU_C = float(np.sqrt(2.0 / np.pi))


def apply_op(name: str, data: np.ndarray, inputs: Sequence[Tensor], backward: BackwardFn) -> Tensor:
    """
    Crea la salida de una operación y la registra en la cinta activa

    Args:
        name: Nombre de la operación (aparece en Tape.operations)
        data: Valores de salida ya calculados
        inputs: Operandos
        backward: Regla que recibe el gradiente de la salida y devuelve
            un gradiente (o None) por operando

    Returns:
        Tensor de salida
    """
    if not np.all(np.isfinite(data)):
        raise NumericError(f"La operación '{name}' produjo valores no finitos")
    tape = current_tape()
    tracked = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor._from_op(data, requires_grad=tracked)
    if tracked:
        tape.record(name, out, tuple(inputs), backward)
    return out


def _normalize_axis(x: Tensor, axis: int) -> int:
    if not -x.ndim <= axis < x.ndim:
        raise ContractError(f"Eje {axis} inválido para forma {x.shape}")
    return axis % x.ndim


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Producto matricial [m×k]·[k×n] → [m×n]"""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: formas incompatibles {a.shape} y {b.shape}")
    a_data, b_data = a.data, b.data

    def _backward(grad):
        return grad @ b_data.T, a_data.T @ grad

    return apply_op("matmul", a_data @ b_data, (a, b), _backward)


def transpose(x: Tensor) -> Tensor:
    if x.ndim != 2:
        raise DimensionError(f"transpose requiere un tensor 2-D, forma {x.shape}")
    return apply_op("transpose", x.data.T, (x,), lambda grad: (grad.T,))


def add(a: Tensor, b: Tensor) -> Tensor:
    """
    Suma elemento a elemento

    Además de formas iguales admite un sesgo 1-D sumado a cada fila de un
    tensor 2-D (el único broadcasting que necesita el codificador).
    """
    if a.shape == b.shape:
        return apply_op("add", a.data + b.data, (a, b), lambda grad: (grad, grad))
    if a.ndim == 2 and b.ndim == 1 and a.shape[1] == b.shape[0]:
        return apply_op("add", a.data + b.data, (a, b), lambda grad: (grad, grad.sum(axis=0)))
    raise DimensionError(f"add: formas incompatibles {a.shape} y {b.shape}")


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise DimensionError(f"sub: formas incompatibles {a.shape} y {b.shape}")
    return apply_op("sub", a.data - b.data, (a, b), lambda grad: (grad, -grad))


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise DimensionError(f"mul: formas incompatibles {a.shape} y {b.shape}")
    a_data, b_data = a.data, b.data
    return apply_op("mul", a_data * b_data, (a, b), lambda grad: (grad * b_data, grad * a_data))


def mul_scalar(x: Tensor, factor: float) -> Tensor:
    factor = float(factor)
    return apply_op("mul_scalar", x.data * factor, (x,), lambda grad: (grad * factor,))


def gelu(x: Tensor) -> Tensor:
    """GELU en su aproximación tanh"""
    v = x.data
    t = np.tanh(GELU_C * (v + 0.044715 * v ** 3))

    def _backward(grad):
        sech2 = 1.0 - t ** 2
        local = 0.5 * (1.0 + t) + 0.5 * v * sech2 * GELU_C * (1.0 + 3.0 * 0.044715 * v ** 2)
        return (grad * local,)

    return apply_op("gelu", 0.5 * v * (1.0 + t), (x,), _backward)


def sum(x: Tensor, axis: Optional[int] = None) -> Tensor:  # noqa: A001
    if axis is None:
        shape = x.shape
        return apply_op("sum", np.sum(x.data), (x,), lambda grad: (np.broadcast_to(grad, shape).copy(),))
    axis = _normalize_axis(x, axis)
    shape = x.shape

    def _backward(grad):
        return (np.broadcast_to(np.expand_dims(grad, axis), shape).copy(),)

    return apply_op("sum", np.sum(x.data, axis=axis), (x,), _backward)


def mean(x: Tensor, axis: Optional[int] = None) -> Tensor:
    count = x.size if axis is None else x.shape[_normalize_axis(x, axis)]
    return mul_scalar(sum(x, axis), 1.0 / count)


def _logsumexp(values: np.ndarray, axis: int) -> np.ndarray:
    peak = np.max(values, axis=axis, keepdims=True)
    return peak + np.log(np.sum(np.exp(values - peak), axis=axis, keepdims=True))


def logsumexp(x: Tensor, axis: int = -1) -> Tensor:
    """log Σ exp(x) a lo largo de `axis`, con sustracción del máximo"""
    axis = _normalize_axis(x, axis)
    lse = _logsumexp(x.data, axis)
    weights = np.exp(x.data - lse)

    def _backward(grad):
        return (np.expand_dims(grad, axis) * weights,)

    return apply_op("logsumexp", np.squeeze(lse, axis=axis), (x,), _backward)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    axis = _normalize_axis(x, axis)
    shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
    exps = np.exp(shifted)
    probs = exps / np.sum(exps, axis=axis, keepdims=True)

    def _backward(grad):
        return (probs * (grad - np.sum(grad * probs, axis=axis, keepdims=True)),)

    return apply_op("softmax", probs, (x,), _backward)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    axis = _normalize_axis(x, axis)
    out = x.data - _logsumexp(x.data, axis)
    probs = np.exp(out)

    def _backward(grad):
        return (grad - probs * np.sum(grad, axis=axis, keepdims=True),)

    return apply_op("log_softmax", out, (x,), _backward)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normaliza el último eje a media 0 y varianza 1, luego aplica gain/bias"""
    if eps <= 0:
        raise ContractError(f"layer_norm requiere eps > 0, recibido {eps}")
    width = x.shape[-1]
    if gain.shape != (width,) or bias.shape != (width,):
        raise DimensionError(f"layer_norm: gain {gain.shape} / bias {bias.shape} no encajan con {x.shape}")
    centered = x.data - np.mean(x.data, axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(np.mean(centered ** 2, axis=-1, keepdims=True) + eps)
    normalized = centered * inv_std
    gain_data = gain.data
    reduce_axes = tuple(range(x.ndim - 1))

    def _backward(grad):
        d_norm = grad * gain_data
        d_x = inv_std * (
            d_norm
            - np.mean(d_norm, axis=-1, keepdims=True)
            - normalized * np.mean(d_norm * normalized, axis=-1, keepdims=True)
        )
        return d_x, np.sum(grad * normalized, axis=reduce_axes), np.sum(grad, axis=reduce_axes)

    return apply_op("layer_norm", normalized * gain_data + bias.data, (x, gain, bias), _backward)


def gather_rows(x: Tensor, indices: Sequence[int]) -> Tensor:
    """Selecciona filas x[indices]; admite índices repetidos"""
    index = np.asarray(indices, dtype=np.int64)
    if index.ndim != 1 or (index.size and (index.min() < 0 or index.max() >= x.shape[0])):
        raise DimensionError(f"gather_rows: índices fuera de rango para forma {x.shape}")
    shape = x.shape

    def _backward(grad):
        out = np.zeros(shape, dtype=np.float64)
        np.add.at(out, index, grad)
        return (out,)

    return apply_op("gather_rows", x.data[index], (x,), _backward)
