# app/services/tensor/tensor.py
from contextvars import ContextVar
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from app.core.exceptions import ContractError

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_active_tape: ContextVar[Optional["Tape"]] = ContextVar("active_tape", default=None)


class Tensor:
    """Arreglo denso de float64 con acumulador de gradiente"""

    __slots__ = ("data", "requires_grad", "grad", "is_leaf", "_tape")

    def __init__(self, data, requires_grad: bool = False):
        """
        Crea un tensor hoja (parámetro o constante)

        Args:
            data: Valores (cualquier cosa convertible por numpy)
            requires_grad: Si es True se acumulan gradientes en `grad`
        """
        array = np.array(data, dtype=np.float64)
        array.setflags(write=False)
        self.data = array
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = np.zeros_like(array) if requires_grad else None
        self.is_leaf = True
        self._tape: Optional["Tape"] = None

    @classmethod
    def _from_op(cls, data: np.ndarray, requires_grad: bool) -> "Tensor":
        out = cls.__new__(cls)
        array = np.asarray(data, dtype=np.float64)
        array.setflags(write=False)
        out.data = array
        out.requires_grad = requires_grad
        out.grad = None
        out.is_leaf = False
        out._tape = None
        return out

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() requiere un tensor escalar, forma {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad.fill(0.0)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


@dataclass
class TapeRecord:
    """Operación ejecutada: salida, operandos y regla de retropropagación"""
    name: str
    output: Tensor
    inputs: Tuple[Tensor, ...]
    backward: BackwardFn


class Tape:
    """Cinta de operaciones para diferenciación automática en modo inverso"""

    def __init__(self):
        self.records: List[TapeRecord] = []
        self._leaves: dict = {}
        self._token = None

    def __enter__(self) -> "Tape":
        self._token = _active_tape.set(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _active_tape.reset(self._token)
        self._token = None

    def record(self, name: str, output: Tensor, inputs: Tuple[Tensor, ...], backward: BackwardFn) -> None:
        self.records.append(TapeRecord(name, output, inputs, backward))
        output._tape = self
        for tensor in inputs:
            if tensor.is_leaf and tensor.requires_grad:
                self._leaves[id(tensor)] = tensor

    @property
    def operations(self) -> List[str]:
        return [record.name for record in self.records]

    def backward(self, loss: Tensor) -> List[int]:
        """
        Retropropaga desde una pérdida escalar

        Recorre la cinta en orden inverso exacto de ejecución y acumula
        ∂loss/∂hoja en el `grad` de cada hoja con requires_grad.

        Args:
            loss: Tensor escalar producido por operaciones de esta cinta

        Returns:
            Índices de los registros visitados, en el orden de visita
        """
        if loss.size != 1:
            raise ContractError(f"backward requiere una pérdida escalar, forma {loss.shape}")
        if not loss.requires_grad or loss._tape is not self:
            raise ContractError("La pérdida no fue registrada en esta cinta")

        pending = {id(loss): np.ones_like(loss.data)}
        visited: List[int] = []
        for index in range(len(self.records) - 1, -1, -1):
            record = self.records[index]
            upstream = pending.pop(id(record.output), None)
            if upstream is None:
                continue
            visited.append(index)
            input_grads = record.backward(upstream)
            for tensor, grad in zip(record.inputs, input_grads):
                if grad is None or not tensor.requires_grad:
                    continue
                if tensor.is_leaf:
                    tensor.grad += grad
                elif id(tensor) in pending:
                    pending[id(tensor)] = pending[id(tensor)] + grad
                else:
                    pending[id(tensor)] = np.array(grad, dtype=np.float64)
        return visited

    def clear(self) -> None:
        """Pone a cero los acumuladores de las hojas vistas y vacía la cinta"""
        for leaf in self._leaves.values():
            leaf.zero_grad()
        self._leaves.clear()
        self.records.clear()


def current_tape() -> Optional[Tape]:
    return _active_tape.get()


class no_grad:
    """Desactiva la grabación dentro del bloque"""

    def __enter__(self):
        self._token = _active_tape.set(None)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _active_tape.reset(self._token)


def backward(loss: Tensor) -> List[int]:
    """Retropropaga sobre la cinta en la que se registró `loss`"""
    if loss._tape is None:
        raise ContractError("La pérdida no proviene de operaciones registradas en una cinta")
    return loss._tape.backward(loss)
