# app/services/tensor/rng.py
"""
Generadores aleatorios deterministas.

Se usa `numpy.random.SeedSequence` (divisible) con el generador `PCG64`.
Cada flujo con nombre deriva de la semilla del experimento mediante su propia
spawn key, de modo que consumir un flujo (p. ej. las compuertas) nunca altera
otro (p. ej. la inicialización).
"""
from typing import Any, Dict, Sequence

import numpy as np

from app.services.tensor.tensor import Tensor
from app.utils.validation_utils import validate_probability

STREAMS: Dict[str, int] = {
    "data": 0,
    "init": 1,
    "gates": 2,
    "shuffle": 3,
}


def make_generator(seed: int, stream: str, *sub_keys: int) -> np.random.Generator:
    """
    Crea el generador de un flujo con nombre

    Args:
        seed: Semilla del experimento
        stream: Nombre del flujo (data, init, gates, shuffle)
        sub_keys: Subdivisiones adicionales del flujo (p. ej. época)

    Returns:
        Generador PCG64 independiente
    """
    if stream not in STREAMS:
        raise KeyError(f"Flujo aleatorio desconocido: {stream}")
    sequence = np.random.SeedSequence(int(seed), spawn_key=(STREAMS[stream], *sub_keys))
    return np.random.Generator(np.random.PCG64(sequence))


def derive_seed(seed: int, stream: str, *sub_keys: int) -> int:
    """Semilla entera derivada (p. ej. la de cada época para barajar)"""
    sequence = np.random.SeedSequence(int(seed), spawn_key=(STREAMS[stream], *sub_keys))
    return int(sequence.generate_state(1, dtype=np.uint32)[0])


def rng_standard_normal(seed: int, shape: Sequence[int], stream: str = "init") -> Tensor:
    return Tensor(make_generator(seed, stream).standard_normal(tuple(shape)))


def rng_bernoulli(generator: np.random.Generator, p: float) -> int:
    """Un bit con P(1) = p"""
    validate_probability(p, "p")
    return int(generator.random() < p)


def generator_state(generator: np.random.Generator) -> Dict[str, Any]:
    return generator.bit_generator.state


def restore_generator(state: Dict[str, Any]) -> np.random.Generator:
    bit_generator = np.random.PCG64()
    bit_generator.state = state
    return np.random.Generator(bit_generator)
