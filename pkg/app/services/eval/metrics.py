# app/services/eval/metrics.py
from typing import TYPE_CHECKING, Iterable, List, Sequence, Union

from app.core.exceptions import ContractError
from app.schemas.encoder import GateVector
from app.services.data.synth import SyntheticSample
from app.services.encoder.encoder import ModelParams, encoder_forward
from app.services.losses.losses import greedy_ctc_decode
from app.services.tensor.tensor import no_grad

if TYPE_CHECKING:
    from app.services.trainer.checkpoint import Checkpoint


def edit_distance(a: Sequence, b: Sequence) -> int:
    """
    Distancia de Levenshtein (inserciones + borrados + sustituciones)

    Programación dinámica con dos filas.

    Args:
        a: Secuencia origen
        b: Secuencia destino

    Returns:
        Número mínimo de ediciones para transformar a en b
    """
    previous = list(range(len(b) + 1))
    for i, item_a in enumerate(a, start=1):
        current = [i] + [0] * len(b)
        for j, item_b in enumerate(b, start=1):
            current[j] = min(
                previous[j] + 1,
                current[j - 1] + 1,
                previous[j - 1] + (item_a != item_b),
            )
        previous = current
    return previous[-1]


def decode_samples(params: ModelParams, samples: Iterable[SyntheticSample], gates: GateVector) -> List[List[int]]:
    with no_grad():
        return [greedy_ctc_decode(encoder_forward(s.features, params, gates).log_probs) for s in samples]


def token_error_rate(model: Union[ModelParams, "Checkpoint"], samples: Sequence[SyntheticSample], gates: GateVector) -> float:
    """
    TER = Σ edit_distance(decodificado, objetivo) / Σ longitudes objetivo

    No se recorta: con inserciones puede superar 1.0.

    Args:
        model: Parámetros o checkpoint
        samples: Muestras de evaluación (no vacío)
        gates: Compuertas fijas

    Returns:
        Tasa de error de tokens
    """
    if not samples:
        raise ContractError("token_error_rate requiere un dataset no vacío")
    params = model if isinstance(model, ModelParams) else model.model_params()
    decoded = decode_samples(params, samples, gates)
    errors = sum(edit_distance(hyp, s.target.tokens) for hyp, s in zip(decoded, samples))
    return errors / sum(s.target.length for s in samples)
