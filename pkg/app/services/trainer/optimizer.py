# app/services/trainer/optimizer.py
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from app.schemas.training import TrainConfig
from app.services.tensor.tensor import Tensor


def lr_schedule(step: int, config: TrainConfig, decay_rate: Optional[float] = None) -> float:
    """
    Calentamiento lineal y después caída exponencial

    lr = peak·step/warmup si step < warmup; peak·γ^(step − warmup) después.

    Args:
        step: Paso global (desde 0)
        config: Configuración de entrenamiento
        decay_rate: γ resuelto (por defecto config.decay_rate, o 1 si no hay)

    Returns:
        Tasa de aprendizaje
    """
    if step < 0:
        raise ValueError(f"step debe ser >= 0, recibido {step}")
    gamma = decay_rate if decay_rate is not None else (config.decay_rate or 1.0)
    if step < config.warmup_steps:
        return config.peak_lr * step / config.warmup_steps
    return config.peak_lr * gamma ** (step - config.warmup_steps)


def resolve_decay_rate(config: TrainConfig, total_steps: int) -> float:
    """γ explícito, o el que reduce lr 10x entre el fin del calentamiento y el último paso"""
    if config.decay_rate is not None:
        return config.decay_rate
    decay_steps = total_steps - 1 - config.warmup_steps
    if decay_steps <= 0:
        return 1.0
    return 0.1 ** (1.0 / decay_steps)


@dataclass
class AdamState:
    """Momentos de Adam por nombre de parámetro"""
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def zeros_like(cls, params: Mapping[str, Tensor]) -> "AdamState":
        return cls(
            step=0,
            m={name: np.zeros(t.shape) for name, t in params.items()},
            v={name: np.zeros(t.shape) for name, t in params.items()},
        )


def clip_gradients(grads: Mapping[str, np.ndarray], max_norm: Optional[float]) -> Dict[str, np.ndarray]:
    """Recorte por norma global; sin límite devuelve los gradientes tal cual"""
    grads = dict(grads)
    if max_norm is None:
        return grads
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if norm <= max_norm or norm == 0.0:
        return grads
    scale = max_norm / norm
    return {name: g * scale for name, g in grads.items()}


def adam_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    lr: float,
    weight_decay: float,
    betas: Tuple[float, float] = (0.9, 0.98),
    eps: float = 1e-9,
) -> Tuple[Dict[str, Tensor], AdamState]:
    """
    Paso de Adam con corrección de sesgo y decaimiento de pesos desacoplado

    Los tensores son inmutables: se devuelven hojas nuevas con gradiente a cero.

    Args:
        params: Parámetros actuales por nombre
        grads: Gradientes por nombre
        state: Momentos acumulados
        lr: Tasa de aprendizaje de este paso
        weight_decay: Coeficiente L2 aplicado fuera del gradiente
        betas: (β1, β2)
        eps: ε del denominador

    Returns:
        (parámetros nuevos, estado nuevo)
    """
    beta1, beta2 = betas
    step = state.step + 1
    correction1 = 1.0 - beta1 ** step
    correction2 = 1.0 - beta2 ** step
    new_params, new_m, new_v = {}, {}, {}
    for name, tensor in params.items():
        grad = grads[name]
        m = beta1 * state.m[name] + (1.0 - beta1) * grad
        v = beta2 * state.v[name] + (1.0 - beta2) * grad * grad
        update = (m / correction1) / (np.sqrt(v / correction2) + eps)
        new_params[name] = Tensor(tensor.data - lr * (update + weight_decay * tensor.data), requires_grad=True)
        new_m[name], new_v[name] = m, v
    return new_params, AdamState(step=step, m=new_m, v=new_v)
