# app/services/encoder/encoder.py
"""
Codificador dinámico: proyección de entrada, N bloques residuales con
compuerta (y^{i+1} = y^i + g^i·Δ^i(y^i)) y proyector lineal + softmax.
"""
import math
from dataclasses import dataclass
from typing import Dict, List, NamedTuple

import numpy as np

from app.core.exceptions import ContractError, DimensionError
from app.schemas.encoder import GATE_POLICIES, EncoderConfig, GateVector
from app.services.tensor import ops
from app.services.tensor.rng import make_generator, rng_bernoulli
from app.services.tensor.tensor import Tensor
from app.utils.validation_utils import validate_probability

BLOCK_FIELDS = (
    ("attention.wq", "wq"),
    ("attention.wk", "wk"),
    ("attention.wv", "wv"),
    ("attention.wo", "wo"),
    ("norm1.gain", "norm1_gain"),
    ("norm1.bias", "norm1_bias"),
    ("norm2.gain", "norm2_gain"),
    ("norm2.bias", "norm2_bias"),
    ("ffn.w1", "w1"),
    ("ffn.b1", "b1"),
    ("ffn.w2", "w2"),
    ("ffn.b2", "b2"),
)


@dataclass
class BlockParams:
    """Parámetros de f^i: atención de una cabeza pre-norm + FFN GELU"""
    wq: Tensor
    wk: Tensor
    wv: Tensor
    wo: Tensor
    norm1_gain: Tensor
    norm1_bias: Tensor
    norm2_gain: Tensor
    norm2_bias: Tensor
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor

    def named(self, prefix: str) -> Dict[str, Tensor]:
        return {f"{prefix}.{name}": getattr(self, attr) for name, attr in BLOCK_FIELDS}


@dataclass
class ModelParams:
    """Todos los parámetros: entrada, bloques y proyector"""
    config: EncoderConfig
    input_weight: Tensor
    input_bias: Tensor
    positional: Tensor
    blocks: List[BlockParams]
    output_weight: Tensor
    output_bias: Tensor

    def named_parameters(self) -> Dict[str, Tensor]:
        """Parámetros bajo nombres estables, en orden fijo"""
        named = {
            "input_projection.weight": self.input_weight,
            "input_projection.bias": self.input_bias,
            "input_projection.positional": self.positional,
        }
        for index, block in enumerate(self.blocks):
            named.update(block.named(f"blocks.{index}"))
        named["projector.weight"] = self.output_weight
        named["projector.bias"] = self.output_bias
        return named

    @classmethod
    def from_named(cls, config: EncoderConfig, tensors: Dict[str, Tensor]) -> "ModelParams":
        """
        Reconstruye los parámetros a partir de su diccionario con nombres

        Args:
            config: Arquitectura
            tensors: Tensores por nombre (exactamente los de named_parameters)

        Returns:
            ModelParams con formas verificadas
        """
        expected = expected_shapes(config)
        missing = sorted(set(expected) - set(tensors))
        extra = sorted(set(tensors) - set(expected))
        if missing or extra:
            raise ContractError(f"Parámetros que faltan {missing} / sobrantes {extra}")
        for name, shape in expected.items():
            if tensors[name].shape != shape:
                raise DimensionError(f"{name}: forma {tensors[name].shape}, se esperaba {shape}")
        blocks = [
            BlockParams(**{attr: tensors[f"blocks.{i}.{name}"] for name, attr in BLOCK_FIELDS})
            for i in range(config.num_blocks)
        ]
        return cls(
            config=config,
            input_weight=tensors["input_projection.weight"],
            input_bias=tensors["input_projection.bias"],
            positional=tensors["input_projection.positional"],
            blocks=blocks,
            output_weight=tensors["projector.weight"],
            output_bias=tensors["projector.bias"],
        )

    def arrays(self) -> Dict[str, np.ndarray]:
        return {name: t.data for name, t in self.named_parameters().items()}


class EncoderOutput(NamedTuple):
    hidden: Tensor
    log_probs: Tensor
    probs: Tensor


def expected_shapes(config: EncoderConfig) -> Dict[str, tuple]:
    d, f = config.model_dim, config.ffn_dim
    shapes = {
        "input_projection.weight": (config.input_dim, d),
        "input_projection.bias": (d,),
        "input_projection.positional": (config.max_frames, d),
    }
    block = {
        "attention.wq": (d, d),
        "attention.wk": (d, d),
        "attention.wv": (d, d),
        "attention.wo": (d, d),
        "norm1.gain": (d,),
        "norm1.bias": (d,),
        "norm2.gain": (d,),
        "norm2.bias": (d,),
        "ffn.w1": (d, f),
        "ffn.b1": (f,),
        "ffn.w2": (f, d),
        "ffn.b2": (d,),
    }
    for i in range(config.num_blocks):
        shapes.update({f"blocks.{i}.{name}": shape for name, shape in block.items()})
    shapes["projector.weight"] = (d, config.vocab_size)
    shapes["projector.bias"] = (config.vocab_size,)
    return shapes


def init_model_params(config: EncoderConfig, seed: int) -> ModelParams:
    """
    Inicialización determinista desde el flujo `init`

    Pesos ~ N(0, 1/fan_in), ganancias de layer-norm 1, sesgos 0,
    tabla posicional ~ N(0, 0.02²).
    """
    generator = make_generator(seed, "init")
    tensors = {}
    for name, shape in expected_shapes(config).items():
        if name.endswith(".gain"):
            values = np.ones(shape)
        elif name.endswith("bias") or name.endswith(".b1") or name.endswith(".b2"):
            values = np.zeros(shape)
        elif name.endswith("positional"):
            values = 0.02 * generator.standard_normal(shape)
        else:
            values = generator.standard_normal(shape) / math.sqrt(shape[0])
        tensors[name] = Tensor(values, requires_grad=True)
    return ModelParams.from_named(config, tensors)


def input_projection(a: Tensor, params: ModelParams) -> Tensor:
    """y¹ = a·W_in + b_in + P[:T]"""
    config = params.config
    if a.ndim != 2 or a.shape[1] != config.input_dim:
        raise DimensionError(f"Entrada de forma {a.shape}, se esperaba [T×{config.input_dim}]")
    frames = a.shape[0]
    if not 1 <= frames <= config.max_frames:
        raise ContractError(f"T={frames} fuera de [1, max_frames={config.max_frames}]")
    projected = ops.add(ops.matmul(a, params.input_weight), params.input_bias)
    return ops.add(projected, ops.gather_rows(params.positional, range(frames)))


def block_forward(y: Tensor, p: BlockParams, eps: float = 1e-5) -> Tensor:
    """
    Contribución Δ(y) de un bloque

    f(y) = FFN-half(Attn-half(y)); se devuelve directamente
    Δ(y) = SelfAttn(LN₁(y)) + FFN(LN₂(y + SelfAttn(LN₁(y)))), de forma que el
    residual con compuerta es y + g·Δ(y).

    Args:
        y: Estado [T×d]
        p: Parámetros del bloque
        eps: Épsilon de layer-norm

    Returns:
        Δ(y) con la forma de y
    """
    if y.ndim != 2 or y.shape[1] != p.wq.shape[0]:
        raise DimensionError(f"block_forward: estado {y.shape} incompatible con d={p.wq.shape[0]}")
    h = ops.layer_norm(y, p.norm1_gain, p.norm1_bias, eps)
    q = ops.matmul(h, p.wq)
    k = ops.matmul(h, p.wk)
    v = ops.matmul(h, p.wv)
    scores = ops.mul_scalar(ops.matmul(q, ops.transpose(k)), 1.0 / math.sqrt(y.shape[1]))
    attended = ops.matmul(ops.matmul(ops.softmax(scores, axis=-1), v), p.wo)
    z = ops.add(y, attended)
    hidden = ops.gelu(ops.add(ops.matmul(ops.layer_norm(z, p.norm2_gain, p.norm2_bias, eps), p.w1), p.b1))
    ffn = ops.add(ops.matmul(hidden, p.w2), p.b2)
    return ops.add(attended, ffn)


def _project(hidden: Tensor, params: ModelParams) -> EncoderOutput:
    logits = ops.add(ops.matmul(hidden, params.output_weight), params.output_bias)
    return EncoderOutput(hidden, ops.log_softmax(logits, axis=-1), ops.softmax(logits, axis=-1))


def encoder_forward(a: Tensor, params: ModelParams, gates: GateVector) -> EncoderOutput:
    """
    Paso hacia delante con compuertas

    Los bloques con g^i = 0 no se calculan: y^{i+1} = y^i.

    Args:
        a: Secuencia de características [T×input_dim]
        params: Parámetros del modelo
        gates: Una compuerta por bloque

    Returns:
        (hidden [T×d], log_probs [T×V], probs [T×V])
    """
    if len(gates) != params.config.num_blocks:
        raise ContractError(f"{len(gates)} compuertas para {params.config.num_blocks} bloques")
    y = input_projection(a, params)
    for gate, block in zip(gates.gates, params.blocks):
        if gate:
            y = ops.add(y, block_forward(y, block, params.config.layer_norm_eps))
    return _project(y, params)


def static_forward(a: Tensor, params: ModelParams) -> EncoderOutput:
    """Pila sin compuertas: todos los bloques se ejecutan"""
    y = input_projection(a, params)
    for block in params.blocks:
        y = ops.add(y, block_forward(y, block, params.config.layer_norm_eps))
    return _project(y, params)


def sample_gates(num_blocks: int, drop_prob: float, generator: np.random.Generator) -> GateVector:
    """
    Compuertas de entrenamiento: g^i = 0 con probabilidad p_d, de forma independiente

    Args:
        num_blocks: N
        drop_prob: p_d
        generator: Flujo `gates`

    Returns:
        Vector nuevo para esta iteración
    """
    validate_probability(drop_prob, "p_d")
    return GateVector(gates=tuple(1 - rng_bernoulli(generator, drop_prob) for _ in range(num_blocks)))


def _round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


def select_gates(n_ds: int, num_blocks: int, policy: str = "evenly-spaced") -> GateVector:
    """
    Compuertas deterministas de inferencia con exactamente n_DS unos

    evenly-spaced elige los índices round(k·N/n_DS) − 1 para k = 1..n_DS;
    una colisión se desplaza al índice libre menor más cercano.

    Args:
        n_ds: Bloques a ejecutar
        num_blocks: N
        policy: evenly-spaced, first-n o last-n

    Returns:
        GateVector de longitud N
    """
    if policy not in GATE_POLICIES:
        raise ContractError(f"Política '{policy}' desconocida; válidas: {', '.join(GATE_POLICIES)}")
    if not 0 <= n_ds <= num_blocks:
        raise ContractError(f"n_DS={n_ds} fuera de [0, {num_blocks}]")
    if policy == "first-n":
        chosen = set(range(n_ds))
    elif policy == "last-n":
        chosen = set(range(num_blocks - n_ds, num_blocks))
    else:
        chosen = set()
        for k in range(1, n_ds + 1):
            index = min(num_blocks - 1, _round_half_up(k * num_blocks / n_ds) - 1)
            candidate = index
            while candidate in chosen and candidate > 0:
                candidate -= 1
            if candidate in chosen:
                candidate = index
                while candidate in chosen:
                    candidate += 1
            chosen.add(candidate)
    return GateVector(gates=tuple(1 if i in chosen else 0 for i in range(num_blocks)))


def block_param_count(config: EncoderConfig) -> int:
    """4d² + 2·(2d) + d·f + f + f·d + d"""
    d, f = config.model_dim, config.ffn_dim
    return 4 * d * d + 4 * d + 2 * d * f + f + d


def base_param_count(config: EncoderConfig) -> int:
    """Proyección de entrada (con tabla posicional) + proyector"""
    d = config.model_dim
    return config.input_dim * d + d + config.max_frames * d + d * config.vocab_size + config.vocab_size


def count_executed_params(config: EncoderConfig, n_ds: int) -> int:
    if not 0 <= n_ds <= config.num_blocks:
        raise ContractError(f"n_DS={n_ds} fuera de [0, {config.num_blocks}]")
    return base_param_count(config) + n_ds * block_param_count(config)
