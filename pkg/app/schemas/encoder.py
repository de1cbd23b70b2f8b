# app/schemas/encoder.py
from typing import Literal, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator

GatePolicy = Literal["evenly-spaced", "first-n", "last-n"]
GATE_POLICIES: Tuple[str, ...] = ("evenly-spaced", "first-n", "last-n")


class EncoderConfig(BaseModel):
    """Arquitectura del codificador dinámico"""
    model_config = ConfigDict(frozen=True)

    num_blocks: int = Field(ge=1)
    model_dim: int = Field(ge=1)
    ffn_dim: int = Field(ge=1)
    vocab_size: int = Field(ge=2, description="Incluye el blank (índice 0)")
    input_dim: int = Field(ge=1)
    max_frames: int = Field(default=64, ge=1, description="Longitud de la tabla posicional")
    layer_norm_eps: float = Field(default=1e-5, gt=0)


class GateVector(BaseModel):
    """Compuertas binarias g¹..g^N, una por bloque"""
    model_config = ConfigDict(frozen=True)

    gates: Tuple[int, ...]

    @field_validator("gates")
    @classmethod
    def _binary(cls, value: Tuple[int, ...]) -> Tuple[int, ...]:
        if any(g not in (0, 1) for g in value):
            raise ValueError(f"Las compuertas deben ser 0 o 1: {value}")
        return tuple(int(g) for g in value)

    @property
    def n_ds(self) -> int:
        return sum(self.gates)

    def __len__(self) -> int:
        return len(self.gates)

    def __getitem__(self, index: int) -> int:
        return self.gates[index]

    @classmethod
    def full(cls, num_blocks: int) -> "GateVector":
        return cls(gates=(1,) * num_blocks)
