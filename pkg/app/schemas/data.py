# app/schemas/data.py
from typing import Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class CtcTarget(BaseModel):
    """Transcripción objetivo t^j; el 0 está reservado para el blank"""
    model_config = ConfigDict(frozen=True)

    tokens: Tuple[int, ...] = Field(min_length=1)

    @field_validator("tokens")
    @classmethod
    def _no_blank(cls, value: Tuple[int, ...]) -> Tuple[int, ...]:
        if any(int(t) < 1 for t in value):
            raise ValueError(f"Los tokens deben ser >= 1 (0 es el blank): {value}")
        return tuple(int(t) for t in value)

    @property
    def length(self) -> int:
        return len(self.tokens)

    @property
    def repeat_count(self) -> int:
        """Pares adyacentes repetidos (cada uno exige un blank intermedio)"""
        return sum(1 for a, b in zip(self.tokens, self.tokens[1:]) if a == b)

    @property
    def min_frames(self) -> int:
        return self.length + self.repeat_count


class DatasetConfig(BaseModel):
    """Configuración del corpus sintético"""
    model_config = ConfigDict(frozen=True)

    vocab_size: int = Field(default=8, ge=2, description="Tokens reales, sin contar el blank")
    feature_dim: int = Field(default=16, ge=1)
    min_frames_per_token: int = Field(default=2, ge=2)
    max_frames_per_token: int = Field(default=4, ge=2)
    min_tokens: int = Field(default=3, ge=1)
    max_tokens: int = Field(default=8, ge=1)
    noise_sigma: float = Field(default=0.3, ge=0)
    num_train: int = Field(default=2000, ge=0)
    num_test: int = Field(default=400, ge=0)
    seed: int = Field(default=7, ge=0)

    @model_validator(mode="after")
    def _ranges(self) -> "DatasetConfig":
        if self.min_frames_per_token > self.max_frames_per_token:
            raise ValueError("min_frames_per_token no puede superar max_frames_per_token")
        if self.min_tokens > self.max_tokens:
            raise ValueError("min_tokens no puede superar max_tokens")
        return self

    @property
    def max_sample_frames(self) -> int:
        return self.max_tokens * self.max_frames_per_token
