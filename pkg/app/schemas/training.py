# app/schemas/training.py
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

TrainMode = Literal["reference", "dld-student", "rd-student"]


class TrainConfig(BaseModel):
    """Receta de entrenamiento de una ejecución"""
    model_config = ConfigDict(frozen=True)

    mode: TrainMode = "reference"
    epochs: int = Field(default=40, ge=0)
    batch_size: int = Field(default=16, ge=1)
    peak_lr: float = Field(default=2e-3, gt=0)
    warmup_steps: int = Field(default=200, ge=1)
    decay_rate: Optional[float] = Field(default=None, gt=0, le=1, description="γ por paso; None = caída 10x en la ejecución")
    drop_prob: float = Field(default=0.5, ge=0, le=1)
    weight_decay: float = Field(default=5e-4, ge=0)
    beta1: float = Field(default=0.9, ge=0, lt=1)
    beta2: float = Field(default=0.98, ge=0, lt=1)
    adam_eps: float = Field(default=1e-9, gt=0)
    kld_weight: float = Field(default=1.0, ge=0)
    max_grad_norm: Optional[float] = Field(default=None, gt=0)
    init_from_reference: bool = True
    ckpt_every: Optional[int] = Field(default=None, ge=1)
    seed: int = Field(default=7, ge=0)

    @property
    def checkpoint_interval(self) -> int:
        """Épocas entre checkpoints periódicos (25% de la ejecución por defecto)"""
        if self.ckpt_every is not None:
            return self.ckpt_every
        return max(1, self.epochs // 4)


class LossReport(BaseModel):
    """Componentes de la pérdida de un paso: L = L_KLD + L_CTC"""
    model_config = ConfigDict(frozen=True)

    l_kld: float
    l_ctc: float
    total: float
    kld_weight: float = 1.0

    @model_validator(mode="after")
    def _accounting(self) -> "LossReport":
        if self.l_kld < -1e-12:
            raise ValueError(f"l_kld negativa: {self.l_kld}")
        expected = self.l_kld + self.l_ctc if self.kld_weight == 1.0 else self.kld_weight * self.l_kld + self.l_ctc
        if self.total != expected:
            raise ValueError(f"total {self.total} != l_kld + l_ctc {expected}")
        return self


class EpochLog(BaseModel):
    """Fila del CSV de entrenamiento"""
    model_config = ConfigDict(frozen=True)

    step: int
    epoch: int
    lr: float
    l_kld: float
    l_ctc: float
    total: float
    test_ter_full_depth: float
