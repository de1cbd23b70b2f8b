# app/schemas/sweep.py
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

REFERENCE_POLICY = "reference"


class SweepRow(BaseModel):
    """Resultado a una profundidad fija n_DS"""
    model_config = ConfigDict(frozen=True)

    n_ds: int = Field(ge=0)
    policy: str
    ter: float = Field(ge=0, description="Puede superar 1.0 con inserciones; no se recorta")
    params: int = Field(ge=0)
    speedup: float = Field(ge=1.0 - 1e-12)


class SweepReport(BaseModel):
    """Barrido de profundidades al estilo de las tablas WER/Params/Speed-up"""
    model_config = ConfigDict(frozen=True)

    rows: List[SweepRow]
    reference: Optional[SweepRow] = None

    @model_validator(mode="after")
    def _ordering(self) -> "SweepReport":
        depths = [row.n_ds for row in self.rows]
        if depths != sorted(depths, reverse=True) or len(set(depths)) != len(depths):
            raise ValueError(f"Las filas deben ir por n_DS estrictamente descendente: {depths}")
        params = [row.params for row in self.rows]
        if any(a <= b for a, b in zip(params, params[1:])):
            raise ValueError("executed_params debe crecer estrictamente con n_DS")
        return self


class EpochSweepTable(BaseModel):
    """TER por (profundidad, época); None marca un checkpoint ausente"""
    model_config = ConfigDict(frozen=True)

    policy: str
    depths: List[int]
    epochs: List[int]
    values: Dict[Tuple[int, int], Optional[float]]

    def column(self, epoch: int) -> List[Optional[float]]:
        return [self.values[(depth, epoch)] for depth in self.depths]
