# app/services/trainer/checkpoint.py
"""
Formato DLDC:

    magic "DLDC" | versión u32 | metadatos (u32 + JSON ordenado)
    | n u32 | tensores con nombre | m u32 | tensores del optimizador ("optim.m.*", "optim.v.*")

Tensor con nombre: longitud u16 + nombre utf-8, rango u8, dims u32[], datos f64 little-endian.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Union, get_args

import numpy as np

from app.core.config import settings
from app.core.exceptions import ArtifactFormatError
from app.schemas.encoder import EncoderConfig
from app.schemas.training import TrainMode
from app.services.encoder.encoder import ModelParams, expected_shapes
from app.services.losses.losses import BLANK
from app.services.tensor.tensor import Tensor
from app.services.trainer.optimizer import AdamState
from app.utils.binary_utils import BinaryReader, BinaryWriter

logger = logging.getLogger(__name__)

MAGIC = b"DLDC"
FORMAT_VERSION = 1
OPTIMIZER_PREFIX = "optim."


def checkpoint_name(epoch: int) -> str:
    return f"{settings.CHECKPOINT_PREFIX}{epoch:04d}.dldc"


@dataclass
class Checkpoint:
    """Parámetros del modelo, metadatos de arquitectura y estado de entrenamiento"""
    encoder_config: EncoderConfig
    mode: str
    step: int
    epoch: int
    params: Dict[str, np.ndarray]
    optimizer: Optional[AdamState] = None
    rng_state: Dict[str, Any] = field(default_factory=dict)
    blank: int = BLANK
    format_version: int = FORMAT_VERSION

    def model_params(self, requires_grad: bool = False) -> ModelParams:
        """Parámetros como tensores hoja nuevos (los arreglos no se comparten)"""
        tensors = {name: Tensor(values, requires_grad=requires_grad) for name, values in self.params.items()}
        return ModelParams.from_named(self.encoder_config, tensors)

    @classmethod
    def from_model(cls, params: ModelParams, mode: str, step: int, epoch: int,
                   optimizer: Optional[AdamState] = None, rng_state: Optional[Dict[str, Any]] = None) -> "Checkpoint":
        return cls(
            encoder_config=params.config,
            mode=mode,
            step=step,
            epoch=epoch,
            params={name: np.array(values) for name, values in params.arrays().items()},
            optimizer=optimizer,
            rng_state=dict(rng_state or {}),
        )


def save_checkpoint(checkpoint: Checkpoint, path: Union[str, Path]) -> Path:
    """
    Escribe un checkpoint DLDC

    Args:
        checkpoint: Checkpoint a guardar
        path: Ruta de destino

    Returns:
        Ruta escrita
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = list(expected_shapes(checkpoint.encoder_config))
    metadata = {
        "encoder_config": checkpoint.encoder_config.model_dump(),
        "mode": checkpoint.mode,
        "step": checkpoint.step,
        "epoch": checkpoint.epoch,
        "blank": checkpoint.blank,
        "rng_state": checkpoint.rng_state,
        "optimizer_step": checkpoint.optimizer.step if checkpoint.optimizer else None,
    }
    with open(path, "wb") as stream:
        writer = BinaryWriter(stream)
        writer.magic(MAGIC)
        writer.u32(checkpoint.format_version)
        writer.json_block(metadata)
        writer.u32(len(names))
        for name in names:
            writer.named_tensor(name, checkpoint.params[name])
        optimizer = checkpoint.optimizer
        writer.u32(0 if optimizer is None else 2 * len(names))
        if optimizer is not None:
            for name in names:
                writer.named_tensor(f"{OPTIMIZER_PREFIX}m.{name}", optimizer.m[name])
            for name in names:
                writer.named_tensor(f"{OPTIMIZER_PREFIX}v.{name}", optimizer.v[name])
    logger.info("Checkpoint guardado en %s (paso %d)", path, checkpoint.step)
    return path


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    """Lee un checkpoint DLDC; los valores se recuperan bit a bit"""
    path = Path(path)
    with open(path, "rb") as stream:
        reader = BinaryReader(stream, str(path))
        reader.expect_magic(MAGIC)
        version = reader.u32()
        if version != FORMAT_VERSION:
            raise ArtifactFormatError(f"{path}: versión DLDC {version} no soportada")
        metadata = reader.json_block()
        try:
            config = EncoderConfig(**metadata["encoder_config"])
        except (KeyError, TypeError, ValueError) as e:
            raise ArtifactFormatError(f"{path}: metadatos de arquitectura inválidos ({e})") from e

        params = {}
        for _ in range(reader.u32()):
            name, values = reader.named_tensor()
            if name in params:
                raise ArtifactFormatError(f"{path}: tensor duplicado '{name}'")
            params[name] = values
        expected = expected_shapes(config)
        if set(params) != set(expected):
            raise ArtifactFormatError(f"{path}: el conjunto de tensores no coincide con la arquitectura")

        moments: Dict[str, Dict[str, np.ndarray]] = {"m": {}, "v": {}}
        for _ in range(reader.u32()):
            name, values = reader.named_tensor()
            if not name.startswith(OPTIMIZER_PREFIX):
                raise ArtifactFormatError(f"{path}: tensor de optimizador sin prefijo '{name}'")
            kind, _, param_name = name[len(OPTIMIZER_PREFIX):].partition(".")
            if kind not in moments or param_name not in expected:
                raise ArtifactFormatError(f"{path}: tensor de optimizador desconocido '{name}'")
            moments[kind][param_name] = values
        if not reader.at_end():
            raise ArtifactFormatError(f"{path}: datos sobrantes al final")

    try:
        mode = metadata["mode"]
        step, epoch = int(metadata["step"]), int(metadata["epoch"])
        blank = int(metadata.get("blank", BLANK))
        optimizer_step = metadata.get("optimizer_step")
        optimizer_step = None if optimizer_step is None else int(optimizer_step)
        rng_state = dict(metadata.get("rng_state") or {})
    except (KeyError, TypeError, ValueError) as e:
        raise ArtifactFormatError(f"{path}: metadatos incompletos o inválidos ({e!r})") from e
    if mode not in get_args(TrainMode):
        raise ArtifactFormatError(f"{path}: modo desconocido {mode!r}")
    if blank != BLANK:
        raise ArtifactFormatError(f"{path}: índice de blank {blank} no soportado (se espera {BLANK})")

    optimizer = None
    if optimizer_step is not None:
        optimizer = AdamState(step=optimizer_step, m=moments["m"], v=moments["v"])
    return Checkpoint(
        encoder_config=config,
        mode=mode,
        step=step,
        epoch=epoch,
        params=params,
        optimizer=optimizer,
        rng_state=rng_state,
        blank=blank,
        format_version=version,
    )
