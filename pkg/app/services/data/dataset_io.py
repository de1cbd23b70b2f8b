# app/services/data/dataset_io.py
"""
Formato DLDS:

    magic "DLDS" | versión u32 | bloque de configuración (u32 + JSON)
    | n_train u32 | registros | n_test u32 | registros
    | plantillas: V u32, D u32, f64[V×D]

Registro: sample_id u64, T u32, L u32, tokens u32[L], características f64[T×D].
"""
import logging
from pathlib import Path
from typing import List, Union

from app.core.exceptions import ArtifactFormatError
from app.schemas.data import CtcTarget, DatasetConfig
from app.services.data.synth import SyntheticDataset, SyntheticSample
from app.services.tensor.tensor import Tensor
from app.utils.binary_utils import BinaryReader, BinaryWriter

logger = logging.getLogger(__name__)

MAGIC = b"DLDS"
FORMAT_VERSION = 1


def _write_samples(writer: BinaryWriter, samples: List[SyntheticSample]) -> None:
    writer.u32(len(samples))
    for sample in samples:
        writer.u64(sample.sample_id)
        writer.u32(sample.num_frames)
        writer.u32(sample.target.length)
        writer.u32_array(sample.target.tokens)
        writer.f64_array(sample.features.data)


def _read_samples(reader: BinaryReader, feature_dim: int) -> List[SyntheticSample]:
    samples = []
    for _ in range(reader.u32()):
        sample_id = reader.u64()
        frames = reader.u32()
        length = reader.u32()
        tokens = tuple(int(t) for t in reader.u32_array(length))
        features = reader.f64_array((frames, feature_dim))
        try:
            target = CtcTarget(tokens=tokens)
        except ValueError as e:
            raise ArtifactFormatError(f"{reader.source}: objetivo inválido en la muestra {sample_id} ({e})") from e
        samples.append(SyntheticSample(features=Tensor(features), target=target, sample_id=sample_id))
    return samples


def save_dataset(dataset: SyntheticDataset, path: Union[str, Path]) -> Path:
    """
    Escribe el dataset en formato DLDS

    Args:
        dataset: Dataset a guardar
        path: Ruta de destino

    Returns:
        Ruta escrita
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as stream:
        writer = BinaryWriter(stream)
        writer.magic(MAGIC)
        writer.u32(FORMAT_VERSION)
        writer.json_block(dataset.config.model_dump())
        _write_samples(writer, dataset.train)
        _write_samples(writer, dataset.test)
        writer.u32(dataset.templates.shape[0])
        writer.u32(dataset.templates.shape[1])
        writer.f64_array(dataset.templates)
    logger.info("Dataset guardado en %s", path)
    return path


def load_dataset(path: Union[str, Path]) -> SyntheticDataset:
    """Lee un fichero DLDS; los valores se recuperan bit a bit"""
    path = Path(path)
    with open(path, "rb") as stream:
        reader = BinaryReader(stream, str(path))
        reader.expect_magic(MAGIC)
        version = reader.u32()
        if version != FORMAT_VERSION:
            raise ArtifactFormatError(f"{path}: versión DLDS {version} no soportada")
        try:
            config = DatasetConfig(**reader.json_block())
        except ValueError as e:
            raise ArtifactFormatError(f"{path}: configuración inválida ({e})") from e
        train = _read_samples(reader, config.feature_dim)
        test = _read_samples(reader, config.feature_dim)
        rows, cols = reader.u32(), reader.u32()
        templates = reader.f64_array((rows, cols))
        if not reader.at_end():
            raise ArtifactFormatError(f"{path}: datos sobrantes tras las plantillas")
    return SyntheticDataset(config=config, templates=templates, train=train, test=test)
