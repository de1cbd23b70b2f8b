# app/services/data/synth.py
import logging
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, List

import numpy as np

from app.schemas.data import CtcTarget, DatasetConfig
from app.services.tensor.rng import make_generator
from app.services.tensor.tensor import Tensor

logger = logging.getLogger(__name__)

TEMPLATE_KEY = 0
TRAIN_KEY = 1
TEST_KEY = 2


@dataclass
class SyntheticSample:
    """Par (a^j, t^j): tramas de características y tokens objetivo"""
    features: Tensor
    target: CtcTarget
    sample_id: int

    @property
    def num_frames(self) -> int:
        return self.features.shape[0]


@dataclass
class SyntheticDataset:
    """Corpus sintético completo, con las plantillas que lo generaron"""
    config: DatasetConfig
    templates: np.ndarray
    train: List[SyntheticSample]
    test: List[SyntheticSample]


def make_templates(config: DatasetConfig) -> np.ndarray:
    """
    Una plantilla por token, de norma √feature_dim

    Con V <= feature_dim las filas se ortonormalizan por Gram–Schmidt; si no,
    quedan como gaussianas normalizadas (casi ortogonales).
    """
    generator = make_generator(config.seed, "data", TEMPLATE_KEY)
    raw = generator.standard_normal((config.vocab_size, config.feature_dim))
    templates = np.zeros_like(raw)
    orthogonalize = config.vocab_size <= config.feature_dim
    for i, row in enumerate(raw):
        vector = row.copy()
        if orthogonalize:
            for j in range(i):
                vector -= np.dot(vector, templates[j]) * templates[j]
        templates[i] = vector / np.linalg.norm(vector)
    return templates * np.sqrt(config.feature_dim)


def _generate_split(config: DatasetConfig, templates: np.ndarray, split_key: int, count: int, first_id: int) -> List[SyntheticSample]:
    generator = make_generator(config.seed, "data", split_key)
    samples = []
    for offset in range(count):
        length = int(generator.integers(config.min_tokens, config.max_tokens + 1))
        tokens = generator.integers(1, config.vocab_size + 1, size=length)
        durations = generator.integers(config.min_frames_per_token, config.max_frames_per_token + 1, size=length)
        clean = np.repeat(templates[tokens - 1], durations, axis=0)
        noise = generator.standard_normal(clean.shape)
        samples.append(SyntheticSample(
            features=Tensor(clean + config.noise_sigma * noise),
            target=CtcTarget(tokens=tuple(int(t) for t in tokens)),
            sample_id=first_id + offset,
        ))
    return samples


def generate_dataset(config: DatasetConfig) -> SyntheticDataset:
    """
    Genera el corpus de forma determinista

    Cada token emite su plantilla durante d ∈ [dmin, dmax] tramas más ruido
    σ·N(0, 1). Train y test usan sub-flujos distintos e ids disjuntos.

    Args:
        config: Configuración del dataset

    Returns:
        Dataset con sus particiones y plantillas
    """
    templates = make_templates(config)
    train = _generate_split(config, templates, TRAIN_KEY, config.num_train, 0)
    test = _generate_split(config, templates, TEST_KEY, config.num_test, config.num_train)
    logger.info("Dataset generado: %d train / %d test, V=%d", len(train), len(test), config.vocab_size)
    return SyntheticDataset(config=config, templates=templates, train=train, test=test)


def batch_iter(samples: List[SyntheticSample], batch_size: int, epoch_seed: int) -> List[List[SyntheticSample]]:
    """
    Lotes de muestras con igual T (sin relleno), barajados de forma determinista

    Args:
        samples: Muestras a agrupar
        batch_size: Tamaño máximo de lote
        epoch_seed: Semilla de la época

    Returns:
        Lista de lotes; su unión es exactamente `samples`
    """
    if batch_size < 1:
        raise ValueError(f"batch_size debe ser >= 1, recibido {batch_size}")
    generator = make_generator(epoch_seed, "shuffle")
    buckets: Dict[int, List[SyntheticSample]] = defaultdict(list)
    for sample in samples:
        buckets[sample.num_frames].append(sample)
    batches = []
    for frames in sorted(buckets):
        bucket = buckets[frames]
        order = generator.permutation(len(bucket))
        shuffled = [bucket[i] for i in order]
        batches.extend(shuffled[i:i + batch_size] for i in range(0, len(shuffled), batch_size))
    return [batches[i] for i in generator.permutation(len(batches))]


def summarize_dataset(dataset: SyntheticDataset) -> Dict[str, float]:
    """J, T medio y vocabulario, como se imprime tras gen-data"""
    samples = dataset.train + dataset.test
    mean_frames = float(np.mean([s.num_frames for s in samples])) if samples else 0.0
    return {
        "num_train": len(dataset.train),
        "num_test": len(dataset.test),
        "mean_frames": mean_frames,
        "vocab_size": dataset.config.vocab_size,
    }
