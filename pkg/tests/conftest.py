import numpy as np
import pytest

from app.schemas.data import DatasetConfig
from app.schemas.encoder import EncoderConfig
from app.schemas.training import TrainConfig
from app.services.data.synth import generate_dataset
from app.services.encoder.encoder import init_model_params
from app.services.tensor.tensor import Tensor
from app.services.trainer.trainer_service import TrainerService


@pytest.fixture
def rng():
    """
    Generador numpy fijo para datos de prueba.
    """
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_dataset_config():
    return DatasetConfig(
        vocab_size=4,
        feature_dim=6,
        min_frames_per_token=2,
        max_frames_per_token=3,
        min_tokens=1,
        max_tokens=3,
        noise_sigma=0.1,
        num_train=24,
        num_test=8,
        seed=3,
    )


@pytest.fixture(scope="session")
def tiny_dataset(tiny_dataset_config):
    """
    Corpus sintético pequeño compartido por toda la sesión.
    """
    return generate_dataset(tiny_dataset_config)


@pytest.fixture(scope="session")
def tiny_encoder_config(tiny_dataset_config):
    return EncoderConfig(
        num_blocks=3,
        model_dim=8,
        ffn_dim=12,
        vocab_size=tiny_dataset_config.vocab_size + 1,
        input_dim=tiny_dataset_config.feature_dim,
        max_frames=16,
    )


@pytest.fixture
def tiny_params(tiny_encoder_config):
    return init_model_params(tiny_encoder_config, seed=11)


@pytest.fixture
def features(rng, tiny_encoder_config):
    """
    Secuencia de entrada aleatoria de 5 tramas.
    """
    return Tensor(rng.standard_normal((5, tiny_encoder_config.input_dim)))


def make_train_config(mode="reference", **overrides):
    values = dict(mode=mode, epochs=2, batch_size=8, warmup_steps=2, peak_lr=5e-3, seed=3)
    values.update(overrides)
    return TrainConfig(**values)


@pytest.fixture(scope="session")
def reference_result(tiny_dataset, tiny_encoder_config):
    """
    Referencia entrenada dos épocas, sin escribir ficheros.
    """
    service = TrainerService(tiny_dataset, tiny_encoder_config, make_train_config("reference"))
    return service.train_reference()
