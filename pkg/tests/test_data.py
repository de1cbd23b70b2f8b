import numpy as np
import pytest
from pydantic import ValidationError

from app.core.exceptions import ArtifactFormatError
from app.schemas.data import DatasetConfig
from app.services.data.dataset_io import load_dataset, save_dataset
from app.services.data.synth import batch_iter, generate_dataset, make_templates, summarize_dataset


def test_generation_is_deterministic(tiny_dataset_config, tiny_dataset):
    """
    Prueba que la misma configuración produce exactamente el mismo corpus.
    """
    again = generate_dataset(tiny_dataset_config)
    for first, second in zip(tiny_dataset.train + tiny_dataset.test, again.train + again.test):
        assert np.array_equal(first.features.data, second.features.data)
        assert first.target == second.target
        assert first.sample_id == second.sample_id


def test_split_sizes_and_ids(tiny_dataset_config, tiny_dataset):
    assert len(tiny_dataset.train) == tiny_dataset_config.num_train
    assert len(tiny_dataset.test) == tiny_dataset_config.num_test
    ids = [s.sample_id for s in tiny_dataset.train + tiny_dataset.test]
    assert len(set(ids)) == len(ids)


def test_samples_respect_config(tiny_dataset_config, tiny_dataset):
    config = tiny_dataset_config
    for sample in tiny_dataset.train + tiny_dataset.test:
        length = sample.target.length
        assert config.min_tokens <= length <= config.max_tokens
        assert all(1 <= t <= config.vocab_size for t in sample.target.tokens)
        assert length * config.min_frames_per_token <= sample.num_frames <= length * config.max_frames_per_token
        assert sample.num_frames >= sample.target.min_frames
        assert sample.features.shape[1] == config.feature_dim


def test_templates_are_orthogonal(tiny_dataset_config):
    templates = make_templates(tiny_dataset_config)
    gram = templates @ templates.T
    assert np.allclose(gram, tiny_dataset_config.feature_dim * np.eye(tiny_dataset_config.vocab_size))


def test_noise_free_features_follow_templates():
    config = DatasetConfig(vocab_size=3, feature_dim=4, noise_sigma=0.0, num_train=4, num_test=0, seed=1)
    dataset = generate_dataset(config)
    for sample in dataset.train:
        rows = {tuple(row) for row in sample.features.data}
        assert rows <= {tuple(row) for row in dataset.templates}


def test_batch_iter_partitions_by_length(tiny_dataset):
    """
    Prueba que los lotes cubren exactamente el dataset y no mezclan longitudes.
    """
    batches = batch_iter(tiny_dataset.train, 4, epoch_seed=99)
    ids = sorted(s.sample_id for batch in batches for s in batch)
    assert ids == sorted(s.sample_id for s in tiny_dataset.train)
    for batch in batches:
        assert 1 <= len(batch) <= 4
        assert len({s.num_frames for s in batch}) == 1


def test_batch_iter_is_deterministic(tiny_dataset):
    first = [[s.sample_id for s in b] for b in batch_iter(tiny_dataset.train, 4, epoch_seed=5)]
    second = [[s.sample_id for s in b] for b in batch_iter(tiny_dataset.train, 4, epoch_seed=5)]
    assert first == second
    with pytest.raises(ValueError):
        batch_iter(tiny_dataset.train, 0, epoch_seed=5)


def test_dataset_round_trip(tmp_path, tiny_dataset):
    """
    Prueba que el fichero DLDS se recupera bit a bit.
    """
    path = save_dataset(tiny_dataset, tmp_path / "data.dlds")
    loaded = load_dataset(path)
    assert loaded.config == tiny_dataset.config
    assert np.array_equal(loaded.templates, tiny_dataset.templates)
    for original, restored in zip(tiny_dataset.train + tiny_dataset.test, loaded.train + loaded.test):
        assert np.array_equal(original.features.data, restored.features.data)
        assert original.target == restored.target
        assert original.sample_id == restored.sample_id
    assert len(loaded.test) == len(tiny_dataset.test)


def test_dataset_file_is_reproducible(tmp_path, tiny_dataset_config):
    first = save_dataset(generate_dataset(tiny_dataset_config), tmp_path / "a.dlds")
    second = save_dataset(generate_dataset(tiny_dataset_config), tmp_path / "b.dlds")
    assert first.read_bytes() == second.read_bytes()


def test_corrupt_dataset_files(tmp_path, tiny_dataset):
    path = save_dataset(tiny_dataset, tmp_path / "data.dlds")
    payload = path.read_bytes()

    truncated = tmp_path / "truncated.dlds"
    truncated.write_bytes(payload[:-10])
    with pytest.raises(ArtifactFormatError):
        load_dataset(truncated)

    wrong_magic = tmp_path / "magic.dlds"
    wrong_magic.write_bytes(b"XXXX" + payload[4:])
    with pytest.raises(ArtifactFormatError):
        load_dataset(wrong_magic)

    trailing = tmp_path / "trailing.dlds"
    trailing.write_bytes(payload + b"\x00")
    with pytest.raises(ArtifactFormatError):
        load_dataset(trailing)


def test_dataset_with_blank_token_is_format_error(tmp_path, tiny_dataset):
    """
    Prueba que un registro con el token 0 (blank) se rechaza como fichero corrupto.
    """
    payload = bytearray(save_dataset(tiny_dataset, tmp_path / "data.dlds").read_bytes())
    metadata_length = int.from_bytes(payload[8:12], "little")
    first_token = 12 + metadata_length + 4 + 8 + 4 + 4
    payload[first_token:first_token + 4] = (0).to_bytes(4, "little")
    corrupt = tmp_path / "blank.dlds"
    corrupt.write_bytes(bytes(payload))
    with pytest.raises(ArtifactFormatError) as excinfo:
        load_dataset(corrupt)
    assert excinfo.value.exit_code == 3


def test_dataset_config_validation():
    with pytest.raises(ValidationError):
        DatasetConfig(vocab_size=1)
    with pytest.raises(ValidationError):
        DatasetConfig(min_tokens=5, max_tokens=2)
    with pytest.raises(ValidationError):
        DatasetConfig(min_frames_per_token=1)


def test_summary(tiny_dataset):
    summary = summarize_dataset(tiny_dataset)
    assert summary["num_train"] == 24
    assert summary["num_test"] == 8
    assert summary["vocab_size"] == 4
    assert summary["mean_frames"] > 0


def test_mean_sequence_length_with_default_ranges():
    """
    Prueba que, con los rangos por defecto, la media de T sobre 10⁴ muestras
    queda en [16, 17] (3 tramas por token × 5.5 tokens de media).
    """
    config = DatasetConfig(vocab_size=8, feature_dim=16, min_frames_per_token=2, max_frames_per_token=4,
                           min_tokens=3, max_tokens=8, num_train=10_000, num_test=0, seed=1)
    dataset = generate_dataset(config)
    mean_frames = np.mean([sample.num_frames for sample in dataset.train])
    assert 16.0 <= mean_frames <= 17.0
