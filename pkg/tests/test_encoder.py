import numpy as np
import pytest

from app.core.exceptions import ContractError, DimensionError
from app.schemas.encoder import EncoderConfig, GateVector
from app.services.encoder.encoder import (
    BLOCK_FIELDS,
    BlockParams,
    ModelParams,
    block_forward,
    base_param_count,
    block_param_count,
    count_executed_params,
    encoder_forward,
    expected_shapes,
    init_model_params,
    input_projection,
    sample_gates,
    select_gates,
    static_forward,
)
from app.services.losses.losses import ctc_loss
from app.schemas.data import CtcTarget
from app.services.tensor import ops
from app.services.tensor.rng import make_generator
from app.services.tensor.tensor import Tape, Tensor, no_grad
from app.utils.gradcheck_utils import check_gradients


def random_setup(seed):
    rng = np.random.default_rng(seed)
    config = EncoderConfig(
        num_blocks=int(rng.integers(1, 5)),
        model_dim=int(rng.integers(2, 7)),
        ffn_dim=int(rng.integers(2, 9)),
        vocab_size=int(rng.integers(2, 6)),
        input_dim=int(rng.integers(1, 5)),
        max_frames=8,
    )
    params = init_model_params(config, seed)
    a = Tensor(rng.standard_normal((int(rng.integers(1, 7)), config.input_dim)))
    return config, params, a


@pytest.mark.parametrize("seed", range(20))
def test_gate_identity_and_completeness(seed):
    """
    Prueba que las compuertas a cero dejan pasar la proyección de entrada y
    las compuertas a uno reproducen la pila estática bit a bit.
    """
    config, params, a = random_setup(seed)
    with no_grad():
        closed = encoder_forward(a, params, GateVector(gates=(0,) * config.num_blocks))
        projected = input_projection(a, params)
        opened = encoder_forward(a, params, GateVector.full(config.num_blocks))
        static = static_forward(a, params)
    assert np.array_equal(closed.hidden.data, projected.data)
    assert np.array_equal(opened.hidden.data, static.hidden.data)
    assert np.array_equal(opened.log_probs.data, static.log_probs.data)


@pytest.mark.parametrize("gates", [(1, 0, 1), (0, 1, 0), (0, 0, 1), (1, 1, 0)])
def test_skipped_blocks_receive_zero_gradient(tiny_params, features, gates):
    """
    Prueba que solo los bloques ejecutados reciben gradiente.
    """
    with Tape() as tape:
        out = encoder_forward(features, tiny_params, GateVector(gates=gates))
        tape.backward(ctc_loss(out.log_probs, CtcTarget(tokens=(1, 2))))
    for index, gate in enumerate(gates):
        block = tiny_params.blocks[index].named(f"blocks.{index}")
        norm = sum(float(np.linalg.norm(t.grad)) for t in block.values())
        if gate:
            assert norm > 0
        else:
            assert norm == 0.0


def test_skipped_blocks_are_not_computed(tiny_params, features):
    with Tape() as tape:
        out = encoder_forward(features, tiny_params, GateVector(gates=(0, 0, 0)))
        tape.backward(ops.sum(out.log_probs))
    assert "layer_norm" not in tape.operations
    assert "gelu" not in tape.operations


def test_forward_shapes_and_distributions(tiny_params, tiny_encoder_config, features):
    with no_grad():
        out = encoder_forward(features, tiny_params, GateVector(gates=(1, 0, 1)))
    assert out.hidden.shape == (5, tiny_encoder_config.model_dim)
    assert out.log_probs.shape == (5, tiny_encoder_config.vocab_size)
    assert np.allclose(out.probs.data.sum(axis=-1), 1.0)


def test_forward_contract_errors(tiny_params, tiny_encoder_config, rng):
    with pytest.raises(ContractError):
        encoder_forward(Tensor(rng.standard_normal((3, 6))), tiny_params, GateVector(gates=(1, 1)))
    with pytest.raises(DimensionError):
        encoder_forward(Tensor(rng.standard_normal((3, 2))), tiny_params, GateVector.full(3))
    too_long = tiny_encoder_config.max_frames + 1
    with pytest.raises(ContractError):
        encoder_forward(Tensor(rng.standard_normal((too_long, 6))), tiny_params, GateVector.full(3))


def test_init_is_deterministic(tiny_encoder_config):
    first = init_model_params(tiny_encoder_config, 5).arrays()
    second = init_model_params(tiny_encoder_config, 5).arrays()
    assert all(np.array_equal(first[name], second[name]) for name in first)
    assert np.array_equal(first["blocks.0.norm1.gain"], np.ones(tiny_encoder_config.model_dim))


def test_named_parameters_round_trip(tiny_params, tiny_encoder_config):
    named = tiny_params.named_parameters()
    rebuilt = ModelParams.from_named(tiny_encoder_config, named)
    assert rebuilt.named_parameters().keys() == named.keys()
    named.pop("projector.bias")
    with pytest.raises(ContractError):
        ModelParams.from_named(tiny_encoder_config, named)


def test_bernoulli_depth_statistic():
    """
    Prueba que la media empírica de n_DS con N=12 y p_d=0.5 está en [5.85, 6.15].
    """
    generator = make_generator(2024, "gates")
    depths = [sample_gates(12, 0.5, generator).n_ds for _ in range(10_000)]
    assert 5.85 <= float(np.mean(depths)) <= 6.15


def test_sample_gates_extremes():
    generator = make_generator(0, "gates")
    assert sample_gates(6, 0.0, generator).gates == (1,) * 6
    assert sample_gates(6, 1.0, generator).gates == (0,) * 6
    with pytest.raises(ContractError):
        sample_gates(6, -0.1, generator)


def test_select_gates_evenly_spaced():
    assert select_gates(6, 12).gates == (0, 1) * 6
    assert select_gates(4, 6).gates == (0, 1, 1, 0, 1, 1)
    assert select_gates(12, 12).gates == (1,) * 12
    assert select_gates(0, 12).gates == (0,) * 12


@pytest.mark.parametrize("policy", ["evenly-spaced", "first-n", "last-n"])
def test_select_gates_exact_depth(policy):
    for num_blocks in range(1, 13):
        for n_ds in range(num_blocks + 1):
            gates = select_gates(n_ds, num_blocks, policy)
            assert len(gates) == num_blocks
            assert gates.n_ds == n_ds


def test_select_gates_prefix_suffix():
    assert select_gates(2, 5, "first-n").gates == (1, 1, 0, 0, 0)
    assert select_gates(2, 5, "last-n").gates == (0, 0, 0, 1, 1)


def test_select_gates_rejects_unknown_policy():
    with pytest.raises(ContractError) as excinfo:
        select_gates(2, 4, "random")
    assert "evenly-spaced" in str(excinfo.value)
    with pytest.raises(ContractError):
        select_gates(5, 4)


def test_param_count_matches_tensors(tiny_params, tiny_encoder_config):
    """
    Prueba que los contadores coinciden con el tamaño real de los tensores.
    """
    named = tiny_params.named_parameters()
    total = sum(t.size for t in named.values())
    block = sum(t.size for name, t in named.items() if name.startswith("blocks.0."))
    assert block == block_param_count(tiny_encoder_config)
    assert total == count_executed_params(tiny_encoder_config, tiny_encoder_config.num_blocks)
    assert count_executed_params(tiny_encoder_config, 0) == base_param_count(tiny_encoder_config)


TABLE_2_CONFIG = EncoderConfig(
    num_blocks=12, model_dim=768, ffn_dim=3075, vocab_size=32, input_dim=11112, max_frames=1000,
)
TABLE_1_CONFIG = EncoderConfig(
    num_blocks=12, model_dim=512, ffn_dim=1486, vocab_size=32, input_dim=80, max_frames=515,
)


def test_large_model_speedups():
    """
    Prueba los speed-ups de un modelo de 94.4M parámetros a profundidad reducida.
    """
    full = count_executed_params(TABLE_2_CONFIG, 12)
    expected = {10: 1.17, 8: 1.43, 6: 1.82, 4: 2.50, 2: 4.01}
    for n_ds, value in expected.items():
        assert abs(full / count_executed_params(TABLE_2_CONFIG, n_ds) - value) <= 0.01
    millions = {12: 94.40, 10: 80.22, 6: 51.87, 2: 23.51}
    for n_ds, value in millions.items():
        assert abs(count_executed_params(TABLE_2_CONFIG, n_ds) / 1e6 - value) < 0.02


def test_executed_params_are_affine():
    expected = {12: 31.2, 10: 26.06, 8: 20.91, 6: 15.76, 4: 10.61, 2: 5.47}
    counts = {n: count_executed_params(TABLE_1_CONFIG, n) for n in expected}
    for n_ds, value in expected.items():
        assert abs(counts[n_ds] / 1e6 - value) < 0.02
    steps = {counts[n] - counts[n - 2] for n in (4, 6, 8, 10, 12)}
    assert steps == {2 * block_param_count(TABLE_1_CONFIG)}


def make_block(model_dim, ffn_dim, fill):
    """BlockParams con los valores que devuelva `fill(shape)`"""
    config = EncoderConfig(num_blocks=1, model_dim=model_dim, ffn_dim=ffn_dim, vocab_size=2, input_dim=1, max_frames=8)
    shapes = expected_shapes(config)
    return BlockParams(**{
        attr: Tensor(fill(shapes[f"blocks.0.{name}"]), requires_grad=True) for name, attr in BLOCK_FIELDS
    })


def test_block_with_zero_params_is_identity_residual(rng):
    """
    Prueba que un bloque con todos los parámetros a cero aporta Δ = 0.
    """
    block = make_block(4, 6, np.zeros)
    y = Tensor(rng.standard_normal((5, 4)))
    with no_grad():
        delta = block_forward(y, block)
    assert np.array_equal(delta.data, np.zeros((5, 4)))


@pytest.mark.parametrize("frames", range(1, 9))
def test_block_preserves_shape(rng, frames):
    block = make_block(6, 10, rng.standard_normal)
    with no_grad():
        delta = block_forward(Tensor(rng.standard_normal((frames, 6))), block)
    assert delta.shape == (frames, 6)
    assert np.all(np.isfinite(delta.data))


@pytest.mark.parametrize("seed", range(5))
def test_block_gradients_match_finite_differences(seed):
    """
    Prueba el gradiente de cada parámetro del bloque y del estado de entrada.
    """
    rng = np.random.default_rng(seed)
    block = make_block(4, 6, lambda shape: 0.5 * rng.standard_normal(shape))
    y = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
    weights = Tensor(rng.standard_normal((3, 4)))

    def loss():
        return ops.sum(ops.mul(block_forward(y, block), weights))

    tensors = [getattr(block, attr) for _, attr in BLOCK_FIELDS] + [y]
    assert check_gradients(loss, tensors) < 1e-5
