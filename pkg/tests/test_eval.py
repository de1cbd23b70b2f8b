from functools import lru_cache

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from app.core.exceptions import ContractError
from app.schemas.encoder import GateVector
from app.schemas.sweep import EpochSweepTable, SweepReport, SweepRow
from app.schemas.training import EpochLog
from app.services.encoder.encoder import ModelParams, count_executed_params
from app.services.eval import metrics
from app.services.eval.eval_service import depth_sweep, epoch_sweep, overtaking_epoch, speedup
from app.services.eval.metrics import edit_distance, token_error_rate
from app.services.eval.report import (
    emit_report,
    parse_sweep_csv,
    render_comparison,
    render_epoch_table,
    render_markdown,
)
from app.services.tensor.tensor import Tensor
from app.services.trainer.trainer_service import TrainerService

from tests.conftest import make_train_config

sequences = st.lists(st.integers(min_value=0, max_value=3), max_size=12)


def exhaustive_distance(a, b):
    @lru_cache(maxsize=None)
    def solve(i, j):
        if i == len(a):
            return len(b) - j
        if j == len(b):
            return len(a) - i
        return min(
            solve(i + 1, j) + 1,
            solve(i, j + 1) + 1,
            solve(i + 1, j + 1) + (a[i] != b[j]),
        )
    return solve(0, 0)


def test_edit_distance_examples():
    """
    Prueba casos conocidos de la distancia de edición.
    """
    assert edit_distance("kitten", "sitting") == 3
    assert exhaustive_distance("kitten", "sitting") == 3
    assert edit_distance([1, 2, 3], [1, 2, 3]) == 0
    assert edit_distance([1, 2, 3], []) == 3
    assert edit_distance([], [4, 4]) == 2


@settings(max_examples=1000, deadline=None)
@given(sequences, sequences, sequences)
def test_edit_distance_metric_axioms(a, b, c):
    d_ab = edit_distance(a, b)
    assert d_ab >= 0
    assert (d_ab == 0) == (a == b)
    assert d_ab == edit_distance(b, a)
    assert edit_distance(a, c) <= d_ab + edit_distance(b, c)
    if len(a) <= 7 and len(b) <= 7:
        assert d_ab == exhaustive_distance(tuple(a), tuple(b))


def test_ter_perfect_and_empty_decodes(monkeypatch, tiny_params, tiny_dataset):
    samples = tiny_dataset.test
    gates = GateVector.full(3)
    monkeypatch.setattr(metrics, "decode_samples", lambda params, items, g: [list(s.target.tokens) for s in items])
    assert token_error_rate(tiny_params, samples, gates) == 0.0
    monkeypatch.setattr(metrics, "decode_samples", lambda params, items, g: [[] for _ in items])
    assert token_error_rate(tiny_params, samples, gates) == 1.0


def test_ter_blank_only_model(tiny_params, tiny_dataset, tiny_encoder_config):
    """
    Prueba que un proyector que siempre elige el blank da TER exactamente 1.
    """
    named = tiny_params.named_parameters()
    bias = np.zeros(tiny_encoder_config.vocab_size)
    bias[0] = 1e3
    named["projector.weight"] = Tensor(np.zeros(named["projector.weight"].shape))
    named["projector.bias"] = Tensor(bias)
    blank_model = ModelParams.from_named(tiny_encoder_config, named)
    assert token_error_rate(blank_model, tiny_dataset.test, GateVector.full(3)) == 1.0


def test_ter_is_order_invariant(reference_result, tiny_dataset):
    gates = GateVector.full(3)
    forward = token_error_rate(reference_result.checkpoint, tiny_dataset.test, gates)
    backward = token_error_rate(reference_result.checkpoint, list(reversed(tiny_dataset.test)), gates)
    assert forward == backward


def test_ter_requires_samples(tiny_params):
    with pytest.raises(ContractError):
        token_error_rate(tiny_params, [], GateVector.full(3))


def test_depth_sweep_rows(reference_result, tiny_dataset, tiny_encoder_config):
    """
    Prueba el orden de las filas, el speed-up como cociente de parámetros y
    la fila de referencia.
    """
    report = depth_sweep(reference_result.checkpoint, tiny_dataset.test, [1, 3, 2])
    assert [row.n_ds for row in report.rows] == [3, 2, 1]
    assert report.rows[0].speedup == 1.0
    full = count_executed_params(tiny_encoder_config, 3)
    for row in report.rows:
        assert abs(row.speedup - full / row.params) < 1e-9
        assert row.speedup == speedup(tiny_encoder_config, row.n_ds)
    assert report.reference.ter == reference_result.history[-1].test_ter_full_depth
    assert report.reference.ter == report.rows[0].ter


def test_depth_sweep_parallel_matches_serial(reference_result, tiny_dataset):
    serial = depth_sweep(reference_result.checkpoint, tiny_dataset.test, [3, 2, 1], "first-n")
    parallel = depth_sweep(reference_result.checkpoint, tiny_dataset.test, [3, 2, 1], "first-n", max_workers=3)
    assert serial == parallel


def test_depth_sweep_rejects_invalid_depth(reference_result, tiny_dataset):
    with pytest.raises(ContractError):
        depth_sweep(reference_result.checkpoint, tiny_dataset.test, [4])
    with pytest.raises(ContractError):
        depth_sweep(reference_result.checkpoint, tiny_dataset.test, [0, 2])


def test_epoch_sweep_with_gaps(tmp_path, tiny_dataset, tiny_encoder_config):
    """
    Prueba que un checkpoint ausente se marca como hueco y que la última
    columna coincide con el barrido del checkpoint final.
    """
    config = make_train_config("reference", epochs=2, ckpt_every=1)
    result = TrainerService(tiny_dataset, tiny_encoder_config, config, output_dir=tmp_path).train_reference()
    table = epoch_sweep(tmp_path, tiny_dataset.test, [3, 1], epochs=[1, 2, 7])
    assert table.column(7) == [None, None]
    final = depth_sweep(result.checkpoint, tiny_dataset.test, [3, 1])
    assert table.column(2) == [row.ter for row in final.rows]
    assert "n/a" in render_epoch_table(table)

    discovered = epoch_sweep(tmp_path, tiny_dataset.test, [2])
    assert discovered.epochs == [1, 2]


def make_report():
    rows = [
        SweepRow(n_ds=4, policy="evenly-spaced", ter=0.125, params=4000, speedup=1.0),
        SweepRow(n_ds=2, policy="evenly-spaced", ter=1.0 / 3.0, params=2500, speedup=1.6),
    ]
    reference = SweepRow(n_ds=4, policy="reference", ter=0.1, params=4000, speedup=1.0)
    return SweepReport(rows=rows, reference=reference)


def test_csv_round_trip(tmp_path):
    """
    Prueba que el CSV se relee con enteros exactos y floats a 6 decimales.
    """
    report = make_report()
    path = emit_report(report, "csv", tmp_path / "sweep.csv")
    text = path.read_text()
    assert text.splitlines()[0] == "n_ds,policy,ter,params,speedup"
    assert "0.333333" in text
    parsed = parse_sweep_csv(path)
    assert parsed.reference == report.reference
    for original, restored in zip(report.rows, parsed.rows):
        assert (restored.n_ds, restored.policy, restored.params) == (original.n_ds, original.policy, original.params)
        assert abs(restored.ter - original.ter) < 5e-7
        assert abs(restored.speedup - original.speedup) < 5e-7
    again = emit_report(parsed, "csv", tmp_path / "again.csv")
    assert again.read_bytes() == path.read_bytes()


def test_markdown_report(tmp_path):
    path = emit_report(make_report(), "md", tmp_path / "sweep.md")
    text = path.read_text()
    assert "| n_DS | TER (%) | Params (M) | Speed-up |" in text
    assert "| ref (4) |" in text
    assert "33.33" in text
    assert render_markdown(make_report()) == text


def test_unwritable_report_path(tmp_path):
    blocker = tmp_path / "file.txt"
    blocker.write_text("x")
    target = blocker / "sweep.csv"
    with pytest.raises(OSError) as excinfo:
        emit_report(make_report(), "csv", target)
    assert str(blocker) in str(excinfo.value)


def test_comparison_marks_best_per_row():
    """
    Prueba el orden de columnas y la marca del mejor TER frente a un mínimo ingenuo.
    """
    first = make_report()
    second = SweepReport(rows=[
        SweepRow(n_ds=4, policy="evenly-spaced", ter=0.2, params=4000, speedup=1.0),
        SweepRow(n_ds=2, policy="evenly-spaced", ter=0.25, params=2500, speedup=1.6),
    ])
    table = render_comparison([("dld", first), ("rd_sc", second)])
    lines = table.splitlines()
    assert lines[0] == "| n_DS | Params (M) | dld | rd_sc |"
    assert lines[2] == "| 4 | 0.00 | **12.50** | 20.00 |"
    assert lines[3] == "| 2 | 0.00 | 33.33 | **25.00** |"

    single = render_comparison([("solo", first)]).splitlines()
    assert single[0] == "| n_DS | Params (M) | solo |"


def test_epoch_table_layout():
    table = EpochSweepTable(
        policy="first-n", depths=[2, 1], epochs=[5, 10],
        values={(2, 5): 0.5, (1, 5): 0.75, (2, 10): None, (1, 10): 0.25},
    )
    lines = render_epoch_table(table).splitlines()
    assert lines[2] == "| n_DS | época 5 | época 10 |"
    assert lines[4] == "| 2 | 50.00 | n/a |"
    assert lines[5] == "| 1 | 75.00 | 25.00 |"


def test_epoch_sweep_includes_last_epoch(tmp_path, tiny_dataset, tiny_encoder_config):
    """
    Prueba que la última época tiene columna aunque no sea múltiplo del intervalo.
    """
    config = make_train_config("reference", epochs=9)
    assert config.checkpoint_interval == 2
    result = TrainerService(tiny_dataset, tiny_encoder_config, config, output_dir=tmp_path).train_reference()
    table = epoch_sweep(tmp_path, tiny_dataset.test, [3, 1])
    assert table.epochs == [2, 4, 6, 8, 9]
    final = depth_sweep(result.checkpoint, tiny_dataset.test, [3, 1])
    assert table.column(9) == [row.ter for row in final.rows]


def make_history(ters):
    return [
        EpochLog(step=10 * epoch, epoch=epoch, lr=1e-3, l_kld=0.0, l_ctc=1.0, total=1.0, test_ter_full_depth=ter)
        for epoch, ter in enumerate(ters, start=1)
    ]


def test_overtaking_epoch():
    """
    Prueba la primera época que alcanza el TER del baseline dentro del presupuesto.
    """
    history = make_history([0.9, 0.6, 0.4, 0.3, 0.2, 0.1])
    assert overtaking_epoch(history, baseline_ter=0.4, max_epoch=3) == 3
    assert overtaking_epoch(history, baseline_ter=0.45, max_epoch=6) == 3
    assert overtaking_epoch(history, baseline_ter=0.2, max_epoch=3) is None
    assert overtaking_epoch([], baseline_ter=0.5, max_epoch=10) is None
