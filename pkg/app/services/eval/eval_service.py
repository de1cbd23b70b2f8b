# app/services/eval/eval_service.py
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from app.core.config import settings
from app.schemas.encoder import EncoderConfig, GateVector
from app.schemas.sweep import REFERENCE_POLICY, EpochSweepTable, SweepReport, SweepRow
from app.schemas.training import EpochLog
from app.services.data.synth import SyntheticSample
from app.services.encoder.encoder import ModelParams, count_executed_params, select_gates
from app.services.eval.metrics import token_error_rate
from app.services.trainer.checkpoint import Checkpoint, checkpoint_name, load_checkpoint
from app.utils.validation_utils import validate_depths

logger = logging.getLogger(__name__)

Model = Union[Checkpoint, ModelParams]


def speedup(config: EncoderConfig, n_ds: int) -> float:
    """Parámetros ejecutados a profundidad completa / a profundidad n_DS"""
    return count_executed_params(config, config.num_blocks) / count_executed_params(config, n_ds)


def _as_params(model: Model) -> ModelParams:
    return model if isinstance(model, ModelParams) else model.model_params()


def depth_sweep(
    model: Model,
    samples: Sequence[SyntheticSample],
    depths: Sequence[int],
    policy: str = "evenly-spaced",
    reference: Optional[Model] = None,
    max_workers: int = 1,
) -> SweepReport:
    """
    Evalúa el modelo a varias profundidades fijas

    Args:
        model: Checkpoint o parámetros a barrer
        samples: Muestras de evaluación
        depths: Valores de n_DS, cada uno en [1, N]
        policy: Política de selección de bloques
        reference: Modelo de la fila de referencia (por defecto, el propio
            modelo a profundidad completa)
        max_workers: Hilos para evaluar filas en paralelo

    Returns:
        Filas por n_DS descendente más la fila de referencia
    """
    params = _as_params(model)
    config = params.config
    depths = validate_depths(depths, config.num_blocks)

    def evaluate(n_ds: int) -> SweepRow:
        gates = select_gates(n_ds, config.num_blocks, policy)
        ter = token_error_rate(params, samples, gates)
        logger.info("n_DS=%d (%s) compuertas=%s TER=%.4f", n_ds, policy, gates.gates, ter)
        return SweepRow(
            n_ds=n_ds,
            policy=policy,
            ter=ter,
            params=count_executed_params(config, n_ds),
            speedup=speedup(config, n_ds),
        )

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as executor:
            rows = list(executor.map(evaluate, depths))
    else:
        rows = [evaluate(n_ds) for n_ds in depths]

    reference_params = _as_params(reference) if reference is not None else params
    reference_config = reference_params.config
    reference_row = SweepRow(
        n_ds=reference_config.num_blocks,
        policy=REFERENCE_POLICY,
        ter=token_error_rate(reference_params, samples, GateVector.full(reference_config.num_blocks)),
        params=count_executed_params(reference_config, reference_config.num_blocks),
        speedup=1.0,
    )
    return SweepReport(rows=rows, reference=reference_row)


def discover_epochs(run_dir: Path) -> List[int]:
    """Épocas con checkpoint periódico en el directorio de la ejecución"""
    pattern = re.compile(re.escape(settings.CHECKPOINT_PREFIX) + r"(\d+)\.dldc$")
    epochs = []
    for path in Path(run_dir).iterdir():
        match = pattern.match(path.name)
        if match:
            epochs.append(int(match.group(1)))
    return sorted(epochs)


def epoch_sweep(
    run_dir: Union[str, Path],
    samples: Sequence[SyntheticSample],
    depths: Sequence[int],
    policy: str = "evenly-spaced",
    epochs: Optional[Sequence[int]] = None,
) -> EpochSweepTable:
    """
    TER por (profundidad, época) sobre los checkpoints periódicos de una ejecución

    Un checkpoint ausente deja un hueco (None) en lugar de fallar.

    Args:
        run_dir: Directorio de la ejecución
        samples: Muestras de evaluación
        depths: Valores de n_DS
        policy: Política de selección de bloques
        epochs: Épocas a evaluar (por defecto, las que tengan checkpoint)

    Returns:
        Tabla profundidades × épocas
    """
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise FileNotFoundError(f"No existe el directorio de la ejecución: {run_dir}")
    epochs = sorted(set(epochs)) if epochs is not None else discover_epochs(run_dir)
    depths = sorted(set(int(d) for d in depths), reverse=True)
    values: Dict[Tuple[int, int], Optional[float]] = {}

    for epoch in epochs:
        path = run_dir / checkpoint_name(epoch)
        if not path.exists():
            logger.warning("Falta el checkpoint de la época %d (%s)", epoch, path)
            values.update({(depth, epoch): None for depth in depths})
            continue
        params = load_checkpoint(path).model_params()
        for depth in validate_depths(depths, params.config.num_blocks):
            gates = select_gates(depth, params.config.num_blocks, policy)
            values[(depth, epoch)] = token_error_rate(params, samples, gates)
        logger.info("Época %d evaluada en %d profundidades", epoch, len(depths))

    return EpochSweepTable(policy=policy, depths=depths, epochs=list(epochs), values=values)


def overtaking_epoch(history: Sequence[EpochLog], baseline_ter: float, max_epoch: int) -> Optional[int]:
    """
    Primera época <= max_epoch cuyo TER a profundidad completa no supera el del baseline

    Devuelve None si el historial no alcanza al baseline dentro del presupuesto.
    """
    for row in history:
        if row.epoch > max_epoch:
            break
        if row.test_ter_full_depth <= baseline_ter:
            return row.epoch
    return None
