# app/services/trainer/trainer_service.py
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from app.core.config import settings
from app.core.exceptions import ContractError, DivergenceError, NumericError
from app.schemas.encoder import EncoderConfig, GateVector
from app.schemas.training import EpochLog, LossReport, TrainConfig
from app.services.data.synth import SyntheticDataset, SyntheticSample, batch_iter
from app.services.encoder.encoder import ModelParams, encoder_forward, init_model_params, sample_gates
from app.services.eval.metrics import token_error_rate
from app.services.losses.losses import ctc_loss, kld_loss, total_loss
from app.services.tensor import ops
from app.services.tensor.rng import derive_seed, generator_state, make_generator
from app.services.tensor.tensor import Tape, Tensor, no_grad
from app.services.trainer.checkpoint import Checkpoint, checkpoint_name, save_checkpoint
from app.services.trainer.optimizer import AdamState, adam_step, clip_gradients, lr_schedule, resolve_decay_rate
from app.services.trainer.run_log import write_epoch_log

logger = logging.getLogger(__name__)


@dataclass
class StepInfo:
    """Lo que ve el gancho de inspección tras la retropropagación de un paso"""
    step: int
    lr: float
    gates: GateVector
    grads: Dict[str, np.ndarray]
    report: LossReport


@dataclass
class TrainingResult:
    checkpoint: Checkpoint
    history: List[EpochLog]


class TrainerService:
    """Servicio que ejecuta las recetas de entrenamiento: referencia, DLD y RD"""

    def __init__(
        self,
        dataset: SyntheticDataset,
        encoder_config: EncoderConfig,
        config: TrainConfig,
        output_dir: Optional[Path] = None,
        step_hook: Optional[Callable[[StepInfo], None]] = None,
    ):
        """
        Inicializa el servicio

        Args:
            dataset: Corpus (train para optimizar, test para el TER por época)
            encoder_config: Arquitectura del modelo a entrenar
            config: Receta de entrenamiento
            output_dir: Directorio de la ejecución (opcional; sin él no se escribe nada)
            step_hook: Llamado en cada paso con los gradientes antes del optimizador
        """
        self.dataset = dataset
        self.encoder_config = encoder_config
        self.config = config
        self.output_dir = Path(output_dir) if output_dir is not None else None
        self.step_hook = step_hook
        self._reference_cache: Dict[int, Tuple[Tensor, Tensor]] = {}

    # ========== Recetas ==========

    def train_reference(self) -> TrainingResult:
        """
        Modelo estático de referencia: todas las compuertas a 1, solo CTC

        Returns:
            Checkpoint final e historial por época
        """
        self._require_mode("reference")
        params = init_model_params(self.encoder_config, self.config.seed)
        return self._run(params, reference=None, sample=False)

    def train_student_dld(self, reference: Checkpoint) -> TrainingResult:
        """
        Estudiante dinámico inicializado con los pesos de la referencia y
        entrenado con L = L_KLD + L_CTC bajo compuertas muestreadas

        Args:
            reference: Checkpoint de la referencia (congelada)

        Returns:
            Checkpoint final e historial por época
        """
        self._require_mode("dld-student")
        self._require_matching(reference)
        reference_params = reference.model_params(requires_grad=False)
        params = reference.model_params(requires_grad=True)
        return self._run(params, reference=reference_params, sample=True)

    def train_student_rd(self, reference: Optional[Checkpoint] = None) -> TrainingResult:
        """
        Línea base de descarte aleatorio: compuertas muestreadas, solo CTC

        Args:
            reference: Si se da y config.init_from_reference, se parte de sus
                pesos; si no, desde cero con el flujo `init`

        Returns:
            Checkpoint final e historial por época
        """
        self._require_mode("rd-student")
        if reference is not None and self.config.init_from_reference:
            self._require_matching(reference)
            params = reference.model_params(requires_grad=True)
        else:
            params = init_model_params(self.encoder_config, self.config.seed)
        return self._run(params, reference=None, sample=True)

    # ========== Bucle ==========

    def steps_per_epoch(self) -> int:
        counts: Dict[int, int] = {}
        for sample in self.dataset.train:
            counts[sample.num_frames] = counts.get(sample.num_frames, 0) + 1
        return sum(math.ceil(c / self.config.batch_size) for c in counts.values())

    def _run(self, params: ModelParams, reference: Optional[ModelParams], sample: bool) -> TrainingResult:
        config = self.config
        num_blocks = self.encoder_config.num_blocks
        total_steps = config.epochs * self.steps_per_epoch()
        decay_rate = resolve_decay_rate(config, total_steps)
        gate_generator = make_generator(config.seed, "gates")
        state = AdamState.zeros_like(params.named_parameters())
        history: List[EpochLog] = []
        step = 0
        logger.info("Entrenamiento %s: %d épocas, %d pasos, γ=%.6g", config.mode, config.epochs, total_steps, decay_rate)

        for epoch in range(1, config.epochs + 1):
            kld_sum = ctc_sum = 0.0
            batches = batch_iter(self.dataset.train, config.batch_size, derive_seed(config.seed, "shuffle", epoch))
            lr = 0.0
            for batch in batches:
                lr = lr_schedule(step, config, decay_rate)
                gates = sample_gates(num_blocks, config.drop_prob, gate_generator) if sample else GateVector.full(num_blocks)
                named = params.named_parameters()
                try:
                    with Tape() as tape:
                        loss, report = self._batch_loss(batch, params, gates, reference)
                        tape.backward(loss)
                except NumericError as e:
                    raise DivergenceError(step, e.detail) from e
                if not math.isfinite(report.total):
                    raise DivergenceError(step, f"pérdida {report.total}")

                grads = {name: np.array(t.grad) for name, t in named.items()}
                if self.step_hook is not None:
                    self.step_hook(StepInfo(step=step, lr=lr, gates=gates, grads=grads, report=report))
                grads = clip_gradients(grads, config.max_grad_norm)
                updated, state = adam_step(named, grads, state, lr, config.weight_decay,
                                           (config.beta1, config.beta2), config.adam_eps)
                params = ModelParams.from_named(self.encoder_config, updated)
                kld_sum += report.l_kld
                ctc_sum += report.l_ctc
                logger.debug("paso %d n_DS=%d lr=%.6g total=%.6f", step, gates.n_ds, lr, report.total)
                step += 1

            count = max(1, len(batches))
            l_kld, l_ctc = kld_sum / count, ctc_sum / count
            weighted = l_kld if config.kld_weight == 1.0 else config.kld_weight * l_kld
            row = EpochLog(step=step, epoch=epoch, lr=lr, l_kld=l_kld, l_ctc=l_ctc,
                           total=weighted + l_ctc, test_ter_full_depth=self._full_depth_ter(params))
            history.append(row)
            logger.info("época %d paso %d lr=%.6g l_kld=%.6f l_ctc=%.6f total=%.6f TER=%.4f",
                        epoch, step, lr, row.l_kld, row.l_ctc, row.total, row.test_ter_full_depth)
            periodic = epoch % config.checkpoint_interval == 0 or epoch == config.epochs
            if self.output_dir is not None and periodic:
                save_checkpoint(self._checkpoint(params, step, epoch, state, gate_generator),
                                self.output_dir / checkpoint_name(epoch))

        checkpoint = self._checkpoint(params, step, config.epochs, state, gate_generator)
        if self.output_dir is not None:
            save_checkpoint(checkpoint, self.output_dir / settings.FINAL_CHECKPOINT)
            write_epoch_log(history, self.output_dir / settings.LOG_FILENAME)
        return TrainingResult(checkpoint=checkpoint, history=history)

    def _batch_loss(self, batch: List[SyntheticSample], params: ModelParams, gates: GateVector,
                    reference: Optional[ModelParams]) -> Tuple[Tensor, LossReport]:
        kld_terms, ctc_terms = [], []
        for sample in batch:
            out = encoder_forward(sample.features, params, gates)
            ctc_terms.append(ctc_loss(out.log_probs, sample.target))
            if reference is not None:
                probs_ref, log_probs_ref = self._reference_outputs(sample, reference)
                kld_terms.append(kld_loss(probs_ref, out.log_probs, log_probs_ref))
        l_kld = _batch_mean(kld_terms) if reference is not None else None
        return total_loss(l_kld, _batch_mean(ctc_terms), self.config.kld_weight)

    def _reference_outputs(self, sample: SyntheticSample, reference: ModelParams) -> Tuple[Tensor, Tensor]:
        """Salida de la referencia a profundidad completa; congelada, así que se cachea"""
        cached = self._reference_cache.get(sample.sample_id)
        if cached is None:
            with no_grad():
                out = encoder_forward(sample.features, reference, GateVector.full(reference.config.num_blocks))
            cached = (out.probs, out.log_probs)
            self._reference_cache[sample.sample_id] = cached
        return cached

    def _full_depth_ter(self, params: ModelParams) -> float:
        if not self.dataset.test:
            return float("nan")
        return token_error_rate(params, self.dataset.test, GateVector.full(self.encoder_config.num_blocks))

    def _checkpoint(self, params: ModelParams, step: int, epoch: int, state: AdamState,
                    gate_generator: np.random.Generator) -> Checkpoint:
        return Checkpoint.from_model(params, mode=self.config.mode, step=step, epoch=epoch,
                                     optimizer=state, rng_state={"gates": generator_state(gate_generator)})

    # ========== Validaciones ==========

    def _require_mode(self, mode: str) -> None:
        if self.config.mode != mode:
            raise ContractError(f"Se esperaba mode={mode}, la configuración tiene mode={self.config.mode}")

    def _require_matching(self, reference: Checkpoint) -> None:
        if reference.encoder_config != self.encoder_config:
            raise ContractError(
                "La arquitectura del estudiante no coincide con la del checkpoint de referencia: "
                f"{self.encoder_config.model_dump()} vs {reference.encoder_config.model_dump()}"
            )


def _batch_mean(terms: List[Tensor]) -> Tensor:
    accumulated = terms[0]
    for term in terms[1:]:
        accumulated = ops.add(accumulated, term)
    return ops.mul_scalar(accumulated, 1.0 / len(terms))
