# app/services/losses/losses.py
"""
Objetivos del entrenamiento: divergencia KL hacia la referencia, CTC y su suma.

Toda la manipulación de probabilidades se hace en espacio logarítmico.
"""
from typing import List, Optional, Tuple

import numpy as np

from app.core.exceptions import ContractError, CtcInfeasibleError, DimensionError
from app.schemas.data import CtcTarget
from app.schemas.training import LossReport
from app.services.tensor import ops
from app.services.tensor.tensor import Tensor

BLANK = 0
NORMALIZATION_TOLERANCE = 1e-6


def kld_loss(
    probs_ref: Tensor,
    log_probs_student: Tensor,
    log_probs_ref: Optional[Tensor] = None,
) -> Tensor:
    """
    D_KL(l_ref ‖ l_DS) por trama, promediada sobre las T tramas

    Args:
        probs_ref: Distribución de la referencia [T×V] (sin gradiente)
        log_probs_student: Log-probabilidades del estudiante [T×V]
        log_probs_ref: Log-probabilidades de la referencia, si ya se tienen;
            si no, se calculan como log(probs_ref)

    Returns:
        Escalar diferenciable respecto al estudiante
    """
    if probs_ref.shape != log_probs_student.shape or probs_ref.ndim != 2:
        raise DimensionError(
            f"kld_loss: formas incompatibles {probs_ref.shape} y {log_probs_student.shape}"
        )
    p = probs_ref.data
    row_sums = p.sum(axis=-1)
    if np.any(np.abs(row_sums - 1.0) > NORMALIZATION_TOLERANCE) or np.any(p < 0):
        raise ContractError("kld_loss: las filas de la referencia no son distribuciones de probabilidad")

    support = p > 0
    if log_probs_ref is None:
        log_p = np.zeros_like(p)
        log_p[support] = np.log(p[support])
    else:
        if log_probs_ref.shape != p.shape:
            raise DimensionError(f"kld_loss: log_probs_ref {log_probs_ref.shape} vs {p.shape}")
        log_p = np.where(support, log_probs_ref.data, 0.0)

    weights = Tensor(p)
    gap = ops.sub(Tensor(log_p), log_probs_student)
    return ops.mul_scalar(ops.sum(ops.mul(weights, gap)), 1.0 / p.shape[0])


def _extended_labels(target: CtcTarget, blank: int) -> np.ndarray:
    extended = np.full(2 * target.length + 1, blank, dtype=np.int64)
    extended[1::2] = target.tokens
    return extended


def _skip_allowed(extended: np.ndarray, blank: int) -> np.ndarray:
    """s puede venir de s−2 si es un token distinto del de s−2"""
    allowed = np.zeros(extended.size, dtype=bool)
    allowed[2:] = (extended[2:] != blank) & (extended[2:] != extended[:-2])
    return allowed


def ctc_alignment_logs(log_probs: np.ndarray, extended: np.ndarray, blank: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Recursiones alpha y beta en espacio logarítmico

    Ambas incluyen la emisión en la trama t, así que
    log P = logsumexp_s(alpha[t, s] + beta[t, s] − log y_t(ext_s)) para todo t.

    Returns:
        (alpha [T×S], beta [T×S])
    """
    frames, width = log_probs.shape[0], extended.size
    emissions = log_probs[:, extended]
    skip = _skip_allowed(extended, blank)
    alpha = np.full((frames, width), -np.inf)
    beta = np.full((frames, width), -np.inf)

    alpha[0, 0] = emissions[0, 0]
    alpha[0, 1] = emissions[0, 1]
    for t in range(1, frames):
        prev = alpha[t - 1]
        combined = prev.copy()
        combined[1:] = np.logaddexp(combined[1:], prev[:-1])
        combined[2:] = np.where(skip[2:], np.logaddexp(combined[2:], prev[:-2]), combined[2:])
        alpha[t] = combined + emissions[t]

    beta[-1, -1] = emissions[-1, -1]
    beta[-1, -2] = emissions[-1, -2]
    skip_forward = np.zeros(width, dtype=bool)
    skip_forward[:-2] = skip[2:]
    for t in range(frames - 2, -1, -1):
        nxt = beta[t + 1]
        combined = nxt.copy()
        combined[:-1] = np.logaddexp(combined[:-1], nxt[1:])
        combined[:-2] = np.where(skip_forward[:-2], np.logaddexp(combined[:-2], nxt[2:]), combined[:-2])
        beta[t] = combined + emissions[t]
    return alpha, beta


def ctc_loss(log_probs: Tensor, target: CtcTarget, blank: int = BLANK) -> Tensor:
    """
    −log Σ P(alineamiento) sobre todos los alineamientos que colapsan en `target`

    Args:
        log_probs: Log-probabilidades por trama [T×V]
        target: Secuencia objetivo sin blanks
        blank: Índice del blank

    Returns:
        Escalar diferenciable (nats por muestra)
    """
    if log_probs.ndim != 2:
        raise DimensionError(f"ctc_loss requiere [T×V], forma {log_probs.shape}")
    frames, vocab = log_probs.shape
    if any(token >= vocab or token == blank for token in target.tokens):
        raise ContractError(f"Tokens objetivo fuera de [1, {vocab - 1}]: {target.tokens}")
    if frames < target.min_frames:
        raise CtcInfeasibleError(
            f"Objetivo de longitud {target.length} con {target.repeat_count} repeticiones "
            f"necesita al menos {target.min_frames} tramas; hay {frames}"
        )

    values = log_probs.data
    extended = _extended_labels(target, blank)
    alpha, beta = ctc_alignment_logs(values, extended, blank)
    log_likelihood = np.logaddexp(alpha[-1, -1], alpha[-1, -2])

    def _backward(grad):
        occupancy = alpha + beta - values[:, extended]
        per_label = np.full(values.shape, -np.inf)
        for s, label in enumerate(extended):
            per_label[:, label] = np.logaddexp(per_label[:, label], occupancy[:, s])
        return (-grad * np.exp(per_label - log_likelihood),)

    return ops.apply_op("ctc_loss", np.asarray(-log_likelihood), (log_probs,), _backward)


def total_loss(l_kld: Optional[Tensor], l_ctc: Tensor, kld_weight: float = 1.0) -> Tuple[Tensor, LossReport]:
    """
    L = L_KLD + L_CTC

    Sin referencia (modos reference y rd-student) L = L_CTC y l_kld se reporta 0.

    Returns:
        (pérdida diferenciable, LossReport)
    """
    if l_kld is None:
        return l_ctc, LossReport(l_kld=0.0, l_ctc=l_ctc.item(), total=l_ctc.item(), kld_weight=kld_weight)
    weighted = l_kld if kld_weight == 1.0 else ops.mul_scalar(l_kld, kld_weight)
    total = ops.add(weighted, l_ctc)
    report = LossReport(l_kld=l_kld.item(), l_ctc=l_ctc.item(), total=total.item(), kld_weight=kld_weight)
    return total, report


def greedy_ctc_decode(log_probs: Tensor, blank: int = BLANK) -> List[int]:
    """
    Mejor camino: argmax por trama, colapso de repeticiones y eliminación de blanks

    Los empates se resuelven hacia el índice menor.
    """
    if log_probs.ndim != 2 or log_probs.shape[0] < 1:
        raise DimensionError(f"greedy_ctc_decode requiere [T×V] con T >= 1, forma {log_probs.shape}")
    decoded: List[int] = []
    previous = None
    for label in np.argmax(log_probs.data, axis=-1):
        label = int(label)
        if label != previous and label != blank:
            decoded.append(label)
        previous = label
    return decoded
