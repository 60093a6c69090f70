"""Self-supervised clustering targets.

Soft assignments come from a Student-t kernel around learnable centers;
the sharpened target distribution is recomputed from the consensus
assignment on a fixed interval and treated as a constant while the
KL-style losses pull the three assignment tables towards it.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

log = logging.getLogger(__name__)

EPS = 1e-12


@dataclass
class Centers:
    """Learnable cluster centers plus the Student-t degrees of freedom."""

    u: np.ndarray  # K x latent_dim
    dof: float = 1.0

    def __post_init__(self):
        if self.u.shape[0] < 2:
            raise ValidationError("need at least two cluster centers")
        if not np.isfinite(self.u).all():
            raise ValidationError("centers contain non-finite entries")
        if self.dof <= 0.0:
            raise ValidationError(f"degrees of freedom must be positive, got {self.dof}")

    def named_arrays(self):
        return {"centers.u": self.u}

    def replace(self, arrays):
        return Centers(u=arrays["centers.u"], dof=self.dof)


@dataclass
class AssignmentSet:
    """The four row-stochastic N x K tables of one fine-tuning step."""

    q: np.ndarray
    q_igae: np.ndarray
    q_ae: np.ndarray
    p: np.ndarray
    dof: float


def soft_assign(tape, z, centers_node, dof=1.0):
    """Row-stochastic Student-t similarity of embeddings to centers."""
    return tape.row_normalize(tape.student_t_weights(z, centers_node, dof))


def target_distribution(q):
    """Sharpened target: square, normalize by cluster frequency, re-normalize.

    A cluster column summing to zero would divide by zero; its
    contribution is treated as zero and a warning is logged.
    """
    q = np.asarray(q, dtype=np.float64)
    freq = q.sum(axis=0)
    if np.any(freq == 0.0):
        log.warning(
            "degenerate cluster(s) %s have zero total assignment",
            np.nonzero(freq == 0.0)[0].tolist(),
        )
    weight = np.divide(q * q, freq, out=np.zeros_like(q), where=freq > 0.0)
    return weight / weight.sum(axis=1, keepdims=True)


def _kl_to_mixture(tape, p, mixture_node):
    """sum_ij p_ij * ln(p_ij / mixture_ij) with p held constant."""
    p = np.asarray(p, dtype=np.float64)
    if p.shape != mixture_node.value.shape:
        raise ValidationError(
            f"target and mixture shapes disagree: {p.shape} vs "
            f"{mixture_node.value.shape}"
        )
    clamped = (p > 0.0) & (mixture_node.value < EPS)
    if clamped.any():
        log.warning(
            "KL mixture clamped at %g for %d entries with positive target mass",
            EPS,
            int(clamped.sum()),
        )
    entropy = float(np.sum(np.where(p > 0.0, p * np.log(np.maximum(p, EPS)), 0.0)))
    p_node = tape.constant(p)
    cross = tape.total_sum(tape.mul(p_node, tape.log(mixture_node, EPS)))
    return tape.sub(tape.constant([[entropy]]), cross)


def triplet_kl(tape, p, q, q_igae, q_ae):
    """KL from the target to the mean of the three assignment tables."""
    mixture = tape.scale(tape.add(tape.add(q, q_igae), q_ae), 1.0 / 3.0)
    return _kl_to_mixture(tape, p, mixture)


def single_kl(tape, p, q):
    """KL from the target to the consensus assignment alone."""
    return _kl_to_mixture(tape, p, q)
