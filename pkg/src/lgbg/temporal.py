"""Position-aware self-attention across a span of day representations.

Pairwise scores f(g_i, g_j) = [W_q(g_i+p_i)]^T [W_p(g_j+p_j)] are scaled by
sqrt(dp) and row-softmaxed; each day's attended vector g'_i = sum_j y_ij W_g g_j,
and the summed g* feeds a single fully-connected softmax classifier.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .config import TrainConfig
from .errors import ValidationError

N_CLASSES = 4


def position_embedding(i: int, dim: int, t_max: int = 64) -> np.ndarray:
    """Fixed sinusoidal encoding: pairs of sin/cos at geometric frequencies."""
    if not 0 <= i < t_max:
        raise ValidationError(f"position {i} outside 0..{t_max - 1}")
    pe = np.zeros(dim)
    half = (dim + 1) // 2
    freqs = np.exp(-np.log(10000.0) * (2 * np.arange(half)) / dim)
    pe[0::2] = np.sin(i * freqs)
    pe[1::2] = np.cos(i * freqs[: dim // 2])
    return pe


def position_table(t_max: int, dim: int) -> np.ndarray:
    return np.stack([position_embedding(i, dim, t_max) for i in range(t_max)])


class TemporalParams:
    """Trainable tensors of the cross-day attention and the classifier head."""

    def __init__(self, config: TrainConfig, rng: np.random.Generator):
        dp = config.dp
        scale = np.sqrt(2.0 / (dp + dp))
        self.query_proj = ag.parameter(rng.standard_normal((dp, dp)) * scale)   # W_q
        self.key_proj = ag.parameter(rng.standard_normal((dp, dp)) * scale)     # W_p
        self.value_proj = ag.parameter(rng.standard_normal((dp, dp)) * scale)   # W_g
        self.class_weights = ag.parameter(
            rng.standard_normal((N_CLASSES, dp)) * np.sqrt(2.0 / (N_CLASSES + dp)))
        self.class_bias = ag.parameter(np.zeros(N_CLASSES))
        self.positions = position_table(max(config.span, 8), dp)

    def named(self) -> dict[str, Tensor]:
        return {
            "temporal.query_proj": self.query_proj,
            "temporal.key_proj": self.key_proj,
            "temporal.value_proj": self.value_proj,
            "classifier.weights": self.class_weights,
            "classifier.bias": self.class_bias,
        }


@dataclass
class GlobalRep:
    g_star: Tensor                # dp-dimensional pooled representation
    day_attention: np.ndarray    # T x T row-stochastic matrix


def global_self_attention(reps: list[Tensor], params: TemporalParams,
                          config: TrainConfig) -> GlobalRep:
    """Fuse T day representations into g* with scaled dot-product attention."""
    t = len(reps)
    if t < 1:
        raise ValidationError("need at least one day representation")
    g = ag.stack_rows(reps)
    gp = ag.add(g, ag.constant(params.positions[:t]))
    q = ag.matmul_t(gp, params.query_proj)
    k = ag.matmul_t(gp, params.key_proj)
    scores = ag.mul(ag.matmul_t(q, k), 1.0 / np.sqrt(config.dp))
    gamma = ag.softmax_rows(scores)
    values = ag.matmul_t(g, params.value_proj)
    attended = ag.matmul(gamma, values)
    g_star = ag.col_sum(attended)
    return GlobalRep(g_star=g_star, day_attention=gamma.data.copy())


def classify(g_star: Tensor, params: TemporalParams) -> Tensor:
    """Class probabilities from the pooled representation."""
    logits = ag.add(ag.matmul(params.class_weights, g_star), params.class_bias)
    return ag.softmax(logits)
