"""
Generator and student objectives.

Logits are shaped ``B×(V+1)×M`` (one M-way head per horizon offset); a plain
``B×M`` array is treated as a single head. Every loss averages uniformly over
heads. Teacher logits are always detached in student losses. Logs are
natural.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractError, DimensionError, ParameterError

GENERATOR_LOSS_KINDS = ("weighted", "metadata_only", "activation_only", "entropy_only")
STUDENT_LOSS_KINDS = ("kl", "mse")
DEFAULT_TEMPERATURE = 5.0
DEFAULT_GAMMA = 0.7


@dataclass(frozen=True)
class GeneratorLossWeights:
    alpha: float = 1e-4
    beta: float = 1e-2

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ParameterError(f"loss weights must be non-negative, got alpha={self.alpha}, beta={self.beta}")


@dataclass(frozen=True)
class KDConfig:
    """Loss selection for distillation.

    ``temperature`` has no implicit default: the KL student loss needs it
    spelled out (use :data:`DEFAULT_TEMPERATURE`), the MSE loss ignores it.
    """

    temperature: float | None = None
    gamma: float = DEFAULT_GAMMA
    student_loss_kind: str = "mse"
    generator_loss_kind: str = "metadata_only"

    def __post_init__(self):
        if self.student_loss_kind not in STUDENT_LOSS_KINDS:
            raise ParameterError(f"student_loss_kind must be one of {STUDENT_LOSS_KINDS}")
        if self.generator_loss_kind not in GENERATOR_LOSS_KINDS:
            raise ParameterError(f"generator_loss_kind must be one of {GENERATOR_LOSS_KINDS}")
        if self.student_loss_kind == "kl" and self.temperature is None:
            raise ParameterError("the KL student loss needs an explicit temperature")
        if self.temperature is not None and not self.temperature > 0:
            raise ParameterError(f"temperature must be positive, got {self.temperature}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ParameterError(f"gamma must lie in [0, 1], got {self.gamma}")


def _heads(z: Tensor) -> int:
    return int(np.prod(z.shape[1:-1])) if z.ndim > 2 else 1


def _check_same(a: Tensor, b: Tensor, what: str) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{what}: teacher logits {a.shape} vs student logits {b.shape}")


def _mse(a: Tensor, b) -> Tensor:
    return ad.square(a - ad.as_tensor(b)).mean()


# ---------------------------------------------------------------------------
# generator losses
# ---------------------------------------------------------------------------

def metadata_loss(feat, mean, var) -> Tensor:
    """MSE between stored and batch mean plus MSE between stored and batch variance."""
    feat = ad.as_tensor(feat)
    mean = np.asarray(mean, dtype=np.float64)
    var = np.asarray(var, dtype=np.float64)
    if feat.ndim != 2 or mean.shape != (feat.shape[1],) or var.shape != (feat.shape[1],):
        raise DimensionError(f"metadata_loss: features {feat.shape} vs stats {mean.shape}/{var.shape}")
    if feat.shape[0] < 2:
        raise ContractError("metadata_loss needs a batch of at least 2")
    mu_hat, var_hat = ad.moments(feat)
    return _mse(mu_hat, mean) + _mse(var_hat, var)


def activation_loss(feat) -> Tensor:
    """Negative mean per-sample L2 norm of the features."""
    feat = ad.as_tensor(feat)
    return -ad.l2_norm(feat, axis=1).mean()


def entropy_loss(logits) -> Tensor:
    """Mean Shannon entropy (nats) of softmax(logits) over samples and heads."""
    logits = ad.as_tensor(logits)
    p = ad.softmax(logits)
    logp = ad.log_softmax(logits)
    return -(p * logp).sum(axis=-1).mean()


def generator_loss_terms(feat, logits, mean, var) -> dict[str, Tensor]:
    return {"metadata": metadata_loss(feat, mean, var),
            "activation": activation_loss(feat),
            "entropy": entropy_loss(logits)}


def combine_generator_loss(kind: str, weights: GeneratorLossWeights, terms: dict[str, Tensor]) -> Tensor:
    if kind == "weighted":
        return terms["metadata"] + weights.alpha * terms["activation"] + weights.beta * terms["entropy"]
    if kind == "metadata_only":
        return terms["metadata"]
    if kind == "activation_only":
        return terms["activation"]
    if kind == "entropy_only":
        return terms["entropy"]
    raise ParameterError(f"unknown generator loss kind {kind!r}; expected one of {GENERATOR_LOSS_KINDS}")


def generator_loss(kind: str, weights: GeneratorLossWeights, feat, logits, mean, var) -> Tensor:
    if kind not in GENERATOR_LOSS_KINDS:
        raise ParameterError(f"unknown generator loss kind {kind!r}; expected one of {GENERATOR_LOSS_KINDS}")
    return combine_generator_loss(kind, weights, generator_loss_terms(feat, logits, mean, var))


# ---------------------------------------------------------------------------
# student losses
# ---------------------------------------------------------------------------

def kl_loss(teacher_logits, student_logits, temperature: float) -> Tensor:
    """Temperature-softened KL(teacher || student), scaled by T^2 / B, averaged over heads."""
    zt = ad.as_tensor(teacher_logits).detach()
    zs = ad.as_tensor(student_logits)
    _check_same(zt, zs, "kl_loss")
    if temperature is None or not temperature > 0:
        raise ParameterError(f"temperature must be positive, got {temperature!r}")
    t = float(temperature)
    logp = ad.log_softmax_np(zt.data, t)
    p = np.exp(logp)
    logq = ad.log_softmax(zs, t)
    scale = t * t / (zs.shape[0] * _heads(zs))
    # sum p*logp is a constant offset for the student; kept so the value is the true KL
    return (Tensor(p * logp).sum() - (Tensor(p) * logq).sum()) * scale


def mse_logit_loss(teacher_logits, student_logits) -> Tensor:
    """Mean squared difference of raw logits: (1/(B*M)) per head, averaged over heads."""
    zt = ad.as_tensor(teacher_logits).detach()
    zs = ad.as_tensor(student_logits)
    _check_same(zt, zs, "mse_logit_loss")
    return ad.square(zs - zt).mean()


def _one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ContractError(f"labels must lie in [0, {num_classes}), got range [{labels.min()}, {labels.max()}]")
    out = np.zeros(labels.shape + (num_classes,))
    np.put_along_axis(out, labels[..., None].astype(np.int64), 1.0, axis=-1)
    return out


def cross_entropy_loss(student_logits, labels) -> Tensor:
    """Mean over samples and heads of -log softmax(z)[true beam]."""
    zs = ad.as_tensor(student_logits)
    labels = np.asarray(labels)
    if labels.shape != zs.shape[:-1]:
        raise DimensionError(f"cross_entropy_loss: labels {labels.shape} vs logits {zs.shape}")
    onehot = _one_hot(labels, zs.shape[-1])
    return -(ad.log_softmax(zs) * Tensor(onehot)).sum() * (1.0 / labels.size)


def kd_loss(teacher_logits, student_logits, labels, gamma: float, temperature: float) -> Tensor:
    """gamma * KL + (1 - gamma) * cross-entropy."""
    if not 0.0 <= gamma <= 1.0:
        raise ParameterError(f"gamma must lie in [0, 1], got {gamma}")
    return gamma * kl_loss(teacher_logits, student_logits, temperature) + \
        (1.0 - gamma) * cross_entropy_loss(student_logits, labels)


def kd_mse_loss(teacher_logits, student_logits, labels, gamma: float) -> Tensor:
    """Standard KD with the KL term swapped for the logit MSE."""
    if not 0.0 <= gamma <= 1.0:
        raise ParameterError(f"gamma must lie in [0, 1], got {gamma}")
    return gamma * mse_logit_loss(teacher_logits, student_logits) + \
        (1.0 - gamma) * cross_entropy_loss(student_logits, labels)
