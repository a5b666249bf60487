"""
Sequence model (teacher / student), noise-to-LiDAR generator and Adam.

Teacher and student share one architecture: a single GRU layer unrolled over
``obs_len + horizon`` frames (the last ``horizon`` frames are zero padding)
followed by one affine head that is read out at the final ``horizon + 1``
steps. Only the hidden width differs.

Parameters live in plain ``dict[str, np.ndarray]`` so they serialize
directly; :class:`SeqModel` and :class:`Generator` wrap them as tensors for
training.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Mapping

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractError, DimensionError, ParameterError

GRU_GATES = ("z", "r", "h")


@dataclass(frozen=True)
class SeqModelConfig:
    input_dim: int = 32
    hidden_dim: int = 128
    num_beams: int = 64
    obs_len: int = 8
    horizon: int = 3

    def __post_init__(self):
        for k, v in asdict(self).items():
            if int(v) < 1:
                raise ParameterError(f"SeqModelConfig.{k} must be positive, got {v}")

    @property
    def seq_len(self) -> int:
        return self.obs_len + self.horizon

    def to_dict(self) -> dict:
        return asdict(self)


TEACHER_HIDDEN = 128
STUDENT_HIDDEN = 32


def teacher_config(**kw) -> SeqModelConfig:
    kw.setdefault("hidden_dim", TEACHER_HIDDEN)
    return SeqModelConfig(**kw)


def student_config(**kw) -> SeqModelConfig:
    kw.setdefault("hidden_dim", STUDENT_HIDDEN)
    return SeqModelConfig(**kw)


@dataclass(frozen=True)
class GeneratorConfig:
    noise_dim: int = 500
    hidden_dim: int = 64
    obs_len: int = 8
    feature_dim: int = 32
    horizon: int = 3

    def __post_init__(self):
        for k, v in asdict(self).items():
            if int(v) < 1:
                raise ParameterError(f"GeneratorConfig.{k} must be positive, got {v}")

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------

def _uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_seq_params(config: SeqModelConfig, seed: int) -> dict[str, np.ndarray]:
    """Uniform(+-1/sqrt(fan_in)) for every affine map, biases included."""
    rng = np.random.default_rng(seed)
    d, h, m = config.input_dim, config.hidden_dim, config.num_beams
    params = {}
    for g in GRU_GATES:
        params[f"gru.W_{g}"] = _uniform(rng, d + h, (d + h, h))
        params[f"gru.b_{g}"] = _uniform(rng, d + h, (h,))
    params["head.W"] = _uniform(rng, h, (h, m))
    params["head.b"] = _uniform(rng, h, (m,))
    return params


def init_generator_params(config: GeneratorConfig, seed: int) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(seed)
    out = config.obs_len * config.feature_dim
    return {
        "fc1.W": _uniform(rng, config.noise_dim, (config.noise_dim, config.hidden_dim)),
        "fc1.b": _uniform(rng, config.noise_dim, (config.hidden_dim,)),
        "fc2.W": _uniform(rng, config.hidden_dim, (config.hidden_dim, out)),
        "fc2.b": _uniform(rng, config.hidden_dim, (out,)),
    }


def seq_param_shapes(config: SeqModelConfig) -> dict[str, tuple[int, ...]]:
    d, h, m = config.input_dim, config.hidden_dim, config.num_beams
    shapes = {}
    for g in GRU_GATES:
        shapes[f"gru.W_{g}"] = (d + h, h)
        shapes[f"gru.b_{g}"] = (h,)
    shapes["head.W"] = (h, m)
    shapes["head.b"] = (m,)
    return shapes


def generator_param_shapes(config: GeneratorConfig) -> dict[str, tuple[int, ...]]:
    out = config.obs_len * config.feature_dim
    return {"fc1.W": (config.noise_dim, config.hidden_dim), "fc1.b": (config.hidden_dim,),
            "fc2.W": (config.hidden_dim, out), "fc2.b": (out,)}


def count_params(params: Mapping[str, np.ndarray | Tensor]) -> int:
    return int(sum(np.size(p.data if isinstance(p, Tensor) else p) for p in params.values()))


# ---------------------------------------------------------------------------
# forward passes
# ---------------------------------------------------------------------------

def gru_step(params: Mapping[str, Tensor], x: Tensor, h: Tensor) -> Tensor:
    """One GRU update: h' = (1 - z) * h + z * tanh(W_h [x; r * h] + b_h)."""
    xh = ad.concat([x, h], axis=1)
    z = ad.sigmoid(ad.linear(xh, params["gru.W_z"], params["gru.b_z"]))
    r = ad.sigmoid(ad.linear(xh, params["gru.W_r"], params["gru.b_r"]))
    xrh = ad.concat([x, r * h], axis=1)
    cand = ad.tanh(ad.linear(xrh, params["gru.W_h"], params["gru.b_h"]))
    return h + z * (cand - h)


def seq_forward(params: Mapping[str, Tensor], x, config: SeqModelConfig) -> tuple[Tensor, Tensor]:
    """Run the GRU over a B×(L+V)×D batch.

    Returns logits B×(V+1)×M (head applied at steps L-1 .. L+V-1) and the
    hidden state after the final step (B×H).
    """
    x = ad.as_tensor(x)
    if x.ndim != 3 or x.shape[1] != config.seq_len or x.shape[2] != config.input_dim:
        raise DimensionError(
            f"expected input B×{config.seq_len}×{config.input_dim}, got {x.shape}")
    b = x.shape[0]
    h = Tensor(np.zeros((b, config.hidden_dim)))
    outs = []
    for t in range(config.seq_len):
        h = gru_step(params, x[:, t, :], h)
        if t >= config.obs_len - 1:
            outs.append(ad.linear(h, params["head.W"], params["head.b"]))
    return ad.stack(outs, axis=1), h


def generator_forward(params: Mapping[str, Tensor], noise, config: GeneratorConfig) -> Tensor:
    """Noise B×noise_dim -> LiDAR-like batch B×(L+V)×D with V trailing zero frames."""
    noise = ad.as_tensor(noise)
    if noise.ndim != 2 or noise.shape[1] != config.noise_dim:
        raise DimensionError(f"expected noise B×{config.noise_dim}, got {noise.shape}")
    b = noise.shape[0]
    hidden = ad.relu(ad.linear(noise, params["fc1.W"], params["fc1.b"]))
    frames = ad.tanh(ad.linear(hidden, params["fc2.W"], params["fc2.b"]))
    frames = frames.reshape(b, config.obs_len, config.feature_dim)
    pad = Tensor(np.zeros((b, config.horizon, config.feature_dim)))
    return ad.concat([frames, pad], axis=1)


def _as_tensors(params: Mapping[str, np.ndarray], trainable: bool) -> dict[str, Tensor]:
    return {k: Tensor(v, requires_grad=trainable, name=k) for k, v in params.items()}


class SeqModel:
    """GRU beam tracker with tensor-wrapped parameters."""

    def __init__(self, config: SeqModelConfig, params: Mapping[str, np.ndarray], trainable: bool = True):
        expected = seq_param_shapes(config)
        for k, shape in expected.items():
            if k not in params:
                raise ContractError(f"missing parameter {k!r}")
            if tuple(np.shape(params[k])) != shape:
                raise DimensionError(f"parameter {k!r} has shape {np.shape(params[k])}, expected {shape}")
        self.config = config
        self.params = _as_tensors(params, trainable)

    @classmethod
    def initialize(cls, config: SeqModelConfig, seed: int) -> "SeqModel":
        return cls(config, init_seq_params(config, seed))

    def freeze(self) -> "SeqModel":
        for p in self.params.values():
            p.requires_grad = False
            p.grad = None
        return self

    def __call__(self, x) -> tuple[Tensor, Tensor]:
        return seq_forward(self.params, x, self.config)

    def logits(self, x: np.ndarray, batch_size: int = 1024) -> np.ndarray:
        """Gradient-free logits for an array of sequences."""
        frozen = {k: Tensor(p.data) for k, p in self.params.items()}
        out = [seq_forward(frozen, x[i:i + batch_size], self.config)[0].data
               for i in range(0, len(x), batch_size)]
        return np.concatenate(out, axis=0)

    def hidden(self, x: np.ndarray, batch_size: int = 1024) -> np.ndarray:
        frozen = {k: Tensor(p.data) for k, p in self.params.items()}
        out = [seq_forward(frozen, x[i:i + batch_size], self.config)[1].data
               for i in range(0, len(x), batch_size)]
        return np.concatenate(out, axis=0)

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self.params.items()}

    @property
    def num_params(self) -> int:
        return count_params(self.params)


class Generator:
    def __init__(self, config: GeneratorConfig, params: Mapping[str, np.ndarray], trainable: bool = True):
        expected = generator_param_shapes(config)
        for k, shape in expected.items():
            if k not in params:
                raise ContractError(f"missing parameter {k!r}")
            if tuple(np.shape(params[k])) != shape:
                raise DimensionError(f"parameter {k!r} has shape {np.shape(params[k])}, expected {shape}")
        self.config = config
        self.params = _as_tensors(params, trainable)

    @classmethod
    def initialize(cls, config: GeneratorConfig, seed: int) -> "Generator":
        return cls(config, init_generator_params(config, seed))

    def freeze(self) -> "Generator":
        for p in self.params.values():
            p.requires_grad = False
            p.grad = None
        return self

    def __call__(self, noise) -> Tensor:
        return generator_forward(self.params, noise, self.config)

    def sample(self, noise: np.ndarray) -> np.ndarray:
        frozen = {k: Tensor(p.data) for k, p in self.params.items()}
        return generator_forward(frozen, noise, self.config).data

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self.params.items()}

    @property
    def num_params(self) -> int:
        return count_params(self.params)


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------

class Adam:
    """Bias-corrected Adam over a dict of tensors, updated in place."""

    def __init__(self, params: Mapping[str, Tensor], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise ParameterError(f"learning rate must be positive, got {lr}")
        self.params = dict(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.t = 0

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def step(self) -> None:
        missing = [k for k, p in self.params.items() if p.grad is None]
        if missing:
            raise ContractError(f"no gradient for parameter {missing[0]!r}")
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k, p in self.params.items():
            g = p.grad
            m = self.m[k]
            v = self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def adam_step(state: Adam) -> None:
    """Functional alias for :meth:`Adam.step`."""
    state.step()
