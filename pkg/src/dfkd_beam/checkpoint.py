"""Checkpoint files for teacher, student and generator parameters."""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .container import read_container, read_header, write_container
from .errors import FormatError, MetadataMissingError, ShapeMismatchError
from .models import (Generator, GeneratorConfig, SeqModel, SeqModelConfig,
                     generator_param_shapes, seq_param_shapes)

MAGIC = b"DFKDCKPT"
KINDS = ("teacher", "student", "generator")


@dataclass
class Checkpoint:
    """Parameters plus everything needed to rebuild the model.

    Teachers additionally carry ``meta_mean`` / ``meta_var``: per-unit mean
    and biased variance of the final hidden state over the real training
    split.
    """

    kind: str
    config: SeqModelConfig | GeneratorConfig
    params: dict[str, np.ndarray]
    meta_mean: np.ndarray | None = None
    meta_var: np.ndarray | None = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise FormatError(f"unknown checkpoint kind {self.kind!r}")

    @property
    def has_metadata(self) -> bool:
        return self.meta_mean is not None and self.meta_var is not None

    def model(self, trainable: bool = False) -> SeqModel:
        if not isinstance(self.config, SeqModelConfig):
            raise FormatError(f"{self.kind} checkpoint does not hold a sequence model")
        return SeqModel(self.config, self.params, trainable=trainable)

    def generator(self, trainable: bool = False) -> Generator:
        if not isinstance(self.config, GeneratorConfig):
            raise FormatError(f"{self.kind} checkpoint does not hold a generator")
        return Generator(self.config, self.params, trainable=trainable)


# a teacher is just a checkpoint whose metadata is populated
TeacherCheckpoint = Checkpoint


def require_teacher(ckpt: Checkpoint) -> Checkpoint:
    if not ckpt.has_metadata:
        raise MetadataMissingError(
            f"a teacher checkpoint with feature mean/variance is required, got kind={ckpt.kind!r}")
    h = ckpt.config.hidden_dim
    if ckpt.meta_mean.shape != (h,) or ckpt.meta_var.shape != (h,):
        raise ShapeMismatchError(f"metadata shapes {ckpt.meta_mean.shape}/{ckpt.meta_var.shape}, expected ({h},)")
    return ckpt


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    arrays = {f"param/{k}": np.asarray(v, dtype=np.float64) for k, v in sorted(ckpt.params.items())}
    if ckpt.has_metadata:
        arrays["meta/mean"] = np.asarray(ckpt.meta_mean, dtype=np.float64)
        arrays["meta/var"] = np.asarray(ckpt.meta_var, dtype=np.float64)
    header = {
        "kind": ckpt.kind,
        "config": ckpt.config.to_dict(),
        "provenance": ckpt.provenance,
    }
    write_container(path, MAGIC, header, arrays)


def _config_from(kind: str, cfg: dict, path):
    try:
        return GeneratorConfig(**cfg) if kind == "generator" else SeqModelConfig(**cfg)
    except TypeError as exc:
        raise FormatError(f"{path}: bad config record ({exc})") from None


def load_checkpoint(path, require_metadata: bool = False) -> Checkpoint:
    if not os.path.exists(path):
        raise FileNotFoundError(f"checkpoint not found: {path}")
    header, arrays = read_container(path, MAGIC)
    kind = header.get("kind")
    if kind not in KINDS:
        raise FormatError(f"{path}: unknown checkpoint kind {kind!r}")
    config = _config_from(kind, header.get("config", {}), path)
    params = {k[len("param/"):]: v for k, v in arrays.items() if k.startswith("param/")}
    expected = generator_param_shapes(config) if kind == "generator" else seq_param_shapes(config)
    if set(params) != set(expected):
        raise ShapeMismatchError(f"{path}: parameter names {sorted(params)} do not match {sorted(expected)}")
    for k, shape in expected.items():
        if params[k].shape != shape:
            raise ShapeMismatchError(f"{path}: {k} stored as {params[k].shape}, config implies {shape}")
    ckpt = Checkpoint(kind=kind, config=config, params=params,
                      meta_mean=arrays.get("meta/mean"), meta_var=arrays.get("meta/var"),
                      provenance=header.get("provenance", {}))
    if require_metadata:
        require_teacher(ckpt)
    return ckpt


def checkpoint_header(path) -> dict:
    return read_header(path, MAGIC)
